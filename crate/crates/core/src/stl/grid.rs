use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (in sample periods) for grid alignment.
pub const ALIGN_TOL: f64 = 1e-9;

/// Uniform sampling `0, Ts, ..., N*Ts` of a horizon `T = N*Ts`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    sample_period: f64,
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(sample_period: f64, horizon: f64) -> Result<Self> {
        if !(sample_period > 0.0) || !sample_period.is_finite() {
            return Err(Error::invalid(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be non-negative, got {horizon}")));
        }
        let steps = align(horizon, sample_period, "horizon")?;
        Ok(TimeGrid {
            sample_period,
            horizon,
            steps,
        })
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// N, the index of the last sample.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// N + 1.
    pub fn count(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.sample_period
    }

    /// Index of a grid-aligned time inside the horizon.
    pub fn index_of(&self, t: f64, what: &str) -> Result<usize> {
        if !(t >= -ALIGN_TOL * self.sample_period)
            || t > self.horizon + ALIGN_TOL * self.sample_period
        {
            return Err(Error::OutOfRange {
                what: what.to_string(),
                value: t,
                lo: 0.0,
                hi: self.horizon,
            });
        }
        align(t.max(0.0), self.sample_period, what)
    }
}

/// `round(t / period)` if `t` lies within `ALIGN_TOL * period` of a multiple of `period`.
pub(crate) fn align(t: f64, period: f64, what: &str) -> Result<usize> {
    let r = t / period;
    let n = r.round();
    if (t - n * period).abs() > ALIGN_TOL * period || n < 0.0 {
        return Err(Error::Misaligned {
            what: what.to_string(),
            value: t,
            period,
        });
    }
    Ok(n as usize)
}

/// Closed time interval `[start, end]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }
}

/// Maps a time interval onto grid indices `(round(a/Ts), round(b/Ts))`.
pub fn interval_to_indices(interval: Interval, grid: &TimeGrid) -> Result<(usize, usize)> {
    let Interval { start, end } = interval;
    if !(start <= end) {
        return Err(Error::invalid(format!("interval [{start}, {end}] is reversed")));
    }
    let ia = grid.index_of(start, "interval start")?;
    let ib = grid.index_of(end, "interval end")?;
    Ok((ia, ib))
}
