//! Exact re-checking of plans and sampled traces.

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PlannerConfig;
use super::PlanResult;
use crate::error::{Error, Result};
use crate::mission::{self, Mission};
use crate::primitives::{self, AxisState, AxisTrajectory};
use crate::stl::{self, Formula, TimeGrid, Trace};

/// Tolerance on bound checks (absorbs rounding at exactly active bounds).
const BOUND_TOL: f64 = 1e-9;

/// Sampled fleet states, sample-major (`k * drone_count + d`).
#[derive(Debug, Clone, PartialEq)]
pub struct FleetSamples {
    pub grid: TimeGrid,
    pub drone_count: usize,
    pub states: Vec<[AxisState; 3]>,
}

impl FleetSamples {
    pub fn from_trajectories(trajectories: &[[AxisTrajectory; 3]], grid: TimeGrid) -> Result<Self> {
        let q = trajectories.len();
        if q == 0 {
            return Err(Error::invalid("no trajectories"));
        }
        let mut states = vec![[AxisState::default(); 3]; grid.count() * q];
        for (d, axes) in trajectories.iter().enumerate() {
            for (ax, traj) in axes.iter().enumerate() {
                for (k, s) in primitives::sample(traj, &grid)?.into_iter().enumerate() {
                    states[k * q + d][ax] = s;
                }
            }
        }
        Ok(FleetSamples {
            grid,
            drone_count: q,
            states,
        })
    }

    pub fn state(&self, k: usize, drone: usize) -> [AxisState; 3] {
        self.states[k * self.drone_count + drone]
    }

    pub fn position(&self, k: usize, drone: usize) -> Vector3<f64> {
        let s = self.state(k, drone);
        Vector3::new(s[0].p, s[1].p, s[2].p)
    }

    /// Running `sum |a|^2 T_s` per drone; entry `k` covers samples `0..=k`.
    pub fn cumulative_energy(&self) -> Vec<Vec<f64>> {
        let q = self.drone_count;
        let ts = self.grid.sample_period();
        let mut acc = vec![0.0; q];
        (0..self.grid.count())
            .map(|k| {
                for (d, e) in acc.iter_mut().enumerate() {
                    *e += self.state(k, d).iter().map(|s| s.a * s.a).sum::<f64>() * ts;
                }
                acc.clone()
            })
            .collect()
    }

    pub fn energy(&self) -> Vec<f64> {
        self.cumulative_energy().pop().unwrap_or_default()
    }

    pub fn trace(&self) -> Result<Trace> {
        let pos = self.states.iter().map(|s| Vector3::new(s[0].p, s[1].p, s[2].p)).collect();
        let vel = self.states.iter().map(|s| Vector3::new(s[0].v, s[1].v, s[2].v)).collect();
        Trace::from_parts(self.grid, self.drone_count, pos, vel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    KnotVelocity,
    KnotAcceleration,
    SegmentVelocity,
    SegmentAcceleration,
    SampleVelocity,
    SampleAcceleration,
    Separation,
    Robustness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub drone: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    /// Grid index for sample-level findings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    pub time: f64,
    pub value: f64,
    pub limit: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at t = {} s, drone {}", self.kind, self.time, self.drone)?;
        if let Some(o) = self.other {
            write!(f, " vs drone {o}")?;
        }
        if let Some(a) = self.axis {
            write!(f, ", axis {}", ["x", "y", "z"][a])?;
        }
        if let Some(s) = self.sample {
            write!(f, ", sample {s}")?;
        }
        write!(f, ": {} (limit {})", self.value, self.limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub exact_robustness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_pair_distance: Option<f64>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.exact_robustness > 0.0 && self.violations.is_empty()
    }
}

fn separation(samples: &FleetSamples, delta_min: Option<f64>, out: &mut Vec<Violation>) -> Option<f64> {
    let delta_min = delta_min.unwrap_or(f64::NEG_INFINITY);
    let q = samples.drone_count;
    let mut min_d: Option<f64> = None;
    for i in 0..q {
        for h in (i + 1)..q {
            let mut first: Option<Violation> = None;
            for k in 0..samples.grid.count() {
                let dist = (samples.position(k, i) - samples.position(k, h)).norm();
                min_d = Some(min_d.map_or(dist, |m| m.min(dist)));
                if dist < delta_min {
                    match &mut first {
                        None => {
                            first = Some(Violation {
                                kind: ViolationKind::Separation,
                                drone: i,
                                other: Some(h),
                                axis: None,
                                sample: Some(k),
                                time: samples.grid.time(k),
                                value: dist,
                                limit: delta_min,
                            })
                        }
                        Some(v) => v.value = v.value.min(dist),
                    }
                }
            }
            out.extend(first);
        }
    }
    min_d
}

fn robustness_finding(value: f64, out: &mut Vec<Violation>) {
    if !(value > 0.0) {
        out.push(Violation {
            kind: ViolationKind::Robustness,
            drone: 0,
            other: None,
            axis: None,
            sample: None,
            time: 0.0,
            value,
            limit: 0.0,
        });
    }
}

pub(crate) fn check(
    trajectories: &[[AxisTrajectory; 3]],
    samples: &FleetSamples,
    formula: &Formula,
    delta_min: Option<f64>,
    config: &PlannerConfig,
) -> Result<ValidationReport> {
    let mut violations = Vec::new();
    let exact = stl::robustness(formula, &samples.trace()?, 0)?;
    for (d, axes) in trajectories.iter().enumerate() {
        for (ax, traj) in axes.iter().enumerate() {
            let kp = traj.knot_period();
            for (k, s) in traj.knots().iter().enumerate() {
                for (kind, value, limit) in [
                    (ViolationKind::KnotVelocity, s.v.abs(), config.v_max),
                    (ViolationKind::KnotAcceleration, s.a.abs(), config.a_max),
                ] {
                    if value > limit + BOUND_TOL {
                        violations.push(Violation {
                            kind,
                            drone: d,
                            other: None,
                            axis: Some(ax),
                            sample: None,
                            time: k as f64 * kp,
                            value,
                            limit,
                        });
                    }
                }
            }
            for (k, seg) in traj.segments().iter().enumerate() {
                let p = seg.peaks();
                for (kind, value, at, limit) in [
                    (ViolationKind::SegmentVelocity, p.velocity, p.velocity_at, config.v_max),
                    (ViolationKind::SegmentAcceleration, p.acceleration, p.acceleration_at, config.a_max),
                ] {
                    if value > limit + BOUND_TOL {
                        violations.push(Violation {
                            kind,
                            drone: d,
                            other: None,
                            axis: Some(ax),
                            sample: None,
                            time: k as f64 * kp + at,
                            value,
                            limit,
                        });
                    }
                }
            }
        }
    }
    let min_pair_distance = separation(samples, delta_min, &mut violations);
    robustness_finding(exact, &mut violations);
    Ok(ValidationReport {
        exact_robustness: exact,
        min_pair_distance,
        violations,
    })
}

/// Re-checks a plan: exact robustness on the sampled trace, every knot and
/// intra-segment peak against the bounds, and pairwise separation.
pub fn exact_validate(result: &PlanResult, mission: &Mission, config: &PlannerConfig) -> Result<ValidationReport> {
    if result.trajectories.len() != mission.drone_count() {
        return Err(Error::invalid("plan and mission have different fleet sizes"));
    }
    let mut m = mission.clone();
    m.planner = config.clone();
    let formula = mission::mission_formula(&m)?;
    let samples = result.samples()?;
    check(&result.trajectories, &samples, &formula, Some(mission.delta_min), config)
}

/// Checks a bare sampled trace (no knots): per-sample bounds, separation and
/// exact robustness of the mission formula.
pub fn validate_samples(samples: &FleetSamples, mission: &Mission, config: &PlannerConfig) -> Result<ValidationReport> {
    if samples.drone_count != mission.drone_count() {
        return Err(Error::invalid("trace and mission have different fleet sizes"));
    }
    let mut m = mission.clone();
    m.planner = config.clone();
    let formula = mission::mission_formula(&m)?;
    let exact = stl::robustness(&formula, &samples.trace()?, 0)?;
    let mut violations = Vec::new();
    for k in 0..samples.grid.count() {
        for d in 0..samples.drone_count {
            for (ax, s) in samples.state(k, d).iter().enumerate() {
                for (kind, value, limit) in [
                    (ViolationKind::SampleVelocity, s.v.abs(), config.v_max),
                    (ViolationKind::SampleAcceleration, s.a.abs(), config.a_max),
                ] {
                    if value > limit + BOUND_TOL {
                        violations.push(Violation {
                            kind,
                            drone: d,
                            other: None,
                            axis: Some(ax),
                            sample: Some(k),
                            time: samples.grid.time(k),
                            value,
                            limit,
                        });
                    }
                }
            }
        }
    }
    let min_pair_distance = separation(samples, Some(mission.delta_min), &mut violations);
    robustness_finding(exact, &mut violations);
    Ok(ValidationReport {
        exact_robustness: exact,
        min_pair_distance,
        violations,
    })
}
