//! Quintic motion primitives along one axis.
//!
//! A segment starting at `(p0, v0, a0)` follows
//!
//! ```text
//! p(t) = alpha/120 t^5 + beta/24 t^4 + gamma/6 t^3 + a0/2 t^2 + v0 t + p0
//! v(t) = alpha/24 t^4 + beta/6 t^3 + gamma/2 t^2 + a0 t + v0
//! a(t) = alpha/6 t^3 + beta/2 t^2 + gamma t + a0
//! ```
//!
//! with `(alpha, beta, gamma)` fixed by the end state (minimum-jerk boundary
//! value solution). Knots are the decision variables; coefficients are always
//! derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl::{align, TimeGrid};

/// Position, velocity and acceleration along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisState {
    pub p: f64,
    pub v: f64,
    pub a: f64,
}

impl AxisState {
    pub const fn new(p: f64, v: f64, a: f64) -> Self {
        AxisState { p, v, a }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite() && self.a.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineSegment {
    pub start: AxisState,
    /// m/s^5
    pub alpha: f64,
    /// m/s^4
    pub beta: f64,
    /// m/s^3
    pub gamma: f64,
    pub duration: f64,
}

/// Closed-form coefficients joining `start` to `end` in `duration` seconds.
pub fn solve_boundary(start: AxisState, end: AxisState, duration: f64) -> Result<SplineSegment> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::invalid(format!(
            "segment duration must be positive, got {duration}"
        )));
    }
    let t = duration;
    let (t2, t3) = (t * t, t * t * t);
    let dp = end.p - start.p - start.v * t - 0.5 * start.a * t2;
    let dv = end.v - start.v - start.a * t;
    let da = end.a - start.a;
    let t5 = t2 * t3;
    let alpha = (720.0 * dp - 360.0 * t * dv + 60.0 * t2 * da) / t5;
    let beta = (-360.0 * t * dp + 168.0 * t2 * dv - 24.0 * t3 * da) / t5;
    let gamma = (60.0 * t2 * dp - 24.0 * t3 * dv + 3.0 * t2 * t2 * da) / t5;
    Ok(SplineSegment {
        start,
        alpha,
        beta,
        gamma,
        duration,
    })
}

/// Peak magnitudes over a segment and where they occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peaks {
    pub velocity: f64,
    pub velocity_at: f64,
    pub acceleration: f64,
    pub acceleration_at: f64,
    pub jerk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub peak_v: f64,
    pub peak_a: f64,
    pub peak_jerk: f64,
}

impl SplineSegment {
    pub fn zero(duration: f64) -> Self {
        SplineSegment {
            start: AxisState::default(),
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            duration,
        }
    }

    /// State at `tau` seconds into the segment.
    pub fn eval(&self, tau: f64) -> Result<AxisState> {
        if !(0.0..=self.duration).contains(&tau) {
            return Err(Error::OutOfRange {
                what: "segment time".into(),
                value: tau,
                lo: 0.0,
                hi: self.duration,
            });
        }
        Ok(self.eval_unchecked(tau))
    }

    #[inline]
    pub fn eval_unchecked(&self, tau: f64) -> AxisState {
        let Self {
            start,
            alpha,
            beta,
            gamma,
            ..
        } = *self;
        let t = tau;
        let p = start.p
            + t * (start.v + t * (start.a / 2.0 + t * (gamma / 6.0 + t * (beta / 24.0 + t * alpha / 120.0))));
        let v = start.v + t * (start.a + t * (gamma / 2.0 + t * (beta / 6.0 + t * alpha / 24.0)));
        let a = start.a + t * (gamma + t * (beta / 2.0 + t * alpha / 6.0));
        AxisState { p, v, a }
    }

    #[inline]
    pub fn jerk(&self, tau: f64) -> f64 {
        self.gamma + tau * (self.beta + tau * self.alpha / 2.0)
    }

    pub fn end(&self) -> AxisState {
        self.eval_unchecked(self.duration)
    }

    /// Closed-form extrema of |v|, |a| and |jerk| over `[0, duration]`.
    pub fn peaks(&self) -> Peaks {
        let t = self.duration;
        let mut velocity = (0.0, 0.0);
        let consider_v = |tau: f64, velocity: &mut (f64, f64)| {
            let v = self.eval_unchecked(tau).v.abs();
            if v > velocity.0 {
                *velocity = (v, tau);
            }
        };
        consider_v(0.0, &mut velocity);
        consider_v(t, &mut velocity);
        // v' = a: cubic in tau
        for r in cubic_roots(self.alpha / 6.0, self.beta / 2.0, self.gamma, self.start.a, t) {
            consider_v(r, &mut velocity);
        }

        let mut accel = (0.0, 0.0);
        let consider_a = |tau: f64, accel: &mut (f64, f64)| {
            let a = self.eval_unchecked(tau).a.abs();
            if a > accel.0 {
                *accel = (a, tau);
            }
        };
        consider_a(0.0, &mut accel);
        consider_a(t, &mut accel);
        // a' = jerk: quadratic in tau
        for r in quadratic_roots(self.alpha / 2.0, self.beta, self.gamma, t) {
            consider_a(r, &mut accel);
        }

        // jerk' = alpha t + beta: extremum at -beta/alpha
        let mut jerk = self.jerk(0.0).abs().max(self.jerk(t).abs());
        if self.alpha != 0.0 {
            let r = -self.beta / self.alpha;
            if r > 0.0 && r < t {
                jerk = jerk.max(self.jerk(r).abs());
            }
        }
        Peaks {
            velocity: velocity.0,
            velocity_at: velocity.1,
            acceleration: accel.0,
            acceleration_at: accel.1,
            jerk,
        }
    }

    /// Largest |v| and |a| over `samples + 1` evenly spaced instants.
    pub fn sampled_peaks(&self, samples: usize) -> (f64, f64) {
        let mut pv: f64 = 0.0;
        let mut pa: f64 = 0.0;
        for i in 0..=samples {
            let s = self.eval_unchecked(self.duration * i as f64 / samples as f64);
            pv = pv.max(s.v.abs());
            pa = pa.max(s.a.abs());
        }
        (pv, pa)
    }
}

/// Velocity and acceleration bound check over a whole segment.
pub fn segment_feasible(segment: &SplineSegment, v_max: f64, a_max: f64) -> Result<Feasibility> {
    if !(v_max > 0.0) || !(a_max > 0.0) {
        return Err(Error::invalid("velocity and acceleration bounds must be positive"));
    }
    let peaks = segment.peaks();
    #[cfg(debug_assertions)]
    {
        let (sv, sa) = segment.sampled_peaks(1000);
        let tol = 1e-9 * (1.0 + sv.max(sa));
        debug_assert!(peaks.velocity + tol >= sv, "closed-form velocity peak below sampled peak");
        debug_assert!(peaks.acceleration + tol >= sa, "closed-form acceleration peak below sampled peak");
    }
    Ok(Feasibility {
        feasible: peaks.velocity <= v_max && peaks.acceleration <= a_max,
        peak_v: peaks.velocity,
        peak_a: peaks.acceleration,
        peak_jerk: peaks.jerk,
    })
}

/// Real roots of `c2 t^2 + c1 t + c0` strictly inside `(0, t_max)`.
fn quadratic_roots(c2: f64, c1: f64, c0: f64, t_max: f64) -> Vec<f64> {
    let scale = c2.abs() * t_max * t_max + c1.abs() * t_max + c0.abs();
    if scale == 0.0 {
        return Vec::new();
    }
    let mut roots = Vec::with_capacity(2);
    if c2.abs() * t_max * t_max <= 1e-14 * scale {
        if c1 != 0.0 {
            roots.push(-c0 / c1);
        }
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc >= 0.0 {
            let q = -0.5 * (c1 + c1.signum().max(0.0).mul_add(2.0, -1.0) * disc.sqrt());
            roots.push(q / c2);
            if q != 0.0 {
                roots.push(c0 / q);
            }
        }
    }
    roots.retain(|&r| r > 0.0 && r < t_max);
    roots
}

/// Real roots of `c3 t^3 + c2 t^2 + c1 t + c0` strictly inside `(0, t_max)`,
/// by Cardano's method on the normalised variable `s = t / t_max` followed by
/// Newton polishing.
fn cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64, t_max: f64) -> Vec<f64> {
    let (a3, a2, a1, a0) = (c3 * t_max.powi(3), c2 * t_max * t_max, c1 * t_max, c0);
    let scale = a3.abs() + a2.abs() + a1.abs() + a0.abs();
    if scale == 0.0 {
        return Vec::new();
    }
    let mut roots_s: Vec<f64> = if a3.abs() <= 1e-14 * scale {
        quadratic_roots(a2, a1, a0, 1.0)
    } else {
        let (b, c, d) = (a2 / a3, a1 / a3, a0 / a3);
        // s = y - b/3  =>  y^3 + p y + q = 0
        let p = c - b * b / 3.0;
        let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
        let shift = -b / 3.0;
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        if disc > 0.0 {
            let sq = disc.sqrt();
            let u = (-q / 2.0 + sq).cbrt();
            let v = (-q / 2.0 - sq).cbrt();
            vec![u + v + shift]
        } else if p == 0.0 {
            vec![shift]
        } else {
            let r = (-p / 3.0).sqrt();
            let cos_arg = ((-q / 2.0) / (r * r * r)).clamp(-1.0, 1.0);
            let phi = cos_arg.acos();
            (0..3)
                .map(|k| 2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift)
                .collect()
        }
    };
    for s in roots_s.iter_mut() {
        for _ in 0..3 {
            let f = ((a3 * *s + a2) * *s + a1) * *s + a0;
            let df = (3.0 * a3 * *s + 2.0 * a2) * *s + a1;
            if df == 0.0 {
                break;
            }
            let next = *s - f / df;
            if !next.is_finite() {
                break;
            }
            *s = next;
        }
    }
    roots_s
        .into_iter()
        .map(|s| s * t_max)
        .filter(|&r| r > 0.0 && r < t_max)
        .collect()
}

/// Sensitivities of `(p, v, a)` at `tau` to the boundary vector
/// `[p0, v0, a0, p1, v1, a1]` of a segment of length `duration`.
pub fn boundary_basis(duration: f64, tau: f64) -> [[f64; 6]; 3] {
    let mut out = [[0.0; 6]; 3];
    for i in 0..6 {
        let mut e = [0.0; 6];
        e[i] = 1.0;
        let seg = solve_boundary(
            AxisState::new(e[0], e[1], e[2]),
            AxisState::new(e[3], e[4], e[5]),
            duration,
        )
        .expect("positive duration");
        let s = seg.eval_unchecked(tau);
        out[0][i] = s.p;
        out[1][i] = s.v;
        out[2][i] = s.a;
    }
    out
}

/// Knot states joined by quintic segments of equal duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisTrajectory {
    knots: Vec<AxisState>,
    segments: Vec<SplineSegment>,
    knot_period: f64,
}

/// One solve per adjacent knot pair.
pub fn propagate(knots: Vec<AxisState>, knot_period: f64) -> Result<AxisTrajectory> {
    if knots.len() < 2 {
        return Err(Error::invalid("a trajectory needs at least two knots"));
    }
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::invalid("knot states must be finite"));
    }
    let segments = knots
        .windows(2)
        .map(|w| solve_boundary(w[0], w[1], knot_period))
        .collect::<Result<Vec<_>>>()?;
    Ok(AxisTrajectory {
        knots,
        segments,
        knot_period,
    })
}

impl AxisTrajectory {
    pub fn knots(&self) -> &[AxisState] {
        &self.knots
    }

    pub fn segments(&self) -> &[SplineSegment] {
        &self.segments
    }

    pub fn knot_period(&self) -> f64 {
        self.knot_period
    }

    pub fn duration(&self) -> f64 {
        self.segments.len() as f64 * self.knot_period
    }

    /// State at absolute time `t` (clamped to the trajectory span).
    pub fn state_at(&self, t: f64) -> AxisState {
        let n = self.segments.len();
        let t = t.clamp(0.0, self.duration());
        let r = t / self.knot_period;
        let k = r.round();
        if (r - k).abs() < 1e-9 {
            return self.knots[k as usize];
        }
        let i = (r.floor() as usize).min(n - 1);
        self.segments[i].eval_unchecked(t - i as f64 * self.knot_period)
    }
}

/// Dense samples of a trajectory on `grid`; knot instants reproduce knots exactly.
pub fn sample(trajectory: &AxisTrajectory, grid: &TimeGrid) -> Result<Vec<AxisState>> {
    let per = align(trajectory.knot_period, grid.sample_period(), "knot period")?;
    if per == 0 {
        return Err(Error::Misaligned {
            what: "knot period".into(),
            value: trajectory.knot_period,
            period: grid.sample_period(),
        });
    }
    if trajectory.segments.len() * per != grid.steps() {
        return Err(Error::Misaligned {
            what: "trajectory duration".into(),
            value: trajectory.duration(),
            period: grid.sample_period(),
        });
    }
    Ok((0..grid.count())
        .map(|s| {
            let (k, i) = (s / per, s % per);
            if i == 0 {
                trajectory.knots[k]
            } else {
                trajectory.segments[k].eval_unchecked(i as f64 * grid.sample_period())
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const REST0: AxisState = AxisState::new(0.0, 0.0, 0.0);
    const REST1: AxisState = AxisState::new(1.0, 0.0, 0.0);

    #[test]
    fn zero_motion() {
        let s = solve_boundary(REST0, REST0, 1.0).unwrap();
        assert_eq!((s.alpha, s.beta, s.gamma), (0.0, 0.0, 0.0));
        assert_eq!(s.eval(0.3).unwrap(), REST0);
        let f = segment_feasible(&s, 3.0, 3.0).unwrap();
        assert!(f.feasible);
        assert_eq!((f.peak_v, f.peak_a), (0.0, 0.0));
    }

    #[test]
    fn rest_to_rest_unit() {
        let s = solve_boundary(REST0, REST1, 1.0).unwrap();
        assert_eq!((s.alpha, s.beta, s.gamma), (720.0, -360.0, 60.0));
        let mid = s.eval(0.5).unwrap();
        assert!((mid.p - 0.5).abs() < 1e-14);
        assert!((mid.v - 1.875).abs() < 1e-14);
        assert!(mid.a.abs() < 1e-12);
        let end = s.eval(1.0).unwrap();
        assert!((end.p - 1.0).abs() < 1e-12 && end.v.abs() < 1e-12 && end.a.abs() < 1e-12);
    }

    #[test]
    fn rest_to_rest_two_seconds() {
        let s = solve_boundary(REST0, REST1, 2.0).unwrap();
        assert!((s.alpha - 22.5).abs() < 1e-12);
        assert!((s.beta + 22.5).abs() < 1e-12);
        assert!((s.gamma - 7.5).abs() < 1e-12);
        let end = s.end();
        assert!((end.p - 1.0).abs() < 1e-9 && end.v.abs() < 1e-9 && end.a.abs() < 1e-9);
    }

    #[test]
    fn feasibility_examples() {
        let s = solve_boundary(REST0, REST1, 1.0).unwrap();
        let ok = segment_feasible(&s, 3.0, 3.0).unwrap();
        // peak acceleration of the unit rest-to-rest quintic is 10/sqrt(3)
        assert!((ok.peak_v - 1.875).abs() < 1e-12);
        assert!((ok.peak_a - 10.0 / 3f64.sqrt()).abs() < 1e-9);
        assert!(!ok.feasible, "peak acceleration 5.77 exceeds 3");
        let slow = segment_feasible(&s, 3.0, 6.0).unwrap();
        assert!(slow.feasible);
        let tight = segment_feasible(&s, 1.5, 6.0).unwrap();
        assert!(!tight.feasible);
        assert!(segment_feasible(&s, 0.0, 1.0).is_err());
    }

    #[test]
    fn eval_out_of_range() {
        let s = solve_boundary(REST0, REST1, 1.0).unwrap();
        assert!(s.eval(1.5).is_err());
        assert!(s.eval(-0.1).is_err());
        assert!(solve_boundary(REST0, REST1, 0.0).is_err());
    }

    #[test]
    fn propagate_and_sample() {
        let t = propagate(vec![REST0, REST0], 1.0).unwrap();
        assert_eq!(t.segments().len(), 1);
        assert_eq!(t.segments()[0].alpha, 0.0);

        // constant velocity line
        let knots = vec![
            AxisState::new(0.0, 2.0, 0.0),
            AxisState::new(2.0, 2.0, 0.0),
            AxisState::new(4.0, 2.0, 0.0),
        ];
        let line = propagate(knots, 1.0).unwrap();
        for seg in line.segments() {
            assert!(seg.alpha.abs() < 1e-12 && seg.beta.abs() < 1e-12 && seg.gamma.abs() < 1e-12);
            let m = seg.eval(0.5).unwrap();
            assert!((m.p - seg.start.p - 1.0).abs() < 1e-12 && (m.v - 2.0).abs() < 1e-12);
            assert!(m.a.abs() < 1e-12);
        }

        let grid = TimeGrid::new(1.0, 2.0).unwrap();
        assert_eq!(sample(&line, &grid).unwrap(), line.knots());

        let unit = propagate(vec![REST0, REST1], 1.0).unwrap();
        let grid = TimeGrid::new(0.5, 1.0).unwrap();
        let s = sample(&unit, &grid).unwrap();
        assert!((s[1].p - 0.5).abs() < 1e-14 && (s[1].v - 1.875).abs() < 1e-14);
        assert_eq!(s[2], REST1);

        let bad = TimeGrid::new(0.3, 0.9).unwrap();
        assert!(sample(&unit, &bad).is_err());
    }

    #[test]
    fn basis_reproduces_eval() {
        let a = AxisState::new(0.3, -1.2, 0.7);
        let b = AxisState::new(2.0, 0.4, -0.9);
        let seg = solve_boundary(a, b, 1.3).unwrap();
        let basis = boundary_basis(1.3, 0.45);
        let x = [a.p, a.v, a.a, b.p, b.v, b.a];
        let s = seg.eval_unchecked(0.45);
        for (row, want) in basis.iter().zip([s.p, s.v, s.a]) {
            let got: f64 = row.iter().zip(&x).map(|(r, v)| r * v).sum();
            assert!((got - want).abs() < 1e-12);
        }
    }
}
