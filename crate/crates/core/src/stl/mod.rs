//! Signal Temporal Logic over sampled fleet traces.
//!
//! Exact robustness uses hard max/min; the smooth robustness replaces every
//! max by `(1/c) ln sum exp(c x)` and every min by `-(1/c) ln sum exp(-c x)`.
//! Satisfaction (robustness > 0) is always decided by the exact evaluator.

mod eval;
mod formula;
mod grid;
mod trace;

pub use formula::{Channel, Formula, Predicate};
pub use grid::{interval_to_indices, Interval, TimeGrid};
pub use trace::{DroneSample, FleetSample, Trace, TraceGradient};

pub(crate) use eval::{backprop, values, Semantics};
pub(crate) use grid::align;

use crate::error::{Error, Result};

/// Default LSE scale.
pub const DEFAULT_C: f64 = 5.0;

fn prepare(formula: &Formula, trace: &Trace, k: usize) -> Result<()> {
    formula.validate(Some(trace.grid().horizon()), Some(trace.drone_count()))?;
    if k > trace.grid().steps() {
        return Err(Error::HorizonOverflow {
            needed: k,
            last: trace.grid().steps(),
        });
    }
    Ok(())
}

fn check_c(c: f64) -> Result<()> {
    if !(c >= 1.0) || !c.is_finite() {
        return Err(Error::invalid(format!("LSE scale c must be >= 1, got {c}")));
    }
    Ok(())
}

/// Exact robustness of `formula` on `trace` at sample `k`.
pub fn robustness(formula: &Formula, trace: &Trace, k: usize) -> Result<f64> {
    prepare(formula, trace, k)?;
    Ok(values(formula, trace, k, k, Semantics::Exact)?[0])
}

/// Exact robustness at every sample of `lo..=hi`.
pub fn robustness_signal(formula: &Formula, trace: &Trace, lo: usize, hi: usize) -> Result<Vec<f64>> {
    prepare(formula, trace, hi)?;
    if lo > hi {
        return Err(Error::invalid("empty index range"));
    }
    values(formula, trace, lo, hi, Semantics::Exact)
}

/// LSE-smoothed robustness with scale `c >= 1`.
pub fn smooth_robustness(formula: &Formula, trace: &Trace, k: usize, c: f64) -> Result<f64> {
    check_c(c)?;
    prepare(formula, trace, k)?;
    Ok(values(formula, trace, k, k, Semantics::Smooth(c))?[0])
}

/// Gradient of [`smooth_robustness`] with respect to every position and
/// velocity sample of the trace.
pub fn smooth_robustness_gradient(
    formula: &Formula,
    trace: &Trace,
    k: usize,
    c: f64,
) -> Result<TraceGradient> {
    let mut grad = TraceGradient::zeros(trace);
    smooth_value_and_gradient(formula, trace, k, c, &mut grad)?;
    Ok(grad)
}

/// Smooth robustness and its gradient in one pass; `grad` is overwritten.
pub fn smooth_value_and_gradient(
    formula: &Formula,
    trace: &Trace,
    k: usize,
    c: f64,
    grad: &mut TraceGradient,
) -> Result<f64> {
    check_c(c)?;
    prepare(formula, trace, k)?;
    grad.reset();
    Ok(backprop(formula, trace, k, k, c, &[1.0], grad)?[0])
}

/// Unchecked hot-loop variant used by the planner (formula validated once up front).
pub(crate) fn smooth_value_and_gradient_unchecked(
    formula: &Formula,
    trace: &Trace,
    c: f64,
    grad: &mut TraceGradient,
) -> Result<f64> {
    grad.reset();
    Ok(backprop(formula, trace, 0, 0, c, &[1.0], grad)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn line_trace(xs: &[f64]) -> Trace {
        let grid = TimeGrid::new(1.0, (xs.len() - 1) as f64).unwrap();
        let samples = xs
            .iter()
            .map(|&x| FleetSample {
                drones: vec![DroneSample {
                    position: Vector3::new(x, 0.0, 0.0),
                    velocity: Vector3::zeros(),
                }],
            })
            .collect();
        Trace::new(grid, samples).unwrap()
    }

    fn x_minus(off: f64) -> Formula {
        Formula::pred(Predicate::affine(0, Channel::Position, Vector3::x(), off))
    }

    #[test]
    fn predicate_value() {
        let t = line_trace(&[2.0, 2.0, 2.0]);
        assert_eq!(robustness(&x_minus(1.0), &t, 0).unwrap(), 1.0);
    }

    #[test]
    fn always_is_window_min() {
        let t = line_trace(&[1.0, -0.5, 3.0]);
        let f = Formula::always(Interval::new(0.0, 2.0), x_minus(0.0));
        assert_eq!(robustness(&f, &t, 0).unwrap(), -0.5);
    }

    #[test]
    fn until_example() {
        // left values [1,1,1] from drone 0's y, right values [-1,2,-1] from x.
        let grid = TimeGrid::new(1.0, 2.0).unwrap();
        let samples = [-1.0, 2.0, -1.0]
            .iter()
            .map(|&x| FleetSample {
                drones: vec![DroneSample {
                    position: Vector3::new(x, 1.0, 0.0),
                    velocity: Vector3::zeros(),
                }],
            })
            .collect();
        let t = Trace::new(grid, samples).unwrap();
        let left = Formula::pred(Predicate::affine(0, Channel::Position, Vector3::y(), 0.0));
        let f = Formula::until(Interval::new(0.0, 2.0), left, x_minus(0.0));
        assert_eq!(robustness(&f, &t, 0).unwrap(), 1.0);
    }

    #[test]
    fn affine_gradient_is_unit_at_sample() {
        let t = line_trace(&[0.3, -1.0, 4.0]);
        let g = smooth_robustness_gradient(&x_minus(1.0), &t, 1, 5.0).unwrap();
        for k in 0..3 {
            let expect = if k == 1 { Vector3::x() } else { Vector3::zeros() };
            assert_eq!(g.position(k, 0), expect);
            assert_eq!(g.velocity(k, 0), Vector3::zeros());
        }
    }

    #[test]
    fn horizon_overflow() {
        let t = line_trace(&[0.0, 1.0, 2.0]);
        let f = Formula::eventually(Interval::new(0.0, 2.0), x_minus(0.0));
        assert_eq!(robustness(&f, &t, 0).unwrap(), 2.0);
        assert!(matches!(robustness(&f, &t, 1), Err(Error::HorizonOverflow { .. })));
    }

    #[test]
    fn or_is_dual_of_and() {
        let t = line_trace(&[0.5, -2.0, 1.5]);
        let a = x_minus(0.0);
        let b = x_minus(1.0);
        let or = Formula::or(vec![a.clone(), b.clone()]);
        let via_and = Formula::not(Formula::and(vec![Formula::not(a), Formula::not(b)]));
        for k in 0..3 {
            assert_eq!(robustness(&or, &t, k).unwrap(), robustness(&via_and, &t, k).unwrap());
            assert_eq!(
                smooth_robustness(&or, &t, k, 5.0).unwrap(),
                smooth_robustness(&via_and, &t, k, 5.0).unwrap()
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = line_trace(&[0.0, 1.0]);
        assert!(robustness(&Formula::and(vec![]), &t, 0).is_err());
        assert!(smooth_robustness(&x_minus(0.0), &t, 0, 0.5).is_err());
        let f = Formula::always(Interval::new(0.0, 0.5), x_minus(0.0));
        assert!(matches!(robustness(&f, &t, 0), Err(Error::Misaligned { .. })));
        let bad = Formula::pred(Predicate::separation(0, 0, 1.0));
        assert!(robustness(&bad, &t, 0).is_err());
    }
}
