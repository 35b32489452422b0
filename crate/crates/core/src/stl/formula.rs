use std::sync::Arc;

use nalgebra::Vector3;

use super::grid::{interval_to_indices, Interval, TimeGrid};
use super::trace::{Trace, TraceGradient};
use crate::error::{Error, Result};
use crate::geometry::{Polytope, Region};

/// Which per-drone signal a predicate reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Position,
    Velocity,
}

/// Atomic proposition: a continuous, piecewise-smooth function `mu` of one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// `mu = normal . s - offset`.
    AffineHalfspace {
        drone: usize,
        channel: Channel,
        normal: Vector3<f64>,
        offset: f64,
    },
    /// `mu` = smallest face slack of the region (positive inside).
    BoxMembership {
        drone: usize,
        channel: Channel,
        name: String,
        region: Arc<Polytope>,
    },
    /// `mu` = largest face violation of the region (positive outside).
    RegionAvoid {
        drone: usize,
        name: String,
        region: Arc<Polytope>,
    },
    /// `mu = |p_i - p_h| - delta`.
    PairDistanceAtLeast {
        drone_i: usize,
        drone_h: usize,
        delta: f64,
    },
}

impl Predicate {
    pub fn affine(drone: usize, channel: Channel, normal: Vector3<f64>, offset: f64) -> Self {
        Predicate::AffineHalfspace {
            drone,
            channel,
            normal,
            offset,
        }
    }

    pub fn inside(drone: usize, channel: Channel, region: &Region) -> Result<Self> {
        Ok(Predicate::BoxMembership {
            drone,
            channel,
            name: region.name.clone(),
            region: Arc::new(region.polytope()?),
        })
    }

    pub fn avoid(drone: usize, region: &Region) -> Result<Self> {
        Ok(Predicate::RegionAvoid {
            drone,
            name: region.name.clone(),
            region: Arc::new(region.polytope()?),
        })
    }

    pub fn separation(drone_i: usize, drone_h: usize, delta: f64) -> Self {
        Predicate::PairDistanceAtLeast {
            drone_i,
            drone_h,
            delta,
        }
    }

    fn validate(&self, drone_count: Option<usize>) -> Result<()> {
        let check_drone = |d: usize| match drone_count {
            Some(q) if d >= q => Err(Error::invalid(format!(
                "predicate refers to drone {d} but the trace has {q}"
            ))),
            _ => Ok(()),
        };
        match self {
            Predicate::AffineHalfspace {
                drone,
                normal,
                offset,
                ..
            } => {
                check_drone(*drone)?;
                if !(normal.norm() > 0.0) || !offset.is_finite() {
                    return Err(Error::invalid("affine predicate needs a non-zero normal"));
                }
            }
            Predicate::BoxMembership { drone, .. } | Predicate::RegionAvoid { drone, .. } => {
                check_drone(*drone)?
            }
            Predicate::PairDistanceAtLeast {
                drone_i,
                drone_h,
                delta,
            } => {
                check_drone(*drone_i)?;
                check_drone(*drone_h)?;
                if drone_i == drone_h {
                    return Err(Error::invalid("distance predicate needs two distinct drones"));
                }
                if !(*delta > 0.0) {
                    return Err(Error::invalid("distance threshold must be positive"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn signal(trace: &Trace, k: usize, drone: usize, channel: Channel) -> Vector3<f64> {
        match channel {
            Channel::Position => trace.position(k, drone),
            Channel::Velocity => trace.velocity(k, drone),
        }
    }

    /// `mu` at sample `k`.
    pub fn value(&self, trace: &Trace, k: usize) -> f64 {
        match self {
            Predicate::AffineHalfspace {
                drone,
                channel,
                normal,
                offset,
            } => normal.dot(&Self::signal(trace, k, *drone, *channel)) - offset,
            Predicate::BoxMembership {
                drone,
                channel,
                region,
                ..
            } => region.inside_margin(&Self::signal(trace, k, *drone, *channel)).0,
            Predicate::RegionAvoid { drone, region, .. } => {
                region.exterior_margin(&trace.position(k, *drone)).0
            }
            Predicate::PairDistanceAtLeast {
                drone_i,
                drone_h,
                delta,
            } => (trace.position(k, *drone_i) - trace.position(k, *drone_h)).norm() - delta,
        }
    }

    /// Adds `weight * grad(mu)` at sample `k` into `grad`.
    pub(crate) fn backprop(&self, trace: &Trace, k: usize, weight: f64, grad: &mut TraceGradient) {
        if weight == 0.0 {
            return;
        }
        let mut add = |drone: usize, channel: Channel, g: Vector3<f64>| match channel {
            Channel::Position => grad.add_position(k, drone, g),
            Channel::Velocity => grad.add_velocity(k, drone, g),
        };
        match self {
            Predicate::AffineHalfspace {
                drone,
                channel,
                normal,
                ..
            } => add(*drone, *channel, normal * weight),
            Predicate::BoxMembership {
                drone,
                channel,
                region,
                ..
            } => {
                let (_, face) = region.inside_margin(&Self::signal(trace, k, *drone, *channel));
                add(*drone, *channel, -region.faces()[face].normal * weight);
            }
            Predicate::RegionAvoid { drone, region, .. } => {
                let (_, face) = region.exterior_margin(&trace.position(k, *drone));
                add(*drone, Channel::Position, region.faces()[face].normal * weight);
            }
            Predicate::PairDistanceAtLeast {
                drone_i, drone_h, ..
            } => {
                let diff = trace.position(k, *drone_i) - trace.position(k, *drone_h);
                let n = diff.norm();
                if n > 0.0 {
                    let u = diff * (weight / n);
                    add(*drone_i, Channel::Position, u);
                    add(*drone_h, Channel::Position, -u);
                }
            }
        }
    }

    /// `(drone, axis)` pairs whose signal the predicate depends on.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let axes_of = |normals: &mut dyn Iterator<Item = Vector3<f64>>| {
            let mut used = [false; 3];
            for n in normals {
                for (a, u) in used.iter_mut().enumerate() {
                    *u |= n[a] != 0.0;
                }
            }
            (0..3).filter(|&a| used[a]).collect::<Vec<_>>()
        };
        match self {
            Predicate::AffineHalfspace { drone, normal, .. } => {
                axes_of(&mut std::iter::once(*normal))
                    .into_iter()
                    .map(|a| (*drone, a))
                    .collect()
            }
            Predicate::BoxMembership { drone, region, .. }
            | Predicate::RegionAvoid { drone, region, .. } => {
                axes_of(&mut region.faces().iter().map(|f| f.normal))
                    .into_iter()
                    .map(|a| (*drone, a))
                    .collect()
            }
            Predicate::PairDistanceAtLeast {
                drone_i, drone_h, ..
            } => (0..3)
                .map(|a| (*drone_i, a))
                .chain((0..3).map(|a| (*drone_h, a)))
                .collect(),
        }
    }

    pub fn uses_velocity(&self) -> bool {
        matches!(
            self,
            Predicate::AffineHalfspace {
                channel: Channel::Velocity,
                ..
            } | Predicate::BoxMembership {
                channel: Channel::Velocity,
                ..
            }
        )
    }
}

/// STL formula over [`Predicate`]s with intervals in seconds.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Pred(Predicate),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Always { interval: Interval, sub: Box<Formula> },
    Eventually { interval: Interval, sub: Box<Formula> },
    Until {
        interval: Interval,
        left: Box<Formula>,
        right: Box<Formula>,
    },
}

impl Formula {
    pub fn pred(p: Predicate) -> Self {
        Formula::Pred(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(sub: Formula) -> Self {
        Formula::Not(Box::new(sub))
    }

    pub fn and(subs: Vec<Formula>) -> Self {
        Formula::And(subs)
    }

    pub fn or(subs: Vec<Formula>) -> Self {
        Formula::Or(subs)
    }

    pub fn always(interval: Interval, sub: Formula) -> Self {
        Formula::Always {
            interval,
            sub: Box::new(sub),
        }
    }

    pub fn eventually(interval: Interval, sub: Formula) -> Self {
        Formula::Eventually {
            interval,
            sub: Box::new(sub),
        }
    }

    pub fn until(interval: Interval, left: Formula, right: Formula) -> Self {
        Formula::Until {
            interval,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Structural checks: non-empty And/Or, ordered non-negative intervals,
    /// intervals inside `horizon` (when given), valid predicates.
    pub fn validate(&self, horizon: Option<f64>, drone_count: Option<usize>) -> Result<()> {
        let check_interval = |i: &Interval| -> Result<()> {
            let hi = horizon.unwrap_or(f64::INFINITY);
            if !(0.0 <= i.start && i.start <= i.end) {
                return Err(Error::invalid(format!(
                    "interval [{}, {}] must satisfy 0 <= a <= b",
                    i.start, i.end
                )));
            }
            if i.end > hi * (1.0 + 1e-12) {
                return Err(Error::OutOfRange {
                    what: "interval end".into(),
                    value: i.end,
                    lo: 0.0,
                    hi,
                });
            }
            Ok(())
        };
        match self {
            Formula::Pred(p) => p.validate(drone_count),
            Formula::Not(s) => s.validate(horizon, drone_count),
            Formula::And(v) | Formula::Or(v) => {
                if v.is_empty() {
                    return Err(Error::invalid("conjunction/disjunction needs operands"));
                }
                v.iter().try_for_each(|s| s.validate(horizon, drone_count))
            }
            Formula::Always { interval, sub } | Formula::Eventually { interval, sub } => {
                check_interval(interval)?;
                sub.validate(horizon, drone_count)
            }
            Formula::Until {
                interval,
                left,
                right,
            } => {
                check_interval(interval)?;
                left.validate(horizon, drone_count)?;
                right.validate(horizon, drone_count)
            }
        }
    }

    /// Every interval maps onto the grid.
    pub fn check_alignment(&self, grid: &TimeGrid) -> Result<()> {
        match self {
            Formula::Pred(_) => Ok(()),
            Formula::Not(s) => s.check_alignment(grid),
            Formula::And(v) | Formula::Or(v) => v.iter().try_for_each(|s| s.check_alignment(grid)),
            Formula::Always { interval, sub } | Formula::Eventually { interval, sub } => {
                interval_to_indices(*interval, grid)?;
                sub.check_alignment(grid)
            }
            Formula::Until {
                interval,
                left,
                right,
            } => {
                interval_to_indices(*interval, grid)?;
                left.check_alignment(grid)?;
                right.check_alignment(grid)
            }
        }
    }

    /// Number of max/min operators on the deepest root-to-leaf path.
    pub fn operator_depth(&self) -> usize {
        match self {
            Formula::Pred(_) => 0,
            Formula::Not(s) => s.operator_depth(),
            Formula::And(v) | Formula::Or(v) => {
                let inner = v.iter().map(Formula::operator_depth).max().unwrap_or(0);
                if v.len() > 1 {
                    1 + inner
                } else {
                    inner
                }
            }
            Formula::Always { sub, .. } | Formula::Eventually { sub, .. } => 1 + sub.operator_depth(),
            // outer max, pair min, inner min
            Formula::Until { left, right, .. } => {
                3 + left.operator_depth().max(right.operator_depth())
            }
        }
    }

    /// Largest number of arguments any max/min operator receives on `grid`.
    pub fn max_arity(&self, grid: &TimeGrid) -> Result<usize> {
        Ok(match self {
            Formula::Pred(_) => 1,
            Formula::Not(s) => s.max_arity(grid)?,
            Formula::And(v) | Formula::Or(v) => {
                let mut m = v.len();
                for s in v {
                    m = m.max(s.max_arity(grid)?);
                }
                m
            }
            Formula::Always { interval, sub } | Formula::Eventually { interval, sub } => {
                let (a, b) = interval_to_indices(*interval, grid)?;
                (b - a + 1).max(sub.max_arity(grid)?)
            }
            Formula::Until {
                interval,
                left,
                right,
            } => {
                let (_, b) = interval_to_indices(*interval, grid)?;
                // the pair min always has two arguments
                (b + 1)
                    .max(2)
                    .max(left.max_arity(grid)?)
                    .max(right.max_arity(grid)?)
            }
        })
    }

    /// All predicates, depth first.
    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.collect_predicates(&mut out);
        out
    }

    fn collect_predicates<'a>(&'a self, out: &mut Vec<&'a Predicate>) {
        match self {
            Formula::Pred(p) => out.push(p),
            Formula::Not(s) => s.collect_predicates(out),
            Formula::And(v) | Formula::Or(v) => v.iter().for_each(|s| s.collect_predicates(out)),
            Formula::Always { sub, .. } | Formula::Eventually { sub, .. } => {
                sub.collect_predicates(out)
            }
            Formula::Until { left, right, .. } => {
                left.collect_predicates(out);
                right.collect_predicates(out);
            }
        }
    }

    /// Top-level conjuncts (the formula itself when it is not a conjunction).
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(v) => v.iter().collect(),
            f => vec![f],
        }
    }
}
