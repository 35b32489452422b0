//! Multi-drone trajectory planning from Signal Temporal Logic missions.
//!
//! The crate is organised bottom-up:
//!
//! - [`stl`]: formulas over sampled fleet traces, exact robustness, the
//!   log-sum-exp smooth robustness and its analytic gradient.
//! - [`primitives`]: quintic motion primitives joining position, velocity
//!   and acceleration boundary states, with closed-form feasibility checks.
//! - [`planner`]: robustness maximisation over knot states, with an optional
//!   energy penalty, and exact re-validation of the result.
//! - [`mission`]: inspection scenarios (workspace, obstacles, targets, fleet)
//!   and the mission formula built from them.
//! - [`replanner`]: disturbance injection, event-triggered deviation
//!   monitoring and segment replanning towards the next topic waypoint.
//!
//! ```
//! use stlfleet::stl::{Formula, Interval, Predicate, TimeGrid, Trace, Channel};
//! use nalgebra::Vector3;
//!
//! let grid = TimeGrid::new(0.5, 2.0).unwrap();
//! let trace = Trace::constant(grid, &[Vector3::new(2.0, 0.0, 0.0)]);
//! let above = Formula::pred(Predicate::affine(0, Channel::Position, Vector3::x(), 1.0));
//! let phi = Formula::always(Interval::new(0.0, 2.0), above);
//! assert_eq!(stlfleet::stl::robustness(&phi, &trace, 0).unwrap(), 1.0);
//! ```

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod geometry;
pub mod lse;
pub mod mission;
pub mod optim;
pub mod planner;
pub mod primitives;
pub mod replanner;
pub mod stl;

pub use error::{Error, Result};
