//! Per-drone robustness curve over time.
//!
//! At time `t` a drone's value is the minimum over its target and home
//! requirements whose window has opened, each scored by the best membership
//! margin reached so far inside its window. The curve rises as requirements
//! are met. Before any window opens the current margins are used instead.

use stlfleet::mission::{self, Mission};
use stlfleet::planner::FleetSamples;
use stlfleet::stl::{Channel, Predicate};

use crate::CliError;

struct Requirement {
    open: usize,
    close: usize,
    margin: Vec<f64>,
}

pub fn robustness_profile(samples: &FleetSamples, mission: &Mission) -> Result<Vec<Vec<f64>>, CliError> {
    let grid = samples.grid;
    let trace = samples.trace()?;
    let deadline = grid.index_of(mission.visit_deadline(), "visit deadline")?;
    let last = grid.steps();
    let assignment = mission::assign_targets(mission);
    let series = |p: Predicate| (0..grid.count()).map(|k| p.value(&trace, k)).collect::<Vec<_>>();
    let mut out = Vec::with_capacity(mission.drone_count());
    for d in 0..mission.drone_count() {
        let mut reqs = Vec::new();
        for &t in &assignment.per_drone[d] {
            reqs.push(Requirement {
                open: 0,
                close: deadline,
                margin: series(Predicate::inside(d, Channel::Position, &mission.targets[t])?),
            });
        }
        reqs.push(Requirement {
            open: deadline,
            close: last,
            margin: series(Predicate::inside(d, Channel::Position, &mission.home(d))?),
        });
        let mut best = vec![f64::NEG_INFINITY; reqs.len()];
        let curve = (0..grid.count())
            .map(|k| {
                let mut value = f64::INFINITY;
                let mut any = false;
                for (r, b) in reqs.iter().zip(best.iter_mut()) {
                    if k < r.open {
                        continue;
                    }
                    if k <= r.close {
                        *b = b.max(r.margin[k]);
                    }
                    value = value.min(*b);
                    any = true;
                }
                if any {
                    value
                } else {
                    reqs.iter().map(|r| r.margin[k]).fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        out.push(curve);
    }
    Ok(out)
}
