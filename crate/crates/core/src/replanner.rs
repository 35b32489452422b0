//! Event-triggered replanning against injected runtime disturbances.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mission::{self, Mission};
use crate::optim::AscentOptions;
use crate::planner::{sample_basis, Engine, FleetKnots, FleetSamples, PlanResult, PlannerConfig, Status, TraceObjective};
use crate::primitives::{self, AxisState, AxisTrajectory};
use crate::stl::{self, align, Predicate, TimeGrid, Trace, TraceGradient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    /// Deviation threshold (m).
    pub eta: f64,
    /// Event check period (s).
    pub event_period: f64,
    /// Topic waypoint period (s).
    pub topic_period: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            eta: 1.0,
            event_period: 0.5,
            topic_period: 5.0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self, sample_period: f64, path: &str) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::validation(format!("{path}.eta"), "must be positive"));
        }
        let m = crate::stl::align(self.event_period, sample_period, "event_period")
            .map_err(|e| Error::validation(format!("{path}.event_period"), e.to_string()))?;
        if m == 0 {
            return Err(Error::validation(format!("{path}.event_period"), "must be positive"));
        }
        let n = crate::stl::align(self.topic_period, self.event_period, "topic_period")
            .map_err(|e| Error::validation(format!("{path}.topic_period"), e.to_string()))?;
        if n == 0 {
            return Err(Error::validation(format!("{path}.topic_period"), "must be positive"));
        }
        Ok(())
    }
}

/// Runtime offset `offset * exp(-decay (t - onset))` applied from `onset` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub drone: usize,
    pub onset: f64,
    pub offset: [f64; 3],
    #[serde(default)]
    pub decay: f64,
}

/// Scenario section for the runtime simulator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplannerSettings {
    pub trigger: TriggerConfig,
    pub disturbances: Vec<Disturbance>,
}

/// Deviation check that fired at an event instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub drone: usize,
    pub time: f64,
    pub runtime_position: [f64; 3],
    pub planned_position: [f64; 3],
    pub deviation: f64,
}

/// Reconnection segment of one drone over `[start, end]`, in local time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub drone: usize,
    pub start: f64,
    pub end: f64,
    pub status: Status,
    /// Exact robustness of the safety predicates over the window.
    pub window_robustness: f64,
    /// Largest gap between the segment end state and the reference at `end`.
    pub reconnection_error: f64,
    pub iterations: usize,
    pub trajectory: [AxisTrajectory; 3],
}

impl SegmentPlan {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Result of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionLog {
    pub executed: FleetSamples,
    pub triggers: Vec<TriggerEvent>,
    pub replans: Vec<SegmentPlan>,
    /// Exact robustness of the mission formula on the executed trace.
    pub robustness: f64,
    /// Time of the first failed replan; the run continues uncorrected after it.
    pub aborted_at: Option<f64>,
}

/// Weight of the tracking term.
const TRACKING_WEIGHT: f64 = 1.0;
/// Weight of the squared safety-margin shortfall.
const HINGE_WEIGHT: f64 = 1e3;
/// Safety margin asked of the replanned window, at most.
const TARGET_MARGIN: f64 = 0.1;
/// Reconnection tolerance on position, velocity and acceleration.
const RECONNECT_TOL: f64 = 1e-3;

/// Offset state `(p, v, a)` per axis of one disturbance at time `t`.
fn offset_at(d: &Disturbance, t: f64) -> Option<[AxisState; 3]> {
    if t < d.onset {
        return None;
    }
    let e = (-d.decay * (t - d.onset)).exp();
    Some(std::array::from_fn(|ax| {
        let o = d.offset[ax] * e;
        AxisState::new(o, -d.decay * o, d.decay * d.decay * o)
    }))
}

fn add_states(a: &mut [AxisState; 3], b: &[AxisState; 3]) {
    for ax in 0..3 {
        a[ax].p += b[ax].p;
        a[ax].v += b[ax].v;
        a[ax].a += b[ax].a;
    }
}

fn position(s: &[AxisState; 3]) -> Vector3<f64> {
    Vector3::new(s[0].p, s[1].p, s[2].p)
}

fn check_disturbances(samples: &FleetSamples, disturbances: &[Disturbance]) -> Result<()> {
    let horizon = samples.grid.horizon();
    for d in disturbances {
        if d.drone >= samples.drone_count {
            return Err(Error::invalid(format!("disturbance on unknown drone {}", d.drone)));
        }
        if !(0.0..=horizon).contains(&d.onset) {
            return Err(Error::OutOfRange {
                what: "disturbance onset".into(),
                value: d.onset,
                lo: 0.0,
                hi: horizon,
            });
        }
        if !(d.decay >= 0.0) || !d.decay.is_finite() || d.offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("disturbance offset must be finite and decay non-negative"));
        }
    }
    Ok(())
}

/// Open-loop runtime trace: planned states plus every decaying offset.
pub fn apply_disturbances(planned: &FleetSamples, disturbances: &[Disturbance]) -> Result<FleetSamples> {
    check_disturbances(planned, disturbances)?;
    let mut out = planned.clone();
    let q = out.drone_count;
    for k in 0..out.grid.count() {
        let t = out.grid.time(k);
        for d in disturbances {
            if let Some(o) = offset_at(d, t) {
                add_states(&mut out.states[k * q + d.drone], &o);
            }
        }
    }
    Ok(out)
}

/// Compares `runtime` with `reference` at every multiple of the event period.
pub fn monitor(runtime: &FleetSamples, reference: &FleetSamples, config: &TriggerConfig) -> Result<Vec<TriggerEvent>> {
    if runtime.grid != reference.grid || runtime.drone_count != reference.drone_count {
        return Err(Error::invalid("runtime and reference traces are on different grids"));
    }
    config.validate(runtime.grid.sample_period(), "trigger")?;
    let every = align(config.event_period, runtime.grid.sample_period(), "event_period")?;
    let mut out = Vec::new();
    for k in (0..runtime.grid.count()).step_by(every) {
        for d in 0..runtime.drone_count {
            let (p, r) = (runtime.position(k, d), reference.position(k, d));
            let deviation = (p - r).norm();
            if deviation > config.eta {
                out.push(TriggerEvent {
                    drone: d,
                    time: runtime.grid.time(k),
                    runtime_position: p.into(),
                    planned_position: r.into(),
                    deviation,
                });
            }
        }
    }
    Ok(out)
}

/// Replanning window from sample `start`: it ends at the first topic instant
/// at least two knot periods ahead, or at the horizon. Returns
/// `(end sample, samples per segment)`.
pub fn replan_window(grid: &TimeGrid, start: usize, topic_period: f64, knot_period: f64) -> Result<(usize, usize)> {
    let ts = grid.sample_period();
    let topic = align(topic_period, ts, "topic_period")?;
    let kp = align(knot_period, ts, "knot_period")?;
    if topic == 0 || kp == 0 {
        return Err(Error::invalid("topic and knot periods must be positive"));
    }
    let earliest = start + 2 * kp;
    let end = (earliest.div_ceil(topic) * topic).min(grid.steps());
    let n = end.saturating_sub(start);
    if n < 2 {
        return Err(Error::invalid(format!("no room to replan after t = {}", grid.time(start))));
    }
    // Segment length: a divisor of the window closest to the knot period,
    // with at least two segments.
    let per = (1..=n / 2)
        .filter(|p| n % p == 0)
        .min_by_key(|&p| (p.abs_diff(kp), std::cmp::Reverse(p)))
        .expect("n >= 2 has the divisor 1");
    Ok((end, per))
}

struct Reconnect<'a> {
    drone: usize,
    reference: Vec<Vector3<f64>>,
    predicates: &'a [Predicate],
    margin: f64,
    sample_period: f64,
}

impl TraceObjective for Reconnect<'_> {
    fn eval(&self, trace: &Trace, grad: &mut TraceGradient) -> Result<f64> {
        grad.reset();
        let w = TRACKING_WEIGHT * self.sample_period;
        let mut value = 0.0;
        for (s, r) in self.reference.iter().enumerate() {
            let diff = trace.position(s, self.drone) - r;
            value -= w * diff.norm_squared();
            grad.add_position(s, self.drone, -2.0 * w * diff);
            for p in self.predicates {
                let short = self.margin - p.value(trace, s);
                if short > 0.0 {
                    value -= HINGE_WEIGHT * short * short;
                    p.backprop(trace, s, 2.0 * HINGE_WEIGHT * short, grad);
                }
            }
        }
        Ok(value)
    }
}

fn window_trace(reference: &FleetSamples, start: usize, end: usize) -> Result<Trace> {
    let ts = reference.grid.sample_period();
    let grid = TimeGrid::new(ts, (end - start) as f64 * ts)?;
    let q = reference.drone_count;
    let slice = &reference.states[start * q..(end + 1) * q];
    let pos = slice.iter().map(position).collect();
    let vel = slice.iter().map(|s| Vector3::new(s[0].v, s[1].v, s[2].v)).collect();
    Trace::from_parts(grid, q, pos, vel)
}

fn drone_predicates(mission: &Mission, drone: usize) -> Result<Vec<Predicate>> {
    Ok(mission::safety_predicates(mission)?
        .into_iter()
        .filter(|p| p.support().iter().any(|&(d, _)| d == drone))
        .collect())
}

fn window_safety(predicates: &[Predicate], trace: &Trace) -> f64 {
    (0..trace.len())
        .flat_map(|s| predicates.iter().map(move |p| p.value(trace, s)))
        .fold(f64::INFINITY, f64::min)
}

/// Replans `drone` from `state` at sample `start` back onto `reference` at
/// sample `end`, keeping every other drone on `reference`.
#[allow(clippy::too_many_arguments)]
pub fn replan_segment(
    state: [AxisState; 3],
    drone: usize,
    reference: &FleetSamples,
    mission: &Mission,
    start: usize,
    end: usize,
    per: usize,
    config: &PlannerConfig,
) -> Result<SegmentPlan> {
    if drone >= reference.drone_count {
        return Err(Error::invalid(format!("no drone {drone} in the reference")));
    }
    if end > reference.grid.steps() || end <= start || !(end - start).is_multiple_of(per) || (end - start) / per < 2 {
        return Err(Error::invalid("replanning window must span at least two whole segments"));
    }
    if state.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("runtime state must be finite"));
    }
    let ts = reference.grid.sample_period();
    let segments = (end - start) / per;
    let knot_period = per as f64 * ts;
    let predicates = drone_predicates(mission, drone)?;
    let mut trace = window_trace(reference, start, end)?;
    let planned_margin = window_safety(&predicates, &trace);
    let margin = TARGET_MARGIN.min(0.5 * planned_margin).max(0.0);

    let shift: [f64; 3] = std::array::from_fn(|ax| state[ax].p - reference.state(start, drone)[ax].p);
    let mut knots: FleetKnots = vec![std::array::from_fn(|_| Vec::new()); reference.drone_count];
    for ax in 0..3 {
        knots[drone][ax] = (0..=segments)
            .map(|j| {
                if j == 0 {
                    return state[ax];
                }
                let mut s = reference.state(start + j * per, drone)[ax];
                s.p += shift[ax] * (1.0 - j as f64 / segments as f64);
                s
            })
            .collect();
    }
    let nodes = [(drone, 0), (drone, 1), (drone, 2)];
    let engine = Engine {
        knot_period,
        per,
        segments,
        nodes: &nodes,
        terminal_fixed: true,
        v_max: config.v_max,
        a_max: config.a_max,
        margin: config.bound_margin,
        energy_weight: 0.0,
        rounds: config.penalty_rounds,
        options: AscentOptions {
            max_iterations: config.max_iterations,
            tolerance: config.tolerance,
            ..AscentOptions::default()
        },
        basis: sample_basis(knot_period, per),
    };
    let objective = Reconnect {
        drone,
        reference: (start..=end).map(|k| reference.position(k, drone)).collect(),
        predicates: &predicates,
        margin,
        sample_period: ts,
    };
    let out = engine.run(&objective, &mut knots, &mut trace)?;

    let axes: Vec<AxisTrajectory> = knots[drone]
        .iter()
        .map(|k| primitives::propagate(k.clone(), knot_period))
        .collect::<Result<_>>()?;
    let trajectory: [AxisTrajectory; 3] = std::array::from_fn(|ax| axes[ax].clone());
    let grid = TimeGrid::new(ts, (end - start) as f64 * ts)?;
    let q = reference.drone_count;
    let (pos, _) = trace.columns_mut();
    for (ax, traj) in trajectory.iter().enumerate() {
        for (s, st) in primitives::sample(traj, &grid)?.into_iter().enumerate() {
            pos[s * q + drone][ax] = st.p;
        }
    }
    let window_robustness = window_safety(&predicates, &trace);
    let target = reference.state(end, drone);
    let reconnection_error = (0..3)
        .map(|ax| {
            let s = trajectory[ax].knots()[segments];
            let t = target[ax];
            (s.p - t.p).abs().max((s.v - t.v).abs()).max((s.a - t.a).abs())
        })
        .fold(0.0, f64::max);
    let status = if window_robustness > 0.0 && engine.peaks_ok(&knots) && reconnection_error <= RECONNECT_TOL {
        Status::Converged
    } else {
        Status::Infeasible
    };
    Ok(SegmentPlan {
        drone,
        start: reference.grid.time(start),
        end: reference.grid.time(end),
        status,
        window_robustness,
        reconnection_error,
        iterations: out.iterations,
        trajectory,
    })
}

/// Closed loop of disturbance, monitoring and replanning over the plan.
///
/// A disturbance is absorbed once a successful replan starts from the state
/// it produced. Monitoring always compares against the active reference, so
/// the deviation at a check is the sum of the unabsorbed offsets. After a
/// failed replan the run is aborted: no further checks, and the remaining
/// offsets stay on the executed trace.
pub fn simulate_mission(
    plan: &PlanResult,
    disturbances: &[Disturbance],
    mission: &Mission,
    trigger: &TriggerConfig,
) -> Result<ExecutionLog> {
    if plan.trajectories.len() != mission.drone_count() {
        return Err(Error::invalid("plan and mission have different fleet sizes"));
    }
    let config = &mission.planner;
    let mut reference = plan.samples()?;
    check_disturbances(&reference, disturbances)?;
    let grid = reference.grid;
    trigger.validate(grid.sample_period(), "trigger")?;
    let every = align(trigger.event_period, grid.sample_period(), "event_period")?;
    let q = reference.drone_count;
    let mut absorbed = vec![false; disturbances.len()];
    let mut executed = reference.clone();
    let mut triggers = Vec::new();
    let mut replans = Vec::new();
    let mut aborted_at = None;

    let pending = |absorbed: &[bool], drone: usize, t: f64| {
        let mut total: Option<[AxisState; 3]> = None;
        for (d, _) in disturbances.iter().zip(absorbed).filter(|(d, a)| !**a && d.drone == drone) {
            if let Some(o) = offset_at(d, t) {
                add_states(total.get_or_insert([AxisState::default(); 3]), &o);
            }
        }
        total
    };

    for k in 0..grid.count() {
        let t = grid.time(k);
        if k % every == 0 && aborted_at.is_none() {
            for drone in 0..q {
                let Some(off) = pending(&absorbed, drone, t) else { continue };
                let deviation = position(&off).norm();
                if deviation <= trigger.eta {
                    continue;
                }
                let planned = reference.state(k, drone);
                let mut state = planned;
                add_states(&mut state, &off);
                triggers.push(TriggerEvent {
                    drone,
                    time: t,
                    runtime_position: position(&state).into(),
                    planned_position: position(&planned).into(),
                    deviation,
                });
                let segment = replan_window(&grid, k, trigger.topic_period, config.knot_period)
                    .and_then(|(end, per)| replan_segment(state, drone, &reference, mission, k, end, per, config));
                let segment = match segment {
                    Ok(s) => s,
                    Err(Error::InvalidArgument(_)) => {
                        aborted_at = Some(t);
                        break;
                    }
                    Err(e) => return Err(e),
                };
                if segment.converged() {
                    let local = TimeGrid::new(grid.sample_period(), segment.end - segment.start)?;
                    for (ax, traj) in segment.trajectory.iter().enumerate() {
                        for (s, st) in primitives::sample(traj, &local)?.into_iter().enumerate() {
                            reference.states[(k + s) * q + drone][ax] = st;
                        }
                    }
                    for (a, d) in absorbed.iter_mut().zip(disturbances) {
                        if d.drone == drone && d.onset <= t {
                            *a = true;
                        }
                    }
                } else {
                    aborted_at = Some(t);
                }
                replans.push(segment);
                if aborted_at.is_some() {
                    break;
                }
            }
        }
        for drone in 0..q {
            let mut s = reference.state(k, drone);
            if let Some(off) = pending(&absorbed, drone, t) {
                add_states(&mut s, &off);
            }
            executed.states[k * q + drone] = s;
        }
    }
    let formula = mission::mission_formula(mission)?;
    let robustness = stl::robustness(&formula, &executed.trace()?, 0)?;
    Ok(ExecutionLog {
        executed,
        triggers,
        replans,
        robustness,
        aborted_at,
    })
}
