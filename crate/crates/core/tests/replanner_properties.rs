use nalgebra::Vector3;
use proptest::prelude::*;
use stlfleet::geometry::Region;
use stlfleet::mission::{DroneSpec, Mission};
use stlfleet::planner::{self, FleetSamples, PlanResult, Status};
use stlfleet::primitives::AxisState;
use stlfleet::replanner::{self, Disturbance, TriggerConfig};
use stlfleet::stl::TimeGrid;

const TS: f64 = 0.05;

/// Drone 0 cruises along x at 0.5 m/s past a pillar; drone 1 hovers far away.
fn corridor() -> (Mission, PlanResult) {
    let mut d0 = DroneSpec::new("a", [2.0, 4.0, 5.0]);
    d0.initial.velocity = [0.5, 0.0, 0.0];
    let d1 = DroneSpec::new("b", [10.0, 16.0, 5.0]);
    let mut m = Mission::new(
        vec![d0, d1],
        vec![
            Region::cuboid("end", [16.0, 2.0, 3.0], [19.0, 6.0, 7.0]),
            Region::cuboid("post", [8.0, 14.0, 3.0], [12.0, 18.0, 7.0]),
        ],
    );
    m.workspace = Region::cuboid("workspace", [0.0; 3], [20.0, 20.0, 10.0]);
    m.obstacles = vec![Region::cuboid("pillar", [10.0, 5.0, 0.0], [12.0, 7.0, 10.0])];
    m.horizon = 30.0;
    m.validate().unwrap();
    let problem = planner::build_problem(&m, &m.planner).unwrap();
    let knots = (0..2)
        .map(|d| {
            std::array::from_fn(|ax| {
                (0..=30)
                    .map(|k| {
                        let p = m.drones[d].initial.position[ax];
                        if d == 0 && ax == 0 {
                            AxisState::new(p + 0.5 * k as f64, 0.5, 0.0)
                        } else {
                            AxisState::new(p, 0.0, 0.0)
                        }
                    })
                    .collect()
            })
        })
        .collect();
    let plan = planner::assemble(&problem, knots, &m.planner).unwrap();
    (m, plan)
}

fn step(drone: usize, onset: f64, offset: [f64; 3], decay: f64) -> Disturbance {
    Disturbance {
        drone,
        onset,
        offset,
        decay,
    }
}

fn index(t: f64) -> usize {
    (t / TS).round() as usize
}

fn displaced(plan: &FleetSamples, k: usize, drone: usize, offset: [f64; 3]) -> [AxisState; 3] {
    let mut s = plan.state(k, drone);
    for ax in 0..3 {
        s[ax].p += offset[ax];
    }
    s
}

#[test]
fn disturbance_shapes() {
    let (_, plan) = corridor();
    let s = plan.samples().unwrap();
    assert_eq!(replanner::apply_disturbances(&s, &[]).unwrap(), s);

    let r = replanner::apply_disturbances(&s, &[step(0, 10.0, [2.0, 0.0, 0.0], 0.0)]).unwrap();
    for k in 0..s.grid.count() {
        let dev = (r.position(k, 0) - s.position(k, 0)).norm();
        let want = if s.grid.time(k) >= 10.0 { 2.0 } else { 0.0 };
        assert!((dev - want).abs() < 1e-12);
        assert_eq!(r.position(k, 1), s.position(k, 1));
    }

    let r = replanner::apply_disturbances(&s, &[step(0, 10.0, [2.0, 0.0, 0.0], 1.0)]).unwrap();
    let k = index(11.0);
    let dev = r.position(k, 0).x - s.position(k, 0).x;
    assert!((dev - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
    assert!((dev - 0.7358).abs() < 1e-4);
    // Velocity carries the derivative of the offset.
    assert!((r.state(k, 0)[0].v - s.state(k, 0)[0].v + dev).abs() < 1e-12);

    assert!(replanner::apply_disturbances(&s, &[step(5, 1.0, [1.0; 3], 0.0)]).is_err());
    assert!(replanner::apply_disturbances(&s, &[step(0, 31.0, [1.0; 3], 0.0)]).is_err());
}

#[test]
fn monitor_examples() {
    let (_, plan) = corridor();
    let s = plan.samples().unwrap();
    let config = TriggerConfig::default();
    assert!(replanner::monitor(&s, &s, &config).unwrap().is_empty());

    let r = replanner::apply_disturbances(&s, &[step(0, 10.0, [2.0, 0.0, 0.0], 0.0)]).unwrap();
    let events = replanner::monitor(&r, &s, &config).unwrap();
    assert_eq!(events[0].time, 10.0);
    assert!(events.iter().all(|e| e.drone == 0 && (e.deviation - 2.0).abs() < 1e-12));

    // Onset between checks: first check after it.
    let r = replanner::apply_disturbances(&s, &[step(0, 10.2, [2.0, 0.0, 0.0], 0.0)]).unwrap();
    assert_eq!(replanner::monitor(&r, &s, &config).unwrap()[0].time, 10.5);

    let r = replanner::apply_disturbances(&s, &[step(0, 10.0, [0.5, 0.0, 0.0], 0.0)]).unwrap();
    assert!(replanner::monitor(&r, &s, &config).unwrap().is_empty());

    let other = FleetSamples {
        grid: TimeGrid::new(TS, 10.0).unwrap(),
        drone_count: 2,
        states: vec![[AxisState::default(); 3]; 2 * 201],
    };
    assert!(replanner::monitor(&other, &s, &config).is_err());
}

#[test]
fn window_rule() {
    let grid = TimeGrid::new(TS, 60.0).unwrap();
    // t = 10: next topic instant 15, five 1 s segments.
    assert_eq!(replanner::replan_window(&grid, index(10.0), 5.0, 1.0).unwrap(), (index(15.0), 20));
    // t = 14.5 is too close to 15, so the window runs to 20.
    let (end, per) = replanner::replan_window(&grid, index(14.5), 5.0, 1.0).unwrap();
    assert_eq!(end, index(20.0));
    assert_eq!((end - index(14.5)) % per, 0);
    // Near the horizon the window is clipped to T.
    assert_eq!(replanner::replan_window(&grid, index(59.0), 5.0, 1.0).unwrap().0, index(60.0));
    assert!(replanner::replan_window(&grid, index(60.0), 5.0, 1.0).is_err());
}

#[test]
fn zero_deviation_keeps_the_plan() {
    let (m, plan) = corridor();
    let s = plan.samples().unwrap();
    let (k, end) = (index(10.0), index(15.0));
    let seg = replanner::replan_segment(s.state(k, 0), 0, &s, &m, k, end, 20, &m.planner).unwrap();
    assert_eq!(seg.status, Status::Converged);
    let grid = TimeGrid::new(TS, 5.0).unwrap();
    for (ax, traj) in seg.trajectory.iter().enumerate() {
        for (i, st) in stlfleet::primitives::sample(traj, &grid).unwrap().iter().enumerate() {
            assert!((st.p - s.state(k + i, 0)[ax].p).abs() < 1e-3);
        }
    }
}

#[test]
fn lateral_offset_reconnects() {
    let (m, plan) = corridor();
    let s = plan.samples().unwrap();
    let (k, end) = (index(4.0), index(10.0));
    let state = displaced(&s, k, 0, [0.0, -2.0, 0.0]);
    let seg = replanner::replan_segment(state, 0, &s, &m, k, end, 20, &m.planner).unwrap();
    assert_eq!(seg.status, Status::Converged);
    assert!(seg.reconnection_error <= 1e-3);
    let last = seg.trajectory.each_ref().map(|t| *t.knots().last().unwrap());
    let target = s.state(end, 0);
    for ax in 0..3 {
        assert!((last[ax].p - target[ax].p).abs() <= 1e-3);
    }
    assert!(seg.window_robustness > 0.0);
}

#[test]
fn detour_around_the_pillar() {
    let (m, plan) = corridor();
    let s = plan.samples().unwrap();
    // Pushed beside the pillar: the straight way back cuts through it.
    let (k, end) = (index(14.0), index(20.0));
    let state = displaced(&s, k, 0, [0.0, 3.5, 0.0]);
    let straight: Vec<Vector3<f64>> = (0..=10)
        .map(|i| {
            let f = i as f64 / 10.0;
            let a = Vector3::from(state.map(|s| s.p));
            a + (s.position(end, 0) - a) * f
        })
        .collect();
    let pillar = m.obstacles[0].polytope().unwrap();
    assert!(straight.iter().any(|p| pillar.contains(p)));
    let seg = replanner::replan_segment(state, 0, &s, &m, k, end, 20, &m.planner).unwrap();
    assert_eq!(seg.status, Status::Converged);
    assert!(seg.window_robustness > 0.0);
}

#[test]
fn unreachable_reconnection_is_infeasible() {
    let (m, plan) = corridor();
    let s = plan.samples().unwrap();
    let (k, end) = (index(14.0), index(20.0));
    let state = displaced(&s, k, 0, [0.0, 0.0, 30.0]);
    let seg = replanner::replan_segment(state, 0, &s, &m, k, end, 20, &m.planner).unwrap();
    assert_eq!(seg.status, Status::Infeasible);

    let log = replanner::simulate_mission(&plan, &[step(0, 14.0, [0.0, 0.0, 30.0], 0.0)], &m, &TriggerConfig::default())
        .unwrap();
    assert_eq!(log.aborted_at, Some(14.0));
    assert_eq!(log.replans.len(), 1);
    assert_eq!(log.triggers.len(), 1);
}

#[test]
fn empty_suite_is_idempotent() {
    let (m, plan) = corridor();
    let log = replanner::simulate_mission(&plan, &[], &m, &TriggerConfig::default()).unwrap();
    assert_eq!(log.executed, plan.samples().unwrap());
    assert!(log.triggers.is_empty() && log.replans.is_empty());
    assert_eq!(log.robustness, plan.exact_robustness);
}

#[test]
fn small_disturbance_passes_through() {
    let (m, plan) = corridor();
    let d = [step(1, 3.0, [0.4, 0.4, 0.0], 0.0)];
    let log = replanner::simulate_mission(&plan, &d, &m, &TriggerConfig::default()).unwrap();
    assert!(log.triggers.is_empty());
    assert_eq!(log.executed, replanner::apply_disturbances(&plan.samples().unwrap(), &d).unwrap());
}

#[test]
fn two_steps_two_replans() {
    let (m, plan) = corridor();
    let d = [step(0, 3.0, [0.0, 2.0, 0.0], 0.0), step(1, 12.0, [2.0, 0.0, 0.0], 0.0)];
    let log = replanner::simulate_mission(&plan, &d, &m, &TriggerConfig::default()).unwrap();
    assert_eq!(log.triggers.len(), 2);
    assert_eq!(log.replans.len(), 2);
    let s = plan.samples().unwrap();
    for r in &log.replans {
        assert!(r.converged());
        let k = index(r.end);
        for ax in 0..3 {
            assert!((log.executed.state(k, r.drone)[ax].p - s.state(k, r.drone)[ax].p).abs() <= 1e-3);
        }
        // After reconnection the plan is followed unchanged.
        for j in k..s.grid.count() {
            assert_eq!(log.executed.state(j, r.drone), s.state(j, r.drone));
        }
    }
}

fn suite() -> impl Strategy<Value = Vec<Disturbance>> {
    let one = (0usize..2, 1u32..50, prop::array::uniform3(-2.5f64..2.5), prop::bool::ANY).prop_map(
        |(drone, half, offset, decays)| step(drone, half as f64 * 0.5 + 0.1, offset, if decays { 0.3 } else { 0.0 }),
    );
    prop::collection::vec(one, 0..3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn open_loop_triggers_are_sound_and_complete(d in suite()) {
        let (_, plan) = corridor();
        let s = plan.samples().unwrap();
        let config = TriggerConfig::default();
        let r = replanner::apply_disturbances(&s, &d).unwrap();
        let events = replanner::monitor(&r, &s, &config).unwrap();
        let mut expected = Vec::new();
        for k in (0..s.grid.count()).step_by(10) {
            for drone in 0..2 {
                if (r.position(k, drone) - s.position(k, drone)).norm() > config.eta {
                    expected.push((drone, s.grid.time(k)));
                }
            }
        }
        let got: Vec<(usize, f64)> = events.iter().map(|e| (e.drone, e.time)).collect();
        prop_assert_eq!(got, expected);
        prop_assert!(events.iter().all(|e| e.deviation > config.eta));
    }

    #[test]
    fn closed_loop_replans_are_safe_and_reconnect(d in suite()) {
        let (m, plan) = corridor();
        let config = TriggerConfig::default();
        let log = replanner::simulate_mission(&plan, &d, &m, &config).unwrap();
        prop_assert_eq!(log.triggers.len(), log.replans.len());
        let every = (config.event_period / TS).round() as usize;
        for (e, r) in log.triggers.iter().zip(&log.replans) {
            prop_assert!(e.deviation > config.eta);
            prop_assert_eq!(index(e.time) % every, 0);
            prop_assert_eq!(e.time, r.start);
            let topic = r.end / config.topic_period;
            prop_assert!((topic - topic.round()).abs() < 1e-9 || r.end == m.horizon);
            if r.converged() {
                prop_assert!(r.window_robustness > 0.0);
                prop_assert!(r.reconnection_error <= 1e-3);
            }
        }
    }
}
