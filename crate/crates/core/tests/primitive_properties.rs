use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlfleet::primitives::{self, AxisState, SplineSegment};
use stlfleet::stl::TimeGrid;

fn random_state(rng: &mut ChaCha8Rng) -> AxisState {
    AxisState::new(
        rng.gen_range(-10.0..10.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
    )
}

fn random_segment(rng: &mut ChaCha8Rng) -> (AxisState, AxisState, SplineSegment) {
    let a = random_state(rng);
    let b = random_state(rng);
    let t = rng.gen_range(0.2..4.0);
    (a, b, primitives::solve_boundary(a, b, t).unwrap())
}

#[test]
fn boundary_reproduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (a, b, seg) = random_segment(&mut rng);
        assert_eq!(seg.eval(0.0).unwrap(), a);
        let end = seg.eval(seg.duration).unwrap();
        assert!((end.p - b.p).abs() <= 1e-9, "{end:?} vs {b:?}");
        assert!((end.v - b.v).abs() <= 1e-9);
        assert!((end.a - b.a).abs() <= 1e-9);
    }
}

#[test]
fn derivative_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    for _ in 0..500 {
        let (_, _, seg) = random_segment(&mut rng);
        let tau = rng.gen_range(h..seg.duration - h);
        let s = seg.eval(tau).unwrap();
        let (lo, hi) = (seg.eval(tau - h).unwrap(), seg.eval(tau + h).unwrap());
        let dv = (hi.p - lo.p) / (2.0 * h);
        let da = (hi.v - lo.v) / (2.0 * h);
        let dj = (hi.a - lo.a) / (2.0 * h);
        assert!((dv - s.v).abs() <= 1e-6 * s.v.abs().max(1.0));
        assert!((da - s.a).abs() <= 1e-6 * s.a.abs().max(1.0));
        assert!((dj - seg.jerk(tau)).abs() <= 1e-6 * seg.jerk(tau).abs().max(1.0));
    }
}

#[test]
fn closed_form_peaks_match_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let (_, _, seg) = random_segment(&mut rng);
        let peaks = seg.peaks();
        let (sv, sa) = seg.sampled_peaks(100_000);
        assert!((peaks.velocity - sv).abs() <= 1e-6, "{} vs {sv}", peaks.velocity);
        assert!((peaks.acceleration - sa).abs() <= 1e-6, "{} vs {sa}", peaks.acceleration);
    }
}

#[test]
fn rest_to_rest_peak_velocity_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let dp = rng.gen_range(-20.0..20.0);
        let t = rng.gen_range(0.1..10.0);
        let seg = primitives::solve_boundary(
            AxisState::default(),
            AxisState::new(dp, 0.0, 0.0),
            t,
        )
        .unwrap();
        let f = primitives::segment_feasible(&seg, 1e9, 1e9).unwrap();
        assert!((f.peak_v - 1.875 * dp.abs() / t).abs() <= 1e-9 * (1.0 + f.peak_v));
        let s = rng.gen_range(0.5..3.0);
        let stretched = primitives::solve_boundary(
            AxisState::default(),
            AxisState::new(dp, 0.0, 0.0),
            t * s,
        )
        .unwrap();
        let g = primitives::segment_feasible(&stretched, 1e9, 1e9).unwrap();
        assert!((g.peak_v - f.peak_v / s).abs() <= 1e-9 * (1.0 + f.peak_v));
    }
}

#[test]
fn chained_knots_and_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let knots: Vec<AxisState> = (0..7).map(|_| random_state(&mut rng)).collect();
        let traj = primitives::propagate(knots.clone(), 1.0).unwrap();
        for (seg, next) in traj.segments().iter().zip(&knots[1..]) {
            let end = seg.end();
            assert!((end.p - next.p).abs() <= 1e-9);
            assert!((end.v - next.v).abs() <= 1e-9);
            assert!((end.a - next.a).abs() <= 1e-9);
        }
        let grid = TimeGrid::new(0.05, 6.0).unwrap();
        let samples = primitives::sample(&traj, &grid).unwrap();
        assert_eq!(samples.len(), 121);
        for (k, knot) in knots.iter().enumerate() {
            assert_eq!(samples[k * 20], *knot);
        }
        for (i, s) in samples.iter().enumerate() {
            let t = i as f64 * 0.05;
            let direct = traj.state_at(t);
            assert!((direct.p - s.p).abs() <= 1e-9);
        }
    }
    let zero = primitives::propagate(vec![AxisState::default(); 4], 1.0).unwrap();
    let grid = TimeGrid::new(0.25, 3.0).unwrap();
    assert!(primitives::sample(&zero, &grid)
        .unwrap()
        .iter()
        .all(|s| *s == AxisState::default()));
}

proptest! {
    #[test]
    fn feasibility_verdict_matches_peaks(
        p1 in -5.0f64..5.0, v0 in -3.0f64..3.0, v1 in -3.0f64..3.0,
        a0 in -3.0f64..3.0, a1 in -3.0f64..3.0, t in 0.3f64..3.0,
        vmax in 0.5f64..5.0, amax in 0.5f64..5.0,
    ) {
        let seg = primitives::solve_boundary(
            AxisState::new(0.0, v0, a0), AxisState::new(p1, v1, a1), t).unwrap();
        let f = primitives::segment_feasible(&seg, vmax, amax).unwrap();
        prop_assert_eq!(f.feasible, f.peak_v <= vmax && f.peak_a <= amax);
        prop_assert!(f.peak_v >= v0.abs().max(v1.abs()) - 1e-12);
        prop_assert!(f.peak_a >= a0.abs().max(a1.abs()) - 1e-9);
    }
}
