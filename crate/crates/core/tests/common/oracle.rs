//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the evaluator under test except to read trace
//! samples and predicate values: windows are enumerated explicitly and the
//! max/min recursion is written out directly.
#![allow(dead_code)]

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stlfleet::geometry::Region;
use stlfleet::stl::{Channel, DroneSample, FleetSample, Formula, Interval, Predicate, TimeGrid, Trace};

fn idx(t: f64, ts: f64) -> usize {
    (t / ts).round() as usize
}

fn lse_max(v: &[f64], c: f64) -> f64 {
    if v.len() == 1 {
        return v[0];
    }
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| ((x - m) * c).exp()).sum::<f64>().ln() / c
}

fn lse_min(v: &[f64], c: f64) -> f64 {
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    -lse_max(&neg, c)
}

#[derive(Clone, Copy)]
pub enum Mode {
    Exact,
    Smooth(f64),
}

fn mx(v: &[f64], m: Mode) -> f64 {
    match m {
        Mode::Exact => v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Mode::Smooth(c) => lse_max(v, c),
    }
}

fn mn(v: &[f64], m: Mode) -> f64 {
    match m {
        Mode::Exact => v.iter().cloned().fold(f64::INFINITY, f64::min),
        Mode::Smooth(c) => lse_min(v, c),
    }
}

/// Direct recursion over the robustness definition, one time index at a time.
pub fn reference(f: &Formula, trace: &Trace, k: usize, mode: Mode) -> f64 {
    let ts = trace.grid().sample_period();
    match f {
        Formula::Pred(p) => p.value(trace, k),
        Formula::Not(s) => -reference(s, trace, k, mode),
        Formula::And(v) => {
            let vals: Vec<f64> = v.iter().map(|s| reference(s, trace, k, mode)).collect();
            mn(&vals, mode)
        }
        Formula::Or(v) => {
            let vals: Vec<f64> = v.iter().map(|s| reference(s, trace, k, mode)).collect();
            mx(&vals, mode)
        }
        Formula::Always { interval, sub } => {
            let vals: Vec<f64> = (k + idx(interval.start, ts)..=k + idx(interval.end, ts))
                .map(|j| reference(sub, trace, j, mode))
                .collect();
            mn(&vals, mode)
        }
        Formula::Eventually { interval, sub } => {
            let vals: Vec<f64> = (k + idx(interval.start, ts)..=k + idx(interval.end, ts))
                .map(|j| reference(sub, trace, j, mode))
                .collect();
            mx(&vals, mode)
        }
        Formula::Until {
            interval,
            left,
            right,
        } => {
            let outer: Vec<f64> = (k + idx(interval.start, ts)..=k + idx(interval.end, ts))
                .map(|tp| {
                    let inner: Vec<f64> =
                        (k..=tp).map(|tpp| reference(left, trace, tpp, mode)).collect();
                    mn(&[reference(right, trace, tp, mode), mn(&inner, mode)], mode)
                })
                .collect();
            mx(&outer, mode)
        }
    }
}

/// Extra samples a formula needs beyond its evaluation index, in grid steps.
pub fn reach(f: &Formula, ts: f64) -> usize {
    match f {
        Formula::Pred(_) => 0,
        Formula::Not(s) => reach(s, ts),
        Formula::And(v) | Formula::Or(v) => v.iter().map(|s| reach(s, ts)).max().unwrap_or(0),
        Formula::Always { interval, sub } | Formula::Eventually { interval, sub } => {
            idx(interval.end, ts) + reach(sub, ts)
        }
        Formula::Until {
            interval,
            left,
            right,
        } => idx(interval.end, ts) + reach(left, ts).max(reach(right, ts)),
    }
}

pub fn random_trace(rng: &mut ChaCha8Rng, grid: TimeGrid, drones: usize) -> Trace {
    let samples = (0..grid.count())
        .map(|_| FleetSample {
            drones: (0..drones)
                .map(|_| DroneSample {
                    position: Vector3::new(
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                    ),
                    velocity: Vector3::new(
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    ),
                })
                .collect(),
        })
        .collect();
    Trace::new(grid, samples).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() > 0.1 {
            return v;
        }
    }
}

pub fn random_predicate(rng: &mut ChaCha8Rng, drones: usize) -> Predicate {
    let d = rng.gen_range(0..drones);
    let channel = if rng.gen_bool(0.7) {
        Channel::Position
    } else {
        Channel::Velocity
    };
    match rng.gen_range(0..4) {
        0 => Predicate::affine(d, channel, random_vec(rng), rng.gen_range(-1.0..1.0)),
        1 => {
            let lo = Vector3::new(
                rng.gen_range(-2.0..0.0),
                rng.gen_range(-2.0..0.0),
                rng.gen_range(-2.0..0.0),
            );
            let hi = lo + Vector3::new(
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
            );
            let r = Region::cuboid("box", lo.into(), hi.into());
            Predicate::inside(d, channel, &r).unwrap()
        }
        2 => {
            let lo = Vector3::new(
                rng.gen_range(-2.0..0.0),
                rng.gen_range(-2.0..0.0),
                rng.gen_range(-2.0..0.0),
            );
            let r = Region::cuboid("obs", lo.into(), (lo + Vector3::repeat(1.5)).into());
            Predicate::avoid(d, &r).unwrap()
        }
        _ => {
            if drones < 2 {
                Predicate::affine(d, channel, random_vec(rng), 0.0)
            } else {
                let h = (d + 1 + rng.gen_range(0..drones - 1)) % drones;
                Predicate::separation(d, h, rng.gen_range(0.5..2.0))
            }
        }
    }
}

fn random_interval(rng: &mut ChaCha8Rng, budget: usize, ts: f64) -> (Interval, usize) {
    let b = rng.gen_range(0..=budget);
    let a = rng.gen_range(0..=b);
    (Interval::new(a as f64 * ts, b as f64 * ts), b)
}

/// Random formula whose windows never reach more than `budget` steps ahead.
pub fn random_formula(
    rng: &mut ChaCha8Rng,
    depth: usize,
    budget: usize,
    ts: f64,
    drones: usize,
) -> Formula {
    if depth == 0 {
        return Formula::pred(random_predicate(rng, drones));
    }
    match rng.gen_range(0..7) {
        0 => Formula::not(random_formula(rng, depth - 1, budget, ts, drones)),
        1 | 2 => {
            let n = rng.gen_range(1..=3);
            let subs = (0..n)
                .map(|_| random_formula(rng, depth - 1, budget, ts, drones))
                .collect();
            if rng.gen_bool(0.5) {
                Formula::and(subs)
            } else {
                Formula::or(subs)
            }
        }
        3 => {
            let (i, b) = random_interval(rng, budget, ts);
            Formula::always(i, random_formula(rng, depth - 1, budget - b, ts, drones))
        }
        4 => {
            let (i, b) = random_interval(rng, budget, ts);
            Formula::eventually(i, random_formula(rng, depth - 1, budget - b, ts, drones))
        }
        5 => {
            let (i, b) = random_interval(rng, budget, ts);
            Formula::until(
                i,
                random_formula(rng, depth - 1, budget - b, ts, drones),
                random_formula(rng, depth - 1, budget - b, ts, drones),
            )
        }
        _ => Formula::pred(random_predicate(rng, drones)),
    }
}

/// Random formula with exactly one operator applied to predicates.
pub fn random_single_operator(rng: &mut ChaCha8Rng, budget: usize, ts: f64, drones: usize) -> Formula {
    let p = |rng: &mut ChaCha8Rng| Formula::pred(random_predicate(rng, drones));
    match rng.gen_range(0..6) {
        0 => Formula::not(p(rng)),
        1 => Formula::and((0..rng.gen_range(1..=4)).map(|_| p(rng)).collect()),
        2 => Formula::or((0..rng.gen_range(1..=4)).map(|_| p(rng)).collect()),
        3 => Formula::always(random_interval(rng, budget, ts).0, p(rng)),
        4 => Formula::eventually(random_interval(rng, budget, ts).0, p(rng)),
        _ => {
            let i = random_interval(rng, budget, ts).0;
            Formula::until(i, p(rng), p(rng))
        }
    }
}

/// Central finite differences of `f` with respect to every position and
/// velocity entry; returns `(d_position, d_velocity)` in sample-major order.
pub fn finite_difference(
    trace: &Trace,
    h: f64,
    f: impl Fn(&Trace) -> f64,
) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let n = trace.len() * trace.drone_count();
    let mut dp = vec![Vector3::zeros(); n];
    let mut dv = vec![Vector3::zeros(); n];
    let mut t = trace.clone();
    for i in 0..n {
        for a in 0..3 {
            let orig = t.positions_mut()[i][a];
            t.positions_mut()[i][a] = orig + h;
            let fp = f(&t);
            t.positions_mut()[i][a] = orig - h;
            let fm = f(&t);
            t.positions_mut()[i][a] = orig;
            dp[i][a] = (fp - fm) / (2.0 * h);

            let orig = t.velocities_mut()[i][a];
            t.velocities_mut()[i][a] = orig + h;
            let fp = f(&t);
            t.velocities_mut()[i][a] = orig - h;
            let fm = f(&t);
            t.velocities_mut()[i][a] = orig;
            dv[i][a] = (fp - fm) / (2.0 * h);
        }
    }
    (dp, dv)
}

/// Closest distance between any two drones over the trace.
pub fn min_pair_distance(trace: &Trace) -> f64 {
    let mut m = f64::INFINITY;
    for k in 0..trace.len() {
        for i in 0..trace.drone_count() {
            for j in (i + 1)..trace.drone_count() {
                m = m.min((trace.position(k, i) - trace.position(k, j)).norm());
            }
        }
    }
    m
}
