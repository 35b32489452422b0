//! Robustness-maximising trajectory planner over quintic knot variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Solver settings. Defaults follow the reference parameter table; the
/// mission horizon lives on [`crate::mission::Mission`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// LSE scale.
    pub c: f64,
    pub sample_period: f64,
    pub knot_period: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub multistart_count: usize,
    pub rng_seed: u64,
    /// Diagonal of the energy weight matrix.
    pub energy_weight: f64,
    pub decouple_axes: bool,
    /// Outer rounds of intra-segment peak penalisation.
    pub penalty_rounds: usize,
    /// Relative tightening of the bounds seen by the optimiser.
    pub bound_margin: f64,
    /// Uniform noise amplitude (m) added to the initial guess of extra starts.
    pub start_noise: f64,
    /// Build the nested until variant of the mission formula.
    pub strict_until: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            c: 5.0,
            sample_period: 0.05,
            knot_period: 1.0,
            v_max: 3.0,
            a_max: 3.0,
            max_iterations: 500,
            tolerance: 1e-6,
            multistart_count: 3,
            rng_seed: 0,
            energy_weight: 0.1,
            decouple_axes: false,
            penalty_rounds: 5,
            bound_margin: 0.01,
            start_noise: 0.1,
            strict_until: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let positive = [
            ("c", self.c),
            ("sample_period", self.sample_period),
            ("knot_period", self.knot_period),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(format!("{path}.{name}"), format!("must be positive, got {v}")));
            }
        }
        if self.c < 1.0 {
            return Err(Error::validation(format!("{path}.c"), "LSE scale must be at least 1"));
        }
        if self.multistart_count == 0 {
            return Err(Error::validation(format!("{path}.multistart_count"), "must be at least 1"));
        }
        if !(self.energy_weight >= 0.0) || !self.energy_weight.is_finite() {
            return Err(Error::validation(format!("{path}.energy_weight"), "must be non-negative"));
        }
        if !(0.0..0.5).contains(&self.bound_margin) {
            return Err(Error::validation(format!("{path}.bound_margin"), "must lie in [0, 0.5)"));
        }
        if !(self.start_noise >= 0.0) || !self.start_noise.is_finite() {
            return Err(Error::validation(format!("{path}.start_noise"), "must be non-negative"));
        }
        crate::stl::align(self.knot_period, self.sample_period, "knot_period")
            .map_err(|e| Error::validation(format!("{path}.knot_period"), e.to_string()))?;
        Ok(())
    }
}

mod engine;
mod validate;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::mission::{self, Mission};
use crate::optim::AscentOptions;
use crate::primitives::{self, AxisState, AxisTrajectory};
use crate::stl::{self, align, Formula, TimeGrid, Trace};

pub use engine::FleetKnots;
pub(crate) use engine::{sample_basis, Engine, TraceObjective};
use engine::SmoothRobustness;
pub use validate::{exact_validate, validate_samples, FleetSamples, ValidationReport, Violation, ViolationKind};

/// A group of `(drone, axis)` signals optimised jointly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    nodes: Vec<(usize, usize)>,
}

impl Block {
    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }
}

/// Assembled optimisation problem for one mission.
#[derive(Debug, Clone)]
pub struct Problem {
    grid: TimeGrid,
    knot_period: f64,
    per: usize,
    segments: usize,
    drone_count: usize,
    formula: Formula,
    blocks: Vec<Block>,
    block_formulas: Vec<Formula>,
    initial_guess: FleetKnots,
    delta_min: Option<f64>,
}

impl Problem {
    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn knot_period(&self) -> f64 {
        self.knot_period
    }

    /// Number of knots per axis, including the fixed initial knot.
    pub fn knot_count(&self) -> usize {
        self.segments + 1
    }

    pub fn drone_count(&self) -> usize {
        self.drone_count
    }

    /// Free scalar variables summed over blocks.
    pub fn variable_count(&self) -> usize {
        self.blocks.iter().map(|b| b.nodes.len() * self.segments * 3).sum()
    }

    pub fn initial_guess(&self) -> &FleetKnots {
        &self.initial_guess
    }

    /// Every drone holding its initial position.
    pub fn hover_knots(&self) -> FleetKnots {
        self.initial_guess
            .iter()
            .map(|axes| {
                std::array::from_fn(|ax| {
                    let k0 = axes[ax][0];
                    let mut v = vec![AxisState::new(k0.p, 0.0, 0.0); self.segments + 1];
                    v[0] = k0;
                    v
                })
            })
            .collect()
    }

    pub fn trajectories(&self, knots: &FleetKnots) -> Result<Vec<[AxisTrajectory; 3]>> {
        knots
            .iter()
            .map(|axes| {
                let t: Vec<AxisTrajectory> = axes
                    .iter()
                    .map(|k| primitives::propagate(k.clone(), self.knot_period))
                    .collect::<Result<_>>()?;
                Ok([t[0].clone(), t[1].clone(), t[2].clone()])
            })
            .collect()
    }

    /// Exact and smooth robustness of the knots' sampled trace.
    pub fn evaluate(&self, knots: &FleetKnots, c: f64) -> Result<(f64, f64)> {
        let samples = FleetSamples::from_trajectories(&self.trajectories(knots)?, self.grid)?;
        let trace = samples.trace()?;
        Ok((
            stl::robustness(&self.formula, &trace, 0)?,
            stl::smooth_robustness(&self.formula, &trace, 0, c)?,
        ))
    }

    fn engine<'a>(&self, nodes: &'a [(usize, usize)], config: &PlannerConfig, energy_weight: f64, basis: &[[[f64; 6]; 3]]) -> Engine<'a> {
        Engine {
            knot_period: self.knot_period,
            per: self.per,
            segments: self.segments,
            nodes,
            terminal_fixed: false,
            v_max: config.v_max,
            a_max: config.a_max,
            margin: config.bound_margin,
            energy_weight,
            rounds: config.penalty_rounds,
            options: AscentOptions {
                max_iterations: config.max_iterations,
                tolerance: config.tolerance,
                ..AscentOptions::default()
            },
            basis: basis.to_vec(),
        }
    }
}

/// Flat packing of every non-initial knot, ordered drone, axis, knot, then
/// `(p, v, a)`; the energy slack block is present only for energy-aware plans.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    pub values: Vec<f64>,
    pub epsilon: Option<Vec<f64>>,
}

impl DecisionVector {
    pub fn pack(knots: &FleetKnots, with_epsilon: bool) -> Self {
        let mut values = Vec::new();
        let mut eps = Vec::new();
        for axes in knots {
            for axis in axes {
                for s in &axis[1..] {
                    values.extend_from_slice(&[s.p, s.v, s.a]);
                    eps.push(s.a.abs());
                }
            }
        }
        DecisionVector {
            values,
            epsilon: with_epsilon.then_some(eps),
        }
    }

    /// Inverse of [`DecisionVector::pack`] given the fixed initial knots.
    pub fn unpack(&self, initial: &[[AxisState; 3]]) -> Result<FleetKnots> {
        let q = initial.len();
        let per_axis = 3 * q;
        if q == 0 || !self.values.len().is_multiple_of(per_axis) {
            return Err(Error::invalid("decision vector length does not match the fleet"));
        }
        let free = self.values.len() / per_axis / 3;
        let mut it = self.values.chunks_exact(3);
        Ok(initial
            .iter()
            .map(|init| {
                std::array::from_fn(|ax| {
                    let mut v = Vec::with_capacity(free + 1);
                    v.push(init[ax]);
                    for _ in 0..free {
                        let c = it.next().expect("length checked");
                        v.push(AxisState::new(c[0], c[1], c[2]));
                    }
                    v
                })
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    IterationLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: Status,
    pub exact_robustness: f64,
    pub smooth_robustness: f64,
    /// Sampled acceleration energy `sum |a(t_s)|^2 T_s` per drone.
    pub energy_total: Vec<f64>,
    pub iterations: usize,
    /// Which multistart produced the result.
    pub start_index: usize,
    pub sample_period: f64,
    pub horizon: f64,
    pub trajectories: Vec<[AxisTrajectory; 3]>,
    /// Energy slack per drone, axis and knot; present for energy-aware plans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<[Vec<f64>; 3]>>,
    /// Objective after every accepted step, one sequence per penalty round and block.
    pub objective_history: Vec<Vec<f64>>,
    pub constraint_report: ValidationReport,
}

impl PlanResult {
    pub fn knots(&self) -> FleetKnots {
        self.trajectories
            .iter()
            .map(|axes| std::array::from_fn(|ax| axes[ax].knots().to_vec()))
            .collect()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.sample_period, self.horizon)
    }

    pub fn samples(&self) -> Result<FleetSamples> {
        FleetSamples::from_trajectories(&self.trajectories, self.grid()?)
    }
}

/// Union-find over drones (or drone axes) linked by shared conjuncts.
fn partition(formula: &Formula, drone_count: usize, per_axis: bool) -> (Vec<Block>, Vec<Formula>) {
    let node = |d: usize, ax: usize| if per_axis { d * 3 + ax } else { d };
    let n = if per_axis { drone_count * 3 } else { drone_count };
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let conjuncts = formula.conjuncts();
    let mut supports = Vec::with_capacity(conjuncts.len());
    for c in &conjuncts {
        let mut ids: Vec<usize> = c
            .predicates()
            .iter()
            .flat_map(|p| p.support())
            .map(|(d, ax)| node(d, ax))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        for w in ids.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        supports.push(ids);
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<Formula>> = Vec::new();
    for (c, ids) in conjuncts.iter().zip(&supports) {
        let Some(&first) = ids.first() else { continue };
        let r = find(&mut parent, first);
        let slot = match roots.iter().position(|&x| x == r) {
            Some(i) => i,
            None => {
                roots.push(r);
                members.push(Vec::new());
                roots.len() - 1
            }
        };
        members[slot].push((*c).clone());
    }
    let mut out: Vec<(Block, Formula)> = roots
        .iter()
        .zip(members)
        .map(|(&r, fs)| {
            let mut nodes = Vec::new();
            for d in 0..drone_count {
                for ax in 0..3 {
                    if find(&mut parent, node(d, ax)) == r {
                        nodes.push((d, ax));
                    }
                }
            }
            nodes.dedup();
            let f = if fs.len() == 1 { fs.into_iter().next().unwrap() } else { Formula::and(fs) };
            (Block { nodes }, f)
        })
        .collect();
    out.sort_by_key(|(b, _)| b.nodes[0]);
    out.into_iter().unzip()
}

/// Waypoint schedule: targets spread over `[0, 2T/3]`, home by `5T/6`.
fn initial_guess(mission: &Mission, assignment: &mission::TargetAssignment, segments: usize, knot_period: f64) -> FleetKnots {
    let deadline = mission.visit_deadline();
    (0..mission.drone_count())
        .map(|d| {
            let targets = &assignment.per_drone[d];
            let n = targets.len() as f64;
            let mut way = vec![(0.0, mission.initial_position(d))];
            for (j, &t) in targets.iter().enumerate() {
                way.push(((j as f64 + 1.0) / (n + 1.0) * deadline, mission.targets[t].center()));
            }
            way.push(((deadline + mission.horizon) / 2.0, mission.home(d).center()));
            let at = |t: f64| {
                let i = way.iter().rposition(|w| w.0 <= t).unwrap_or(0);
                if i + 1 >= way.len() {
                    return way[i].1;
                }
                let (t0, p0) = way[i];
                let (t1, p1) = way[i + 1];
                p0 + (p1 - p0) * ((t - t0) / (t1 - t0))
            };
            let init = &mission.drones[d].initial;
            std::array::from_fn(|ax| {
                let mut ks: Vec<AxisState> = (0..=segments)
                    .map(|k| AxisState::new(at(k as f64 * knot_period)[ax], 0.0, 0.0))
                    .collect();
                ks[0] = init.axis(ax);
                ks
            })
        })
        .collect()
}

pub fn build_problem(mission: &Mission, config: &PlannerConfig) -> Result<Problem> {
    config.validate("planner")?;
    let mut m = mission.clone();
    m.planner = config.clone();
    m.validate()?;
    let formula = mission::mission_formula(&m)?;
    if formula.conjuncts().is_empty() {
        return Err(Error::invalid("mission formula is empty"));
    }
    let grid = m.grid()?;
    formula.check_alignment(&grid)?;
    let per = align(config.knot_period, config.sample_period, "knot_period")?;
    let segments = align(m.horizon, config.knot_period, "horizon")?;
    if per == 0 || segments == 0 {
        return Err(Error::invalid("horizon must span at least one knot period"));
    }
    let (blocks, block_formulas) = partition(&formula, m.drone_count(), config.decouple_axes);
    let guess = initial_guess(&m, &mission::assign_targets(&m), segments, config.knot_period);
    Ok(Problem {
        grid,
        knot_period: config.knot_period,
        per,
        segments,
        drone_count: m.drone_count(),
        formula,
        blocks,
        block_formulas,
        initial_guess: guess,
        delta_min: Some(m.delta_min),
    })
}

/// Problem for an arbitrary formula; the initial guess holds every drone at
/// its initial position.
pub fn formula_problem(formula: Formula, initial: &[[AxisState; 3]], horizon: f64, config: &PlannerConfig) -> Result<Problem> {
    config.validate("planner")?;
    if initial.is_empty() {
        return Err(Error::invalid("at least one drone is required"));
    }
    if formula.conjuncts().is_empty() {
        return Err(Error::invalid("formula is empty"));
    }
    let grid = TimeGrid::new(config.sample_period, horizon)?;
    formula.validate(Some(horizon), Some(initial.len()))?;
    formula.check_alignment(&grid)?;
    let per = align(config.knot_period, config.sample_period, "knot_period")?;
    let segments = align(horizon, config.knot_period, "horizon")?;
    if per == 0 || segments == 0 {
        return Err(Error::invalid("horizon must span at least one knot period"));
    }
    let (blocks, block_formulas) = partition(&formula, initial.len(), config.decouple_axes);
    let guess = initial
        .iter()
        .map(|init| {
            std::array::from_fn(|ax| {
                let mut v = vec![AxisState::new(init[ax].p, 0.0, 0.0); segments + 1];
                v[0] = init[ax];
                v
            })
        })
        .collect();
    Ok(Problem {
        grid,
        knot_period: config.knot_period,
        per,
        segments,
        drone_count: initial.len(),
        formula,
        blocks,
        block_formulas,
        initial_guess: guess,
        delta_min: None,
    })
}

struct Candidate {
    knots: FleetKnots,
    iterations: usize,
    converged: bool,
    histories: Vec<Vec<f64>>,
}

fn full_trace(problem: &Problem, knots: &FleetKnots, basis: &[[[f64; 6]; 3]]) -> Result<Trace> {
    let q = problem.drone_count;
    let n = problem.grid.count() * q;
    let mut trace = Trace::from_parts(problem.grid, q, vec![Default::default(); n], vec![Default::default(); n])?;
    let nodes: Vec<(usize, usize)> = (0..q).flat_map(|d| (0..3).map(move |ax| (d, ax))).collect();
    let config = PlannerConfig::default();
    let engine = problem.engine(&nodes, &config, 0.0, basis);
    for &(d, ax) in &nodes {
        engine.resample(&knots[d][ax], d, ax, &mut trace);
    }
    Ok(trace)
}

fn ascend(problem: &Problem, config: &PlannerConfig, mut knots: FleetKnots, energy_weight: f64, basis: &[[[f64; 6]; 3]]) -> Result<Candidate> {
    let mut trace = full_trace(problem, &knots, basis)?;
    let mut cand = Candidate {
        knots: Vec::new(),
        iterations: 0,
        converged: true,
        histories: Vec::new(),
    };
    for (block, formula) in problem.blocks.iter().zip(&problem.block_formulas) {
        let engine = problem.engine(&block.nodes, config, energy_weight, basis);
        let objective = SmoothRobustness { formula, c: config.c };
        let out = engine.run(&objective, &mut knots, &mut trace)?;
        cand.iterations += out.iterations;
        cand.converged &= out.converged;
        cand.histories.extend(out.histories);
    }
    cand.knots = knots;
    Ok(cand)
}

fn perturbed(problem: &Problem, seed: u64, start: usize, amplitude: f64) -> FleetKnots {
    let mut knots = problem.initial_guess.clone();
    if start == 0 || amplitude == 0.0 {
        return knots;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    for axes in knots.iter_mut() {
        for axis in axes.iter_mut() {
            for s in axis[1..].iter_mut() {
                s.p += rng.gen_range(-amplitude..=amplitude);
            }
        }
    }
    knots
}

fn finish(problem: &Problem, config: &PlannerConfig, cand: Candidate, start: usize, with_epsilon: bool) -> Result<PlanResult> {
    let trajectories = problem.trajectories(&cand.knots)?;
    let samples = FleetSamples::from_trajectories(&trajectories, problem.grid)?;
    let trace = samples.trace()?;
    let exact = stl::robustness(&problem.formula, &trace, 0)?;
    let smooth = stl::smooth_robustness(&problem.formula, &trace, 0, config.c)?;
    let report = validate::check(&trajectories, &samples, &problem.formula, problem.delta_min, config)?;
    let status = if exact > 0.0 && report.violations.is_empty() {
        Status::Converged
    } else if !cand.converged {
        Status::IterationLimit
    } else {
        Status::Infeasible
    };
    let epsilon = with_epsilon.then(|| {
        cand.knots
            .iter()
            .map(|axes| std::array::from_fn(|ax| axes[ax][1..].iter().map(|s| s.a.abs()).collect()))
            .collect()
    });
    Ok(PlanResult {
        status,
        exact_robustness: exact,
        smooth_robustness: smooth,
        energy_total: samples.energy(),
        iterations: cand.iterations,
        start_index: start,
        sample_period: problem.grid.sample_period(),
        horizon: problem.grid.horizon(),
        trajectories,
        epsilon,
        objective_history: cand.histories,
        constraint_report: report,
    })
}

/// Evaluates and checks fixed knots without optimising.
pub fn assemble(problem: &Problem, knots: FleetKnots, config: &PlannerConfig) -> Result<PlanResult> {
    if knots.len() != problem.drone_count || knots.iter().any(|a| a.iter().any(|k| k.len() != problem.segments + 1)) {
        return Err(Error::invalid("knot array does not match the problem"));
    }
    let cand = Candidate {
        knots,
        iterations: 0,
        converged: true,
        histories: Vec::new(),
    };
    finish(problem, config, cand, 0, false)
}

/// Multistart ascent of the smooth robustness; the best start by exact
/// robustness (then energy, then index) is returned.
pub fn solve(problem: &Problem, config: &PlannerConfig) -> Result<PlanResult> {
    config.validate("planner")?;
    let basis = sample_basis(problem.knot_period, problem.per);
    let results: Vec<PlanResult> = (0..config.multistart_count)
        .into_par_iter()
        .map(|s| {
            let start = perturbed(problem, config.rng_seed, s, config.start_noise);
            let cand = ascend(problem, config, start, 0.0, &basis)?;
            finish(problem, config, cand, s, false)
        })
        .collect::<Result<_>>()?;
    Ok(pick_best(results))
}

fn pick_best(results: Vec<PlanResult>) -> PlanResult {
    let rank = |r: &PlanResult| (r.status == Status::Converged, r.exact_robustness);
    results
        .into_iter()
        .reduce(|best, r| {
            let (a, b) = (rank(&best), rank(&r));
            let better = b.0 && !a.0
                || (b.0 == a.0
                    && (b.1 > a.1
                        || (b.1 == a.1 && r.energy_total.iter().sum::<f64>() < best.energy_total.iter().sum::<f64>())));
            if better {
                r
            } else {
                best
            }
        })
        .expect("at least one start")
}

/// Smooth robustness minus `energy_weight` times the sampled acceleration
/// energy, continued from the plain optimum.
pub fn solve_energy_aware(problem: &Problem, config: &PlannerConfig) -> Result<PlanResult> {
    let basic = solve(problem, config)?;
    let basis = sample_basis(problem.knot_period, problem.per);
    let mut cand = ascend(problem, config, basic.knots(), config.energy_weight, &basis)?;
    cand.iterations += basic.iterations;
    finish(problem, config, cand, basic.start_index, true)
}
