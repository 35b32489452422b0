//! Command-line front end: plan, simulate and validate inspection missions.
//!
//! Exit codes: 0 when the plan, run or trace meets the mission, 2 when it
//! does not (files are still written), 1 on bad input.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use stlfleet::mission::Mission;
use stlfleet::planner::{self, PlanResult, Status};
use stlfleet::replanner::{self, SegmentPlan};

pub mod profile;
pub mod traces;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] stlfleet::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("trace line {line}: {message}")]
    Trace { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Mismatch(String),
}

#[derive(Debug, Parser)]
#[command(name = "stlfleet", version, about = "STL trajectory planning for drone fleets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan a mission and write trace, robustness, energy and result files.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Add the acceleration energy term to the objective.
        #[arg(long)]
        energy: bool,
        /// Multistart seed; overrides the scenario's planner.rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a plan under the scenario's disturbances with replanning.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Directory holding the plan's result.json.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a trace.csv against a scenario.
    Validate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// Success or a mission-level failure; input errors are `Err`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Met,
    NotMet,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Met => 0,
            Outcome::NotMet => 2,
        }
    }

    fn from(ok: bool) -> Self {
        if ok {
            Outcome::Met
        } else {
            Outcome::NotMet
        }
    }
}

/// Parses `args` and runs the command; diagnostics go to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli, out) {
        Ok(o) => o.code(),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Plan {
            scenario,
            out: dir,
            energy,
            seed,
        } => cmd_plan(scenario, dir, *energy, *seed, out),
        Command::Simulate {
            scenario,
            plan,
            out: dir,
        } => cmd_simulate(scenario, plan, dir, out),
        Command::Validate { trace, scenario } => cmd_validate(trace, scenario, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load(path: &Path) -> Result<Mission, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(Mission::from_json(&text)?)
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(io_err(path))?;
    }
    // Temporary files are created private.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(tmp.path(), fs::Permissions::from_mode(0o644)).map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        w.write_all(b"\n").map_err(io_err(path))
    })
}

fn ids(mission: &Mission) -> Vec<String> {
    mission.drones.iter().map(|d| d.id.clone()).collect()
}

pub fn cmd_plan(
    scenario: &Path,
    dir: &Path,
    energy: bool,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<Outcome, CliError> {
    let mut mission = load(scenario)?;
    if let Some(s) = seed {
        mission.planner.rng_seed = s;
    }
    let config = mission.planner.clone();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let started = Instant::now();
    let problem = planner::build_problem(&mission, &config)?;
    let result = if energy {
        planner::solve_energy_aware(&problem, &config)?
    } else {
        planner::solve(&problem, &config)?
    };
    let elapsed = started.elapsed();

    let samples = result.samples()?;
    let names = ids(&mission);
    write_atomic(&dir.join("trace.csv"), |w| traces::write_trace(&samples, &names, w))?;
    let curves = profile::robustness_profile(&samples, &mission)?;
    write_atomic(&dir.join("robustness.csv"), |w| {
        traces::write_profile(&samples.grid, &names, &curves, w)
    })?;
    let cumulative = samples.cumulative_energy();
    let energy_cols: Vec<Vec<f64>> = (0..names.len()).map(|d| cumulative.iter().map(|row| row[d]).collect()).collect();
    write_atomic(&dir.join("energy.csv"), |w| {
        traces::write_profile(&samples.grid, &names, &energy_cols, w)
    })?;
    write_json(&dir.join("result.json"), &result)?;

    let _ = writeln!(out, "status: {:?}", result.status);
    let _ = writeln!(out, "exact robustness: {}", result.exact_robustness);
    let _ = writeln!(out, "smooth robustness: {}", result.smooth_robustness);
    let _ = writeln!(out, "energy: {:?}", result.energy_total);
    let _ = writeln!(out, "iterations: {} (start {})", result.iterations, result.start_index);
    let _ = writeln!(out, "solve time: {:.2} s", elapsed.as_secs_f64());
    for v in &result.constraint_report.violations {
        let _ = writeln!(out, "violation: {v}");
    }
    Ok(Outcome::from(result.status == Status::Converged))
}

#[derive(Serialize)]
struct ReplanReport<'a> {
    robustness: f64,
    aborted_at: Option<f64>,
    replans: &'a [SegmentPlan],
}

pub fn cmd_simulate(scenario: &Path, plan_dir: &Path, dir: &Path, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let mission = load(scenario)?;
    let path = plan_dir.join("result.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let plan: PlanResult = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.clone(),
        source,
    })?;
    if plan.trajectories.len() != mission.drone_count()
        || plan.horizon != mission.horizon
        || plan.sample_period != mission.planner.sample_period
    {
        return Err(CliError::Mismatch(format!(
            "{} was not planned for {}",
            path.display(),
            scenario.display()
        )));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let settings = &mission.replanner;
    let log = replanner::simulate_mission(&plan, &settings.disturbances, &mission, &settings.trigger)?;

    let names = ids(&mission);
    write_atomic(&dir.join("executed_trace.csv"), |w| {
        traces::write_trace(&log.executed, &names, w)
    })?;
    write_atomic(&dir.join("triggers.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["t", "drone", "deviation", "px", "py", "pz", "plan_px", "plan_py", "plan_pz"])?;
        for e in &log.triggers {
            let mut row = vec![traces::num(e.time), names[e.drone].clone(), traces::num(e.deviation)];
            row.extend(e.runtime_position.iter().map(|&x| traces::num(x)));
            row.extend(e.planned_position.iter().map(|&x| traces::num(x)));
            c.write_record(&row)?;
        }
        c.flush().map_err(io_err(dir))
    })?;
    write_json(
        &dir.join("replans.json"),
        &ReplanReport {
            robustness: log.robustness,
            aborted_at: log.aborted_at,
            replans: &log.replans,
        },
    )?;

    let _ = writeln!(out, "triggers: {}", log.triggers.len());
    for r in &log.replans {
        let _ = writeln!(
            out,
            "replan drone {} [{}, {}] s: {:?}, window robustness {}, reconnection error {:e}",
            names[r.drone], r.start, r.end, r.status, r.window_robustness, r.reconnection_error
        );
    }
    if let Some(t) = log.aborted_at {
        let _ = writeln!(out, "aborted at t = {t} s");
    }
    let _ = writeln!(out, "executed robustness: {}", log.robustness);
    Ok(Outcome::from(log.aborted_at.is_none() && log.replans.iter().all(SegmentPlan::converged)))
}

pub fn cmd_validate(trace: &Path, scenario: &Path, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let mission = load(scenario)?;
    let file = fs::File::open(trace).map_err(io_err(trace))?;
    let samples = traces::read_trace(io::BufReader::new(file), &mission)?;
    let report = planner::validate_samples(&samples, &mission, &mission.planner)?;
    let q = mission.drone_count();
    let _ = writeln!(out, "exact robustness: {}", report.exact_robustness);
    if let Some(d) = report.min_pair_distance {
        let _ = writeln!(out, "min pairwise distance: {d}");
    }
    for v in &report.violations {
        match v.sample {
            // Header is line 1.
            Some(k) => {
                let _ = writeln!(out, "violation (line {}): {v}", k * q + v.drone + 2);
            }
            None => {
                let _ = writeln!(out, "violation: {v}");
            }
        }
    }
    let _ = writeln!(out, "{}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(Outcome::from(report.passed()))
}
