//! Inspection scenarios: geometry, fleet, timing and the mission formula.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::planner::PlannerConfig;
use crate::primitives::AxisState;
use crate::replanner::ReplannerSettings;
use crate::stl::{Channel, Formula, Interval, Predicate, TimeGrid};

/// Edge of the default home cube (m).
pub const HOME_EDGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub acceleration: [f64; 3],
}

impl InitialState {
    pub fn at(position: [f64; 3]) -> Self {
        InitialState {
            position,
            velocity: [0.0; 3],
            acceleration: [0.0; 3],
        }
    }

    pub fn axis(&self, axis: usize) -> AxisState {
        AxisState::new(self.position[axis], self.velocity[axis], self.acceleration[axis])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneSpec {
    pub id: String,
    pub initial: InitialState,
    /// Heading per assigned target (rad); carried as metadata.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub heading_per_target: Vec<f64>,
    /// Overrides the default 1 m home cube around the initial position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<Region>,
}

impl DroneSpec {
    pub fn new(id: impl Into<String>, position: [f64; 3]) -> Self {
        DroneSpec {
            id: id.into(),
            initial: InitialState::at(position),
            heading_per_target: Vec::new(),
            home: None,
        }
    }
}

fn default_workspace() -> Region {
    Region::cuboid("workspace", [0.0; 3], [14.0, 18.0, 23.0])
}

fn default_delta_min() -> f64 {
    3.0
}

fn default_horizon() -> f64 {
    60.0
}

/// A complete scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mission {
    #[serde(default = "default_workspace")]
    pub workspace: Region,
    #[serde(default)]
    pub obstacles: Vec<Region>,
    #[serde(default)]
    pub targets: Vec<Region>,
    pub drones: Vec<DroneSpec>,
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
    /// Number of target clusters; defaults to the fleet size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_count: Option<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub replanner: ReplannerSettings,
}

/// Ordered target indices per drone (drone order of the mission).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetAssignment {
    pub per_drone: Vec<Vec<usize>>,
}

impl Mission {
    pub fn new(drones: Vec<DroneSpec>, targets: Vec<Region>) -> Self {
        Mission {
            workspace: default_workspace(),
            obstacles: Vec::new(),
            targets,
            drones,
            delta_min: default_delta_min(),
            cluster_count: None,
            horizon: default_horizon(),
            planner: PlannerConfig::default(),
            replanner: ReplannerSettings::default(),
        }
    }

    pub fn drone_count(&self) -> usize {
        self.drones.len()
    }

    pub fn clusters(&self) -> usize {
        self.cluster_count.unwrap_or(self.drones.len())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.planner.sample_period, self.horizon)
    }

    /// End of the target window, `2T/3` rounded down onto the sample grid.
    pub fn visit_deadline(&self) -> f64 {
        let ts = self.planner.sample_period;
        let steps = (2.0 * self.horizon / 3.0 / ts + 1e-9).floor();
        steps * ts
    }

    pub fn home(&self, drone: usize) -> Region {
        let spec = &self.drones[drone];
        spec.home.clone().unwrap_or_else(|| {
            Region::cube(
                format!("home-{}", spec.id),
                Vector3::from(spec.initial.position),
                HOME_EDGE,
            )
        })
    }

    pub fn initial_position(&self, drone: usize) -> Vector3<f64> {
        Vector3::from(self.drones[drone].initial.position)
    }

    pub fn validate(&self) -> Result<()> {
        self.workspace.validate("workspace")?;
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate(&format!("obstacles[{i}] ({})", o.name))?;
        }
        for (i, t) in self.targets.iter().enumerate() {
            let path = format!("targets[{i}] ({})", t.name);
            t.validate(&path)?;
            if !self.workspace.intersects(t) {
                return Err(Error::validation(path, "target lies outside the workspace"));
            }
            if let Some(o) = self.obstacles.iter().find(|o| o.overlaps(t)) {
                return Err(Error::validation(path, format!("target intersects obstacle {}", o.name)));
            }
        }
        if self.drones.is_empty() {
            return Err(Error::validation("drones", "at least one drone is required"));
        }
        self.planner.validate("planner")?;
        let ws = self.workspace.polytope()?;
        for (i, d) in self.drones.iter().enumerate() {
            let path = format!("drones[{i}] ({})", d.id);
            if self.drones[..i].iter().any(|o| o.id == d.id) {
                return Err(Error::validation(path, "duplicate drone id"));
            }
            let init = &d.initial;
            if init.position.iter().chain(&init.velocity).chain(&init.acceleration).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("{path}.initial"), "state must be finite"));
            }
            if ws.inside_margin(&Vector3::from(init.position)).0 <= 0.0 {
                return Err(Error::validation(format!("{path}.initial.position"), "must lie inside the workspace"));
            }
            if init.velocity.iter().any(|v| v.abs() > self.planner.v_max) {
                return Err(Error::validation(format!("{path}.initial.velocity"), "exceeds v_max"));
            }
            if init.acceleration.iter().any(|a| a.abs() > self.planner.a_max) {
                return Err(Error::validation(format!("{path}.initial.acceleration"), "exceeds a_max"));
            }
            if let Some(h) = &d.home {
                h.validate(&format!("{path}.home"))?;
            }
        }
        let w = self.clusters();
        if w == 0 || w > self.drones.len() {
            return Err(Error::validation(
                "cluster_count",
                format!("must lie in [1, {}], got {w}", self.drones.len()),
            ));
        }
        if !(self.delta_min > 0.0) || !self.delta_min.is_finite() {
            return Err(Error::validation("delta_min", "must be positive"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::validation("horizon", "must be positive"));
        }
        self.grid().map_err(|e| Error::validation("horizon", e.to_string()))?;
        crate::stl::align(self.horizon, self.planner.knot_period, "horizon")
            .map_err(|e| Error::validation("horizon", e.to_string()))?;
        self.replanner
            .trigger
            .validate(self.planner.sample_period, "replanner.trigger")?;
        for (i, d) in self.replanner.disturbances.iter().enumerate() {
            let path = format!("replanner.disturbances[{i}]");
            if d.drone >= self.drones.len() {
                return Err(Error::validation(format!("{path}.drone"), "no such drone index"));
            }
            if !(0.0..=self.horizon).contains(&d.onset) {
                return Err(Error::validation(format!("{path}.onset"), "must lie within the horizon"));
            }
            if !(d.decay >= 0.0) || !d.decay.is_finite() || d.offset.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(path, "offset must be finite and decay non-negative"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Mission> {
        let m: Mission = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Mission> {
    Mission::from_json(&fs::read_to_string(path)?)
}

pub fn save_scenario(mission: &Mission, path: impl AsRef<Path>) -> Result<()> {
    let mut text = mission.to_json()?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Round-robin clustering: cluster `k` gets targets `k, k + w, k + 2w, ...`
/// and is flown by the `k`-th drone in id order.
pub fn assign_targets(mission: &Mission) -> TargetAssignment {
    let q = mission.drone_count();
    let w = mission.clusters().clamp(1, q.max(1));
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| mission.drones[a].id.cmp(&mission.drones[b].id));
    let mut per_drone = vec![Vec::new(); q];
    for t in 0..mission.targets.len() {
        per_drone[order[t % w]].push(t);
    }
    TargetAssignment { per_drone }
}

pub(crate) fn safety_predicates(mission: &Mission) -> Result<Vec<Predicate>> {
    let q = mission.drone_count();
    let mut out = Vec::new();
    for i in 0..q {
        for h in (i + 1)..q {
            out.push(Predicate::separation(i, h, mission.delta_min));
        }
    }
    for d in 0..q {
        out.push(Predicate::inside(d, Channel::Position, &mission.workspace)?);
        for o in &mission.obstacles {
            out.push(Predicate::avoid(d, o)?);
        }
    }
    Ok(out)
}

/// Workspace, obstacle and separation requirements held over `interval`.
pub fn safety_formula(mission: &Mission, interval: Interval) -> Result<Formula> {
    Ok(Formula::and(
        safety_predicates(mission)?
            .into_iter()
            .map(|p| Formula::always(interval, Formula::pred(p)))
            .collect(),
    ))
}

/// Flat mission formula: always-safety conjuncts, eventually-target
/// conjuncts over `[0, 2T/3]` and eventually-home over `[2T/3, T]`.
pub fn build_formula(mission: &Mission, assignment: &TargetAssignment) -> Result<Formula> {
    check_assignment(mission, assignment)?;
    let whole = Interval::new(0.0, mission.horizon);
    let deadline = mission.visit_deadline();
    let mut conjuncts = safety_formula(mission, whole)?.conjuncts().into_iter().cloned().collect::<Vec<_>>();
    for (d, targets) in assignment.per_drone.iter().enumerate() {
        for &t in targets {
            conjuncts.push(Formula::eventually(
                Interval::new(0.0, deadline),
                Formula::pred(Predicate::inside(d, Channel::Position, &mission.targets[t])?),
            ));
        }
    }
    for d in 0..mission.drone_count() {
        conjuncts.push(Formula::eventually(
            Interval::new(deadline, mission.horizon),
            Formula::pred(Predicate::inside(d, Channel::Position, &mission.home(d))?),
        ));
    }
    finish(mission, Formula::and(conjuncts))
}

/// Nested variant: the safety predicates must hold until every drone is
/// home, with homecoming inside `[2T/3, T]`.
pub fn build_strict_formula(mission: &Mission, assignment: &TargetAssignment) -> Result<Formula> {
    check_assignment(mission, assignment)?;
    let whole = Interval::new(0.0, mission.horizon);
    let deadline = mission.visit_deadline();
    let mut conjuncts = safety_formula(mission, whole)?.conjuncts().into_iter().cloned().collect::<Vec<_>>();
    for (d, targets) in assignment.per_drone.iter().enumerate() {
        for &t in targets {
            conjuncts.push(Formula::eventually(
                Interval::new(0.0, deadline),
                Formula::pred(Predicate::inside(d, Channel::Position, &mission.targets[t])?),
            ));
        }
    }
    let safe_now = Formula::and(safety_predicates(mission)?.into_iter().map(Formula::pred).collect());
    let homes = (0..mission.drone_count())
        .map(|d| Ok(Formula::pred(Predicate::inside(d, Channel::Position, &mission.home(d))?)))
        .collect::<Result<Vec<_>>>()?;
    conjuncts.push(Formula::until(
        Interval::new(deadline, mission.horizon),
        safe_now,
        Formula::and(homes),
    ));
    finish(mission, Formula::and(conjuncts))
}

/// Mission formula selected by `planner.strict_until`.
pub fn mission_formula(mission: &Mission) -> Result<Formula> {
    let assignment = assign_targets(mission);
    if mission.planner.strict_until {
        build_strict_formula(mission, &assignment)
    } else {
        build_formula(mission, &assignment)
    }
}

fn check_assignment(mission: &Mission, assignment: &TargetAssignment) -> Result<()> {
    if assignment.per_drone.len() != mission.drone_count() {
        return Err(Error::invalid("assignment does not match the fleet size"));
    }
    let mut seen = vec![0usize; mission.targets.len()];
    for &t in assignment.per_drone.iter().flatten() {
        if t >= seen.len() {
            return Err(Error::invalid(format!("assignment names unknown target {t}")));
        }
        seen[t] += 1;
    }
    if seen.iter().any(|&n| n != 1) {
        return Err(Error::invalid("every target must be assigned to exactly one drone"));
    }
    Ok(())
}

fn finish(mission: &Mission, f: Formula) -> Result<Formula> {
    let grid = mission.grid()?;
    f.validate(Some(mission.horizon), Some(mission.drone_count()))?;
    f.check_alignment(&grid)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_drones() -> Mission {
        Mission::new(
            vec![DroneSpec::new("d1", [2.0, 15.0, 2.0]), DroneSpec::new("d2", [12.0, 3.0, 2.0])],
            (1..=4)
                .map(|i| Region::cuboid(format!("tr{i}"), [i as f64, 1.0, 1.0], [i as f64 + 1.0, 2.0, 2.0]))
                .collect(),
        )
    }

    #[test]
    fn round_robin_assignment() {
        let m = two_drones();
        assert_eq!(assign_targets(&m).per_drone, vec![vec![0, 2], vec![1, 3]]);
        let mut one = m.clone();
        one.drones.truncate(1);
        assert_eq!(assign_targets(&one).per_drone, vec![vec![0, 1, 2, 3]]);
        let mut w1 = m.clone();
        w1.cluster_count = Some(1);
        assert_eq!(assign_targets(&w1).per_drone, vec![vec![0, 1, 2, 3], vec![]]);
    }

    #[test]
    fn assignment_follows_id_order() {
        let mut m = two_drones();
        m.drones.swap(0, 1);
        // "d1" is now index 1 and still gets the first cluster
        assert_eq!(assign_targets(&m).per_drone, vec![vec![1, 3], vec![0, 2]]);
    }

    #[test]
    fn formula_shape() {
        let m = two_drones();
        m.validate().unwrap();
        let f = build_formula(&m, &assign_targets(&m)).unwrap();
        let conj = f.conjuncts();
        // 1 pair + 2 workspace + 4 targets + 2 homes
        assert_eq!(conj.len(), 9);
        let distance = conj
            .iter()
            .filter(|c| {
                matches!(c, Formula::Always { sub, .. }
                    if matches!(**sub, Formula::Pred(Predicate::PairDistanceAtLeast { .. })))
            })
            .count();
        assert_eq!(distance, 1);
        let windows: Vec<Interval> = conj
            .iter()
            .filter_map(|c| match c {
                Formula::Eventually { interval, .. } => Some(*interval),
                _ => None,
            })
            .collect();
        assert_eq!(windows.iter().filter(|i| **i == Interval::new(0.0, 40.0)).count(), 4);
        assert_eq!(windows.iter().filter(|i| **i == Interval::new(40.0, 60.0)).count(), 2);

        let mut solo = m.clone();
        solo.drones.truncate(1);
        let f = build_formula(&solo, &assign_targets(&solo)).unwrap();
        assert!(!f.predicates().iter().any(|p| matches!(p, Predicate::PairDistanceAtLeast { .. })));
    }

    #[test]
    fn strict_variant_builds() {
        let m = two_drones();
        let f = build_strict_formula(&m, &assign_targets(&m)).unwrap();
        assert!(f.conjuncts().iter().any(|c| matches!(c, Formula::Until { .. })));
    }

    #[test]
    fn deadline_snaps_to_grid() {
        let mut m = two_drones();
        assert_eq!(m.visit_deadline(), 40.0);
        m.horizon = 110.0;
        assert!((m.visit_deadline() - 73.3).abs() < 1e-9);
        build_formula(&m, &assign_targets(&m)).unwrap();
    }

    #[test]
    fn validation_names_fields() {
        let mut m = two_drones();
        m.targets[1] = Region::cuboid("far", [20.0, 1.0, 1.0], [21.0, 2.0, 2.0]);
        let err = m.validate().unwrap_err().to_string();
        assert!(err.contains("targets[1] (far)"), "{err}");

        let mut m = two_drones();
        m.drones[0].initial.position = [-1.0, 0.0, 0.0];
        assert!(m.validate().unwrap_err().to_string().contains("drones[0] (d1).initial.position"));

        let mut m = two_drones();
        m.cluster_count = Some(3);
        assert!(m.validate().unwrap_err().to_string().contains("cluster_count"));

        let mut m = two_drones();
        m.obstacles.push(Region::cuboid("wall", [0.5, 0.5, 0.5], [1.5, 1.5, 1.5]));
        assert!(m.validate().unwrap_err().to_string().contains("obstacle wall"));
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let text = r#"{
            "targets": [{"name": "t", "shape": {"box": {"min": [1, 1, 1], "max": [2, 2, 2]}}}],
            "drones": [{"id": "a", "initial": {"position": [5, 5, 5]}}]
        }"#;
        let m = Mission::from_json(text).unwrap();
        assert_eq!(m.delta_min, 3.0);
        assert_eq!(m.horizon, 60.0);
        assert_eq!(m.workspace, default_workspace());
        let back = Mission::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(Mission::from_json(r#"{"drones": [], "bogus": 1}"#).is_err());
    }
}
