//! JSON scenarios and the six batch commands that run them.
//!
//! A scenario is one JSON document: geometry, controls, an optional joint
//! limit and solver block, and one block per command. Unknown keys are
//! rejected. Lengths are in the unit of `b`; angles are radians, except in
//! keys ending in `_deg`.
//!
//! Every command writes one table (`<command>.csv`, or `<command>.json`
//! with `--format json`) and a run summary `<command>.summary.json`. The
//! summary echoes the resolved scenario under `"scenario"` and can be fed
//! back in as a scenario file.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::buckling::{self, Shape};
use crate::equilibrium::{self, Axis, SweepOptions};
use crate::error::Error;
use crate::kinematics::Branch;
use crate::model::{ControlInputs, Manipulator};
use crate::numerics::SolverSettings;
use crate::segment::{self, SegmentControls, SegmentGeometry, Stability};
use crate::stiffness;

/// Failure of a command run, grouped by exit status.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Infeasible(_) => 4,
            RunError::Io(_) => 1,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::AsymmetricInput(_) => {
                RunError::Schema(e.to_string())
            }
            Error::Infeasible(_) | Error::Precondition(_) => RunError::Infeasible(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub a: f64,
    pub b: f64,
    pub k: f64,
}

/// Either one free length for all six springs or `[[L11, L12], [L21, L22], [L31, L32]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub springs: Option<[[f64; 2]; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoLimit {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JointLimit {
    Auto(AutoLimit),
    Radians(f64),
}

/// `{"start": s, "stop": e, "count": n}` (inclusive, uniform) or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Range { start: f64, stop: f64, count: usize },
    List(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Range { start, stop, count } => equilibrium::uniform_grid(*start, *stop, *count),
            Grid::List(v) => v.clone(),
        }
    }

    fn values_deg(&self) -> Vec<f64> {
        self.values().into_iter().map(f64::to_radians).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_halvings: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentTorqueSpec {
    /// Segment whose controls are used, 1 to 3. Defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_grid_deg: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCurveSpec {
    pub endpoint: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q1_grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q1_grid_deg: Option<Grid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaSpec {
    pub endpoint: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceDeflectionSpec {
    pub start: [f64; 2],
    pub axis: Axis,
    pub deflections: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_guess: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_guess_deg: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StiffnessProfileSpec {
    pub start: [f64; 2],
    pub axis: Axis,
    pub forces: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucklingReportSpec {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub geometry: GeometrySpec,
    pub controls: ControlsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_limit: Option<JointLimit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_limit_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_torque: Option<SegmentTorqueSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_curve: Option<EnergyCurveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<EquilibriaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_deflection: Option<ForceDeflectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness_profile: Option<StiffnessProfileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buckling_report: Option<BucklingReportSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    SegmentTorque,
    EnergyCurve,
    Equilibria,
    ForceDeflection,
    StiffnessProfile,
    BucklingReport,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::SegmentTorque,
        Command::EnergyCurve,
        Command::Equilibria,
        Command::ForceDeflection,
        Command::StiffnessProfile,
        Command::BucklingReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SegmentTorque => "segment-torque",
            Command::EnergyCurve => "energy-curve",
            Command::Equilibria => "equilibria",
            Command::ForceDeflection => "force-deflection",
            Command::StiffnessProfile => "stiffness-profile",
            Command::BucklingReport => "buckling-report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| RunError::Schema(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub keep_going: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    /// Number of grid points that failed (gaps).
    pub point_errors: usize,
}

fn schema(msg: impl Into<String>) -> RunError {
    RunError::Schema(msg.into())
}

/// Reads a scenario (or a run summary) and applies `key.path=value` overrides.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario, RunError> {
    let text =
        fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, overrides)
}

pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<Scenario, RunError> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| schema(format!("invalid JSON: {e}")))?;
    // a run summary carries the resolved scenario under "scenario"
    if let Some(obj) = value.as_object() {
        if obj.contains_key("command") && obj.contains_key("scenario") {
            value = obj["scenario"].clone();
        }
    }
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let scenario: Scenario = serde_path_to_error::deserialize(value)
        .map_err(|e| schema(format!("at `{}`: {}", e.path(), e.inner())))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Sets `a.b.c=value`; the value is parsed as JSON, or taken as a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), RunError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| schema(format!("override `{assignment}` is not key=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(schema(format!(
            "override key `{key}` has an empty component"
        )));
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            schema(format!(
                "override `{key}`: `{}` is not an object",
                parts[..i].join(".")
            ))
        })?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), parsed);
            return Ok(());
        }
        cur = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split always yields at least one component")
}

fn positive(name: &str, v: f64) -> Result<(), RunError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(schema(format!(
            "`{name}` must be a positive number, got {v}"
        )))
    }
}

fn one_of<T>(a: Option<T>, b: Option<T>, names: (&str, &str)) -> Result<Option<T>, RunError> {
    match (a, b) {
        (Some(_), Some(_)) => Err(schema(format!(
            "give only one of `{}` and `{}`",
            names.0, names.1
        ))),
        (x, None) => Ok(x),
        (None, y) => Ok(y),
    }
}

impl Scenario {
    fn validate(&self) -> Result<(), RunError> {
        positive("geometry.a", self.geometry.a)?;
        positive("geometry.b", self.geometry.b)?;
        positive("geometry.k", self.geometry.k)?;
        match (self.controls.l0, self.controls.springs) {
            (Some(l), None) => positive("controls.l0", l)?,
            (None, Some(s)) => {
                for (i, pair) in s.iter().enumerate() {
                    for (j, v) in pair.iter().enumerate() {
                        positive(&format!("controls.springs[{i}][{j}]"), *v)?;
                    }
                }
            }
            _ => return Err(schema("`controls` needs exactly one of `l0` and `springs`")),
        }
        if self.joint_limit.is_some() && self.joint_limit_deg.is_some() {
            return Err(schema(
                "give only one of `joint_limit` and `joint_limit_deg`",
            ));
        }
        if let Some(s) = &self.solver {
            if let Some(t) = s.residual_tolerance {
                positive("solver.residual_tolerance", t)?;
            }
            if let Some(d) = s.damping {
                if !(d > 0.0 && d < 1.0) {
                    return Err(schema("`solver.damping` must lie in (0, 1)"));
                }
            }
        }
        if let Some(s) = &self.segment_torque {
            if let Some(i) = s.segment {
                if !(1..=3).contains(&i) {
                    return Err(schema("`segment_torque.segment` must be 1, 2 or 3"));
                }
            }
            one_of(
                s.q_grid.as_ref(),
                s.q_grid_deg.as_ref(),
                ("q_grid", "q_grid_deg"),
            )?;
        }
        if let Some(s) = &self.energy_curve {
            one_of(
                s.q1_grid.as_ref(),
                s.q1_grid_deg.as_ref(),
                ("q1_grid", "q1_grid_deg"),
            )?;
        }
        if let Some(s) = &self.force_deflection {
            one_of(
                s.initial_guess,
                s.initial_guess_deg,
                ("initial_guess", "initial_guess_deg"),
            )?;
        }
        if let Some(n) = self.equilibria.and_then(|e| e.grid_points) {
            if n < 3 {
                return Err(schema("`equilibria.grid_points` must be at least 3"));
            }
        }
        Ok(())
    }

    pub fn segment_geometry(&self) -> Result<SegmentGeometry, RunError> {
        let g = self.geometry;
        Ok(SegmentGeometry::symmetric(g.a, g.b, g.k)?)
    }

    pub fn control_inputs(&self) -> Result<ControlInputs, RunError> {
        match (self.controls.l0, self.controls.springs) {
            (Some(l), _) => Ok(ControlInputs::symmetric(l)?),
            (None, Some(s)) => Ok(ControlInputs::new([
                SegmentControls::new(s[0][0], s[0][1])?,
                SegmentControls::new(s[1][0], s[1][1])?,
                SegmentControls::new(s[2][0], s[2][1])?,
            ])),
            (None, None) => Err(schema("`controls` is empty")),
        }
    }

    /// Explicit joint limit in radians, `None` for the collision limit.
    pub fn joint_limit_radians(&self) -> Option<f64> {
        match (self.joint_limit, self.joint_limit_deg) {
            (Some(JointLimit::Radians(r)), _) => Some(r),
            (_, Some(d)) => Some(d.to_radians()),
            _ => None,
        }
    }

    pub fn manipulator(&self) -> Result<Manipulator, RunError> {
        Ok(Manipulator::new(
            self.segment_geometry()?,
            self.control_inputs()?,
            self.joint_limit_radians(),
        )?)
    }

    pub fn solver_settings(&self) -> Result<SolverSettings, RunError> {
        let mut s = SolverSettings::default();
        if let Some(spec) = self.solver {
            s.max_iterations = spec.max_iterations.unwrap_or(s.max_iterations);
            s.residual_tolerance = spec.residual_tolerance.unwrap_or(s.residual_tolerance);
            s.damping = spec.damping.unwrap_or(s.damping);
            s.max_halvings = spec.max_halvings.unwrap_or(s.max_halvings);
        }
        s.validate()?;
        Ok(s)
    }

    fn block<'a, T>(&self, block: &'a Option<T>, command: Command) -> Result<&'a T, RunError> {
        block.as_ref().ok_or_else(|| {
            schema(format!(
                "command `{command}` needs a `{}` block",
                command.name().replace('-', "_")
            ))
        })
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Num(f64),
    Text(String),
    Flag(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // 17 significant digits
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Flag(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<Cell>>,
}

struct CommandResult {
    table: Table,
    derived: Map<String, Value>,
    warnings: Vec<String>,
    point_errors: usize,
}

fn opt_num(v: Option<f64>) -> Cell {
    v.map_or(Cell::Num(f64::NAN), Cell::Num)
}

fn stable_flag(s: Stability) -> Cell {
    Cell::Flag(s == Stability::Stable)
}

/// Constants every summary reports.
fn common_derived(sc: &Scenario, m: &Manipulator) -> Map<String, Value> {
    let g = m.geometry();
    let mut d = Map::new();
    d.insert("c".into(), json!(g.c1()));
    d.insert("beta12".into(), json!(g.beta12()));
    d.insert("collision_limit".into(), json!(g.collision_limit()));
    d.insert("q_max".into(), json!(m.q_max()));
    if let Some(l0) = sc.controls.l0 {
        if let Ok(st) = segment::is_straight_config_stable(g, &SegmentControls { l01: l0, l02: l0 })
        {
            d.insert("straight_margin".into(), json!(st.margin));
            d.insert("straight_stable".into(), json!(st.stable));
        }
        if let Ok((u, z)) = buckling::critical_force(g, l0) {
            d.insert("Fx0_U".into(), json!(u));
            d.insert("Fx0_Z".into(), json!(z));
        }
    }
    d
}

fn check_angles(values: &[f64], limit: f64, key: &str) -> Result<(), RunError> {
    match values.iter().find(|v| !(v.abs() <= limit)) {
        Some(v) => Err(schema(format!(
            "`{key}` value {v} lies outside [-{limit}, {limit}]"
        ))),
        None => Ok(()),
    }
}

fn segment_torque_cmd(sc: &Scenario, m: &Manipulator) -> Result<CommandResult, RunError> {
    let spec = sc.segment_torque.clone().unwrap_or_default();
    let geom = m.geometry();
    let controls = m.controls().segments[spec.segment.unwrap_or(1) - 1];
    let limit = geom.collision_limit();
    let grid = match (&spec.q_grid, &spec.q_grid_deg) {
        (Some(g), _) => g.values(),
        (_, Some(g)) => g.values_deg(),
        _ => equilibrium::uniform_grid(-0.999 * limit, 0.999 * limit, 201),
    };
    check_angles(&grid, limit, "segment_torque.q_grid")?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut errors = 0;
    let mut warnings = Vec::new();
    for &q in &grid {
        let t = segment::segment_torque(geom, &controls, q);
        let d = segment::segment_torque_derivative(geom, &controls, q);
        if let Err(e) = t.as_ref().and(d.as_ref()) {
            errors += 1;
            warnings.push(format!("q = {q}: {e}"));
        }
        let stable = d
            .as_ref()
            .ok()
            .map(|&s| Cell::Flag(s < 0.0))
            .unwrap_or(Cell::Empty);
        rows.push(vec![Cell::Num(q), opt_num(t.ok()), opt_num(d.ok()), stable]);
    }
    let mut derived = common_derived(sc, m);
    let m_ext = 0.0;
    if let Ok(eqs) = segment::segment_equilibria(geom, &controls, m_ext, limit) {
        derived.insert(
            "unloaded_equilibria".into(),
            Value::Array(
                eqs.iter()
                    .map(|e| json!({"q": e.q, "stability": e.stability}))
                    .collect(),
            ),
        );
    }
    Ok(CommandResult {
        table: Table {
            header: &["q", "torque", "torque_slope", "stable"],
            rows,
        },
        derived,
        warnings,
        point_errors: errors,
    })
}

fn endpoint_of(p: [f64; 2]) -> (f64, f64) {
    (p[0], p[1])
}

fn energy_curve_cmd(sc: &Scenario, m: &Manipulator) -> Result<CommandResult, RunError> {
    let spec = sc.block(&sc.energy_curve, Command::EnergyCurve)?;
    let grid = match (&spec.q1_grid, &spec.q1_grid_deg) {
        (Some(g), _) => g.values(),
        (_, Some(g)) => g.values_deg(),
        _ => equilibrium::uniform_grid(-m.q_max(), m.q_max(), equilibrium::DEFAULT_GRID_POINTS),
    };
    check_angles(&grid, m.q_max(), "energy_curve.q1_grid")?;
    let endpoint = endpoint_of(spec.endpoint);
    let mut rows = Vec::new();
    let mut derived = common_derived(sc, m);
    for branch in Branch::BOTH {
        let curve = equilibrium::energy_curve(m, endpoint, branch, &grid);
        let feasible = curve.iter().filter(|s| s.feasible).count();
        derived.insert(
            format!("feasible_samples_{}", branch.symbol()),
            json!(feasible),
        );
        derived.insert(
            format!("feasible_intervals_{}", branch.symbol()),
            json!(count_runs(curve.iter().map(|s| s.feasible))),
        );
        for s in curve {
            let (q2, q3) = s.angles.map_or((None, None), |(a, b)| (Some(a), Some(b)));
            rows.push(vec![
                Cell::Text(branch.symbol().into()),
                Cell::Num(s.q1),
                opt_num(q2),
                opt_num(q3),
                opt_num(s.energy),
                opt_num(s.balance_torque),
                Cell::Flag(s.feasible),
            ]);
        }
    }
    Ok(CommandResult {
        table: Table {
            header: &["branch", "q1", "q2", "q3", "energy", "me", "feasible"],
            rows,
        },
        derived,
        warnings: Vec::new(),
        point_errors: 0,
    })
}

fn count_runs(flags: impl Iterator<Item = bool>) -> usize {
    let mut runs = 0;
    let mut prev = false;
    for f in flags {
        if f && !prev {
            runs += 1;
        }
        prev = f;
    }
    runs
}

fn equilibria_cmd(sc: &Scenario, m: &Manipulator) -> Result<CommandResult, RunError> {
    let spec = sc.block(&sc.equilibria, Command::Equilibria)?;
    let endpoint = endpoint_of(spec.endpoint);
    let n = spec.grid_points.unwrap_or(equilibrium::DEFAULT_GRID_POINTS);
    let mut rows = Vec::new();
    let (mut stable, mut unstable) = (0, 0);
    let mut warnings = Vec::new();
    for branch in Branch::BOTH {
        for p in equilibrium::find_equilibria(m, endpoint, branch, n)? {
            match p.stability {
                Stability::Stable => stable += 1,
                Stability::Unstable => unstable += 1,
            }
            let me = equilibrium::external_torque_me(m, endpoint, branch, p.q.q[0]);
            let w = match equilibrium::recover_wrench(m, &p.q) {
                Ok(w) => Some(w),
                Err(e) => {
                    warnings.push(format!("{} branch, q = {:?}: {e}", branch.symbol(), p.q.q));
                    None
                }
            };
            rows.push(vec![
                Cell::Text(branch.symbol().into()),
                Cell::Num(p.q.q[0]),
                Cell::Num(p.q.q[1]),
                Cell::Num(p.q.q[2]),
                Cell::Num(p.energy),
                stable_flag(p.stability),
                Cell::Text(match p.kind {
                    equilibrium::EquilibriumKind::Interior => "interior".into(),
                    equilibrium::EquilibriumKind::Isolated => "isolated".into(),
                }),
                opt_num(me),
                opt_num(w.map(|w| w.fx)),
                opt_num(w.map(|w| w.fy)),
            ]);
        }
    }
    let mut derived = common_derived(sc, m);
    derived.insert("stable_count".into(), json!(stable));
    derived.insert("unstable_count".into(), json!(unstable));
    Ok(CommandResult {
        table: Table {
            header: &[
                "branch", "q1", "q2", "q3", "energy", "stable", "kind", "me", "fx", "fy",
            ],
            rows,
        },
        derived,
        warnings,
        point_errors: 0,
    })
}

fn force_deflection_cmd(sc: &Scenario, m: &Manipulator) -> Result<CommandResult, RunError> {
    let spec = sc.block(&sc.force_deflection, Command::ForceDeflection)?;
    let guess = spec
        .initial_guess
        .or(spec.initial_guess_deg.map(|g| g.map(f64::to_radians)))
        .map(|q| m.config(q));
    let options = SweepOptions {
        initial_guess: guess,
        settings: sc.solver_settings()?,
    };
    let curve = equilibrium::force_deflection_sweep(
        m,
        endpoint_of(spec.start),
        spec.axis,
        &spec.deflections.values(),
        &options,
    )?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for r in &curve.records {
        match (&r.solution, &r.error) {
            (Some(s), _) => rows.push(vec![
                Cell::Num(r.deflection),
                Cell::Num(s.wrench.fx),
                Cell::Num(s.wrench.fy),
                Cell::Num(s.q.q[0]),
                Cell::Num(s.q.q[1]),
                Cell::Num(s.q.q[2]),
                stable_flag(s.stability),
                Cell::Flag(s.jump),
            ]),
            (None, e) => {
                warnings.push(format!(
                    "deflection {}: {}",
                    r.deflection,
                    e.as_ref()
                        .map_or("no solution".to_string(), |e| e.to_string())
                ));
                let mut row = vec![Cell::Num(r.deflection)];
                row.extend((0..5).map(|_| Cell::Num(f64::NAN)));
                row.extend([Cell::Empty, Cell::Empty]);
                rows.push(row);
            }
        }
    }
    let mut derived = common_derived(sc, m);
    derived.insert("intercept".into(), json!(curve.intercept));
    derived.insert("jump_count".into(), json!(curve.jump_count()));
    derived.insert("gap_count".into(), json!(curve.gap_count()));
    Ok(CommandResult {
        table: Table {
            header: &[
                "deflection",
                "fx",
                "fy",
                "q1",
                "q2",
                "q3",
                "stable",
                "jump_flag",
            ],
            rows,
        },
        derived,
        warnings,
        point_errors: curve.gap_count(),
    })
}

fn stiffness_profile_cmd(sc: &Scenario, m: &Manipulator) -> Result<CommandResult, RunError> {
    let spec = sc.block(&sc.stiffness_profile, Command::StiffnessProfile)?;
    let l0 = sc.controls.l0.ok_or_else(|| {
        schema(
            "stiffness-profile needs `controls.l0`: the controls are re-split to unload the start",
        )
    })?;
    let (pm, q0) =
        stiffness::unloaded_start(m.geometry(), l0, endpoint_of(spec.start), Some(m.q_max()))?;
    let records = stiffness::stiffness_profile(
        &pm,
        &q0,
        spec.axis,
        &spec.forces.values(),
        &sc.solver_settings()?,
    )?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut gaps = 0;
    for r in &records {
        match &r.solution {
            Some(p) => rows.push(vec![
                Cell::Num(r.force),
                Cell::Num(p.q.q[0]),
                Cell::Num(p.q.q[1]),
                Cell::Num(p.q.q[2]),
                Cell::Num(p.kxx),
                Cell::Num(p.kyy),
                Cell::Flag(p.quasi_buckling),
            ]),
            None => {
                gaps += 1;
                warnings.push(format!(
                    "force {}: {}",
                    r.force,
                    r.error
                        .as_ref()
                        .map_or("no solution".to_string(), |e| e.to_string())
                ));
                let mut row = vec![Cell::Num(r.force)];
                row.extend((0..5).map(|_| Cell::Num(f64::NAN)));
                row.push(Cell::Empty);
                rows.push(row);
            }
        }
    }
    let mut derived = common_derived(sc, m);
    derived.insert("start_q".into(), json!(q0.q));
    derived.insert(
        "preloaded_controls".into(),
        json!(pm
            .controls()
            .segments
            .iter()
            .map(|s| [s.l01, s.l02])
            .collect::<Vec<_>>()),
    );
    if let Ok((_, kf0)) = stiffness::unloaded_cartesian(&pm, &q0) {
        derived.insert(
            "kf0".into(),
            json!([[kf0[(0, 0)], kf0[(0, 1)]], [kf0[(1, 0)], kf0[(1, 1)]]]),
        );
    }
    derived.insert("gap_count".into(), json!(gaps));
    Ok(CommandResult {
        table: Table {
            header: &[
                "f_applied",
                "q1",
                "q2",
                "q3",
                "kxx",
                "kyy",
                "quasi_buckling_flag",
            ],
            rows,
        },
        derived,
        warnings,
        point_errors: gaps,
    })
}

fn buckling_report_cmd(sc: &Scenario, m: &Manipulator) -> Result<CommandResult, RunError> {
    let l0 = sc
        .controls
        .l0
        .ok_or_else(|| schema("buckling-report needs a common free length `controls.l0`"))?;
    let (fu, fz) = buckling::critical_force(m.geometry(), l0)?;
    let mut rows = Vec::new();
    let mut derived = common_derived(sc, m);
    for (shape, f) in [(Shape::U, fu), (Shape::Z, fz)] {
        let c = buckling::linearized_coefficients(shape);
        let tag = match shape {
            Shape::U => "U",
            Shape::Z => "Z",
        };
        derived.insert(format!("alpha1_{tag}"), json!(c.alpha1));
        derived.insert(format!("alpha3_{tag}"), json!(c.alpha3));
        derived.insert(format!("lambda_{tag}"), json!(c.lambda));
        derived.insert(format!("mu_{tag}"), json!(c.mu));
        rows.push(vec![
            Cell::Text(tag.into()),
            Cell::Num(c.alpha1),
            Cell::Num(c.alpha3),
            Cell::Num(c.lambda),
            Cell::Num(c.mu),
            Cell::Num(f),
            stable_flag(shape.expected_stability()),
        ]);
    }
    derived.insert(
        "shapes".into(),
        json!([
            {"pattern": "(-,+,+)", "shape": "U", "stability": "stable"},
            {"pattern": "(+,-,-)", "shape": "U", "stability": "stable"},
            {"pattern": "(-,+,-)", "shape": "Z", "stability": "unstable"},
            {"pattern": "(+,-,+)", "shape": "Z", "stability": "unstable"},
        ]),
    );
    Ok(CommandResult {
        table: Table {
            header: &["shape", "alpha1", "alpha3", "lambda", "mu", "fx0", "stable"],
            rows,
        },
        derived,
        warnings: Vec::new(),
        point_errors: 0,
    })
}

/// Runs one command and writes its table and summary into `options.out_dir`.
///
/// Per-point failures become gaps in the table; unless `keep_going` is set
/// they also make the run fail (after the files are written).
pub fn run(command: Command, sc: &Scenario, options: &RunOptions) -> Result<RunOutcome, RunError> {
    let m = sc.manipulator()?;
    let result = match command {
        Command::SegmentTorque => segment_torque_cmd(sc, &m),
        Command::EnergyCurve => energy_curve_cmd(sc, &m),
        Command::Equilibria => equilibria_cmd(sc, &m),
        Command::ForceDeflection => force_deflection_cmd(sc, &m),
        Command::StiffnessProfile => stiffness_profile_cmd(sc, &m),
        Command::BucklingReport => buckling_report_cmd(sc, &m),
    }?;

    fs::create_dir_all(&options.out_dir)?;
    let (table_name, table_bytes) = match options.format {
        OutputFormat::Csv => (format!("{command}.csv"), csv_bytes(&result.table)?),
        OutputFormat::Json => (format!("{command}.json"), json_table_bytes(&result.table)?),
    };
    let table_path = options.out_dir.join(&table_name);
    write_atomic(&table_path, &table_bytes)?;

    let summary = json!({
        "command": command.name(),
        "scenario": serde_json::to_value(sc).map_err(|e| RunError::Io(e.to_string()))?,
        "derived": Value::Object(result.derived),
        "warnings": result.warnings,
        "point_errors": result.point_errors,
        "outputs": [table_name],
    });
    let summary_path = options.out_dir.join(format!("{command}.summary.json"));
    let mut text = serde_json::to_vec_pretty(&summary).map_err(|e| RunError::Io(e.to_string()))?;
    text.push(b'\n');
    write_atomic(&summary_path, &text)?;

    if result.point_errors > 0 && !options.keep_going {
        return Err(RunError::Numerical(format!(
            "{} grid point(s) failed; outputs written to {} (use --keep-going to accept gaps)",
            result.point_errors,
            options.out_dir.display()
        )));
    }
    Ok(RunOutcome {
        files: vec![table_path, summary_path],
        warnings: result.warnings,
        point_errors: result.point_errors,
    })
}

fn csv_bytes(t: &Table) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| RunError::Io(e.to_string());
    w.write_record(t.header).map_err(io)?;
    for row in &t.rows {
        w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
    }
    w.into_inner().map_err(|e| RunError::Io(e.to_string()))
}

fn json_table_bytes(t: &Table) -> Result<Vec<u8>, RunError> {
    let rows: Vec<Value> = t
        .rows
        .iter()
        .map(|row| {
            Value::Object(
                t.header
                    .iter()
                    .zip(row)
                    .map(|(h, c)| ((*h).to_string(), c.json()))
                    .collect(),
            )
        })
        .collect();
    let mut v = serde_json::to_vec_pretty(&json!({"columns": t.header, "rows": rows}))
        .map_err(|e| RunError::Io(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| RunError::Io(e.to_string()))?;
    Ok(())
}
