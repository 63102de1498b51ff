//! Batch runs: compliance sweeps over initial-condition grids, the β
//! threshold search, and the replication bundles.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{kmh, ModelParams, PairState, StepSize, VehicleState};
use crate::models::{model_next_unchecked, ModelId};
use crate::numfmt::sig9;
use crate::oracles::{idm_linearize, GippsBrakingSolution};
use crate::phase::{linspace, region, PhaseLabel, RegionLabel};
use crate::principles::{
    audit_states, braking_onset, safe_stopping_distance, Audit, BrakingOnset, OnsetRule,
    PrincipleId, PrincipleResult,
};
use crate::sim::{
    run, run_observed, ClampPolicy, LeaderProfile, Scenario, SettleTracker, StepCheck, StepRecord,
    TerminalError, Trajectory,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILD_ID: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.count)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config(format!("{what} axis needs at least one point")));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.max < self.min {
            return Err(Error::Config(format!("{what} axis range is empty")));
        }
        Ok(())
    }
}

/// Initial speeds, either absolute or as fractions of the equilibrium speed
/// min(μ, (z0 − ζ)/τ) at each initial spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpeedAxis {
    Absolute { min: f64, max: f64, count: usize },
    EquilibriumFraction { min: f64, max: f64, count: usize },
}

impl SpeedAxis {
    fn axis(&self) -> Axis {
        match *self {
            SpeedAxis::Absolute { min, max, count }
            | SpeedAxis::EquilibriumFraction { min, max, count } => Axis { min, max, count },
        }
    }

    fn speed(&self, raw: f64, z0: f64, params: &ModelParams) -> f64 {
        match self {
            SpeedAxis::Absolute { .. } => raw,
            SpeedAxis::EquilibriumFraction { .. } => {
                raw * params.mu.min(((z0 - params.zeta) / params.tau).max(0.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub model: ModelId,
    pub params: ModelParams,
    pub eps: StepSize,
    pub v0: SpeedAxis,
    pub z0: Axis,
    pub leader: LeaderProfile,
    pub t_end: f64,
    pub principles: Vec<PrincipleId>,
    pub clamp: ClampPolicy,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.v0.axis().validate("v0")?;
        self.z0.validate("z0")?;
        self.leader.validate()?;
        if self.t_end.is_nan() || self.t_end <= 0.0 {
            return Err(Error::Config("t_end must be positive".into()));
        }
        if self.principles.is_empty() {
            return Err(Error::Config("no principles selected".into()));
        }
        Ok(())
    }

    fn scenario(&self, v0: f64, z0: f64) -> Scenario {
        Scenario {
            model: self.model,
            params: self.params,
            eps: self.eps,
            t_end: self.t_end,
            follower0: VehicleState::new(self.leader.initial_x() - z0, v0),
            leader: self.leader.clone(),
            clamp: self.clamp,
            step_check: StepCheck::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Simulated,
    /// The model is undefined at the initial state, so nothing was run.
    DomainExcluded,
    /// The run started but was truncated by a model-domain failure.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalState {
    pub t: f64,
    pub v: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub v0: f64,
    pub z0: f64,
    pub initial_region: RegionLabel,
    pub status: CellStatus,
    pub reason: Option<String>,
    pub principles: Vec<PrincipleResult>,
    pub braking_onset: Option<BrakingOnset>,
    pub terminal: Option<TerminalState>,
    pub terminal_error: Option<TerminalError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleAggregate {
    pub principle: PrincipleId,
    pub evaluated: usize,
    pub passed: usize,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub cells: usize,
    pub simulated: usize,
    pub truncated: usize,
    pub domain_excluded: usize,
    pub principles: Vec<PrincipleAggregate>,
}

impl Aggregates {
    pub fn pass_rate(&self, p: PrincipleId) -> Option<f64> {
        self.principles.iter().find(|a| a.principle == p).map(|a| a.pass_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub build_id: String,
    pub model: ModelId,
    pub params: ModelParams,
    pub eps: StepSize,
    pub t_end: f64,
    pub clamp: ClampPolicy,
    pub onset_rule: OnsetRule,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEcho {
    pub v0: SpeedAxis,
    pub z0: Axis,
    pub leader: LeaderProfile,
    pub principles: Vec<PrincipleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub schema_version: u32,
    pub meta: ReportMeta,
    pub grid: GridEcho,
    pub cells: Vec<Cell>,
    pub aggregates: Aggregates,
    pub findings: Vec<Finding>,
}

/// One checked or informational outcome of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub id: String,
    pub description: String,
    /// Asserted findings decide the exit status; the others are reported only.
    pub asserted: bool,
    pub observed: f64,
    pub expected: String,
    pub pass: bool,
}

impl Finding {
    fn new(id: &str, description: &str, observed: f64, expected: String, pass: bool) -> Self {
        Finding {
            id: id.into(),
            description: description.into(),
            asserted: true,
            observed,
            expected,
            pass,
        }
    }

    pub fn within(id: &str, description: &str, observed: f64, target: f64, tol: f64) -> Self {
        let pass = (observed - target).abs() <= tol;
        Self::new(id, description, observed, format!("{} ± {}", sig9(target), sig9(tol)), pass)
    }

    pub fn below(id: &str, description: &str, observed: f64, bound: f64) -> Self {
        Self::new(id, description, observed, format!("< {}", sig9(bound)), observed < bound)
    }

    pub fn at_most(id: &str, description: &str, observed: f64, bound: f64) -> Self {
        Self::new(id, description, observed, format!("<= {}", sig9(bound)), observed <= bound)
    }

    pub fn above(id: &str, description: &str, observed: f64, bound: f64) -> Self {
        Self::new(id, description, observed, format!("> {}", sig9(bound)), observed > bound)
    }

    pub fn at_least(id: &str, description: &str, observed: f64, bound: f64) -> Self {
        Self::new(id, description, observed, format!(">= {}", sig9(bound)), observed >= bound)
    }

    /// Reported value with no pass/fail meaning.
    pub fn info(id: &str, description: &str, observed: f64) -> Self {
        Finding {
            id: id.into(),
            description: description.into(),
            asserted: false,
            observed,
            expected: String::new(),
            pass: true,
        }
    }

    pub fn unasserted(mut self) -> Self {
        self.asserted = false;
        self
    }
}

fn run_cell(spec: &SweepSpec, v0: f64, z0: f64, rule: &OnsetRule) -> Cell {
    let sc = spec.scenario(v0, z0);
    let initial_region = region(v0, z0, &spec.params);
    let mut cell = Cell {
        v0,
        z0,
        initial_region,
        status: CellStatus::Simulated,
        reason: None,
        principles: Vec::new(),
        braking_onset: None,
        terminal: None,
        terminal_error: None,
    };
    let p0 = PairState::new(0.0, sc.follower0, VehicleState::new(spec.leader.initial_x(), 0.0), spec.params.zeta);
    if let Err(e) = model_next_unchecked(spec.model, &p0, &spec.params, spec.eps) {
        cell.status = CellStatus::DomainExcluded;
        cell.reason = Some(e.to_string());
        return cell;
    }
    let traj = match run(&sc) {
        Ok(t) => t,
        Err(e) => {
            cell.status = CellStatus::DomainExcluded;
            cell.reason = Some(e.to_string());
            return cell;
        }
    };
    if let Some(err) = &traj.terminal_error {
        cell.status = CellStatus::Truncated;
        cell.reason = Some(err.message.clone());
        cell.terminal_error = traj.terminal_error.clone();
    }
    let last = traj.last().state;
    cell.terminal = Some(TerminalState {
        t: last.t,
        v: last.follower.v,
        z: last.spacing,
    });
    if let Ok(audit) = audit_states(&traj.states(), &spec.params, &spec.principles, rule) {
        cell.principles = audit.results;
        cell.braking_onset = audit.braking_onset;
    }
    cell
}

fn aggregate(cells: &[Cell], principles: &[PrincipleId]) -> Aggregates {
    let count = |s: CellStatus| cells.iter().filter(|c| c.status == s).count();
    let principles = PrincipleId::ALL
        .iter()
        .filter(|p| principles.contains(p))
        .map(|&p| {
            let results: Vec<bool> = cells
                .iter()
                .flat_map(|c| c.principles.iter())
                .filter(|r| r.principle == p)
                .map(|r| r.pass)
                .collect();
            let passed = results.iter().filter(|b| **b).count();
            PrincipleAggregate {
                principle: p,
                evaluated: results.len(),
                passed,
                pass_rate: if results.is_empty() {
                    0.0
                } else {
                    passed as f64 / results.len() as f64
                },
            }
        })
        .collect();
    Aggregates {
        cells: cells.len(),
        simulated: count(CellStatus::Simulated),
        truncated: count(CellStatus::Truncated),
        domain_excluded: count(CellStatus::DomainExcluded),
        principles,
    }
}

/// Runs one simulation per grid cell. `jobs` caps the worker threads; cell
/// order in the report follows the grid regardless of completion order.
pub fn sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<ComplianceReport> {
    spec.validate()?;
    let rule = OnsetRule::default();
    let zs = spec.z0.values();
    let raw = spec.v0.axis().values();
    let points: Vec<(f64, f64)> = zs
        .iter()
        .flat_map(|&z| raw.iter().map(move |&r| (r, z)))
        .map(|(r, z)| (spec.v0.speed(r, z, &spec.params), z))
        .collect();
    let work = || -> Vec<Cell> {
        points
            .par_iter()
            .map(|&(v, z)| run_cell(spec, v, z, &rule))
            .collect()
    };
    let cells = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    let aggregates = aggregate(&cells, &spec.principles);
    let mut findings = Vec::new();
    for a in &aggregates.principles {
        findings.push(Finding::info(
            &format!("pass-rate-{}", a.principle.name()),
            "fraction of simulated cells passing the principle",
            a.pass_rate,
        ));
    }
    Ok(ComplianceReport {
        schema_version: SCHEMA_VERSION,
        meta: ReportMeta {
            build_id: BUILD_ID.into(),
            model: spec.model,
            params: spec.params,
            eps: spec.eps,
            t_end: spec.t_end,
            clamp: spec.clamp,
            onset_rule: rule,
            notes: vec![crate::principles::MAX_SPEED_NOTE.into()],
        },
        grid: GridEcho {
            v0: spec.v0,
            z0: spec.z0,
            leader: spec.leader.clone(),
            principles: spec.principles.clone(),
        },
        cells,
        aggregates,
        findings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaThreshold {
    pub threshold: f64,
    /// v0/(2τ).
    pub closed_form: f64,
    pub iterations: usize,
    pub bracket_width: f64,
}

pub const BETA_SEARCH_MAX_ITER: usize = 40;
pub const BETA_SEARCH_WIDTH: f64 = 1e-4;

/// Smallest spacing reached by the bounded Newell follower braking from the
/// equilibrium state (v0, τ·v0 + ζ) towards a stationary leader.
pub fn bda_min_spacing(params: &ModelParams, v0: f64, eps: StepSize) -> Result<f64> {
    let z0 = params.tau * v0 + params.zeta;
    let t_end = 2.0 * v0 / params.beta + 10.0 * params.tau;
    let sc = Scenario::slvp(ModelId::BDANewell, *params, eps, v0, z0, t_end);
    let mut min_z = f64::INFINITY;
    run_observed(&sc, usize::MAX, |r| min_z = min_z.min(r.state.spacing))?;
    Ok(min_z)
}

/// Bisects on β for the smallest deceleration bound that keeps the spacing
/// at or above ζ.
pub fn min_beta_for_compliance(params: &ModelParams, v0: f64, eps: StepSize) -> Result<BetaThreshold> {
    if v0 == 0.0 {
        return Ok(BetaThreshold {
            threshold: 0.0,
            closed_form: 0.0,
            iterations: 0,
            bracket_width: 0.0,
        });
    }
    if !(v0 > 0.0 && v0 <= params.mu) {
        return Err(Error::InvalidArgument(format!(
            "initial speed must lie in (0, {}], got {v0}",
            params.mu
        )));
    }
    let complies = |beta: f64| -> Result<bool> {
        let p = ModelParams { beta, ..*params };
        Ok(bda_min_spacing(&p, v0, eps)? >= params.zeta - 1e-9)
    };
    let mut lo = 0.02 * v0 / params.tau;
    let mut hi = 4.0 * v0 / params.tau;
    if complies(lo)? || !complies(hi)? {
        return Err(Error::Search(format!(
            "no sign change of compliance on [{lo}, {hi}]"
        )));
    }
    let mut iterations = 0;
    while hi - lo > BETA_SEARCH_WIDTH && iterations < BETA_SEARCH_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if complies(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(BetaThreshold {
        threshold: hi,
        closed_form: v0 / (2.0 * params.tau),
        iterations,
        bracket_width: hi - lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    BaNewellSlvp,
    BdaNewellCollision,
    IdmFig2,
    GippsFig2,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::BaNewellSlvp,
        Experiment::BdaNewellCollision,
        Experiment::IdmFig2,
        Experiment::GippsFig2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BaNewellSlvp => "ba-newell-slvp",
            Experiment::BdaNewellCollision => "bda-newell-collision",
            Experiment::IdmFig2 => "idm-fig2",
            Experiment::GippsFig2 => "gipps-fig2",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub build_id: String,
    pub model: ModelId,
    pub params: ModelParams,
    pub eps: StepSize,
    pub t_end: f64,
    pub v0: f64,
    pub z0: f64,
    pub clamp: ClampPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingsReport {
    pub schema_version: u32,
    pub experiment: String,
    pub meta: RunMeta,
    pub onset_rule: OnsetRule,
    pub findings: Vec<Finding>,
    pub all_asserted_pass: bool,
}

/// Everything a replication produces. Files are only written when an output
/// directory is given.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub experiment: Experiment,
    pub report: FindingsReport,
    pub trajectory: Trajectory,
    pub compliance: Option<ComplianceReport>,
    pub files: Vec<PathBuf>,
}

impl Bundle {
    pub fn finding(&self, id: &str) -> Option<&Finding> {
        self.report.findings.iter().find(|f| f.id == id)
    }

    pub fn all_asserted_pass(&self) -> bool {
        self.report.all_asserted_pass
    }
}

/// Per-step statistics gathered while a run streams past.
#[derive(Debug, Clone)]
struct RunStats {
    peak_v: f64,
    min_v: f64,
    min_a: f64,
    min_z: f64,
    max_decel: f64,
    first_decel: Option<StepRecord>,
    first_safe_branch: Option<StepRecord>,
    last: Option<StepRecord>,
    prev: Option<StepRecord>,
}

impl RunStats {
    fn new() -> Self {
        RunStats {
            peak_v: f64::NEG_INFINITY,
            min_v: f64::INFINITY,
            min_a: f64::INFINITY,
            min_z: f64::INFINITY,
            max_decel: 0.0,
            first_decel: None,
            first_safe_branch: None,
            last: None,
            prev: None,
        }
    }

    fn push(&mut self, r: &StepRecord) {
        let s = &r.state;
        self.peak_v = self.peak_v.max(s.follower.v);
        self.min_v = self.min_v.min(s.follower.v);
        self.min_z = self.min_z.min(s.spacing);
        if s.t > 0.0 {
            self.min_a = self.min_a.min(s.follower.a);
            self.max_decel = self.max_decel.max(-s.follower.a);
            if s.follower.a < 0.0 && self.first_decel.is_none() {
                // the braking decision was taken at the previous state
                self.first_decel = self.prev;
            }
        }
        if r.phase == PhaseLabel::GippsSafeBranch && self.first_safe_branch.is_none() {
            self.first_safe_branch = Some(*r);
        }
        self.prev = Some(*r);
        self.last = Some(*r);
    }
}

fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    traj.write_csv(BufWriter::new(fs::File::create(path)?))
}

fn write_phase_plane(traj: &Trajectory, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "v,z,a,phase")?;
    for s in &traj.steps {
        writeln!(
            w,
            "{},{},{},{}",
            sig9(s.state.follower.v),
            sig9(s.state.spacing),
            sig9(s.state.follower.a),
            s.phase.csv_name()
        )?;
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Keeps roughly ten rows per simulated second.
fn csv_stride(eps: StepSize) -> usize {
    ((0.1 / eps.get()).round() as usize).max(1)
}

struct Run {
    scenario: Scenario,
    trajectory: Trajectory,
    stats: RunStats,
    settle: SettleTracker,
}

fn execute(sc: Scenario) -> Result<Run> {
    let mut stats = RunStats::new();
    let mut settle = SettleTracker::new(sc.params.zeta, SETTLE_V_TOL, SETTLE_Z_TOL)?;
    let trajectory = run_observed(&sc, csv_stride(sc.eps), |r| {
        stats.push(r);
        settle.push(&r.state);
    })?;
    Ok(Run {
        scenario: sc,
        trajectory,
        stats,
        settle,
    })
}

pub const SETTLE_V_TOL: f64 = 0.01;
pub const SETTLE_Z_TOL: f64 = 0.05;

/// Initial spacing of the long stationary-leader runs on the highway.
pub const FIG2_Z0: f64 = 2440.0;

fn meta(sc: &Scenario) -> RunMeta {
    RunMeta {
        build_id: BUILD_ID.into(),
        model: sc.model,
        params: sc.params,
        eps: sc.eps,
        t_end: sc.t_end,
        v0: sc.follower0.v,
        z0: sc.leader.initial_x() - sc.follower0.x,
        clamp: sc.clamp,
    }
}

fn eps(e: f64) -> StepSize {
    StepSize::new(e).expect("fixed step sizes are positive")
}

fn ba_newell_slvp(jobs: Option<usize>) -> Result<(Run, Vec<Finding>, Option<ComplianceReport>)> {
    let params = ModelParams::default();
    let sc = Scenario::slvp(ModelId::BANewell, params, eps(1e-3), 30.0, 55.0, 60.0);
    let r = execute(sc)?;
    let mut findings = vec![
        Finding::within(
            "max-deceleration",
            "largest deceleration magnitude along the run (m/s^2)",
            r.stats.max_decel,
            18.75,
            0.1,
        ),
        Finding::info(
            "settle-time",
            "time after which |v| <= 0.01 and |z - zeta| <= 0.05 (s)",
            r.settle.settled_since().unwrap_or(f64::NAN),
        ),
        Finding::info("min-spacing", "smallest spacing (m)", r.stats.min_z),
    ];

    let grid = SweepSpec {
        model: ModelId::BANewell,
        params,
        eps: eps(1e-3),
        v0: SpeedAxis::EquilibriumFraction {
            min: 0.0,
            max: 1.0,
            count: 20,
        },
        z0: Axis {
            min: params.zeta,
            max: 300.0,
            count: 20,
        },
        leader: LeaderProfile::Stationary { x: 0.0 },
        t_end: 60.0,
        principles: PrincipleId::ALL.to_vec(),
        clamp: ClampPolicy::None,
    };
    let report = sweep(&grid, jobs)?;
    for p in PrincipleId::ZEROTH_AND_FIRST {
        findings.push(Finding::within(
            &format!("grid-pass-rate-{}", p.name()),
            "fraction of the 20x20 compliant grid passing the principle",
            report.aggregates.pass_rate(p).unwrap_or(0.0),
            1.0,
            0.0,
        ));
    }
    findings.push(Finding::info(
        "grid-pass-rate-bounded-control",
        "fraction of the grid respecting the deceleration bound; the model has none",
        report.aggregates.pass_rate(PrincipleId::BoundedControl).unwrap_or(0.0),
    ));
    Ok((r, findings, Some(report)))
}

/// Collision statistics for a bounded-deceleration run from (v0, z0).
struct CollisionStats {
    onset: PairState,
    halt_t: Option<f64>,
    min_z: f64,
    terminal_z: f64,
}

fn collision_stats(r: &Run) -> Result<CollisionStats> {
    let onset = r
        .stats
        .first_decel
        .ok_or_else(|| Error::Domain("the follower never braked".into()))?
        .state;
    Ok(CollisionStats {
        onset,
        halt_t: None,
        min_z: r.stats.min_z,
        terminal_z: r.stats.last.expect("run has steps").state.spacing,
    })
}

fn bda_run(beta: f64) -> Result<(Run, CollisionStats)> {
    let params = ModelParams {
        beta,
        ..ModelParams::default()
    };
    let sc = Scenario::slvp(ModelId::BDANewell, params, eps(1e-4), 30.0, 400.0, 200.0);
    let mut halt: Option<f64> = None;
    let mut braking = false;
    let mut stats = RunStats::new();
    let mut settle = SettleTracker::new(params.zeta, SETTLE_V_TOL, SETTLE_Z_TOL)?;
    let trajectory = run_observed(&sc, csv_stride(sc.eps), |r| {
        stats.push(r);
        settle.push(&r.state);
        if stats.first_decel.is_some() {
            braking = true;
        }
        if braking && halt.is_none() && r.state.follower.v <= 0.0 {
            halt = Some(r.state.t);
        }
    })?;
    let run = Run {
        scenario: sc,
        trajectory,
        stats,
        settle,
    };
    let mut c = collision_stats(&run)?;
    c.halt_t = halt;
    Ok((run, c))
}

fn bda_newell_collision() -> Result<(Run, Vec<Finding>, Option<ComplianceReport>)> {
    let (r, c) = bda_run(2.0)?;
    let halt_after = c.halt_t.map_or(f64::NAN, |t| t - c.onset.t);
    let mut findings = vec![
        Finding::within("cruise-end-time", "time at which braking starts (s)", c.onset.t, 11.5, 0.2),
        Finding::within("cruise-end-speed", "speed when braking starts (m/s)", c.onset.follower.v, 30.0, 1e-9),
        Finding::within("cruise-end-spacing", "spacing when braking starts (m)", c.onset.spacing, 55.0, 0.5),
        Finding::below("min-spacing-negative", "smallest spacing (m); negative means collision", c.min_z, 0.0),
        Finding::at_most("min-spacing-bound", "smallest spacing (m)", c.min_z, -150.0),
        Finding::within("halt-after-onset", "time from braking start to first zero speed (s)", halt_after, 18.0, 0.5),
        Finding::within("terminal-spacing", "spacing at the end of the run (m)", c.terminal_z, 7.0, 0.1),
        Finding::info("quoted-min-spacing", "quoted smallest spacing for comparison (m)", -214.5),
    ];

    // The quoted halt time and minimum spacing are reproduced with the
    // default deceleration bound rather than β = 2.
    let (_, alt) = bda_run(ModelParams::default().beta)?;
    findings.push(Finding::info(
        "default-beta-halt-after-onset",
        "halt time after braking start with the default beta (s)",
        alt.halt_t.map_or(f64::NAN, |t| t - alt.onset.t),
    ));
    findings.push(Finding::info(
        "default-beta-min-spacing",
        "smallest spacing with the default beta (m)",
        alt.min_z,
    ));

    // β = 9 is just below v0/(2τ): the follower intrudes past ζ, comes to
    // rest at about ζ′ and then backs out to ζ.
    let (_, strong) = bda_run(9.0)?;
    findings.push(
        Finding::within(
            "beta9-min-spacing",
            "smallest spacing with beta = 9 (m)",
            strong.min_z,
            ModelParams::default().zeta_min,
            0.01,
        )
        .unasserted(),
    );
    findings.push(
        Finding::within(
            "beta9-terminal-spacing",
            "spacing at the end of the beta = 9 run (m)",
            strong.terminal_z,
            7.0,
            0.1,
        )
        .unasserted(),
    );
    Ok((r, findings, None))
}

fn idm_fig2() -> Result<(Run, Vec<Finding>, Option<ComplianceReport>)> {
    let params = ModelParams::highway();
    let sc = Scenario::slvp(ModelId::IDM, params, eps(1e-3), 0.0, FIG2_Z0, 125.0);
    let r = execute(sc)?;
    // onset needs every step, so rerun without decimation for the states
    let full = run(&r.scenario)?;
    let states = full.states();
    let rule = OnsetRule::default();
    let onset = braking_onset(&states, &params, &rule);
    let strict_rule = OnsetRule {
        accel_threshold: -0.05,
        ..rule
    };
    let strict = braking_onset(&states, &params, &strict_rule);
    let ssd = safe_stopping_distance(kmh(120.0), &params)?;
    let onset_z = onset.map_or(f64::NAN, |o| o.spacing);
    let last = r.stats.last.expect("run has steps").state;
    let lin = idm_linearize(&params)?;
    let findings = vec![
        Finding::above("onset-spacing", "spacing at braking onset (m)", onset_z, 1000.0),
        Finding::below("min-speed", "smallest speed (m/s); negative means reversing", r.stats.min_v, 0.0),
        Finding::within("terminal-speed", "speed at the end of the run (m/s)", last.follower.v, 0.0, SETTLE_V_TOL),
        Finding::within("terminal-spacing", "spacing at the end of the run (m)", last.spacing, 7.0, SETTLE_Z_TOL),
        Finding::within("ssd-at-120kmh", "safe stopping distance at 120 km/h (m)", ssd, 366.0, 1.0),
        Finding::at_least("onset-over-ssd", "onset spacing over the 120 km/h safe stopping distance", onset_z / ssd, 2.5),
        Finding::info("peak-speed", "largest speed (m/s)", r.stats.peak_v),
        Finding::info(
            "settle-time",
            "time after which |v| <= 0.01 and |z - zeta| <= 0.05 (s)",
            r.settle.settled_since().unwrap_or(f64::NAN),
        ),
        Finding::info(
            "onset-spacing-threshold-0.05",
            "onset spacing when braking means a < -0.05 m/s^2 (m)",
            strict.map_or(f64::NAN, |o| o.spacing),
        ),
        Finding::info("eigenvalue-real", "real part of the linearised eigenvalues", lin.eigenvalues[0].re),
        Finding::info("eigenvalue-imag", "imaginary part magnitude of the eigenvalues", lin.eigenvalues[0].im.abs()),
    ];
    Ok((r, findings, None))
}

fn gipps_fig2() -> Result<(Run, Vec<Finding>, Option<ComplianceReport>)> {
    let params = ModelParams::highway();
    let sc = Scenario::slvp(ModelId::GippsSimplified, params, eps(1e-3), 0.0, FIG2_Z0, 140.0);
    let r = execute(sc)?;
    let switch = r
        .stats
        .first_safe_branch
        .ok_or_else(|| Error::Domain("the follower never reached the safe branch".into()))?
        .state;
    let last = r.stats.last.expect("run has steps").state;
    let stopping = switch.spacing - last.spacing;

    // braking segment compared with the closed form at a finer step
    let fine = Scenario {
        eps: eps(1e-4),
        ..r.scenario.clone()
    };
    let sol = GippsBrakingSolution::new(params, params.mu)?;
    let mut on_branch = false;
    let mut sup = 0.0f64;
    let mut failure = None;
    run_observed(&fine, usize::MAX, |rec| {
        on_branch |= rec.phase == PhaseLabel::GippsSafeBranch;
        if on_branch && failure.is_none() {
            match sol.speed_of_spacing(rec.state.spacing) {
                Ok(v) => sup = sup.max((rec.state.follower.v - v).abs()),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let findings = vec![
        Finding::within("peak-speed", "largest speed (m/s)", r.stats.peak_v, 30.0, 0.3),
        Finding::within("stopping-distance", "distance covered from the switch to the safe branch until the end (m)", stopping, 301.0, 3.0),
        Finding::within("min-acceleration", "smallest acceleration (m/s^2)", r.stats.min_a, -1.6, 0.1),
        Finding::at_least("min-speed", "smallest speed (m/s)", r.stats.min_v, -1e-9),
        Finding::at_least("acceleration-floor", "smallest acceleration (m/s^2)", r.stats.min_a, -params.beta - 1e-6),
        Finding::at_most("closed-form-speed-error", "sup |v - v(z)| on the braking segment at eps = 1e-4 (m/s)", sup, 1e-2),
        Finding::info("switch-spacing", "spacing at the switch to the safe branch (m)", switch.spacing),
        Finding::info(
            "settle-time",
            "time after which |v| <= 0.01 and |z - zeta| <= 0.05 (s)",
            r.settle.settled_since().unwrap_or(f64::NAN),
        ),
        Finding::info("terminal-spacing", "spacing at the end of the run (m)", last.spacing),
    ];
    Ok((r, findings, None))
}

/// Runs a named experiment; with `out` set, writes its files under `out/<name>/`.
pub fn replicate(experiment: Experiment, out: Option<&Path>, jobs: Option<usize>) -> Result<Bundle> {
    let (r, findings, compliance) = match experiment {
        Experiment::BaNewellSlvp => ba_newell_slvp(jobs)?,
        Experiment::BdaNewellCollision => bda_newell_collision()?,
        Experiment::IdmFig2 => idm_fig2()?,
        Experiment::GippsFig2 => gipps_fig2()?,
    };
    let all_asserted_pass = findings.iter().filter(|f| f.asserted).all(|f| f.pass);
    let report = FindingsReport {
        schema_version: SCHEMA_VERSION,
        experiment: experiment.name().into(),
        meta: meta(&r.scenario),
        onset_rule: OnsetRule::default(),
        findings,
        all_asserted_pass,
    };
    let mut files = Vec::new();
    if let Some(dir) = out {
        let dir = dir.join(experiment.name());
        fs::create_dir_all(&dir)?;
        let path = dir.join("trajectory.csv");
        write_trajectory(&r.trajectory, &path)?;
        files.push(path);
        let path = dir.join("phase_plane.csv");
        write_phase_plane(&r.trajectory, &path)?;
        files.push(path);
        if let Some(c) = &compliance {
            let path = dir.join("compliance.json");
            write_json(c, &path)?;
            files.push(path);
        }
        let path = dir.join("findings.json");
        write_json(&report, &path)?;
        files.push(path);
    }
    Ok(Bundle {
        experiment,
        report,
        trajectory: r.trajectory,
        compliance,
        files,
    })
}

/// Audit of a full-resolution trajectory, as used by the CLI.
pub fn audit_full(traj: &Trajectory, checked: &[PrincipleId]) -> Result<Audit> {
    audit_states(&traj.states(), &traj.params, checked, &OnsetRule::default())
}
