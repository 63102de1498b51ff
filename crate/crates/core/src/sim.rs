//! Time-marching engine for follower/leader pairs and platoons.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{advance, ModelParams, PairState, StepSize, VehicleState};
use crate::models::{model_next, model_next_unchecked, ModelId, ModelOutput};
use crate::numfmt::sig9;
use crate::phase::{classify, PhaseLabel};
use crate::principles::{step_violations, ViolationSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSegment {
    pub t_start: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderSample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

/// Motion of the first vehicle, which is not controlled by any model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LeaderProfile {
    Stationary {
        x: f64,
    },
    /// Speed switches at each `t_start`; the leader is at rest before the first one.
    PiecewiseConstantSpeed {
        x0: f64,
        segments: Vec<SpeedSegment>,
    },
    /// Linear interpolation between samples, constant speed past the last one.
    Sampled {
        samples: Vec<LeaderSample>,
    },
}

impl LeaderProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            LeaderProfile::Stationary { x } => finite("leader position", *x),
            LeaderProfile::PiecewiseConstantSpeed { x0, segments } => {
                finite("leader position", *x0)?;
                for s in segments {
                    finite("segment start", s.t_start)?;
                    finite("segment speed", s.v)?;
                }
                if segments.windows(2).any(|w| w[1].t_start <= w[0].t_start) {
                    return Err(Error::Config(
                        "leader segments must be strictly time-ordered".into(),
                    ));
                }
                Ok(())
            }
            LeaderProfile::Sampled { samples } => {
                if samples.is_empty() {
                    return Err(Error::Config("sampled leader needs at least one sample".into()));
                }
                for s in samples {
                    finite("sample time", s.t)?;
                    finite("sample position", s.x)?;
                    finite("sample speed", s.v)?;
                }
                if samples.windows(2).any(|w| w[1].t <= w[0].t) {
                    return Err(Error::Config(
                        "leader samples must be strictly increasing in time".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn initial_x(&self) -> f64 {
        match self {
            LeaderProfile::Stationary { x } => *x,
            LeaderProfile::PiecewiseConstantSpeed { x0, .. } => *x0,
            LeaderProfile::Sampled { samples } => interpolate(samples, 0.0).0,
        }
    }

    fn speed_at(segments: &[SpeedSegment], t: f64) -> f64 {
        // tolerate t = k·ε landing a hair before a switch time
        let t = t + 1e-9;
        segments
            .iter()
            .take_while(|s| s.t_start <= t)
            .last()
            .map_or(0.0, |s| s.v)
    }

    fn start(&self) -> VehicleState {
        match self {
            LeaderProfile::Stationary { x } => VehicleState::new(*x, 0.0),
            LeaderProfile::PiecewiseConstantSpeed { x0, segments } => {
                VehicleState::new(*x0, Self::speed_at(segments, 0.0))
            }
            LeaderProfile::Sampled { samples } => {
                let (x, v) = interpolate(samples, 0.0);
                VehicleState::new(x, v)
            }
        }
    }

    /// Leader state at t_{k+1} given its state at t_k.
    fn next(&self, cur: &VehicleState, t_next: f64, eps: StepSize) -> Result<VehicleState> {
        match self {
            LeaderProfile::Stationary { .. } => Ok(*cur),
            LeaderProfile::PiecewiseConstantSpeed { segments, .. } => {
                let v = Self::speed_at(segments, t_next);
                advance(cur, v, (v - cur.v) / eps.get(), eps)
            }
            LeaderProfile::Sampled { samples } => {
                let (x, v) = interpolate(samples, t_next);
                Ok(VehicleState {
                    x,
                    v,
                    a: (v - cur.v) / eps.get(),
                })
            }
        }
    }
}

fn interpolate(samples: &[LeaderSample], t: f64) -> (f64, f64) {
    let first = samples[0];
    if t <= first.t {
        return (first.x - first.v * (first.t - t), first.v);
    }
    let last = samples[samples.len() - 1];
    if t >= last.t {
        return (last.x + last.v * (t - last.t), last.v);
    }
    let i = samples.partition_point(|s| s.t <= t);
    let (a, b) = (samples[i - 1], samples[i]);
    let w = (t - a.t) / (b.t - a.t);
    (a.x + w * (b.x - a.x), a.v + w * (b.v - a.v))
}

fn finite(what: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be finite, got {x}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampPolicy {
    #[default]
    None,
    /// Planned speeds below zero are raised to zero.
    StopAtZeroSpeed,
}

/// What to do when a Newell-family model is run with ε > τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepCheck {
    #[default]
    Strict,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: ModelId,
    pub params: ModelParams,
    pub eps: StepSize,
    pub t_end: f64,
    pub follower0: VehicleState,
    pub leader: LeaderProfile,
    #[serde(default)]
    pub clamp: ClampPolicy,
    #[serde(default)]
    pub step_check: StepCheck,
}

impl Scenario {
    /// Stationary leader at the origin, follower at rest-bumper distance `z0` behind it.
    pub fn slvp(model: ModelId, params: ModelParams, eps: StepSize, v0: f64, z0: f64, t_end: f64) -> Self {
        Scenario {
            model,
            params,
            eps,
            t_end,
            follower0: VehicleState::new(-z0, v0),
            leader: LeaderProfile::Stationary { x: 0.0 },
            clamp: ClampPolicy::None,
            step_check: StepCheck::Strict,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !self.follower0.is_finite() {
            return Err(Error::Config("initial follower state must be finite".into()));
        }
        self.leader.validate()?;
        if self.follower0.x >= self.leader.initial_x() {
            return Err(Error::Config(
                "follower must start behind the leader".into(),
            ));
        }
        if self.step_check == StepCheck::Strict && self.model.is_newell_family() {
            self.eps.check_newell_bound(&self.params)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: PairState,
    pub phase: PhaseLabel,
    pub violations: ViolationSet,
}

/// Why a run ended early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalError {
    pub t: f64,
    pub kind: String,
    pub message: String,
}

impl TerminalError {
    fn from_error(t: f64, e: &Error) -> Self {
        TerminalError {
            t,
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: ModelId,
    pub params: ModelParams,
    pub eps: StepSize,
    pub t_end: f64,
    pub clamp: ClampPolicy,
    /// Only every `stride`-th step is stored; the final step is always kept.
    pub stride: usize,
    pub steps: Vec<StepRecord>,
    pub terminal_error: Option<TerminalError>,
}

impl Trajectory {
    pub fn states(&self) -> Vec<PairState> {
        self.steps.iter().map(|s| s.state).collect()
    }

    pub fn last(&self) -> &StepRecord {
        self.steps.last().expect("trajectories always hold the initial step")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.steps {
            let p = &s.state;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                sig9(p.t),
                sig9(p.follower.x),
                sig9(p.follower.v),
                sig9(p.follower.a),
                sig9(p.leader.x),
                sig9(p.leader.v),
                sig9(p.spacing),
                s.phase.csv_name(),
                s.violations.codes()
            )?;
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str = "t,x_f,v_f,a_f,x_l,v_l,z,phase,violations";

/// Knobs shared by single-pair and platoon runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub clamp: ClampPolicy,
    pub step_check: StepCheck,
    pub stride: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            clamp: ClampPolicy::None,
            step_check: StepCheck::Strict,
            stride: 1,
        }
    }
}

/// Core loop. At every step all vehicles read the states at t_k, then all
/// advance to t_{k+1}. Vehicle 0 follows the leader profile and vehicle i
/// follows vehicle i − 1. `observe(i, record)` sees every step of every pair,
/// stored or not.
#[allow(clippy::too_many_arguments)]
fn engine<F>(
    model: ModelId,
    params: &ModelParams,
    eps: StepSize,
    initial: &[VehicleState],
    lead: &LeaderProfile,
    t_end: f64,
    opts: RunOptions,
    mut observe: F,
) -> Vec<Trajectory>
where
    F: FnMut(usize, &StepRecord),
{
    let n_steps = eps.steps_for(t_end);
    let stride = opts.stride.max(1);
    let e = eps.get();
    let plan = |p: &PairState| -> Result<ModelOutput> {
        let out = match opts.step_check {
            StepCheck::Strict => model_next(model, p, params, eps),
            StepCheck::Warn => model_next_unchecked(model, p, params, eps),
        }?;
        if opts.clamp == ClampPolicy::StopAtZeroSpeed && out.v_next < 0.0 {
            return Ok(ModelOutput {
                v_next: 0.0,
                a: -p.follower.v / e,
                phase: out.phase,
            });
        }
        Ok(out)
    };

    let mut trajs: Vec<Trajectory> = initial
        .iter()
        .map(|_| Trajectory {
            model,
            params: *params,
            eps,
            t_end,
            clamp: opts.clamp,
            stride,
            steps: Vec::with_capacity(n_steps / stride + 2),
            terminal_error: None,
        })
        .collect();

    let mut leader = lead.start();
    let mut vehicles = initial.to_vec();
    let mut prev_pairs: Vec<Option<PairState>> = vec![None; vehicles.len()];
    let mut outputs: Vec<ModelOutput> = Vec::with_capacity(vehicles.len());

    for k in 0..=n_steps {
        let t = k as f64 * e;
        let keep = k % stride == 0 || k == n_steps;
        outputs.clear();
        let mut failure: Option<(usize, Error)> = None;

        for i in 0..vehicles.len() {
            let ahead = if i == 0 { leader } else { vehicles[i - 1] };
            let pair = PairState::new(t, vehicles[i], ahead, params.zeta);
            let phase = if k < n_steps && failure.is_none() {
                match plan(&pair) {
                    Ok(out) => {
                        outputs.push(out);
                        out.phase
                    }
                    Err(err) => {
                        failure = Some((i, err));
                        PhaseLabel::Unclassified
                    }
                }
            } else {
                classify(model, &pair, params, eps)
            };
            let violations = step_violations(prev_pairs[i].as_ref(), &pair, params)
                .into_iter()
                .map(|v| v.principle)
                .collect();
            let rec = StepRecord {
                state: pair,
                phase,
                violations,
            };
            observe(i, &rec);
            if keep || failure.is_some() {
                trajs[i].steps.push(rec);
            }
            prev_pairs[i] = Some(pair);
        }

        if let Some((i, err)) = failure {
            for (j, traj) in trajs.iter_mut().enumerate() {
                if traj.steps.last().map(|s| s.state.t) != Some(t) {
                    traj.steps.push(StepRecord {
                        state: prev_pairs[j].expect("every pair was visited"),
                        phase: PhaseLabel::Unclassified,
                        violations: ViolationSet::default(),
                    });
                }
                traj.terminal_error = Some(if j == i {
                    TerminalError::from_error(t, &err)
                } else {
                    TerminalError {
                        t,
                        kind: "platoon-halted".into(),
                        message: format!("vehicle {i} stopped the platoon: {err}"),
                    }
                });
            }
            break;
        }
        if k == n_steps {
            break;
        }

        let t_next = (k + 1) as f64 * e;
        let mut step_err = None;
        for (i, out) in outputs.iter().enumerate() {
            match advance(&vehicles[i], out.v_next, out.a, eps) {
                Ok(s) => vehicles[i] = s,
                Err(err) => {
                    step_err = Some((i, err));
                    break;
                }
            }
        }
        if step_err.is_none() {
            match lead.next(&leader, t_next, eps) {
                Ok(l) => leader = l,
                Err(err) => step_err = Some((usize::MAX, err)),
            }
        }
        if let Some((i, err)) = step_err {
            for (j, traj) in trajs.iter_mut().enumerate() {
                traj.terminal_error = Some(TerminalError::from_error(
                    t,
                    &err,
                ));
                if j != i {
                    traj.terminal_error.as_mut().unwrap().kind = "platoon-halted".into();
                }
            }
            break;
        }
    }
    trajs
}

/// Runs one follower behind the scenario's leader, storing every step.
pub fn run(sc: &Scenario) -> Result<Trajectory> {
    run_observed(sc, 1, |_| {})
}

/// Like [`run`], keeping every `stride`-th step and showing all of them to `observe`.
pub fn run_observed<F>(sc: &Scenario, stride: usize, mut observe: F) -> Result<Trajectory>
where
    F: FnMut(&StepRecord),
{
    sc.validate()?;
    if sc.step_check == StepCheck::Warn && sc.model.is_newell_family() && sc.eps.get() > sc.params.tau {
        warn!(
            "step size {} exceeds tau {}; Newell-family guarantees do not hold",
            sc.eps.get(),
            sc.params.tau
        );
    }
    let opts = RunOptions {
        clamp: sc.clamp,
        step_check: sc.step_check,
        stride,
    };
    let mut out = engine(
        sc.model,
        &sc.params,
        sc.eps,
        &[sc.follower0],
        &sc.leader,
        sc.t_end,
        opts,
        |_, r| observe(r),
    );
    Ok(out.pop().expect("one trajectory per follower"))
}

/// Runs `initial.len()` vehicles in a single lane; `initial[0]` is closest to the leader.
pub fn run_platoon(
    model: ModelId,
    params: &ModelParams,
    eps: StepSize,
    initial: &[VehicleState],
    lead: &LeaderProfile,
    t_end: f64,
) -> Result<Vec<Trajectory>> {
    run_platoon_with(model, params, eps, initial, lead, t_end, RunOptions::default(), |_, _| {})
}

#[allow(clippy::too_many_arguments)]
pub fn run_platoon_with<F>(
    model: ModelId,
    params: &ModelParams,
    eps: StepSize,
    initial: &[VehicleState],
    lead: &LeaderProfile,
    t_end: f64,
    opts: RunOptions,
    observe: F,
) -> Result<Vec<Trajectory>>
where
    F: FnMut(usize, &StepRecord),
{
    let first = initial
        .first()
        .ok_or_else(|| Error::Config("a platoon needs at least one vehicle".into()))?;
    let sc = Scenario {
        model,
        params: *params,
        eps,
        t_end,
        follower0: *first,
        leader: lead.clone(),
        clamp: opts.clamp,
        step_check: opts.step_check,
    };
    sc.validate()?;
    for w in initial.windows(2) {
        if !w[1].is_finite() || w[1].x >= w[0].x {
            return Err(Error::Config(
                "platoon positions must be strictly decreasing from the leader".into(),
            ));
        }
    }
    Ok(engine(model, params, eps, initial, lead, t_end, opts, observe))
}

/// Streaming form of [`settle_time`].
#[derive(Debug, Clone, Copy)]
pub struct SettleTracker {
    zeta: f64,
    v_tol: f64,
    z_tol: f64,
    since: Option<f64>,
}

impl SettleTracker {
    pub fn new(zeta: f64, v_tol: f64, z_tol: f64) -> Result<Self> {
        if !(v_tol > 0.0 && z_tol > 0.0) {
            return Err(Error::InvalidArgument("settle tolerances must be positive".into()));
        }
        Ok(SettleTracker {
            zeta,
            v_tol,
            z_tol,
            since: None,
        })
    }

    pub fn push(&mut self, p: &PairState) {
        let settled =
            p.follower.v.abs() <= self.v_tol && (p.spacing - self.zeta).abs() <= self.z_tol;
        match (settled, self.since) {
            (true, None) => self.since = Some(p.t),
            (false, _) => self.since = None,
            _ => {}
        }
    }

    pub fn settled_since(&self) -> Option<f64> {
        self.since
    }
}

/// First time after which |v| ≤ v_tol and |z − ζ| ≤ z_tol hold for the rest
/// of the trajectory.
pub fn settle_time(traj: &Trajectory, v_tol: f64, z_tol: f64) -> Result<Option<f64>> {
    let mut tracker = SettleTracker::new(traj.params.zeta, v_tol, z_tol)?;
    for s in &traj.steps {
        tracker.push(&s.state);
    }
    Ok(tracker.settled_since())
}
