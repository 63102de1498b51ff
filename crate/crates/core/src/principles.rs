//! Behavioral principles as per-step predicates, plus trajectory audits.
//!
//! Every predicate classifies boundary values with an absolute tolerance of
//! 1e-9 in its own unit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ModelParams, PairState, VehicleState};
use crate::sim::Trajectory;

pub const TOL_LEN: f64 = 1e-9;
pub const TOL_V: f64 = 1e-9;
pub const TOL_A: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrincipleId {
    ComfortJamSpacing,
    MinimumJamSpacing,
    ForwardTraveling,
    SpeedLimit,
    MinimumTimeGap,
    BoundedControl,
    SafeStoppingDistance,
}

impl PrincipleId {
    pub const ALL: [PrincipleId; 7] = [
        PrincipleId::ComfortJamSpacing,
        PrincipleId::MinimumJamSpacing,
        PrincipleId::ForwardTraveling,
        PrincipleId::SpeedLimit,
        PrincipleId::MinimumTimeGap,
        PrincipleId::BoundedControl,
        PrincipleId::SafeStoppingDistance,
    ];

    /// Spacing and speed principles (zeroth and first order).
    pub const ZEROTH_AND_FIRST: [PrincipleId; 5] = [
        PrincipleId::ComfortJamSpacing,
        PrincipleId::MinimumJamSpacing,
        PrincipleId::ForwardTraveling,
        PrincipleId::SpeedLimit,
        PrincipleId::MinimumTimeGap,
    ];

    /// Short code used in the trajectory CSV.
    pub fn code(self) -> &'static str {
        match self {
            PrincipleId::ComfortJamSpacing => "CJS",
            PrincipleId::MinimumJamSpacing => "MJS",
            PrincipleId::ForwardTraveling => "FT",
            PrincipleId::SpeedLimit => "SL",
            PrincipleId::MinimumTimeGap => "MTG",
            PrincipleId::BoundedControl => "BC",
            PrincipleId::SafeStoppingDistance => "SSD",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrincipleId::ComfortJamSpacing => "comfort-jam-spacing",
            PrincipleId::MinimumJamSpacing => "minimum-jam-spacing",
            PrincipleId::ForwardTraveling => "forward-traveling",
            PrincipleId::SpeedLimit => "speed-limit",
            PrincipleId::MinimumTimeGap => "minimum-time-gap",
            PrincipleId::BoundedControl => "bounded-control",
            PrincipleId::SafeStoppingDistance => "safe-stopping-distance",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for PrincipleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrincipleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrincipleId::ALL
            .into_iter()
            .find(|p| p.name() == s || p.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown principle '{s}'")))
    }
}

/// Compact set of principles, one bit each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<PrincipleId>", into = "Vec<PrincipleId>")]
pub struct ViolationSet(u8);

impl From<Vec<PrincipleId>> for ViolationSet {
    fn from(v: Vec<PrincipleId>) -> Self {
        v.into_iter().collect()
    }
}

impl From<ViolationSet> for Vec<PrincipleId> {
    fn from(s: ViolationSet) -> Self {
        s.iter().collect()
    }
}

impl ViolationSet {
    pub fn insert(&mut self, p: PrincipleId) {
        self.0 |= p.bit();
    }

    pub fn contains(self, p: PrincipleId) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = PrincipleId> {
        PrincipleId::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// `;`-joined codes, empty when nothing is violated.
    pub fn codes(self) -> String {
        self.iter().map(PrincipleId::code).collect::<Vec<_>>().join(";")
    }
}

impl FromIterator<PrincipleId> for ViolationSet {
    fn from_iter<I: IntoIterator<Item = PrincipleId>>(iter: I) -> Self {
        let mut set = ViolationSet::default();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "m")]
    Metre,
    #[serde(rename = "m/s")]
    MetrePerSecond,
    #[serde(rename = "m/s^2")]
    MetrePerSecondSquared,
}

/// A witness that one principle was breached at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub principle: PrincipleId,
    pub t: f64,
    pub observed: f64,
    pub bound: f64,
    pub unit: Unit,
}

pub fn check_comfort_jam_spacing(p: &PairState, params: &ModelParams) -> bool {
    p.spacing >= params.zeta - TOL_LEN
}

pub fn check_minimum_jam_spacing(p: &PairState, params: &ModelParams) -> bool {
    p.spacing >= params.zeta_min - TOL_LEN
}

pub fn check_forward_traveling(s: &VehicleState) -> bool {
    s.v >= -TOL_V
}

pub fn check_speed_limit(v_next: f64, params: &ModelParams) -> bool {
    v_next <= params.mu + TOL_V
}

/// Planned speed against the time-gap bound (z(t) − ζ)/τ.
pub fn check_min_time_gap(p: &PairState, v_next: f64, params: &ModelParams) -> bool {
    v_next <= min_time_gap_bound(p, params) + TOL_V
}

fn min_time_gap_bound(p: &PairState, params: &ModelParams) -> f64 {
    p.clearance / params.tau
}

pub fn check_bounded_control(a: f64, v: f64, params: &ModelParams) -> bool {
    let (lo, hi) = control_bounds(v, params);
    a >= lo - TOL_A && a <= hi + TOL_A
}

fn control_bounds(v: f64, params: &ModelParams) -> (f64, f64) {
    (-params.beta, params.alpha * (1.0 - v / params.mu))
}

/// Safe stopping distance B = vτ′ + v²/(2β).
pub fn safe_stopping_distance(v: f64, params: &ModelParams) -> Result<f64> {
    if v < 0.0 || v.is_nan() {
        return Err(Error::Domain(format!(
            "safe stopping distance needs a non-negative speed, got {v}"
        )));
    }
    Ok(v * params.tau_brake + v * v / (2.0 * params.beta))
}

/// Per-step violations of the predicate principles.
///
/// `prev` is the state one step earlier; without it the time-gap and
/// control principles, which couple consecutive steps, are not evaluated.
pub fn step_violations(
    prev: Option<&PairState>,
    cur: &PairState,
    params: &ModelParams,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = cur.t;
    if !check_comfort_jam_spacing(cur, params) {
        out.push(Violation {
            principle: PrincipleId::ComfortJamSpacing,
            t,
            observed: cur.spacing,
            bound: params.zeta,
            unit: Unit::Metre,
        });
    }
    if !check_minimum_jam_spacing(cur, params) {
        out.push(Violation {
            principle: PrincipleId::MinimumJamSpacing,
            t,
            observed: cur.spacing,
            bound: params.zeta_min,
            unit: Unit::Metre,
        });
    }
    if !check_forward_traveling(&cur.follower) {
        out.push(Violation {
            principle: PrincipleId::ForwardTraveling,
            t,
            observed: cur.follower.v,
            bound: 0.0,
            unit: Unit::MetrePerSecond,
        });
    }
    if !check_speed_limit(cur.follower.v, params) {
        out.push(Violation {
            principle: PrincipleId::SpeedLimit,
            t,
            observed: cur.follower.v,
            bound: params.mu,
            unit: Unit::MetrePerSecond,
        });
    }
    if let Some(prev) = prev {
        if !check_min_time_gap(prev, cur.follower.v, params) {
            out.push(Violation {
                principle: PrincipleId::MinimumTimeGap,
                t,
                observed: cur.follower.v,
                bound: min_time_gap_bound(prev, params),
                unit: Unit::MetrePerSecond,
            });
        }
        let a = cur.follower.a;
        if !check_bounded_control(a, prev.follower.v, params) {
            let (lo, hi) = control_bounds(prev.follower.v, params);
            out.push(Violation {
                principle: PrincipleId::BoundedControl,
                t,
                observed: a,
                bound: if a < lo { lo } else { hi },
                unit: Unit::MetrePerSecondSquared,
            });
        }
    }
    out
}

/// Definition of braking onset used by the safe-stopping-distance audit.
///
/// Onset is the state from which an acceleration below `accel_threshold`
/// is applied for at least `min_duration`, while the follower is moving
/// towards a stationary leader. The audit passes when the spacing at onset
/// is at most `factor` times the safe stopping distance at the onset speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetRule {
    pub accel_threshold: f64,
    pub min_duration: f64,
    pub factor: f64,
}

impl Default for OnsetRule {
    fn default() -> Self {
        OnsetRule {
            accel_threshold: 0.0,
            min_duration: 0.5,
            factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakingOnset {
    pub t: f64,
    pub spacing: f64,
    pub speed: f64,
    pub safe_stopping_distance: f64,
    /// spacing / safe stopping distance.
    pub ratio: f64,
}

/// Finds the first sustained braking episode towards a stationary leader.
pub fn braking_onset(
    states: &[PairState],
    params: &ModelParams,
    rule: &OnsetRule,
) -> Option<BrakingOnset> {
    let mut start: Option<usize> = None;
    for k in 1..states.len() {
        let decided = &states[k - 1];
        let braking = states[k].follower.a < rule.accel_threshold
            && decided.leader.v == 0.0
            && decided.follower.v > 0.0;
        match (braking, start) {
            (true, None) => start = Some(k - 1),
            (false, Some(_)) => start = None,
            _ => {}
        }
        if let Some(s) = start {
            if states[k].t - states[s].t >= rule.min_duration - 1e-12 {
                let at = &states[s];
                let ssd = safe_stopping_distance(at.follower.v, params).ok()?;
                return Some(BrakingOnset {
                    t: at.t,
                    spacing: at.spacing,
                    speed: at.follower.v,
                    safe_stopping_distance: ssd,
                    ratio: at.spacing / ssd,
                });
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleResult {
    pub principle: PrincipleId,
    pub pass: bool,
    pub violation_count: usize,
    pub first_violation: Option<Violation>,
}

/// Audit of one trajectory against a chosen set of principles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub results: Vec<PrincipleResult>,
    pub braking_onset: Option<BrakingOnset>,
    pub onset_rule: OnsetRule,
    pub notes: Vec<String>,
}

impl Audit {
    pub fn result(&self, p: PrincipleId) -> Option<&PrincipleResult> {
        self.results.iter().find(|r| r.principle == p)
    }

    pub fn passes(&self, p: PrincipleId) -> Option<bool> {
        self.result(p).map(|r| r.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }
}

/// Note attached to every audit: the objective principle is not a predicate.
pub const MAX_SPEED_NOTE: &str =
    "maximum-speed is the models' objective and is not audited per step";

pub fn audit_trajectory(
    traj: &Trajectory,
    params: &ModelParams,
    checked: &[PrincipleId],
) -> Result<Audit> {
    audit_states(&traj.states(), params, checked, &OnsetRule::default())
}

/// Audits raw states. Steps are put in time order first, so the result does
/// not depend on the order in which they are supplied.
pub fn audit_states(
    states: &[PairState],
    params: &ModelParams,
    checked: &[PrincipleId],
    rule: &OnsetRule,
) -> Result<Audit> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("cannot audit an empty trajectory".into()));
    }
    let mut sorted;
    let states = if states.windows(2).all(|w| w[0].t <= w[1].t) {
        states
    } else {
        sorted = states.to_vec();
        sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
        &sorted[..]
    };

    let mut counts = [0usize; 7];
    let mut first: [Option<Violation>; 7] = [None; 7];
    for k in 0..states.len() {
        let prev = k.checked_sub(1).map(|j| &states[j]);
        for v in step_violations(prev, &states[k], params) {
            let i = v.principle as usize;
            counts[i] += 1;
            if first[i].is_none() {
                first[i] = Some(v);
            }
        }
    }

    let mut notes = vec![MAX_SPEED_NOTE.to_string()];
    let onset = if checked.contains(&PrincipleId::SafeStoppingDistance) {
        let onset = braking_onset(states, params, rule);
        notes.push(format!(
            "braking onset: first state from which a < {} m/s^2 holds for >= {} s while closing on a stationary leader",
            rule.accel_threshold, rule.min_duration
        ));
        onset
    } else {
        None
    };

    let mut results = Vec::new();
    for &p in PrincipleId::ALL.iter().filter(|p| checked.contains(p)) {
        let i = p as usize;
        let result = if p == PrincipleId::SafeStoppingDistance {
            match onset {
                Some(o) if o.spacing > rule.factor * o.safe_stopping_distance => PrincipleResult {
                    principle: p,
                    pass: false,
                    violation_count: 1,
                    first_violation: Some(Violation {
                        principle: p,
                        t: o.t,
                        observed: o.spacing,
                        bound: rule.factor * o.safe_stopping_distance,
                        unit: Unit::Metre,
                    }),
                },
                _ => PrincipleResult {
                    principle: p,
                    pass: true,
                    violation_count: 0,
                    first_violation: None,
                },
            }
        } else {
            PrincipleResult {
                principle: p,
                pass: counts[i] == 0,
                violation_count: counts[i],
                first_violation: first[i],
            }
        };
        results.push(result);
    }

    Ok(Audit {
        results,
        braking_onset: onset,
        onset_rule: *rule,
        notes,
    })
}
