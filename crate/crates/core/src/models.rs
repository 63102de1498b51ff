//! The car-following laws as next-speed maps behind one interface.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ModelParams, PairState, StepSize};
use crate::phase::{classify, PhaseLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "newell")]
    Newell,
    #[serde(rename = "ba-newell")]
    BANewell,
    #[serde(rename = "bda-newell")]
    BDANewell,
    #[serde(rename = "idm")]
    IDM,
    #[serde(rename = "gipps")]
    GippsFull,
    #[serde(rename = "gipps-simplified")]
    GippsSimplified,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::Newell,
        ModelId::BANewell,
        ModelId::BDANewell,
        ModelId::IDM,
        ModelId::GippsFull,
        ModelId::GippsSimplified,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ModelId::Newell => "newell",
            ModelId::BANewell => "ba-newell",
            ModelId::BDANewell => "bda-newell",
            ModelId::IDM => "idm",
            ModelId::GippsFull => "gipps",
            ModelId::GippsSimplified => "gipps-simplified",
        }
    }

    pub fn is_newell_family(self) -> bool {
        matches!(self, ModelId::Newell | ModelId::BANewell | ModelId::BDANewell)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown model '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub v_next: f64,
    pub a: f64,
    pub phase: PhaseLabel,
}

/// v_* = min(μ, (z − ζ)/τ). Negative for negative clearance.
pub fn equilibrium_speed(p: &PairState, params: &ModelParams) -> f64 {
    params.mu.min(p.clearance / params.tau)
}

/// TWOPAS acceleration bound α(1 − v/μ).
pub fn acceleration_bound(v: f64, params: &ModelParams) -> f64 {
    params.alpha * (1.0 - v / params.mu)
}

pub fn newell_next(p: &PairState, params: &ModelParams, eps: StepSize) -> Result<ModelOutput> {
    eps.check_newell_bound(params)?;
    Ok(newell_unchecked(p, params, eps))
}

pub fn ba_newell_next(p: &PairState, params: &ModelParams, eps: StepSize) -> Result<ModelOutput> {
    eps.check_newell_bound(params)?;
    Ok(ba_newell_unchecked(p, params, eps))
}

pub fn bda_newell_next(p: &PairState, params: &ModelParams, eps: StepSize) -> Result<ModelOutput> {
    eps.check_newell_bound(params)?;
    Ok(bda_newell_unchecked(p, params, eps))
}

fn newell_unchecked(p: &PairState, params: &ModelParams, eps: StepSize) -> ModelOutput {
    let v_star = equilibrium_speed(p, params);
    ModelOutput {
        v_next: v_star,
        a: (v_star - p.follower.v) / eps.get(),
        phase: classify(ModelId::Newell, p, params, eps),
    }
}

/// Speed and acceleration of the bounded-acceleration law, choosing the
/// binding branch once so that both come from the same branch.
fn ba_branch(p: &PairState, params: &ModelParams, eps: StepSize) -> (f64, f64) {
    let v = p.follower.v;
    let v_star = equilibrium_speed(p, params);
    let bound = acceleration_bound(v, params);
    let eq_rate = (v_star - v) / eps.get();
    if bound <= eq_rate {
        (v + eps.get() * bound, bound)
    } else {
        (v_star, eq_rate)
    }
}

fn ba_newell_unchecked(p: &PairState, params: &ModelParams, eps: StepSize) -> ModelOutput {
    let (v_next, a) = ba_branch(p, params, eps);
    ModelOutput {
        v_next,
        a,
        phase: classify(ModelId::BANewell, p, params, eps),
    }
}

fn bda_newell_unchecked(p: &PairState, params: &ModelParams, eps: StepSize) -> ModelOutput {
    let (mut v_next, mut a) = ba_branch(p, params, eps);
    if a < -params.beta {
        a = -params.beta;
        v_next = p.follower.v - eps.get() * params.beta;
    }
    ModelOutput {
        v_next,
        a,
        phase: classify(ModelId::BDANewell, p, params, eps),
    }
}

/// IDM acceleration with the interaction term measured from ζ′.
pub fn idm_accel(p: &PairState, params: &ModelParams) -> Result<f64> {
    let gap = p.spacing - params.zeta_min;
    if gap <= 0.0 || gap.is_nan() {
        return Err(Error::Singular {
            spacing: p.spacing,
            zeta_min: params.zeta_min,
        });
    }
    let v = p.follower.v;
    let dv = v - p.leader.v;
    let comfort = 2.0 * (params.alpha * params.beta).sqrt();
    let desired = comfort * (params.zeta - params.zeta_min + params.tau * v) + v * dv;
    let interaction = desired / (comfort * gap);
    let free = (v / params.mu).powf(params.delta);
    Ok(params.alpha * (1.0 - free - interaction * interaction))
}

fn idm_next(p: &PairState, params: &ModelParams, eps: StepSize) -> Result<ModelOutput> {
    let a = idm_accel(p, params)?;
    Ok(ModelOutput {
        v_next: p.follower.v + eps.get() * a,
        a,
        phase: PhaseLabel::Unclassified,
    })
}

/// Radicand of the full Gipps safe speed.
pub fn gipps_full_discriminant(p: &PairState, params: &ModelParams) -> f64 {
    let b = params.beta;
    let t1 = params.tau1;
    b * b * t1 * t1
        + 2.0 * b * p.clearance
        + 2.0 * b * (t1 - params.tau_brake) * p.follower.v
        + p.leader.v * p.leader.v
}

/// Radicand of the simplified Gipps safe speed.
pub fn gipps_simplified_discriminant(p: &PairState, params: &ModelParams) -> f64 {
    let b = params.beta;
    let tb = params.tau_brake;
    b * b * tb * tb + 2.0 * b * p.clearance + p.leader.v * p.leader.v
}

/// Safe-speed branch −βτ₁ + √(…) of the full model.
pub fn gipps_full_safe_speed(p: &PairState, params: &ModelParams) -> Result<f64> {
    let d = gipps_full_discriminant(p, params);
    if d < 0.0 || d.is_nan() {
        return Err(Error::IllDefined { discriminant: d });
    }
    Ok(-params.beta * params.tau1 + d.sqrt())
}

/// Safe-speed branch −βτ′ + √(…) of the simplified model.
pub fn gipps_simplified_safe_speed(p: &PairState, params: &ModelParams) -> Result<f64> {
    let d = gipps_simplified_discriminant(p, params);
    if d < 0.0 || d.is_nan() {
        return Err(Error::IllDefined { discriminant: d });
    }
    Ok(-params.beta * params.tau_brake + d.sqrt())
}

/// Acceleration branch of the original Gipps law.
pub fn gipps_full_accel_speed(v: f64, params: &ModelParams, eps: StepSize) -> Result<f64> {
    let r = 0.025 + v / params.mu;
    if r < 0.0 {
        return Err(Error::Domain(format!(
            "Gipps acceleration branch undefined for speed {v}"
        )));
    }
    Ok(v + 2.5 * params.alpha_gipps * eps.get() * (1.0 - v / params.mu) * r.sqrt())
}

/// Acceleration branch of the simplified law, v + εα(1 − v/μ).
pub fn gipps_simplified_accel_speed(v: f64, params: &ModelParams, eps: StepSize) -> f64 {
    v + eps.get() * acceleration_bound(v, params)
}

pub fn gipps_full_next(p: &PairState, params: &ModelParams, eps: StepSize) -> Result<ModelOutput> {
    let safe = gipps_full_safe_speed(p, params)?;
    let accel = gipps_full_accel_speed(p.follower.v, params, eps)?;
    Ok(gipps_output(p, accel, safe, eps))
}

pub fn gipps_simplified_next(
    p: &PairState,
    params: &ModelParams,
    eps: StepSize,
) -> Result<ModelOutput> {
    let safe = gipps_simplified_safe_speed(p, params)?;
    let accel = gipps_simplified_accel_speed(p.follower.v, params, eps);
    Ok(gipps_output(p, accel, safe, eps))
}

fn gipps_output(p: &PairState, accel: f64, safe: f64, eps: StepSize) -> ModelOutput {
    let (v_next, phase) = if accel <= safe {
        (accel, PhaseLabel::GippsAccelBranch)
    } else {
        (safe, PhaseLabel::GippsSafeBranch)
    };
    ModelOutput {
        v_next,
        a: (v_next - p.follower.v) / eps.get(),
        phase,
    }
}

/// Uniform dispatch, enforcing ε ≤ τ for the Newell family.
pub fn model_next(
    id: ModelId,
    p: &PairState,
    params: &ModelParams,
    eps: StepSize,
) -> Result<ModelOutput> {
    match id {
        ModelId::Newell => newell_next(p, params, eps),
        ModelId::BANewell => ba_newell_next(p, params, eps),
        ModelId::BDANewell => bda_newell_next(p, params, eps),
        ModelId::IDM => idm_next(p, params, eps),
        ModelId::GippsFull => gipps_full_next(p, params, eps),
        ModelId::GippsSimplified => gipps_simplified_next(p, params, eps),
    }
}

/// Dispatch without the ε ≤ τ check; callers that relax it report a warning.
pub fn model_next_unchecked(
    id: ModelId,
    p: &PairState,
    params: &ModelParams,
    eps: StepSize,
) -> Result<ModelOutput> {
    match id {
        ModelId::Newell => Ok(newell_unchecked(p, params, eps)),
        ModelId::BANewell => Ok(ba_newell_unchecked(p, params, eps)),
        ModelId::BDANewell => Ok(bda_newell_unchecked(p, params, eps)),
        _ => model_next(id, p, params, eps),
    }
}
