//! Parameters, vehicle state and the symplectic stepping rule shared by every model.
//!
//! All quantities are SI: metres, seconds, m/s, m/s². Negative speeds and
//! negative spacings are representable on purpose; nothing here clamps them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default step size used by the replication runs.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Behavioral parameters of a follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Comfort jam spacing ζ (m).
    pub zeta: f64,
    /// Minimum jam spacing ζ′ (m).
    pub zeta_min: f64,
    /// Minimum time gap τ (s).
    pub tau: f64,
    /// Reaction time under braking τ′ (s).
    pub tau_brake: f64,
    /// Speed limit μ (m/s).
    pub mu: f64,
    /// Comfort acceleration bound α (m/s²).
    pub alpha: f64,
    /// Comfort deceleration bound β, as a magnitude (m/s²).
    pub beta: f64,
    /// IDM free-road exponent δ.
    pub delta: f64,
    /// Gipps planning horizon τ₁ (s).
    pub tau1: f64,
    /// Gipps maximum acceleration α′ (m/s²).
    pub alpha_gipps: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            zeta: 7.0,
            zeta_min: 5.0,
            tau: 1.6,
            tau_brake: 1.0,
            mu: 30.0,
            alpha: 0.73,
            beta: 1.67,
            delta: 4.0,
            tau1: 2.0 / 3.0,
            alpha_gipps: 1.7,
        }
    }
}

impl ModelParams {
    /// Defaults with the speed limit set to 120 km/h.
    pub fn highway() -> Self {
        ModelParams {
            mu: kmh(120.0),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("zeta", self.zeta),
            ("zeta_min", self.zeta_min),
            ("tau", self.tau),
            ("tau_brake", self.tau_brake),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("tau1", self.tau1),
            ("alpha_gipps", self.alpha_gipps),
        ];
        for (name, value) in all {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if self.zeta <= self.zeta_min {
            return Err(Error::InvalidParams(format!(
                "comfort jam spacing {} must exceed minimum jam spacing {}",
                self.zeta, self.zeta_min
            )));
        }
        if self.tau <= self.tau_brake {
            return Err(Error::InvalidParams(format!(
                "minimum time gap {} must exceed braking reaction time {}",
                self.tau, self.tau_brake
            )));
        }
        Ok(())
    }

    /// Jam density κ = 1/ζ.
    pub fn jam_density(&self) -> f64 {
        1.0 / self.zeta
    }
}

/// Converts km/h to m/s.
pub fn kmh(v: f64) -> f64 {
    v / 3.6
}

/// Position, speed and the acceleration applied over the step just taken.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

impl VehicleState {
    /// A state at t=0, where the stored acceleration is defined as zero.
    pub fn new(x: f64, v: f64) -> Self {
        VehicleState { x, v, a: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.a.is_finite()
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState(format!("non-finite vehicle state {self:?}")))
        }
    }
}

/// Follower and leader at one instant with derived spacing and clearance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairState {
    pub t: f64,
    pub follower: VehicleState,
    pub leader: VehicleState,
    /// z = X_L − X.
    pub spacing: f64,
    /// z − ζ.
    pub clearance: f64,
}

impl PairState {
    pub fn new(t: f64, follower: VehicleState, leader: VehicleState, zeta: f64) -> Self {
        let spacing = leader.x - follower.x;
        PairState {
            t,
            follower,
            leader,
            spacing,
            clearance: spacing - zeta,
        }
    }

    /// Pair with a stationary leader at the origin and the follower `spacing` behind it.
    pub fn slvp(v: f64, spacing: f64, zeta: f64) -> Self {
        PairState::new(
            0.0,
            VehicleState::new(-spacing, v),
            VehicleState::new(0.0, 0.0),
            zeta,
        )
    }

    /// Pair built directly from follower speed, leader speed and spacing.
    pub fn from_relative(v: f64, v_leader: f64, spacing: f64, zeta: f64) -> Self {
        PairState::new(
            0.0,
            VehicleState::new(-spacing, v),
            VehicleState::new(0.0, v_leader),
            zeta,
        )
    }
}

/// Time-step size ε.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StepSize(f64);

impl StepSize {
    pub fn new(eps: f64) -> Result<Self> {
        if eps.is_finite() && eps > 0.0 {
            Ok(StepSize(eps))
        } else {
            Err(Error::InvalidArgument(format!(
                "step size must be finite and positive, got {eps}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Newell-family step bound ε ≤ τ.
    pub fn check_newell_bound(self, params: &ModelParams) -> Result<()> {
        if self.0 > params.tau {
            Err(Error::StepTooLarge {
                eps: self.0,
                tau: params.tau,
            })
        } else {
            Ok(())
        }
    }

    /// Number of steps needed to cover `t_end`.
    pub fn steps_for(self, t_end: f64) -> usize {
        let ratio = t_end / self.0;
        // absorb representation error such as 125/0.001 = 125000.00000000001
        let n = ratio.round();
        if (ratio - n).abs() <= 1e-9 * n.max(1.0) {
            n as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

impl Default for StepSize {
    fn default() -> Self {
        StepSize(DEFAULT_EPS)
    }
}

impl TryFrom<f64> for StepSize {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        StepSize::new(value)
    }
}

impl From<StepSize> for f64 {
    fn from(s: StepSize) -> f64 {
        s.0
    }
}

/// One symplectic step: the new speed is used for the position update.
pub fn symplectic_step(s: &VehicleState, a: f64, eps: StepSize) -> Result<VehicleState> {
    s.ensure_finite()?;
    if !a.is_finite() {
        return Err(Error::InvalidState(format!("non-finite acceleration {a}")));
    }
    let eps = eps.get();
    let v = s.v + eps * a;
    let next = VehicleState {
        x: s.x + eps * v,
        v,
        a,
    };
    next.ensure_finite()?;
    Ok(next)
}

/// Advances to a planned speed, storing the implied acceleration.
pub fn step_from_speed(s: &VehicleState, v_next: f64, eps: StepSize) -> Result<VehicleState> {
    let a = (v_next - s.v) / eps.get();
    advance(s, v_next, a, eps)
}

/// Advances with an explicitly supplied (speed, acceleration) pair.
///
/// Models return both; the speed is authoritative for the position update.
pub(crate) fn advance(s: &VehicleState, v_next: f64, a: f64, eps: StepSize) -> Result<VehicleState> {
    s.ensure_finite()?;
    let next = VehicleState {
        x: s.x + eps.get() * v_next,
        v: v_next,
        a,
    };
    next.ensure_finite()?;
    Ok(next)
}

/// Time gap (z − ζ)/v(t+ε).
pub fn time_gap(p: &PairState, v_next: f64) -> Result<f64> {
    if v_next < 0.0 || v_next.is_nan() {
        return Err(Error::Domain(format!(
            "time gap needs a non-negative planned speed, got {v_next}"
        )));
    }
    if v_next == 0.0 {
        if p.clearance > 0.0 {
            return Ok(f64::INFINITY);
        }
        return Err(Error::UndefinedGap {
            clearance: p.clearance,
        });
    }
    Ok(p.clearance / v_next)
}
