//! Closed-form references: the simplified-Gipps braking solution from the
//! safe-stopping spacing, and the linearised IDM near its jam equilibrium.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ModelParams, PairState, StepSize};
use crate::models::{idm_accel, ModelId};
use crate::principles::safe_stopping_distance;
use crate::sim::{run_observed, Scenario};

/// Simplified Gipps follower braking towards a stationary leader from speed
/// `v0` at spacing `z0 = ζ + v0·τ′ + v0²/(2β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GippsBrakingSolution {
    pub params: ModelParams,
    pub v0: f64,
    pub z0: f64,
}

impl GippsBrakingSolution {
    pub fn new(params: ModelParams, v0: f64) -> Result<Self> {
        params.validate()?;
        if !(v0 > 0.0 && v0 <= params.mu) {
            return Err(Error::InvalidArgument(format!(
                "initial speed must lie in (0, {}], got {v0}",
                params.mu
            )));
        }
        let z0 = params.zeta + v0 * params.tau_brake + v0 * v0 / (2.0 * params.beta);
        Ok(GippsBrakingSolution { params, v0, z0 })
    }

    fn root(&self, z: f64) -> f64 {
        let (b, tp) = (self.params.beta, self.params.tau_brake);
        (b * b * tp * tp + 2.0 * b * (z - self.params.zeta)).sqrt()
    }

    fn require_at_least_jam(&self, z: f64) -> Result<()> {
        if z < self.params.zeta || z.is_nan() {
            return Err(Error::Domain(format!(
                "spacing {z} is below the comfort jam spacing {}",
                self.params.zeta
            )));
        }
        Ok(())
    }

    /// Time at which the spacing reaches `z`; diverges as z → ζ.
    pub fn time_of_spacing(&self, z: f64) -> Result<f64> {
        if z <= self.params.zeta || z.is_nan() {
            return Err(Error::Domain(format!(
                "time of spacing needs z > {}, got {z}",
                self.params.zeta
            )));
        }
        if z > self.z0 {
            return Err(Error::Domain(format!(
                "spacing {z} exceeds the initial spacing {}",
                self.z0
            )));
        }
        let (b, tp) = (self.params.beta, self.params.tau_brake);
        let r = self.root(z);
        Ok(-r / b - tp * ((b * tp - r) / self.v0).abs().ln() + (self.v0 + b * tp) / b)
    }

    /// v(z) = −βτ′ + √(β²τ′² + 2β(z − ζ)).
    pub fn speed_of_spacing(&self, z: f64) -> Result<f64> {
        self.require_at_least_jam(z)?;
        Ok(-self.params.beta * self.params.tau_brake + self.root(z))
    }

    /// a(z) = −β + β·βτ′/√(β²τ′² + 2β(z − ζ)).
    pub fn accel_of_spacing(&self, z: f64) -> Result<f64> {
        self.require_at_least_jam(z)?;
        let (b, tp) = (self.params.beta, self.params.tau_brake);
        Ok(-b + b * (b * tp) / self.root(z))
    }

    /// dt/dz = 1/(βτ′ − √(β²τ′² + 2β(z − ζ))).
    pub fn time_slope(&self, z: f64) -> Result<f64> {
        self.require_at_least_jam(z)?;
        Ok(1.0 / (self.params.beta * self.params.tau_brake - self.root(z)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    StableSpiral,
    StableNode,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationResult {
    /// Row-major Jacobian of (dv/dt, dz̃/dt) with respect to (v, z̃).
    pub jacobian: [[f64; 2]; 2],
    pub eigenvalues: [Complex64; 2],
    pub classification: EquilibriumKind,
}

impl LinearizationResult {
    /// |λ² − tr·λ + det| for each eigenvalue.
    pub fn characteristic_residuals(&self) -> [f64; 2] {
        let j = self.jacobian;
        let tr = j[0][0] + j[1][1];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        self.eigenvalues.map(|l| (l * l - tr * l + det).norm())
    }
}

fn idm_gap(params: &ModelParams) -> Result<f64> {
    let d = params.zeta - params.zeta_min;
    if d <= 0.0 {
        return Err(Error::Singular {
            spacing: params.zeta,
            zeta_min: params.zeta_min,
        });
    }
    Ok(d)
}

/// Linearisation of the IDM stationary-leader system about (v, z̃) = (0, 0),
/// where z̃ = z − ζ.
pub fn idm_linearize(params: &ModelParams) -> Result<LinearizationResult> {
    let d = idm_gap(params)?;
    let (a, tau) = (params.alpha, params.tau);
    let jacobian = [[-2.0 * tau * a / d, 2.0 * a / d], [-1.0, 0.0]];
    let disc = tau * tau - 2.0 * d / a;
    let root = Complex64::new(disc, 0.0).sqrt();
    let scale = a / d;
    let eigenvalues = [
        (Complex64::new(-tau, 0.0) + root) * scale,
        (Complex64::new(-tau, 0.0) - root) * scale,
    ];
    let stable = eigenvalues.iter().all(|l| l.re < 0.0);
    let classification = match (stable, disc < 0.0) {
        (true, true) => EquilibriumKind::StableSpiral,
        (true, false) => EquilibriumKind::StableNode,
        _ => EquilibriumKind::Other,
    };
    Ok(LinearizationResult {
        jacobian,
        eigenvalues,
        classification,
    })
}

/// Linearised right-hand side (dv/dt, dz̃/dt).
pub fn idm_linear_rhs(params: &ModelParams, v: f64, ztilde: f64) -> (f64, f64) {
    let d = params.zeta - params.zeta_min;
    let k = params.alpha / d;
    (-2.0 * params.tau * k * v + 2.0 * k * ztilde, -v)
}

/// Full nonlinear right-hand side with a stationary leader.
pub fn idm_full_rhs(params: &ModelParams, v: f64, ztilde: f64) -> Result<(f64, f64)> {
    let p = PairState::slvp(v, params.zeta + ztilde, params.zeta);
    Ok((idm_accel(&p, params)?, -v))
}

/// One line of an oracle comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub quantity: String,
    pub simulated: f64,
    pub closed_form: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

impl OracleRow {
    pub fn new(quantity: impl Into<String>, simulated: f64, closed_form: f64) -> Self {
        let abs_error = (simulated - closed_form).abs();
        let rel_error = if closed_form == 0.0 {
            abs_error
        } else {
            abs_error / closed_form.abs()
        };
        OracleRow {
            quantity: quantity.into(),
            simulated,
            closed_form,
            abs_error,
            rel_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub oracle: String,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub pass: bool,
    pub rows: Vec<OracleRow>,
}

impl OracleReport {
    fn new(oracle: &str, tolerance: f64, rows: Vec<OracleRow>) -> Self {
        let max_rel_error = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
        OracleReport {
            oracle: oracle.into(),
            tolerance,
            max_rel_error,
            pass: max_rel_error <= tolerance,
            rows,
        }
    }
}

/// Horizon long enough for the braking run to get within centimetres of ζ.
pub fn gipps_braking_horizon(sol: &GippsBrakingSolution) -> f64 {
    (sol.v0 + sol.params.beta * sol.params.tau_brake) / sol.params.beta + 20.0 * sol.params.tau_brake
}

/// Largest |v − v(z)| over a simulated simplified-Gipps braking run, taken
/// while z ≥ `z_floor`.
pub fn gipps_speed_sup_error(sol: &GippsBrakingSolution, eps: StepSize, z_floor: f64) -> Result<f64> {
    let sc = Scenario::slvp(
        ModelId::GippsSimplified,
        sol.params,
        eps,
        sol.v0,
        sol.z0,
        gipps_braking_horizon(sol),
    );
    let mut worst = 0.0f64;
    let mut failure = None;
    let tr = run_observed(&sc, usize::MAX, |r| {
        let z = r.state.spacing;
        if z >= z_floor && failure.is_none() {
            match sol.speed_of_spacing(z) {
                Ok(v) => worst = worst.max((r.state.follower.v - v).abs()),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(t) = tr.terminal_error {
        return Err(Error::Domain(format!("braking run stopped at t={}: {}", t.t, t.message)));
    }
    Ok(worst)
}

pub const GIPPS_CHECK_TOLERANCE: f64 = 1e-3;
pub const IDM_CHECK_TOLERANCE: f64 = 1e-6;

/// Simulated simplified-Gipps braking compared with the closed form at a
/// few spacings, plus the safe-stopping identity for z0.
pub fn gipps_oracle_check(params: &ModelParams, v0: f64, eps: StepSize) -> Result<OracleReport> {
    let sol = GippsBrakingSolution::new(*params, v0)?;
    let zeta = params.zeta;
    let targets: Vec<f64> = (1..=9)
        .map(|i| zeta + (sol.z0 - zeta) * (1.0 - 0.1 * i as f64))
        .collect();
    let sc = Scenario::slvp(
        ModelId::GippsSimplified,
        *params,
        eps,
        v0,
        sol.z0,
        gipps_braking_horizon(&sol),
    );
    // first step at or below each target spacing
    let mut hits: Vec<Option<(f64, f64, f64)>> = vec![None; targets.len()];
    let tr = run_observed(&sc, usize::MAX, |r| {
        for (slot, &z) in hits.iter_mut().zip(&targets) {
            if slot.is_none() && r.state.spacing <= z {
                *slot = Some((r.state.t, r.state.spacing, r.state.follower.v));
            }
        }
    })?;
    if let Some(t) = tr.terminal_error {
        return Err(Error::Domain(format!("braking run stopped at t={}: {}", t.t, t.message)));
    }

    let mut rows = vec![OracleRow::new(
        "z0 - zeta vs safe stopping distance",
        sol.z0 - zeta,
        safe_stopping_distance(v0, params)?,
    )];
    for (hit, &target) in hits.iter().zip(&targets) {
        let (t, z, v) = hit.ok_or_else(|| {
            Error::Domain(format!("simulation never reached spacing {target}"))
        })?;
        rows.push(OracleRow::new(
            format!("v at z={}", crate::numfmt::sig(z, 6)),
            v,
            sol.speed_of_spacing(z)?,
        ));
        rows.push(OracleRow::new(
            format!("t at z={}", crate::numfmt::sig(z, 6)),
            t,
            sol.time_of_spacing(z)?,
        ));
    }
    Ok(OracleReport::new("gipps", GIPPS_CHECK_TOLERANCE, rows))
}

/// Central-difference Jacobian of the nonlinear IDM system at the origin,
/// compared entry by entry and through its eigenvalues with the closed form.
pub fn idm_oracle_check(params: &ModelParams) -> Result<OracleReport> {
    let lin = idm_linearize(params)?;
    let h = 1e-6;
    let col = |dv: f64, dz: f64| -> Result<(f64, f64)> {
        let (fp, gp) = idm_full_rhs(params, dv, dz)?;
        let (fm, gm) = idm_full_rhs(params, -dv, -dz)?;
        Ok(((fp - fm) / (2.0 * h), (gp - gm) / (2.0 * h)))
    };
    let (j00, j10) = col(h, 0.0)?;
    let (j01, j11) = col(0.0, h)?;
    let numeric = [[j00, j01], [j10, j11]];
    let mut rows = Vec::new();
    for (i, row) in numeric.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            rows.push(OracleRow::new(format!("J[{i}][{j}]"), x, lin.jacobian[i][j]));
        }
    }
    let tr = j00 + j11;
    let det = j00 * j11 - j01 * j10;
    let root = Complex64::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let l0 = Complex64::new(tr / 2.0, 0.0) + root;
    rows.push(OracleRow::new("Re lambda", l0.re, lin.eigenvalues[0].re));
    rows.push(OracleRow::new("|Im lambda|", l0.im.abs(), lin.eigenvalues[0].im.abs()));
    Ok(OracleReport::new("idm", IDM_CHECK_TOLERANCE, rows))
}
