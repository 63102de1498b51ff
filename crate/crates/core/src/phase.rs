//! Phase classification on the (v, z) plane, vector fields under a
//! stationary leader, and steady-state fundamental diagrams.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ModelParams, PairState, StepSize, VehicleState};
use crate::models::{
    acceleration_bound, equilibrium_speed, gipps_full_accel_speed, gipps_full_discriminant,
    gipps_simplified_accel_speed, gipps_simplified_discriminant, model_next_unchecked, ModelId,
};
use crate::sim::{run_platoon, LeaderProfile, SpeedSegment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseLabel {
    BoundedAcceleration,
    EquilibriumCruising,
    EquilibriumAcceleration,
    EquilibriumDeceleration,
    BoundedDeceleration,
    GippsAccelBranch,
    GippsSafeBranch,
    Unclassified,
}

impl PhaseLabel {
    pub const ALL: [PhaseLabel; 8] = [
        PhaseLabel::BoundedAcceleration,
        PhaseLabel::EquilibriumCruising,
        PhaseLabel::EquilibriumAcceleration,
        PhaseLabel::EquilibriumDeceleration,
        PhaseLabel::BoundedDeceleration,
        PhaseLabel::GippsAccelBranch,
        PhaseLabel::GippsSafeBranch,
        PhaseLabel::Unclassified,
    ];

    /// Stable integer code used in phase-map CSVs.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseLabel::BoundedAcceleration => "bounded-acceleration",
            PhaseLabel::EquilibriumCruising => "equilibrium-cruising",
            PhaseLabel::EquilibriumAcceleration => "equilibrium-acceleration",
            PhaseLabel::EquilibriumDeceleration => "equilibrium-deceleration",
            PhaseLabel::BoundedDeceleration => "bounded-deceleration",
            PhaseLabel::GippsAccelBranch => "gipps-accel-branch",
            PhaseLabel::GippsSafeBranch => "gipps-safe-branch",
            PhaseLabel::Unclassified => "unclassified",
        }
    }

    /// Name as written in CSV columns; unclassified states are left blank.
    pub fn csv_name(self) -> &'static str {
        match self {
            PhaseLabel::Unclassified => "",
            other => other.name(),
        }
    }

    /// Labels a model can produce.
    pub fn labels_for(id: ModelId) -> &'static [PhaseLabel] {
        use PhaseLabel::*;
        match id {
            ModelId::Newell => &[
                EquilibriumCruising,
                EquilibriumAcceleration,
                EquilibriumDeceleration,
            ],
            ModelId::BANewell => &[
                BoundedAcceleration,
                EquilibriumCruising,
                EquilibriumAcceleration,
                EquilibriumDeceleration,
            ],
            ModelId::BDANewell => &[
                BoundedAcceleration,
                EquilibriumCruising,
                EquilibriumAcceleration,
                EquilibriumDeceleration,
                BoundedDeceleration,
            ],
            ModelId::GippsFull | ModelId::GippsSimplified => &[GippsAccelBranch, GippsSafeBranch],
            ModelId::IDM => &[Unclassified],
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a state sits relative to the spacing and speed principles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionLabel {
    Feasible,
    GreyComfortViolation,
    BlackMinimumViolation,
    InfeasibleNegativeSpeed,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 4] = [
        RegionLabel::Feasible,
        RegionLabel::GreyComfortViolation,
        RegionLabel::BlackMinimumViolation,
        RegionLabel::InfeasibleNegativeSpeed,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionLabel::Feasible => "feasible",
            RegionLabel::GreyComfortViolation => "grey-comfort-violation",
            RegionLabel::BlackMinimumViolation => "black-minimum-violation",
            RegionLabel::InfeasibleNegativeSpeed => "infeasible-negative-speed",
        }
    }
}

/// Spacing violations take precedence over a negative speed.
pub fn region(v: f64, z: f64, params: &ModelParams) -> RegionLabel {
    if z < params.zeta_min {
        RegionLabel::BlackMinimumViolation
    } else if z < params.zeta {
        RegionLabel::GreyComfortViolation
    } else if v < 0.0 {
        RegionLabel::InfeasibleNegativeSpeed
    } else {
        RegionLabel::Feasible
    }
}

/// ζ_c = μτ + ζ, where the free-flow and congested equilibria meet.
pub fn critical_spacing(params: &ModelParams) -> f64 {
    params.mu * params.tau + params.zeta
}

/// Region membership tests for the bounded Newell variants, written on the
/// (v, z) plane with the line z = τv + ζ expressed as v = (z − ζ)/τ.
///
/// The ε-dependent boundaries are evaluated as rates, (v_* − v)/ε against
/// α(1 − v/μ) or −β, the same expressions the models compare, so a label
/// never disagrees with the branch the model takes because of rounding.
struct NewellRegions {
    v: f64,
    mu: f64,
    lin: f64,
    v_star: f64,
    bound: f64,
    eq_rate: f64,
    beta: f64,
}

impl NewellRegions {
    fn new(p: &PairState, params: &ModelParams, eps: StepSize) -> Self {
        let v = p.follower.v;
        let v_star = equilibrium_speed(p, params);
        NewellRegions {
            v,
            mu: params.mu,
            lin: p.clearance / params.tau,
            v_star,
            bound: acceleration_bound(v, params),
            eq_rate: (v_star - v) / eps.get(),
            beta: params.beta,
        }
    }

    /// v ≤ μ − εα(1 − v/μ) and z ≥ τv + ζ + ετα(1 − v/μ).
    fn bounded_acceleration(&self) -> bool {
        self.bound <= self.eq_rate
    }

    /// v = μ with z ≥ ζ_c, or v ≤ μ on the line z = τv + ζ.
    fn equilibrium_cruising(&self) -> bool {
        (self.v == self.mu && self.lin >= self.mu) || (self.v <= self.mu && self.v == self.lin)
    }

    /// Below both equilibrium branches but too close for the full bound.
    fn equilibrium_acceleration(&self) -> bool {
        self.v < self.mu && self.v < self.lin && !self.bounded_acceleration()
    }

    /// v > μ with z ≥ ζ_c, or z < τv + ζ with z ≤ ζ_c.
    fn equilibrium_deceleration(&self) -> bool {
        (self.v > self.mu && self.lin >= self.mu) || (self.v > self.lin && self.lin <= self.mu)
    }

    /// v_* < v < v_* + εβ.
    fn above_equilibrium_within_bound(&self) -> bool {
        self.v > self.v_star && self.eq_rate > -self.beta
    }

    /// v ≥ v_* + εβ.
    fn bounded_deceleration(&self) -> bool {
        self.eq_rate <= -self.beta
    }
}

/// Raw membership of every region of a model, before tie-breaking.
///
/// Overlaps only happen on measure-zero boundaries; `classify` resolves them
/// with the priority cruising > bounded acceleration > bounded deceleration >
/// equilibrium acceleration > equilibrium deceleration.
pub fn memberships(
    id: ModelId,
    p: &PairState,
    params: &ModelParams,
    eps: StepSize,
) -> Vec<PhaseLabel> {
    use PhaseLabel::*;
    let r = NewellRegions::new(p, params, eps);
    let mut out = Vec::new();
    match id {
        ModelId::Newell => {
            if r.v == r.v_star {
                out.push(EquilibriumCruising);
            }
            if r.v < r.v_star {
                out.push(EquilibriumAcceleration);
            }
            if r.v > r.v_star {
                out.push(EquilibriumDeceleration);
            }
        }
        ModelId::BANewell => {
            if r.equilibrium_cruising() {
                out.push(EquilibriumCruising);
            }
            if r.bounded_acceleration() {
                out.push(BoundedAcceleration);
            }
            if r.equilibrium_acceleration() {
                out.push(EquilibriumAcceleration);
            }
            if r.equilibrium_deceleration() {
                out.push(EquilibriumDeceleration);
            }
        }
        ModelId::BDANewell => {
            if r.equilibrium_cruising() {
                out.push(EquilibriumCruising);
            }
            if r.bounded_acceleration() {
                out.push(BoundedAcceleration);
            }
            if r.bounded_deceleration() {
                out.push(BoundedDeceleration);
            }
            if r.equilibrium_acceleration() {
                out.push(EquilibriumAcceleration);
            }
            if r.above_equilibrium_within_bound() {
                out.push(EquilibriumDeceleration);
            }
        }
        ModelId::GippsFull | ModelId::GippsSimplified => {
            if let Some(label) = gipps_branch(id, p, params, eps) {
                out.push(label);
            }
        }
        ModelId::IDM => out.push(Unclassified),
    }
    out
}

fn gipps_branch(
    id: ModelId,
    p: &PairState,
    params: &ModelParams,
    eps: StepSize,
) -> Option<PhaseLabel> {
    let (disc, tau_safe, accel) = if id == ModelId::GippsFull {
        (
            gipps_full_discriminant(p, params),
            params.tau1,
            gipps_full_accel_speed(p.follower.v, params, eps).ok()?,
        )
    } else {
        (
            gipps_simplified_discriminant(p, params),
            params.tau_brake,
            gipps_simplified_accel_speed(p.follower.v, params, eps),
        )
    };
    if disc < 0.0 || disc.is_nan() {
        return None;
    }
    let safe = -params.beta * tau_safe + disc.sqrt();
    Some(if accel <= safe {
        PhaseLabel::GippsAccelBranch
    } else {
        PhaseLabel::GippsSafeBranch
    })
}

/// The unique phase of a state; IDM and ill-defined Gipps states are unclassified.
pub fn classify(id: ModelId, p: &PairState, params: &ModelParams, eps: StepSize) -> PhaseLabel {
    const PRIORITY: [PhaseLabel; 7] = [
        PhaseLabel::EquilibriumCruising,
        PhaseLabel::BoundedAcceleration,
        PhaseLabel::BoundedDeceleration,
        PhaseLabel::EquilibriumAcceleration,
        PhaseLabel::EquilibriumDeceleration,
        PhaseLabel::GippsAccelBranch,
        PhaseLabel::GippsSafeBranch,
    ];
    let found = memberships(id, p, params, eps);
    PRIORITY
        .into_iter()
        .find(|l| found.contains(l))
        .unwrap_or(PhaseLabel::Unclassified)
}

/// Inclusive grid on the (v, z) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub v_count: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub z_count: usize,
}

impl PlaneGrid {
    pub fn validate(&self) -> Result<()> {
        if self.v_count == 0 || self.z_count == 0 {
            return Err(Error::InvalidArgument("grid counts must be at least 1".into()));
        }
        if self.v_max < self.v_min || self.z_max < self.z_min {
            return Err(Error::InvalidArgument("grid ranges must be non-empty".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let vs = linspace(self.v_min, self.v_max, self.v_count);
        let zs = linspace(self.z_min, self.z_max, self.z_count);
        zs.into_iter()
            .flat_map(move |z| vs.clone().into_iter().map(move |v| (v, z)))
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub v: f64,
    pub z: f64,
    /// None where the model is undefined (IDM at z ≤ ζ′, Gipps with negative radicand).
    pub dvdt: Option<f64>,
    pub dzdt: f64,
    pub phase: PhaseLabel,
}

/// (dv/dt, dz/dt) with a stationary leader, using the discrete acceleration at `eps`.
pub fn vector_field(
    id: ModelId,
    params: &ModelParams,
    grid: &PlaneGrid,
    eps: StepSize,
) -> Result<Vec<FieldSample>> {
    grid.validate()?;
    Ok(grid
        .points()
        .map(|(v, z)| {
            let p = PairState::slvp(v, z, params.zeta);
            let dvdt = model_next_unchecked(id, &p, params, eps).ok().map(|o| o.a);
            FieldSample {
                v,
                z,
                dvdt,
                dzdt: -v,
                phase: classify(id, &p, params, eps),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub v: f64,
    pub z: f64,
    pub phase: PhaseLabel,
    pub region: RegionLabel,
}

pub fn phase_map(
    id: ModelId,
    params: &ModelParams,
    grid: &PlaneGrid,
    eps: StepSize,
) -> Result<Vec<PhaseCell>> {
    grid.validate()?;
    Ok(grid
        .points()
        .map(|(v, z)| PhaseCell {
            v,
            z,
            phase: classify(id, &PairState::slvp(v, z, params.zeta), params, eps),
            region: region(v, z, params),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FDPoint {
    /// Density (1/m).
    pub k: f64,
    /// Speed (m/s).
    pub v: f64,
    /// Flow (1/s).
    pub q: f64,
}

/// Headway-like time constant of the congested branch: τ for the Newell
/// family, τ′ for Gipps.
fn congested_time(id: ModelId, params: &ModelParams) -> Result<f64> {
    match id {
        ModelId::Newell | ModelId::BANewell | ModelId::BDANewell => Ok(params.tau),
        ModelId::GippsFull | ModelId::GippsSimplified => Ok(params.tau_brake),
        ModelId::IDM => Err(Error::Unsupported(
            "no closed-form fundamental diagram for idm".into(),
        )),
    }
}

fn check_density(k: f64, params: &ModelParams) -> Result<()> {
    let kappa = params.jam_density();
    if !(k > 0.0 && k <= kappa) {
        return Err(Error::InvalidArgument(format!(
            "density {k} outside (0, {kappa}]"
        )));
    }
    Ok(())
}

/// Steady-state v = min(μ, (1/k − 1/κ)/T) with T = τ or τ′, and q = kv.
pub fn fundamental_diagram(
    id: ModelId,
    params: &ModelParams,
    densities: &[f64],
) -> Result<Vec<FDPoint>> {
    let t = congested_time(id, params)?;
    densities
        .iter()
        .map(|&k| {
            check_density(k, params)?;
            let v = params.mu.min((1.0 / k - params.zeta) / t);
            Ok(FDPoint { k, v, q: k * v })
        })
        .collect()
}

/// Magnitude of the congested-branch slope of q(k): 1/(τκ) or 1/(τ′κ).
pub fn congested_wave_speed(id: ModelId, params: &ModelParams) -> Result<f64> {
    Ok(1.0 / (congested_time(id, params)? * params.jam_density()))
}

/// Step size, horizon, platoon length and settling window used by
/// [`fd_from_simulation`].
pub const FD_SIM_EPS: f64 = 0.01;
pub const FD_SIM_T_END: f64 = 900.0;
pub const FD_SIM_VEHICLES: usize = 3;
pub const FD_SIM_WINDOW: f64 = 10.0;
pub const FD_SIM_STEADY_TOL: f64 = 1e-4;

/// Measures the steady speed of a platoon started from rest at spacing 1/k
/// behind a leader driving at the analytic speed for k.
pub fn fd_from_simulation(id: ModelId, params: &ModelParams, k: f64) -> Result<FDPoint> {
    check_density(k, params)?;
    let leader_speed = match congested_time(id, params) {
        Ok(t) => params.mu.min((1.0 / k - params.zeta) / t),
        // without an analytic target the leader cruises at the speed limit
        Err(_) => params.mu,
    };
    let spacing = 1.0 / k;
    let initial: Vec<VehicleState> = (1..=FD_SIM_VEHICLES)
        .map(|i| VehicleState::new(-(i as f64) * spacing, 0.0))
        .collect();
    let lead = LeaderProfile::PiecewiseConstantSpeed {
        x0: 0.0,
        segments: vec![SpeedSegment {
            t_start: 0.0,
            v: leader_speed,
        }],
    };
    let eps = StepSize::new(FD_SIM_EPS)?;
    let trajs = run_platoon(id, params, eps, &initial, &lead, FD_SIM_T_END)?;
    let last = trajs.last().expect("platoon is non-empty");
    if let Some(err) = &last.terminal_error {
        return Err(Error::NoSteadyState(format!(
            "simulation stopped at t={}: {}",
            err.t, err.message
        )));
    }
    let end = last.steps.last().expect("trajectory has steps").state;
    let window_start = end.t - FD_SIM_WINDOW;
    let drift = last
        .steps
        .iter()
        .filter(|s| s.state.t >= window_start)
        .map(|s| (s.state.follower.v - end.follower.v).abs())
        .fold(0.0, f64::max);
    if drift > FD_SIM_STEADY_TOL {
        return Err(Error::NoSteadyState(format!(
            "speed still varies by {drift} m/s over the final {FD_SIM_WINDOW} s"
        )));
    }
    let v = end.follower.v;
    Ok(FDPoint { k, v, q: k * v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::model_next;

    fn eps(e: f64) -> StepSize {
        StepSize::new(e).unwrap()
    }

    fn slvp(v: f64, z: f64) -> PairState {
        PairState::slvp(v, z, 7.0)
    }

    #[test]
    fn classify_examples() {
        let p = ModelParams::default();
        let e = eps(0.001);
        assert_eq!(
            classify(ModelId::BANewell, &slvp(30.0, 55.0), &p, e),
            PhaseLabel::EquilibriumCruising
        );
        assert_eq!(
            classify(ModelId::BANewell, &slvp(0.0, 400.0), &p, e),
            PhaseLabel::BoundedAcceleration
        );
        let p2 = ModelParams { beta: 2.0, ..p };
        assert_eq!(
            classify(ModelId::BDANewell, &slvp(30.0, 30.0), &p2, eps(1e-4)),
            PhaseLabel::BoundedDeceleration
        );
        assert_eq!(
            classify(ModelId::IDM, &slvp(3.0, 30.0), &p, e),
            PhaseLabel::Unclassified
        );
        assert_eq!(
            classify(ModelId::GippsSimplified, &slvp(0.0, 6.0), &p, e),
            PhaseLabel::Unclassified
        );
    }

    #[test]
    fn printed_equilibrium_acceleration_clause_leaves_a_gap() {
        // A state just below the line z = τv + ζ + ετα(1 − v/μ) with v + εα(1 − v/μ) < μ
        // satisfies neither "v > μ − εα(1−v/μ)" nor "z ≥ τv + ζ + ετα(1−v/μ)", so the
        // literal disjunction would leave it unlabeled. It must be equilibrium acceleration.
        let p = ModelParams::default();
        let e = eps(0.1);
        let v = 10.0;
        let g = acceleration_bound(v, &p);
        let z = p.tau * v + p.zeta + 0.5 * e.get() * p.tau * g;
        let s = slvp(v, z);
        let literal = v > p.mu - e.get() * g || z >= p.tau * v + p.zeta + e.get() * p.tau * g;
        assert!(!literal);
        assert_eq!(
            classify(ModelId::BANewell, &s, &p, e),
            PhaseLabel::EquilibriumAcceleration
        );
        let out = model_next(ModelId::BANewell, &s, &p, e).unwrap();
        assert!(out.a > 0.0 && out.a < g);
    }

    #[test]
    fn region_labels() {
        let p = ModelParams::default();
        assert_eq!(region(0.0, 6.0, &p), RegionLabel::GreyComfortViolation);
        assert_eq!(region(0.0, 5.0, &p), RegionLabel::GreyComfortViolation);
        assert_eq!(region(0.0, 4.9, &p), RegionLabel::BlackMinimumViolation);
        assert_eq!(region(-0.1, 10.0, &p), RegionLabel::InfeasibleNegativeSpeed);
        assert_eq!(region(0.0, 7.0, &p), RegionLabel::Feasible);
    }

    #[test]
    fn critical_spacing_examples() {
        let p = ModelParams::default();
        assert!((critical_spacing(&p) - 55.0).abs() < 1e-12);
        let no_gap = ModelParams { tau: 0.0, ..p };
        assert_eq!(critical_spacing(&no_gap), 7.0);
        let stopped = ModelParams { mu: 0.0, ..p };
        assert_eq!(critical_spacing(&stopped), 7.0);
    }

    #[test]
    fn vector_field_examples() {
        let p = ModelParams::default();
        let e = eps(0.001);
        let at_rest = PlaneGrid {
            v_min: 0.0,
            v_max: 0.0,
            v_count: 1,
            z_min: 7.0,
            z_max: 7.0,
            z_count: 1,
        };
        for id in ModelId::ALL {
            let f = vector_field(id, &p, &at_rest, e).unwrap();
            assert_eq!(f[0].dvdt, Some(0.0), "{id}");
            assert_eq!(f[0].dzdt, 0.0);
        }

        let braking = PlaneGrid {
            v_min: 25.0,
            v_max: 25.0,
            v_count: 1,
            z_min: 20.0,
            z_max: 20.0,
            z_count: 1,
        };
        let f = vector_field(ModelId::BDANewell, &p, &braking, e).unwrap()[0];
        assert_eq!(f.phase, PhaseLabel::BoundedDeceleration);
        assert_eq!((f.dvdt, f.dzdt), (Some(-p.beta), -25.0));

        // below ζ − βτ′²/2 the simplified Gipps radicand is negative
        let z = p.zeta - p.beta * p.tau_brake * p.tau_brake / 2.0 - 0.01;
        let ill = PlaneGrid {
            v_min: 0.0,
            v_max: 0.0,
            v_count: 1,
            z_min: z,
            z_max: z,
            z_count: 1,
        };
        let f = vector_field(ModelId::GippsSimplified, &p, &ill, e).unwrap()[0];
        assert_eq!(f.dvdt, None);
    }

    #[test]
    fn fundamental_diagram_examples() {
        let p = ModelParams::default();
        let kappa = 1.0 / 7.0;
        let jam = fundamental_diagram(ModelId::Newell, &p, &[kappa]).unwrap()[0];
        assert_eq!((jam.v, jam.q), (0.0, 0.0));
        let crit = fundamental_diagram(ModelId::Newell, &p, &[1.0 / 55.0]).unwrap()[0];
        assert!((crit.v - 30.0).abs() < 1e-12);
        assert!((crit.q - 30.0 / 55.0).abs() < 1e-12);
        assert!((congested_wave_speed(ModelId::GippsSimplified, &p).unwrap() - 7.0).abs() < 1e-12);
        assert!((congested_wave_speed(ModelId::Newell, &p).unwrap() - 4.375).abs() < 1e-12);
        assert!(matches!(
            fundamental_diagram(ModelId::IDM, &p, &[0.05]),
            Err(Error::Unsupported(_))
        ));
        assert!(fundamental_diagram(ModelId::Newell, &p, &[0.0]).is_err());
        assert!(fundamental_diagram(ModelId::Newell, &p, &[0.2]).is_err());
    }

    #[test]
    fn fd_from_simulation_examples() {
        let p = ModelParams::default();
        let jam = fd_from_simulation(ModelId::Newell, &p, 1.0 / 7.0).unwrap();
        assert!(jam.v.abs() < 1e-9);
        let newell = fd_from_simulation(ModelId::Newell, &p, 0.05).unwrap();
        assert!((newell.v - 8.125).abs() < 0.01, "{}", newell.v);
        let gipps = fd_from_simulation(ModelId::GippsSimplified, &p, 0.05).unwrap();
        assert!((gipps.v - 13.0).abs() < 0.01, "{}", gipps.v);
    }

    #[test]
    fn fd_has_one_breakpoint() {
        let p = ModelParams::default();
        for (id, brk) in [
            (ModelId::Newell, 1.0 / critical_spacing(&p)),
            (ModelId::GippsSimplified, 1.0 / (p.mu * p.tau_brake + p.zeta)),
        ] {
            let ks = linspace(0.002, p.jam_density(), 400);
            let pts = fundamental_diagram(id, &p, &ks).unwrap();
            let slopes: Vec<f64> = pts
                .windows(2)
                .filter(|w| (w[0].k - brk) * (w[1].k - brk) > 0.0)
                .map(|w| (w[1].q - w[0].q) / (w[1].k - w[0].k))
                .collect();
            let free = slopes.iter().filter(|s| (**s - p.mu).abs() < 1e-6).count();
            let wave = congested_wave_speed(id, &p).unwrap();
            let congested = slopes.iter().filter(|s| (**s + wave).abs() < 1e-6).count();
            assert_eq!(free + congested, slopes.len(), "{id}");
            assert!(free > 0 && congested > 0);
        }
    }
}
