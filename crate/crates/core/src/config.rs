//! JSON configuration with explicit physical units, converted to SI on load.

use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Axis, SpeedAxis, SweepSpec};
use crate::kinematics::{ModelParams, StepSize, VehicleState};
use crate::models::ModelId;
use crate::principles::PrincipleId;
use crate::sim::{ClampPolicy, LeaderProfile, LeaderSample, Scenario, SpeedSegment, StepCheck};

/// A physical dimension and the unit strings accepted for it.
pub trait Dimension {
    const NAME: &'static str;
    /// (unit, factor to SI).
    const UNITS: &'static [(&'static str, f64)];
}

#[derive(Debug, Clone, Copy)]
pub struct LengthDim;
#[derive(Debug, Clone, Copy)]
pub struct SpeedDim;
#[derive(Debug, Clone, Copy)]
pub struct TimeDim;
#[derive(Debug, Clone, Copy)]
pub struct AccelDim;

impl Dimension for LengthDim {
    const NAME: &'static str = "length";
    const UNITS: &'static [(&'static str, f64)] = &[("m", 1.0), ("km", 1000.0)];
}

impl Dimension for SpeedDim {
    const NAME: &'static str = "speed";
    const UNITS: &'static [(&'static str, f64)] = &[("m/s", 1.0), ("km/h", 1.0 / 3.6)];
}

impl Dimension for TimeDim {
    const NAME: &'static str = "time";
    const UNITS: &'static [(&'static str, f64)] = &[("s", 1.0), ("ms", 1e-3)];
}

impl Dimension for AccelDim {
    const NAME: &'static str = "acceleration";
    const UNITS: &'static [(&'static str, f64)] = &[("m/s^2", 1.0), ("m/s²", 1.0)];
}

/// Splits "120 km/h" or "120km/h" into its number and unit.
fn split_quantity(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let bytes = s.as_bytes();
    let mut end = 0;
    while end < bytes.len() {
        let c = bytes[end] as char;
        let exponent = (c == 'e' || c == 'E')
            && end > 0
            && bytes
                .get(end + 1)
                .is_some_and(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+');
        if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || exponent {
            end += 1;
        } else {
            break;
        }
    }
    let value = s[..end].parse().ok()?;
    Some((value, s[end..].trim()))
}

/// Converts a quantity string to SI. With `default_unit`, a bare number is
/// read in that unit.
pub fn parse_quantity<D: Dimension>(s: &str, default_unit: Option<&str>) -> Result<f64> {
    let (value, unit) =
        split_quantity(s).ok_or_else(|| Error::Config(format!("cannot read quantity '{s}'")))?;
    let unit = match (unit, default_unit) {
        ("", Some(d)) => d,
        ("", None) => {
            return Err(Error::Config(format!(
                "quantity '{s}' needs a {} unit",
                D::NAME
            )))
        }
        (u, _) => u,
    };
    let factor = D::UNITS
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| {
            let known: Vec<&str> = D::UNITS.iter().map(|(u, _)| *u).collect();
            Error::Config(format!(
                "unit '{unit}' is not a {} unit (expected one of {})",
                D::NAME,
                known.join(", ")
            ))
        })?;
    if !value.is_finite() {
        return Err(Error::Config(format!("quantity '{s}' is not finite")));
    }
    Ok(value * factor)
}

/// A value read from a unit-carrying string, stored in SI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity<D> {
    pub si: f64,
    _dim: PhantomData<D>,
}

impl<D> Quantity<D> {
    pub fn si(self) -> f64 {
        self.si
    }
}

pub type Length = Quantity<LengthDim>;
pub type Speed = Quantity<SpeedDim>;
pub type Time = Quantity<TimeDim>;
pub type Accel = Quantity<AccelDim>;

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(deserializer: De) -> std::result::Result<Self, De::Error> {
        struct QuantityVisitor<D>(PhantomData<D>);

        impl<D: Dimension> Visitor<'_> for QuantityVisitor<D> {
            type Value = Quantity<D>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a {} with its unit, such as \"{} {}\"", D::NAME, 1, D::UNITS[0].0)
            }

            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<Self::Value, E> {
                parse_quantity::<D>(s, None)
                    .map(|si| Quantity {
                        si,
                        _dim: PhantomData,
                    })
                    .map_err(E::custom)
            }
        }

        deserializer.deserialize_str(QuantityVisitor(PhantomData))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Default,
    /// Default parameters with a 120 km/h speed limit.
    Highway,
}

/// Parameter overrides on top of a preset.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default)]
    pub preset: Preset,
    pub comfort_jam_spacing: Option<Length>,
    pub minimum_jam_spacing: Option<Length>,
    pub time_gap: Option<Time>,
    pub braking_reaction_time: Option<Time>,
    pub speed_limit: Option<Speed>,
    pub max_acceleration: Option<Accel>,
    pub max_deceleration: Option<Accel>,
    /// Dimensionless IDM exponent.
    pub accel_exponent: Option<f64>,
    pub gipps_reaction_time: Option<Time>,
    pub gipps_max_acceleration: Option<Accel>,
}

impl ParamsConfig {
    pub fn resolve(&self) -> Result<ModelParams> {
        let mut p = match self.preset {
            Preset::Default => ModelParams::default(),
            Preset::Highway => ModelParams::highway(),
        };
        let set = |slot: &mut f64, q: Option<f64>| {
            if let Some(v) = q {
                *slot = v;
            }
        };
        set(&mut p.zeta, self.comfort_jam_spacing.map(Quantity::si));
        set(&mut p.zeta_min, self.minimum_jam_spacing.map(Quantity::si));
        set(&mut p.tau, self.time_gap.map(Quantity::si));
        set(&mut p.tau_brake, self.braking_reaction_time.map(Quantity::si));
        set(&mut p.mu, self.speed_limit.map(Quantity::si));
        set(&mut p.alpha, self.max_acceleration.map(Quantity::si));
        set(&mut p.beta, self.max_deceleration.map(Quantity::si));
        set(&mut p.delta, self.accel_exponent);
        set(&mut p.tau1, self.gipps_reaction_time.map(Quantity::si));
        set(&mut p.alpha_gipps, self.gipps_max_acceleration.map(Quantity::si));
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub t_start: Time,
    pub v: Speed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub t: Time,
    pub x: Length,
    pub v: Speed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LeaderConfig {
    Stationary { x: Length },
    PiecewiseConstantSpeed { x0: Length, segments: Vec<SegmentConfig> },
    Sampled { samples: Vec<SampleConfig> },
}

impl LeaderConfig {
    pub fn resolve(&self) -> Result<LeaderProfile> {
        let profile = match self {
            LeaderConfig::Stationary { x } => LeaderProfile::Stationary { x: x.si },
            LeaderConfig::PiecewiseConstantSpeed { x0, segments } => {
                LeaderProfile::PiecewiseConstantSpeed {
                    x0: x0.si,
                    segments: segments
                        .iter()
                        .map(|s| SpeedSegment {
                            t_start: s.t_start.si,
                            v: s.v.si,
                        })
                        .collect(),
                }
            }
            LeaderConfig::Sampled { samples } => LeaderProfile::Sampled {
                samples: samples
                    .iter()
                    .map(|s| LeaderSample {
                        t: s.t.si,
                        x: s.x.si,
                        v: s.v.si,
                    })
                    .collect(),
            },
        };
        profile.validate()?;
        Ok(profile)
    }
}

fn default_leader() -> LeaderConfig {
    LeaderConfig::Stationary {
        x: Quantity {
            si: 0.0,
            _dim: PhantomData,
        },
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Follower speed.
    pub v0: Speed,
    /// Spacing to the leader.
    pub z0: Length,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: Option<ModelId>,
    #[serde(default)]
    pub params: ParamsConfig,
    pub dt: Option<Time>,
    pub t_end: Option<Time>,
    pub initial: InitialConfig,
    #[serde(default = "default_leader")]
    pub leader: LeaderConfig,
    #[serde(default)]
    pub clamp: ClampPolicy,
    #[serde(default)]
    pub step_check: StepCheck,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub model: Option<ModelId>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

impl ScenarioConfig {
    pub fn resolve(&self, o: Overrides) -> Result<Scenario> {
        let model = o
            .model
            .or(self.model)
            .ok_or_else(|| Error::Config("no model given".into()))?;
        let eps = o
            .dt
            .or(self.dt.map(Quantity::si))
            .map(StepSize::new)
            .transpose()
            .map_err(|e| Error::Config(e.to_string()))?
            .unwrap_or_default();
        let t_end = o
            .t_end
            .or(self.t_end.map(Quantity::si))
            .ok_or_else(|| Error::Config("no t_end given".into()))?;
        let leader = self.leader.resolve()?;
        let sc = Scenario {
            model,
            params: self.params.resolve()?,
            eps,
            t_end,
            follower0: VehicleState::new(leader.initial_x() - self.initial.z0.si, self.initial.v0.si),
            leader,
            clamp: self.clamp,
            step_check: self.step_check,
        };
        match sc.validate() {
            Err(e @ Error::StepTooLarge { .. }) => Err(e),
            Err(e) => Err(Error::Config(e.to_string())),
            Ok(()) => Ok(sc),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpeedAxisConfig {
    Absolute { min: Speed, max: Speed, count: usize },
    /// Fractions of min(μ, (z0 − ζ)/τ).
    EquilibriumFraction { min: f64, max: f64, count: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacingAxisConfig {
    pub min: Length,
    pub max: Length,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelId,
    #[serde(default)]
    pub params: ParamsConfig,
    pub dt: Option<Time>,
    pub t_end: Time,
    pub v0: SpeedAxisConfig,
    pub z0: SpacingAxisConfig,
    #[serde(default = "default_leader")]
    pub leader: LeaderConfig,
    /// Principle names or codes; all of them when absent.
    pub principles: Option<Vec<String>>,
    #[serde(default)]
    pub clamp: ClampPolicy,
}

impl SweepConfig {
    pub fn resolve(&self) -> Result<SweepSpec> {
        let v0 = match self.v0 {
            SpeedAxisConfig::Absolute { min, max, count } => SpeedAxis::Absolute {
                min: min.si,
                max: max.si,
                count,
            },
            SpeedAxisConfig::EquilibriumFraction { min, max, count } => {
                SpeedAxis::EquilibriumFraction { min, max, count }
            }
        };
        let principles = match &self.principles {
            None => PrincipleId::ALL.to_vec(),
            Some(names) => names
                .iter()
                .map(|n| n.parse::<PrincipleId>().map_err(|e| Error::Config(e.to_string())))
                .collect::<Result<_>>()?,
        };
        let spec = SweepSpec {
            model: self.model,
            params: self.params.resolve()?,
            eps: self
                .dt
                .map(|d| StepSize::new(d.si))
                .transpose()
                .map_err(|e| Error::Config(e.to_string()))?
                .unwrap_or_default(),
            v0,
            z0: Axis {
                min: self.z0.min.si,
                max: self.z0.max.si,
                count: self.z0.count,
            },
            leader: self.leader.resolve()?,
            t_end: self.t_end.si,
            principles,
            clamp: self.clamp,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities_convert_to_si() {
        assert!((parse_quantity::<SpeedDim>("120 km/h", None).unwrap() - 33.333333333333336).abs() < 1e-12);
        assert_eq!(parse_quantity::<SpeedDim>("30 m/s", None).unwrap(), 30.0);
        assert_eq!(parse_quantity::<LengthDim>("2.44 km", None).unwrap(), 2440.0);
        assert_eq!(parse_quantity::<LengthDim>("7m", None).unwrap(), 7.0);
        assert_eq!(parse_quantity::<TimeDim>("1e-3 s", None).unwrap(), 1e-3);
        assert_eq!(parse_quantity::<AccelDim>("1.67 m/s²", None).unwrap(), 1.67);
        assert_eq!(parse_quantity::<AccelDim>("-2 m/s^2", None).unwrap(), -2.0);
        assert_eq!(parse_quantity::<TimeDim>("0.5", Some("s")).unwrap(), 0.5);
    }

    #[test]
    fn wrong_or_missing_units_are_rejected() {
        assert!(parse_quantity::<SpeedDim>("30", None).is_err());
        assert!(parse_quantity::<SpeedDim>("30 m", None).is_err());
        assert!(parse_quantity::<LengthDim>("km", None).is_err());
        assert!(parse_quantity::<TimeDim>("3 fortnights", None).is_err());
    }

    #[test]
    fn scenario_config_round_trip() {
        let text = r#"{
            "model": "ba-newell",
            "params": { "preset": "highway", "max_deceleration": "2 m/s^2" },
            "dt": "0.01 s",
            "t_end": "30 s",
            "initial": { "v0": "108 km/h", "z0": "400 m" }
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(text).unwrap();
        let sc = cfg.resolve(Overrides::default()).unwrap();
        assert_eq!(sc.model, ModelId::BANewell);
        assert_eq!(sc.params.beta, 2.0);
        assert!((sc.params.mu - 120.0 / 3.6).abs() < 1e-12);
        assert!((sc.follower0.v - 30.0).abs() < 1e-12);
        assert_eq!(sc.follower0.x, -400.0);
        let o = Overrides {
            model: Some(ModelId::Newell),
            dt: Some(0.1),
            t_end: Some(5.0),
        };
        let sc = cfg.resolve(o).unwrap();
        assert_eq!((sc.model, sc.eps.get(), sc.t_end), (ModelId::Newell, 0.1, 5.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{ "t_end": "1 s", "initial": { "v0": "0 m/s", "z0": "7 m" }, "colour": "red" }"#;
        assert!(serde_json::from_str::<ScenarioConfig>(text).is_err());
        let text = r#"{ "t_end": "1 s", "initial": { "v0": "0 m/s", "z0": "7 m", "a0": "1 m/s^2" } }"#;
        assert!(serde_json::from_str::<ScenarioConfig>(text).is_err());
        let text = r#"{ "t_end": "1 s", "initial": { "v0": 3, "z0": "7 m" } }"#;
        assert!(serde_json::from_str::<ScenarioConfig>(text).is_err());
    }

    #[test]
    fn sweep_config_resolves() {
        let text = r#"{
            "model": "newell",
            "t_end": "20 s",
            "dt": "0.01 s",
            "v0": { "kind": "equilibrium-fraction", "min": 0, "max": 1, "count": 3 },
            "z0": { "min": "7 m", "max": "100 m", "count": 4 },
            "principles": ["CJS", "forward-traveling"]
        }"#;
        let spec = serde_json::from_str::<SweepConfig>(text).unwrap().resolve().unwrap();
        assert_eq!(spec.principles, vec![PrincipleId::ComfortJamSpacing, PrincipleId::ForwardTraveling]);
        assert_eq!(spec.z0.count, 4);
    }
}
