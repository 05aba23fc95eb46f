//! Scenario configuration file.
//!
//! The file is TOML. Every table and key is optional; omitted values fall
//! back to the defaults below, some of which depend on the scenario kind.
//! Unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlGains, ControlLimits, IdmParams, MobilParams};
use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Highway,
    Merge,
    Intersection,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Highway => "highway",
            ScenarioKind::Merge => "merge",
            ScenarioKind::Intersection => "intersection",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "highway" => Ok(ScenarioKind::Highway),
            "merge" => Ok(ScenarioKind::Merge),
            "intersection" => Ok(ScenarioKind::Intersection),
            other => Err(ConfigError::UnknownScenario(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: Option<ScenarioKind>,
    pub seed: u64,
    /// Simulation step length in seconds.
    pub dt: f64,
    pub traffic: TrafficConfig,
    pub geometry: GeometryConfig,
    pub vehicle: VehicleConfig,
    pub idm: IdmConfig,
    pub mobil: MobilParams,
    pub control: ControlConfig,
    pub perception: PerceptionConfig,
    pub decision: DecisionConfig,
    pub memory: MemoryConfig,
    pub harness: HarnessConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: None,
            seed: 0,
            dt: 0.1,
            traffic: TrafficConfig::default(),
            geometry: GeometryConfig::default(),
            vehicle: VehicleConfig::default(),
            idm: IdmConfig::default(),
            mobil: MobilParams::default(),
            control: ControlConfig::default(),
            perception: PerceptionConfig::default(),
            decision: DecisionConfig::default(),
            memory: MemoryConfig::default(),
            harness: HarnessConfig::default(),
        }
    }
}

/// Vehicle counts and spawn ranges. Unset values use per-scenario defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub cavs: Option<usize>,
    pub hdvs: Option<usize>,
    /// Spawn window as arc length along the spawn lane (m).
    pub spawn_min: Option<f64>,
    pub spawn_max: Option<f64>,
    pub speed_min: Option<f64>,
    pub speed_max: Option<f64>,
    /// Minimum bumper-to-bumper gap between vehicles sharing a spawn lane (m).
    pub min_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub lane_width: f64,
    pub highway_lanes: usize,
    pub highway_length: f64,
    pub merge_length: f64,
    pub merge_junction_x: f64,
    pub ramp_offset: f64,
    pub leg_length: f64,
    /// Distance from the intersection center to where approach lanes end.
    pub box_half_size: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            lane_width: 4.0,
            highway_lanes: 4,
            highway_length: 520.0,
            merge_length: 520.0,
            merge_junction_x: 230.0,
            ramp_offset: 12.0,
            leg_length: 100.0,
            box_half_size: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub length: f64,
    pub width: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self { length: 5.0, width: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmConfig {
    pub max_accel: f64,
    pub comfort_decel: f64,
    /// Per-scenario default when unset.
    pub desired_speed: Option<f64>,
    pub exponent: f64,
    pub min_gap: f64,
    pub time_headway: f64,
}

impl Default for IdmConfig {
    fn default() -> Self {
        Self {
            max_accel: 3.0,
            comfort_decel: 3.0,
            desired_speed: None,
            exponent: 4.0,
            min_gap: 2.0,
            time_headway: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub kp: f64,
    pub kh: f64,
    pub v_floor: f64,
    pub brake_cap: f64,
    /// Pure-pursuit lookahead: `max(min, time * v)` meters.
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    /// Lateral acceleration bound that caps speed on curves (m/s²).
    pub lateral_accel: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            kp: 1.0,
            kh: 2.0,
            v_floor: 0.5,
            brake_cap: 5.0,
            lookahead_min: 5.0,
            lookahead_time: 0.8,
            lateral_accel: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub range: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self { range: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    /// Safety-assessment horizon (s).
    pub horizon: f64,
    /// Speed change per speed-up / slow-down decision (m/s).
    pub speed_step: f64,
    /// Per-scenario default when unset.
    pub speed_limit: Option<f64>,
    /// Time between two CAV decisions (s); references are held in between.
    pub decision_period: f64,
    /// Maximum prompt size in bytes.
    pub prompt_budget: usize,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            horizon: 3.0,
            speed_step: 2.0,
            speed_limit: None,
            decision_period: 1.0,
            prompt_budget: 8000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub shots: usize,
    pub dim: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self { shots: 2, dim: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub step_budget: u64,
    pub pet_radius: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self { step_budget: 600, pet_radius: 5.0 }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    /// Resolves scenario-dependent defaults and validates parameter ranges.
    pub fn resolve(&self, kind: ScenarioKind) -> Result<ResolvedConfig, ConfigError> {
        let d = TrafficDefaults::for_kind(kind);
        let t = &self.traffic;
        let traffic = ResolvedTraffic {
            cavs: t.cavs.unwrap_or(d.cavs),
            hdvs: t.hdvs.unwrap_or(d.hdvs),
            spawn_min: t.spawn_min.unwrap_or(d.spawn_min),
            spawn_max: t.spawn_max.unwrap_or(d.spawn_max),
            speed_min: t.speed_min.unwrap_or(d.speed_min),
            speed_max: t.speed_max.unwrap_or(d.speed_max),
            min_gap: t.min_gap.unwrap_or(d.min_gap),
        };
        let idm = IdmParams {
            max_accel: self.idm.max_accel,
            comfort_decel: self.idm.comfort_decel,
            desired_speed: self.idm.desired_speed.unwrap_or(d.desired_speed),
            exponent: self.idm.exponent,
            min_gap: self.idm.min_gap,
            time_headway: self.idm.time_headway,
        };
        let speed_limit = self.decision.speed_limit.unwrap_or(d.speed_limit);
        let resolved = ResolvedConfig {
            kind,
            seed: self.seed,
            dt: self.dt,
            traffic,
            geometry: self.geometry.clone(),
            vehicle: self.vehicle.clone(),
            idm,
            mobil: self.mobil.clone(),
            gains: ControlGains { kp: self.control.kp, kh: self.control.kh },
            limits: ControlLimits {
                max_accel: self.idm.max_accel,
                brake_cap: self.control.brake_cap,
                v_floor: self.control.v_floor,
            },
            lookahead_min: self.control.lookahead_min,
            lookahead_time: self.control.lookahead_time,
            lateral_accel: self.control.lateral_accel,
            perception_range: self.perception.range,
            horizon: self.decision.horizon,
            speed_step: self.decision.speed_step,
            speed_limit,
            decision_period: self.decision.decision_period,
            prompt_budget: self.decision.prompt_budget,
            shots: self.memory.shots,
            memory_dim: self.memory.dim,
            step_budget: self.harness.step_budget,
            pet_radius: self.harness.pet_radius,
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

struct TrafficDefaults {
    cavs: usize,
    hdvs: usize,
    spawn_min: f64,
    spawn_max: f64,
    speed_min: f64,
    speed_max: f64,
    min_gap: f64,
    desired_speed: f64,
    speed_limit: f64,
}

impl TrafficDefaults {
    fn for_kind(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Highway => Self {
                cavs: 4,
                hdvs: 6,
                spawn_min: 0.0,
                spawn_max: 200.0,
                speed_min: 20.0,
                speed_max: 25.0,
                min_gap: 30.0,
                desired_speed: 25.0,
                speed_limit: 30.0,
            },
            ScenarioKind::Merge => Self {
                cavs: 2,
                hdvs: 2,
                spawn_min: 120.0,
                spawn_max: 190.0,
                speed_min: 7.0,
                speed_max: 10.0,
                min_gap: 12.0,
                desired_speed: 10.0,
                speed_limit: 12.0,
            },
            ScenarioKind::Intersection => Self {
                cavs: 4,
                hdvs: 0,
                spawn_min: 30.0,
                spawn_max: 65.0,
                speed_min: 6.0,
                speed_max: 9.0,
                min_gap: 12.0,
                desired_speed: 10.0,
                speed_limit: 12.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTraffic {
    pub cavs: usize,
    pub hdvs: usize,
    pub spawn_min: f64,
    pub spawn_max: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub min_gap: f64,
}

/// Fully resolved parameters for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub dt: f64,
    pub traffic: ResolvedTraffic,
    pub geometry: GeometryConfig,
    pub vehicle: VehicleConfig,
    pub idm: IdmParams,
    pub mobil: MobilParams,
    pub gains: ControlGains,
    pub limits: ControlLimits,
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    pub lateral_accel: f64,
    pub perception_range: f64,
    pub horizon: f64,
    pub speed_step: f64,
    pub speed_limit: f64,
    pub decision_period: f64,
    pub prompt_budget: usize,
    pub shots: usize,
    pub memory_dim: usize,
    pub step_budget: u64,
    pub pet_radius: f64,
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |what: &str| Err(ConfigError::Invalid(what.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        self.idm.validate()?;
        self.mobil.validate()?;
        self.gains.validate()?;
        if !(self.limits.brake_cap > 0.0) || !(self.limits.v_floor > 0.0) {
            return bad("control.brake_cap and control.v_floor must be positive");
        }
        if !(self.geometry.lane_width > 0.0) || self.geometry.highway_lanes == 0 {
            return bad("geometry.lane_width must be positive and highway_lanes non-zero");
        }
        if !(self.geometry.leg_length > self.geometry.box_half_size) || !(self.geometry.box_half_size > self.geometry.lane_width) {
            return bad("geometry.leg_length must exceed box_half_size, which must exceed lane_width");
        }
        if !(self.geometry.merge_junction_x > 0.0) || !(self.geometry.merge_length > self.geometry.merge_junction_x) {
            return bad("geometry.merge_length must exceed merge_junction_x > 0");
        }
        if !(self.vehicle.length > 0.0) || !(self.vehicle.width > 0.0) {
            return bad("vehicle dimensions must be positive");
        }
        let t = &self.traffic;
        if !(t.spawn_min >= 0.0) || !(t.spawn_max >= t.spawn_min) {
            return bad("traffic spawn window must satisfy 0 <= spawn_min <= spawn_max");
        }
        if !(t.speed_min >= 0.0) || !(t.speed_max >= t.speed_min) {
            return bad("traffic speed window must satisfy 0 <= speed_min <= speed_max");
        }
        if !(t.min_gap >= 0.0) {
            return bad("traffic.min_gap must be non-negative");
        }
        if !(self.perception_range > 0.0) {
            return bad("perception.range must be positive");
        }
        if !(self.horizon > 0.0) || !(self.speed_step > 0.0) || !(self.speed_limit > 0.0) {
            return bad("decision horizon, speed_step and speed_limit must be positive");
        }
        if !(self.decision_period >= self.dt) {
            return bad("decision.decision_period must be at least dt");
        }
        if self.memory_dim == 0 {
            return bad("memory.dim must be positive");
        }
        if self.step_budget == 0 || !(self.pet_radius > 0.0) {
            return bad("harness.step_budget and harness.pet_radius must be positive");
        }
        Ok(())
    }

    /// Number of simulation steps between two CAV decisions.
    pub fn decision_interval_steps(&self) -> u64 {
        ((self.decision_period / self.dt).round() as u64).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_uses_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let r = cfg.resolve(ScenarioKind::Intersection).unwrap();
        assert_eq!(r.traffic.cavs, 4);
        assert_eq!(r.idm.desired_speed, 10.0);
        assert_eq!(r.decision_interval_steps(), 10);
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("[idm]\nmax_accell = 3.0").is_err());
    }

    #[test]
    fn overrides_apply() {
        let cfg = ScenarioConfig::from_toml_str(
            "seed = 9\n[traffic]\ncavs = 2\nhdvs = 1\n[idm]\ndesired_speed = 12.5\n",
        )
        .unwrap();
        let r = cfg.resolve(ScenarioKind::Merge).unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.traffic.cavs, 2);
        assert_eq!(r.traffic.hdvs, 1);
        assert_eq!(r.idm.desired_speed, 12.5);
    }

    #[test]
    fn invalid_values_rejected() {
        let cfg = ScenarioConfig::from_toml_str("dt = 0.0").unwrap();
        assert!(cfg.resolve(ScenarioKind::Highway).is_err());
        let cfg = ScenarioConfig::from_toml_str("[mobil]\npoliteness = 1.5").unwrap();
        assert!(cfg.resolve(ScenarioKind::Highway).is_err());
    }

    #[test]
    fn unknown_scenario_kind() {
        assert!("roundabout".parse::<ScenarioKind>().is_err());
        assert!(ScenarioConfig::from_toml_str("kind = \"roundabout\"").is_err());
    }
}
