use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "escooter")]
    EScooter,
    #[serde(rename = "vehicle")]
    Vehicle,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::EScooter, Scenario::Vehicle];

    /// Counterpart speed range in km/h.
    pub fn speed_range_kmh(self) -> (f64, f64) {
        match self {
            Scenario::EScooter => (10.0, 15.0),
            Scenario::Vehicle => (20.0, 30.0),
        }
    }

    pub fn corner_angle_deg(self) -> f64 {
        match self {
            Scenario::EScooter => 90.0,
            Scenario::Vehicle => 80.0,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Scenario::EScooter => "Pedestrian vs e-scooter",
            Scenario::Vehicle => "Pedestrian vs vehicle",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::EScooter => "escooter",
            Scenario::Vehicle => "vehicle",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "escooter" | "e-scooter" | "scooter" => Ok(Scenario::EScooter),
            "vehicle" | "car" => Ok(Scenario::Vehicle),
            other => Err(format!("unknown scenario '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Unaided eye.
    A,
    /// Pedestrian headset fed by the roadside tracker.
    B,
    /// Both parties wear headsets and share poses directly.
    C,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::A, Condition::B, Condition::C];

    pub fn title(self) -> &'static str {
        match self {
            Condition::A => "No headset",
            Condition::B => "Headset with roadside tracking",
            Condition::C => "Headsets sharing poses",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Condition::A),
            "B" | "b" => Ok(Condition::B),
            "C" | "c" => Ok(Condition::C),
            other => Err(format!("unknown condition '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Roadside detection noise, meters (per axis).
    pub lidar_sigma: f64,
    /// Headset tracking noise, meters (per axis).
    pub slam_sigma: f64,
    /// Tracking resets per minute; only active for shared-pose trials with
    /// fast counterparts.
    pub reset_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            lidar_sigma: 0.05,
            slam_sigma: 0.02,
            reset_rate: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionConfig {
    /// Awareness to braking onset, seconds.
    pub latency: f64,
    /// Braking deceleration, m/s².
    pub decel: f64,
}

impl Default for ReactionConfig {
    fn default() -> Self {
        Self {
            latency: 0.9,
            decel: 3.0,
        }
    }
}

/// Corner layout. Walls run from the building corner parallel to each leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    /// Pedestrian distance to the crossing point at scenario start, meters.
    pub leg_length: f64,
    /// Building corner offset from the pedestrian's path, meters.
    pub pedestrian_wall_offset: f64,
    /// Building corner offset from the counterpart's path, meters.
    pub counterpart_wall_offset: f64,
    pub wall_length: f64,
    /// Side length of the L-shaped calibration walk, meters.
    pub calibration_leg: f64,
    /// Whether roadside detections respect wall occlusion.
    pub lidar_occlusion: bool,
}

impl SiteConfig {
    pub fn for_scenario(s: Scenario) -> Self {
        let (ped_off, cp_off) = match s {
            Scenario::EScooter => (2.0, 2.5),
            Scenario::Vehicle => (2.0, 4.0),
        };
        Self {
            leg_length: 10.0,
            pedestrian_wall_offset: ped_off,
            counterpart_wall_offset: cp_off,
            wall_length: 120.0,
            calibration_leg: 5.0,
            lidar_occlusion: false,
        }
    }
}

/// Pedestrian head yaw oscillation while walking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadScanConfig {
    /// Amplitude range, degrees, sampled per trial.
    pub amplitude_deg: (f64, f64),
    /// Period range, seconds, sampled per trial.
    pub period_s: (f64, f64),
}

impl Default for HeadScanConfig {
    fn default() -> Self {
        Self {
            amplitude_deg: (50.0, 70.0),
            period_s: (2.5, 4.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub condition: Condition,
    /// Fixed counterpart speed in km/h; sampled from the scenario range when
    /// absent.
    #[serde(default)]
    pub counterpart_speed: Option<f64>,
    /// m/s.
    pub pedestrian_speed: f64,
    pub corner_angle: f64,
    pub rng_seed: u64,
    pub noise: NoiseConfig,
    pub reaction: ReactionConfig,
    pub site: SiteConfig,
    pub head_scan: HeadScanConfig,
    /// Half-width of the uniform spread in EIP arrival times, seconds.
    pub arrival_jitter: f64,
    /// Scenario phase length after calibration, seconds.
    pub duration: f64,
    /// Hz.
    pub tick_rate: f64,
}

impl ScenarioConfig {
    pub fn preset(scenario: Scenario, condition: Condition, seed: u64) -> Self {
        Self {
            scenario,
            condition,
            counterpart_speed: None,
            pedestrian_speed: 1.4,
            corner_angle: scenario.corner_angle_deg(),
            rng_seed: seed,
            noise: NoiseConfig::default(),
            reaction: ReactionConfig::default(),
            site: SiteConfig::for_scenario(scenario),
            head_scan: HeadScanConfig::default(),
            arrival_jitter: 0.15,
            duration: 10.0,
            tick_rate: 20.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let (lo, hi) = self.scenario.speed_range_kmh();
        if let Some(v) = self.counterpart_speed {
            if !(lo..=hi).contains(&v) {
                return bad(format!("counterpart speed {v} km/h outside [{lo}, {hi}]"));
            }
        }
        if !(self.pedestrian_speed > 0.0 && self.pedestrian_speed <= 3.0) {
            return bad(format!("pedestrian speed {} m/s outside (0, 3]", self.pedestrian_speed));
        }
        if !(self.corner_angle > 30.0 && self.corner_angle < 150.0) {
            return bad(format!("corner angle {} outside (30, 150)", self.corner_angle));
        }
        if !(1.0..=100.0).contains(&self.tick_rate) {
            return bad(format!("tick rate {} outside [1, 100]", self.tick_rate));
        }
        if !(self.duration > 0.0 && self.duration <= 600.0) {
            return bad(format!("duration {} outside (0, 600]", self.duration));
        }
        let n = &self.noise;
        if !(n.lidar_sigma >= 0.0 && n.slam_sigma >= 0.0 && n.reset_rate >= 0.0) {
            return bad("noise parameters must be non-negative".into());
        }
        if !(self.reaction.latency >= 0.0 && self.reaction.decel > 0.0) {
            return bad("reaction latency must be >= 0 and decel > 0".into());
        }
        let s = &self.site;
        if !(s.leg_length > 1.0
            && s.pedestrian_wall_offset > 0.0
            && s.counterpart_wall_offset > 0.0
            && s.wall_length > 0.0
            && s.calibration_leg > 0.5)
        {
            return bad("site dimensions must be positive".into());
        }
        let h = &self.head_scan;
        if !(h.amplitude_deg.0 >= 0.0
            && h.amplitude_deg.0 <= h.amplitude_deg.1
            && h.amplitude_deg.1 < 90.0
            && h.period_s.0 > 0.0
            && h.period_s.0 <= h.period_s.1)
        {
            return bad("head scan ranges invalid".into());
        }
        if !(self.arrival_jitter >= 0.0 && self.arrival_jitter < 1.0) {
            return bad(format!("arrival jitter {} outside [0, 1)", self.arrival_jitter));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| SimError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn period(&self) -> f64 {
        1.0 / self.tick_rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for s in Scenario::ALL {
            for c in Condition::ALL {
                let cfg = ScenarioConfig::preset(s, c, 7);
                cfg.validate().unwrap();
                let json = serde_json::to_string(&cfg).unwrap();
                let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
                assert_eq!(back, cfg);
            }
        }
    }

    #[test]
    fn out_of_range_speed() {
        let mut cfg = ScenarioConfig::preset(Scenario::EScooter, Condition::A, 0);
        cfg.counterpart_speed = Some(25.0);
        assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig(_))));
        cfg.counterpart_speed = Some(12.5);
        cfg.validate().unwrap();
    }

    #[test]
    fn parse_names() {
        assert_eq!("escooter".parse::<Scenario>().unwrap(), Scenario::EScooter);
        assert_eq!("B".parse::<Condition>().unwrap(), Condition::B);
        assert!("D".parse::<Condition>().is_err());
        assert_eq!(serde_json::to_string(&Scenario::EScooter).unwrap(), "\"escooter\"");
    }
}
