//! Expected intersection point, time-to-collision and per-cell summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::sim::config::{Condition, Scenario};

/// Below this speed (m/s) an agent is treated as stationary.
pub const MIN_SPEED: f64 = 0.05;
/// Largest timestamp gap between the two samples of a pair, seconds.
pub const MAX_SKEW: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EipError {
    #[error("agents are not closing")]
    NoIntersection,
    #[error("both agents are stationary")]
    ZeroVelocityBoth,
    #[error("sample timestamps differ by {0:.3} s")]
    TimestampMismatch(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TtcError {
    #[error("agent speed {0:.3} m/s is too low for a time-to-collision")]
    NearZeroSpeed(f64),
}

/// Position and velocity of one agent at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl AgentSample {
    pub fn new(t: f64, position: Vec3, velocity: Vec3) -> Self {
        Self { t, position, velocity }
    }
}

/// Time of closest approach under constant velocity, relative to the
/// sample time.
pub fn closest_approach_time(a: &AgentSample, b: &AgentSample) -> Option<f64> {
    let r = b.position - a.position;
    let w = b.velocity - a.velocity;
    let ww = w.norm_squared();
    if ww < 1e-12 {
        return None;
    }
    Some(-r.dot(&w) / ww)
}

/// Midpoint of the two agents at their time of closest approach.
pub fn compute_eip(a: &AgentSample, b: &AgentSample) -> Result<Vec3, EipError> {
    let skew = (a.t - b.t).abs();
    if skew > MAX_SKEW {
        return Err(EipError::TimestampMismatch(skew));
    }
    if a.velocity.norm() < MIN_SPEED && b.velocity.norm() < MIN_SPEED {
        return Err(EipError::ZeroVelocityBoth);
    }
    let t_star = closest_approach_time(a, b).ok_or(EipError::NoIntersection)?;
    if t_star <= 0.0 {
        return Err(EipError::NoIntersection);
    }
    let pa = a.position + a.velocity * t_star;
    let pb = b.position + b.velocity * t_star;
    Ok((pa + pb) * 0.5)
}

/// Seconds for `agent` to reach `eip` at its current speed.
pub fn compute_ttc(agent: &AgentSample, eip: &Vec3) -> Result<f64, TtcError> {
    let speed = agent.velocity.norm();
    if speed < MIN_SPEED {
        return Err(TtcError::NearZeroSpeed(speed));
    }
    Ok((eip - agent.position).norm() / speed)
}

/// Time-to-collision of both agents at one instant. Missing values mean the
/// quantity was undefined at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtcRecord {
    pub t: f64,
    pub eip: Option<Vec3>,
    pub pedestrian: Option<f64>,
    pub counterpart: Option<f64>,
}

pub fn ttc_record(ped: &AgentSample, other: &AgentSample) -> TtcRecord {
    let eip = compute_eip(ped, other).ok();
    TtcRecord {
        t: ped.t,
        eip,
        pedestrian: eip.and_then(|e| compute_ttc(ped, &e).ok()),
        counterpart: eip.and_then(|e| compute_ttc(other, &e).ok()),
    }
}

/// TTC over paired samples of the two agents.
pub fn ttc_series(ped: &[AgentSample], other: &[AgentSample]) -> Vec<TtcRecord> {
    ped.iter().zip(other).map(|(p, o)| ttc_record(p, o)).collect()
}

/// What made the pedestrian aware of the counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    LineOfSight,
    Cue,
}

/// One trial row of the results log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_id: String,
    pub scenario: Scenario,
    pub condition: Condition,
    pub seed: u64,
    /// Session time of the pedestrian's awareness event, seconds.
    pub event_time: f64,
    pub event_source: EventSource,
    pub ttc_pedestrian: f64,
    pub ttc_counterpart: f64,
    /// km/h.
    pub counterpart_speed: f64,
    #[serde(default)]
    pub los_time: Option<f64>,
    #[serde(default)]
    pub first_cue_time: Option<f64>,
    #[serde(default)]
    pub calibration_rms: Option<f64>,
    #[serde(default)]
    pub slam_resets: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub sd: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub scenario: Scenario,
    pub condition: Condition,
    pub pedestrian: Stats,
    pub counterpart: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub scenario: Scenario,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub cells: Vec<CellStats>,
    pub empty_cells: Vec<CellKey>,
}

impl ResultsTable {
    pub fn cell(&self, scenario: Scenario, condition: Condition) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.condition == condition)
    }

    /// Plain-text table, one row per condition under each scenario heading.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<36} {:>18} {:>18} {:>5}",
            "Scenario / Configuration", "Pedestrian [s]", "Other Party [s]", "n"
        );
        for s in Scenario::ALL {
            let _ = writeln!(out, "{}", s.title());
            for c in Condition::ALL {
                let label = format!("  {c}: {}", c.title());
                match self.cell(s, c) {
                    Some(cell) => {
                        let _ = writeln!(
                            out,
                            "{:<36} {:>18} {:>18} {:>5}",
                            label,
                            format!("{:.3} ± {:.3}", cell.pedestrian.mean, cell.pedestrian.sd),
                            format!("{:.3} ± {:.3}", cell.counterpart.mean, cell.counterpart.sd),
                            cell.pedestrian.n
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{:<36} {:>18} {:>18} {:>5}", label, "n/a", "n/a", 0);
                    }
                }
            }
        }
        out
    }
}

/// Groups trials by (scenario, condition) and reports mean and sample SD of
/// each agent's event TTC.
pub fn summarize_trials(trials: &[TrialSummary]) -> ResultsTable {
    let mut groups: BTreeMap<(Scenario, Condition), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in trials {
        let g = groups.entry((t.scenario, t.condition)).or_default();
        g.0.push(t.ttc_pedestrian);
        g.1.push(t.ttc_counterpart);
    }
    let mut cells = Vec::new();
    let mut empty_cells = Vec::new();
    for s in Scenario::ALL {
        for c in Condition::ALL {
            let stats = groups
                .get(&(s, c))
                .and_then(|(p, o)| Some((Stats::of(p)?, Stats::of(o)?)));
            match stats {
                Some((pedestrian, counterpart)) => cells.push(CellStats {
                    scenario: s,
                    condition: c,
                    pedestrian,
                    counterpart,
                }),
                None => {
                    log::warn!("no trials for {s} / {c}");
                    empty_cells.push(CellKey {
                        scenario: s,
                        condition: c,
                    });
                }
            }
        }
    }
    ResultsTable { cells, empty_cells }
}
