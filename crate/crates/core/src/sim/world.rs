//! Ground truth for one trial: agent motion, sight lines, awareness and
//! reactions, and the raw sensor streams derived from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, RigidTransform, Rotation3, Vec3};
use crate::metrics::{ttc_record, AgentSample, EventSource, TtcRecord};
use crate::server::wire::Detection;

use super::config::{Condition, ScenarioConfig};
use super::kinematics::{Motion, Polyline};
use super::scene::Site;
use super::sensors::{reset_schedule, LidarRig, SlamReset, SlamRig};
use super::SimError;

pub const PEDESTRIAN_ID: u32 = 1;
pub const COUNTERPART_ID: u32 = 2;
/// Height of the tracked body centroid, meters.
pub const BODY_HEIGHT: f64 = 1.0;
/// Height of a headset, meters.
pub const HEAD_HEIGHT: f64 = 1.6;
/// Resets only happen above this counterpart speed, km/h.
pub const RESET_MIN_SPEED_KMH: f64 = 20.0;
pub const MAX_RESET_JUMP: f64 = 0.5;
const LOS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Pedestrian,
    Counterpart,
}

impl Agent {
    pub fn id(self) -> u32 {
        match self {
            Agent::Pedestrian => PEDESTRIAN_ID,
            Agent::Counterpart => COUNTERPART_ID,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Independent random streams, so that changing what one channel draws
/// never shifts another.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Params = 0,
    Lidar = 1,
    PedSlam = 2,
    CpSlam = 3,
    Resets = 4,
    PedCal = 5,
    CpCal = 6,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s as u64);
    r
}

/// Per-trial random draws. Identical for a given seed in every condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    /// km/h.
    pub counterpart_speed: f64,
    /// Counterpart arrival at the crossing point minus the pedestrian's, seconds.
    pub arrival_offset: f64,
    pub scan_amplitude_deg: f64,
    pub scan_period: f64,
    pub scan_phase: f64,
    pub lidar_yaw: f64,
    pub pedestrian_anchor: RigidTransform,
    pub counterpart_anchor: RigidTransform,
}

fn range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn anchor<R: Rng>(rng: &mut R) -> RigidTransform {
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let origin = Vec3::new(
        rng.random_range(-20.0..20.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-20.0..20.0),
    );
    RigidTransform::new(Rotation3::from_yaw(yaw), origin)
}

impl TrialParams {
    pub fn sample(cfg: &ScenarioConfig) -> Self {
        let mut rng = stream(cfg.rng_seed, Stream::Params);
        let drawn_speed = range(&mut rng, cfg.scenario.speed_range_kmh());
        let j = cfg.arrival_jitter;
        let arrival_offset = range(&mut rng, (-j, j));
        let scan_amplitude_deg = range(&mut rng, cfg.head_scan.amplitude_deg);
        let scan_period = range(&mut rng, cfg.head_scan.period_s);
        let scan_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let lidar_yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let pedestrian_anchor = anchor(&mut rng);
        let counterpart_anchor = anchor(&mut rng);
        Self {
            counterpart_speed: cfg.counterpart_speed.unwrap_or(drawn_speed),
            arrival_offset,
            scan_amplitude_deg,
            scan_period,
            scan_phase,
            lidar_yaw,
            pedestrian_anchor,
            counterpart_anchor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ScenarioStart,
    LineOfSight,
    Awareness,
    BrakeOnset,
    FirstCue,
    SlamReset,
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: f64,
    pub event: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<Agent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// One ground-truth line: body centroid, velocity and facing in the site frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub t: f64,
    pub agent: Agent,
    pub id: u32,
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub f: [f64; 3],
}

/// Everything the sensors produce at one tick.
#[derive(Debug, Clone)]
pub struct Frame {
    pub k: u64,
    pub t: f64,
    pub scenario_phase: bool,
    pub pedestrian: AgentSample,
    pub counterpart: Option<AgentSample>,
    /// Roadside detections in the scanner frame.
    pub detections: Vec<Detection>,
    /// Pedestrian headset pose in its own tracking frame.
    pub pedestrian_pose: Pose,
    /// Counterpart headset pose in its own tracking frame, before resets.
    pub counterpart_pose: Option<Pose>,
    /// Resets that fire during this tick.
    pub resets: Vec<SlamReset>,
}

pub struct Simulator {
    cfg: ScenarioConfig,
    params: TrialParams,
    site: Site,
    ped: Motion,
    cp: Motion,
    ped_eip_s: f64,
    cp_eip_s: f64,
    scenario_start: f64,
    n_ticks: u64,
    k: u64,
    lidar: LidarRig,
    ped_slam: SlamRig,
    cp_slam: SlamRig,
    rng_lidar: ChaCha8Rng,
    rng_ped: ChaCha8Rng,
    rng_cp: ChaCha8Rng,
    resets: Vec<SlamReset>,
    los_time: Option<f64>,
    aware: [Option<(f64, EventSource)>; 2],
    events: Vec<SimEvent>,
    truth: Vec<GroundTruth>,
    detections: Vec<Detection>,
}

impl Simulator {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let params = TrialParams::sample(cfg);
        let site = Site::new(cfg);
        let body = Vec3::new(0.0, BODY_HEIGHT, 0.0);
        let (c, l) = (cfg.site.calibration_leg, cfg.site.leg_length);
        let vp = cfg.pedestrian_speed;

        // L-shaped calibration walk that ends at the scenario start point.
        let ped_path = Polyline::new(vec![
            body + Vec3::new(-c, 0.0, -l - c),
            body + Vec3::new(0.0, 0.0, -l - c),
            body + Vec3::new(0.0, 0.0, -l),
            body + Vec3::new(0.0, 0.0, l),
        ]);
        let ped = Motion::new(ped_path, 0.0, vp, cfg.reaction.decel);
        let scenario_start = 2.0 * c / vp;

        let vc = params.counterpart_speed / 3.6;
        let approach = vc * (l / vp + params.arrival_offset);
        let cp_path = Polyline::new(vec![body + site.cp_dir * approach, body, body - site.cp_dir * approach]);
        let cp = Motion::new(cp_path, scenario_start, vc, cfg.reaction.decel);

        let n_ticks = ((scenario_start + cfg.duration) * cfg.tick_rate).floor() as u64 + 1;
        let mount = site.corner * -1.0 + Vec3::new(0.0, 3.0, 0.0);
        let lidar = LidarRig::new(params.lidar_yaw, mount, cfg.noise.lidar_sigma);
        let slam = |a: &RigidTransform| SlamRig {
            site_to_headset: *a,
            sigma: cfg.noise.slam_sigma,
        };
        let resets = if cfg.condition == Condition::C && params.counterpart_speed > RESET_MIN_SPEED_KMH {
            let mut r = stream(cfg.rng_seed, Stream::Resets);
            let end = n_ticks as f64 / cfg.tick_rate;
            reset_schedule(&mut r, cfg.noise.reset_rate, scenario_start, end, MAX_RESET_JUMP)
        } else {
            Vec::new()
        };
        let events = vec![SimEvent {
            t: scenario_start,
            event: EventKind::ScenarioStart,
            agent: None,
            detail: Some(format!("counterpart {:.2} km/h", params.counterpart_speed)),
        }];
        Ok(Self {
            ped_slam: slam(&params.pedestrian_anchor),
            cp_slam: slam(&params.counterpart_anchor),
            cfg: cfg.clone(),
            params,
            site,
            ped,
            cp,
            ped_eip_s: 2.0 * c + l,
            cp_eip_s: approach,
            scenario_start,
            n_ticks,
            k: 0,
            lidar,
            rng_lidar: stream(cfg.rng_seed, Stream::Lidar),
            rng_ped: stream(cfg.rng_seed, Stream::PedSlam),
            rng_cp: stream(cfg.rng_seed, Stream::CpSlam),
            resets,
            los_time: None,
            aware: [None, None],
            events,
            truth: Vec::new(),
            detections: Vec::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn params(&self) -> &TrialParams {
        &self.params
    }

    pub fn site(&self) -> &Site {
        &self.site
    }

    pub fn lidar(&self) -> &LidarRig {
        &self.lidar
    }

    pub fn pedestrian_slam(&self) -> &SlamRig {
        &self.ped_slam
    }

    pub fn counterpart_slam(&self) -> &SlamRig {
        &self.cp_slam
    }

    pub fn motion(&self, agent: Agent) -> &Motion {
        match agent {
            Agent::Pedestrian => &self.ped,
            Agent::Counterpart => &self.cp,
        }
    }

    /// Session time at which the calibration walk ends and the approach begins.
    pub fn scenario_start(&self) -> f64 {
        self.scenario_start
    }

    pub fn tick_count(&self) -> u64 {
        self.n_ticks
    }

    pub fn time_of(&self, k: u64) -> f64 {
        k as f64 / self.cfg.tick_rate
    }

    pub fn resets(&self) -> &[SlamReset] {
        &self.resets
    }

    pub fn line_of_sight_time(&self) -> Option<f64> {
        self.los_time
    }

    pub fn awareness(&self, agent: Agent) -> Option<(f64, EventSource)> {
        self.aware[agent.index()]
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn truth_log(&self) -> &[GroundTruth] {
        &self.truth
    }

    pub fn detection_log(&self) -> &[Detection] {
        &self.detections
    }

    pub fn log_event(&mut self, t: f64, event: EventKind, agent: Option<Agent>, detail: Option<String>) {
        self.events.push(SimEvent { t, event, agent, detail });
    }

    pub fn counterpart_present(&self, t: f64) -> bool {
        t >= self.scenario_start - 1e-9
    }

    fn scan_yaw(&self, t: f64) -> f64 {
        let p = &self.params;
        p.scan_amplitude_deg.to_radians() * (std::f64::consts::TAU * t / p.scan_period + p.scan_phase).sin()
    }

    pub fn sample(&self, agent: Agent, t: f64) -> AgentSample {
        let m = self.motion(agent);
        AgentSample::new(t, m.position(t), m.velocity(t))
    }

    /// True head pose in the site frame.
    pub fn head_pose(&self, agent: Agent, t: f64) -> Pose {
        let m = self.motion(agent);
        let head = m.position(t) + Vec3::new(0.0, HEAD_HEIGHT - BODY_HEIGHT, 0.0);
        let forward = match agent {
            Agent::Pedestrian => Rotation3::from_yaw(self.scan_yaw(t)).rotate(&m.heading(t)),
            Agent::Counterpart => m.heading(t),
        };
        Pose::facing(head, forward)
    }

    /// Whether the two agents can see each other at `t`.
    pub fn line_of_sight(&self, t: f64) -> bool {
        self.counterpart_present(t) && self.site.line_of_sight(&self.ped.position(t), &self.cp.position(t))
    }

    pub fn ttc_at(&self, t: f64) -> TtcRecord {
        ttc_record(&self.sample(Agent::Pedestrian, t), &self.sample(Agent::Counterpart, t))
    }

    /// Registers awareness; the agent starts braking one reaction latency
    /// later unless it has already reached the crossing point by then.
    /// Returns false if the agent was already aware.
    pub fn notify_awareness(&mut self, agent: Agent, t: f64, source: EventSource) -> bool {
        if self.aware[agent.index()].is_some() {
            return false;
        }
        self.aware[agent.index()] = Some((t, source));
        self.log_event(t, EventKind::Awareness, Some(agent), Some(format!("{source:?}")));
        let onset = t + self.cfg.reaction.latency;
        let (m, eip_s) = match agent {
            Agent::Pedestrian => (&mut self.ped, self.ped_eip_s),
            Agent::Counterpart => (&mut self.cp, self.cp_eip_s),
        };
        if m.distance(onset) < eip_s {
            m.brake_from(onset);
            self.log_event(onset, EventKind::BrakeOnset, Some(agent), None);
        }
        true
    }

    fn check_line_of_sight(&mut self, t: f64) {
        if self.los_time.is_some() || !self.line_of_sight(t) {
            return;
        }
        let mut lo = (t - 1.0 / self.cfg.tick_rate).max(self.scenario_start);
        let mut hi = t;
        if self.line_of_sight(lo) {
            hi = lo;
        }
        while hi - lo > LOS_TOL {
            let mid = 0.5 * (lo + hi);
            if self.line_of_sight(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        self.los_time = Some(hi);
        self.log_event(hi, EventKind::LineOfSight, None, None);
        self.notify_awareness(Agent::Pedestrian, hi, EventSource::LineOfSight);
        self.notify_awareness(Agent::Counterpart, hi, EventSource::LineOfSight);
    }

    fn record_truth(&mut self, agent: Agent, t: f64) -> AgentSample {
        let s = self.sample(agent, t);
        let f = self.head_pose(agent, t).forward;
        self.truth.push(GroundTruth {
            t,
            agent,
            id: agent.id(),
            p: s.position.into(),
            v: s.velocity.into(),
            f: f.into(),
        });
        s
    }

    /// Advances one tick. `None` once the trial is over.
    pub fn step(&mut self) -> Option<Frame> {
        if self.k >= self.n_ticks {
            return None;
        }
        let k = self.k;
        let t = self.time_of(k);
        let prev = if k == 0 { f64::NEG_INFINITY } else { self.time_of(k - 1) };
        self.k += 1;
        self.check_line_of_sight(t);

        let present = self.counterpart_present(t);
        let pedestrian = self.record_truth(Agent::Pedestrian, t);
        let counterpart = present.then(|| self.record_truth(Agent::Counterpart, t));

        let mut detections = vec![Detection {
            t,
            id: PEDESTRIAN_ID,
            p: self.lidar.measure(&pedestrian.position, &mut self.rng_lidar).into(),
        }];
        if let Some(cp) = &counterpart {
            let visible = !self.cfg.site.lidar_occlusion || self.site.line_of_sight(&self.lidar.mount, &cp.position);
            if visible {
                detections.push(Detection {
                    t,
                    id: COUNTERPART_ID,
                    p: self.lidar.measure(&cp.position, &mut self.rng_lidar).into(),
                });
            }
        }
        self.detections.extend_from_slice(&detections);

        let pedestrian_pose = self.ped_slam.measure(&self.head_pose(Agent::Pedestrian, t), &mut self.rng_ped);
        let counterpart_pose =
            present.then(|| self.cp_slam.measure(&self.head_pose(Agent::Counterpart, t), &mut self.rng_cp));
        let resets: Vec<SlamReset> = self.resets.iter().filter(|r| r.t > prev && r.t <= t).copied().collect();
        for r in &resets {
            self.log_event(
                r.t,
                EventKind::SlamReset,
                Some(Agent::Counterpart),
                Some(format!("jump {:.3} m", r.offset.norm())),
            );
        }
        Some(Frame {
            k,
            t,
            scenario_phase: present,
            pedestrian,
            counterpart,
            detections,
            pedestrian_pose,
            counterpart_pose,
            resets,
        })
    }

    /// Headset positions of both devices carried together along the
    /// calibration walk, in their own tracking frames. Index 0 is the shared
    /// starting point.
    pub fn co_moving_calibration_samples(&self) -> (Vec<Vec3>, Vec<Vec3>) {
        let mut rp = stream(self.cfg.rng_seed, Stream::PedCal);
        let mut rc = stream(self.cfg.rng_seed, Stream::CpCal);
        let (mut prim, mut sec) = (Vec::new(), Vec::new());
        let mut k = 0;
        while self.time_of(k) <= self.scenario_start + 1e-9 {
            let p = self.head_pose(Agent::Pedestrian, self.time_of(k)).position;
            prim.push(self.ped_slam.measure_position(&p, &mut rp));
            sec.push(self.cp_slam.measure_position(&p, &mut rc));
            k += 1;
        }
        (prim, sec)
    }
}
