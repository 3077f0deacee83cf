//! Runs one trial end to end. Conditions B and C drive the real server,
//! client and link code over loopback sockets, one tick at a time.

use std::time::{Duration, Instant};

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_multi_headset, CalibrationResult};
use crate::client::{ClientConfig, ClientError, CueLogRecord, FrameLink, FrameOutcome, HeadsetClient};
use crate::filtering::{KalmanTrack, Measurement, NoiseParams};
use crate::geometry::{RigidTransform, Vec3};
use crate::metrics::{EventSource, TrialSummary};
use crate::server::broadcast::Broadcaster;
use crate::server::wire::{self, TargetEntry, TargetMessage};
use crate::server::{ServerConfig, TrackingServer};

use super::config::{Condition, ScenarioConfig};
use super::sensors::SlamReset;
use super::world::{Agent, EventKind, Frame, GroundTruth, SimEvent, Simulator, TrialParams, COUNTERPART_ID, PEDESTRIAN_ID};
use super::SimError;

const RECV_TIMEOUT: Duration = Duration::from_secs(5);
const CONNECT_WINDOW: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutput {
    pub summary: TrialSummary,
    pub params: TrialParams,
    pub events: Vec<SimEvent>,
    pub truth: Vec<GroundTruth>,
    pub detections: Vec<wire::Detection>,
    /// Pedestrian headset cue log.
    pub cue_log: Vec<CueLogRecord>,
    /// Counterpart headset cue log (shared-pose condition only).
    pub counterpart_cue_log: Vec<CueLogRecord>,
    /// Roadside-to-headset map of the pedestrian headset (roadside condition).
    pub calibration: Option<CalibrationResult>,
    /// Counterpart-to-pedestrian headset map (shared-pose condition).
    pub peer_calibration: Option<CalibrationResult>,
    pub frames: u64,
    pub wall_time_s: f64,
}

pub fn trial_id(cfg: &ScenarioConfig) -> String {
    format!("{}_{}_{}", cfg.scenario, cfg.condition, cfg.rng_seed)
}

fn tracking_noise(sigma: f64) -> NoiseParams {
    NoiseParams {
        sigma: sigma.max(1e-3),
        ..NoiseParams::default()
    }
}

fn recv(link: &FrameLink, seq: u64) -> Result<TargetMessage, SimError> {
    let msg = link
        .recv_timeout(RECV_TIMEOUT)
        .map_err(|e| SimError::Link(format!("frame {seq}: {e:?}")))?;
    if msg.frame_seq != seq {
        return Err(SimError::Link(format!("expected frame {seq}, got {}", msg.frame_seq)));
    }
    Ok(msg)
}

/// Marks the pedestrian aware on the first visible cue for the counterpart.
fn pedestrian_cue(sim: &mut Simulator, frame: &Frame, outcome: &FrameOutcome) {
    let FrameOutcome::Cues(cues) = outcome else { return };
    let seen = cues
        .iter()
        .find(|c| c.target_id == COUNTERPART_ID && c.kind.is_visible());
    if let Some(c) = seen {
        if sim.awareness(Agent::Pedestrian).is_none() {
            sim.log_event(frame.t, EventKind::FirstCue, Some(Agent::Pedestrian), Some(c.kind.label().into()));
            sim.notify_awareness(Agent::Pedestrian, frame.t, EventSource::Cue);
        }
    }
}

struct Collected {
    frames: u64,
    cue_log: Vec<CueLogRecord>,
    counterpart_cue_log: Vec<CueLogRecord>,
    calibration: Option<CalibrationResult>,
    peer_calibration: Option<CalibrationResult>,
}

fn run_unaided(sim: &mut Simulator) -> Collected {
    let mut frames = 0;
    while sim.step().is_some() {
        frames += 1;
    }
    Collected {
        frames,
        cue_log: Vec::new(),
        counterpart_cue_log: Vec::new(),
        calibration: None,
        peer_calibration: None,
    }
}

fn run_roadside(sim: &mut Simulator, client_cfg: &ClientConfig) -> Result<Collected, SimError> {
    let cfg = sim.config().clone();
    let mut server = TrackingServer::bind(ServerConfig {
        tick_rate: cfg.tick_rate,
        bind_address: "127.0.0.1:0".into(),
        noise: tracking_noise(cfg.noise.lidar_sigma),
        pace: false,
        wait_for_client: None,
        ..ServerConfig::default()
    })?;
    let addr = server.local_addr().to_string();
    let link = FrameLink::connect(&addr, CONNECT_WINDOW)?;
    if !server.broadcaster_mut().wait_for_clients(1, CONNECT_WINDOW) {
        return Err(SimError::Link("headset never connected".into()));
    }
    let mut client = HeadsetClient::new(client_cfg.clone())?;
    let mut frames = 0;
    while let Some(frame) = sim.step() {
        for d in &frame.detections {
            server.ingest(d);
        }
        server.broadcast_frame(frame.t)?;
        let msg = recv(&link, frame.k)?;
        frames += 1;
        client.update_pose(frame.pedestrian_pose);
        let outcome = client.handle_frame(&msg)?;
        match &outcome {
            FrameOutcome::Calibrated(r) => {
                sim.log_event(
                    frame.t,
                    EventKind::Calibrated,
                    Some(Agent::Pedestrian),
                    Some(format!("rms {:.4} m", r.rms_residual)),
                );
            }
            FrameOutcome::Calibrating(_) if frame.scenario_phase => {
                return Err(ClientError::CalibrationTimeout(sim.scenario_start()).into());
            }
            _ => {}
        }
        pedestrian_cue(sim, &frame, &outcome);
    }
    server.shutdown();
    let calibration = client.calibration().copied();
    Ok(Collected {
        frames,
        cue_log: client.take_cue_log(),
        counterpart_cue_log: Vec::new(),
        calibration,
        peer_calibration: None,
    })
}

/// Publishes one headset's pose in the shared frame, with a filtered velocity.
struct PosePublisher {
    id: u32,
    out: Broadcaster,
    track: Option<KalmanTrack>,
    noise: NoiseParams,
}

impl PosePublisher {
    fn bind(id: u32, noise: NoiseParams) -> Result<Self, SimError> {
        Ok(Self {
            id,
            out: Broadcaster::bind("127.0.0.1:0")?,
            track: None,
            noise,
        })
    }

    fn publish(&mut self, seq: u64, t: f64, shared: Vec3) -> Result<(), SimError> {
        let z = Measurement {
            position: shared,
            timestamp: t,
        };
        let velocity = match &mut self.track {
            Some(tr) => tr.observe(&z).map_err(|e| SimError::Link(e.to_string()))?.velocity(),
            None => {
                self.track = Some(KalmanTrack::new(&z, self.noise));
                Vec3::zeros()
            }
        };
        let msg = TargetMessage {
            frame_seq: seq,
            timestamp: t,
            targets: vec![TargetEntry::new(self.id, shared, velocity, false)],
        };
        self.out.broadcast(wire::encode_line(&msg)?.as_bytes());
        Ok(())
    }
}

fn run_shared(sim: &mut Simulator, client_cfg: &ClientConfig) -> Result<Collected, SimError> {
    let cfg = sim.config().clone();
    let (primary, secondary) = sim.co_moving_calibration_samples();
    let peer = calibrate_multi_headset(&primary, &secondary)?;
    info!("peer calibration rms {:.4} m over {} samples", peer.rms_residual, peer.n_samples);

    let noise = tracking_noise(cfg.noise.slam_sigma);
    let mut ped_pub = PosePublisher::bind(PEDESTRIAN_ID, noise)?;
    let mut cp_pub = PosePublisher::bind(COUNTERPART_ID, noise)?;
    let ped_link = FrameLink::connect(&cp_pub.out.local_addr().to_string(), CONNECT_WINDOW)?;
    let cp_link = FrameLink::connect(&ped_pub.out.local_addr().to_string(), CONNECT_WINDOW)?;
    if !(ped_pub.out.wait_for_clients(1, CONNECT_WINDOW) && cp_pub.out.wait_for_clients(1, CONNECT_WINDOW)) {
        return Err(SimError::Link("peer headsets never connected".into()));
    }

    let mut ped_client = HeadsetClient::new(client_cfg.clone())?;
    let mut cp_client = HeadsetClient::new(client_cfg.clone())?;
    ped_client.set_calibration(RigidTransform::identity());
    cp_client.set_calibration(peer.transform.inverse());
    sim.log_event(
        sim.scenario_start(),
        EventKind::Calibrated,
        Some(Agent::Counterpart),
        Some(format!("rms {:.4} m", peer.rms_residual)),
    );

    let mut frames = 0;
    let mut seq = 0;
    while let Some(frame) = sim.step() {
        frames += 1;
        let Some(cp_pose) = frame.counterpart_pose.filter(|_| frame.scenario_phase) else {
            continue;
        };
        ped_client.update_pose(frame.pedestrian_pose);
        cp_client.update_pose(cp_pose);
        for r in &frame.resets {
            apply_reset(&mut cp_client, r);
        }
        let ped_shared = ped_client.ego().expect("pose set").reported_pose().position;
        let cp_own = cp_client.ego().expect("pose set").reported_pose().position;
        let cp_shared = peer.transform.apply(&cp_own);
        ped_pub.publish(seq, frame.t, ped_shared)?;
        cp_pub.publish(seq, frame.t, cp_shared)?;

        let for_ped = recv(&ped_link, seq)?;
        let for_cp = recv(&cp_link, seq)?;
        seq += 1;
        let outcome = ped_client.handle_frame(&for_ped)?;
        pedestrian_cue(sim, &frame, &outcome);
        cp_client.handle_frame(&for_cp)?;
    }
    ped_pub.out.shutdown();
    cp_pub.out.shutdown();
    Ok(Collected {
        frames,
        cue_log: ped_client.take_cue_log(),
        counterpart_cue_log: cp_client.take_cue_log(),
        calibration: None,
        peer_calibration: Some(peer),
    })
}

fn apply_reset(client: &mut HeadsetClient, r: &SlamReset) {
    debug!("tracking reset at {:.3} s: {:?}", r.t, r.offset);
    client.apply_slam_reset(&r.anchor());
}

/// Runs one trial with the default headset settings.
pub fn run_trial(cfg: &ScenarioConfig) -> Result<TrialOutput, SimError> {
    run_trial_with(cfg, &ClientConfig::default())
}

pub fn run_trial_with(cfg: &ScenarioConfig, client_cfg: &ClientConfig) -> Result<TrialOutput, SimError> {
    let started = Instant::now();
    let mut sim = Simulator::new(cfg)?;
    let collected = match cfg.condition {
        Condition::A => run_unaided(&mut sim),
        Condition::B => run_roadside(&mut sim, client_cfg)?,
        Condition::C => run_shared(&mut sim, client_cfg)?,
    };
    let (event_time, event_source) = sim.awareness(Agent::Pedestrian).ok_or(SimError::NoEvent)?;
    let ttc = sim.ttc_at(event_time);
    let (Some(ttc_pedestrian), Some(ttc_counterpart)) = (ttc.pedestrian, ttc.counterpart) else {
        return Err(SimError::UndefinedTtc(event_time));
    };
    let first_cue_time = collected
        .cue_log
        .iter()
        .find(|r| r.target == COUNTERPART_ID && r.is_visible())
        .map(|r| r.t);
    let calibration_rms = collected
        .calibration
        .or(collected.peer_calibration)
        .map(|c| c.rms_residual);
    let summary = TrialSummary {
        trial_id: trial_id(cfg),
        scenario: cfg.scenario,
        condition: cfg.condition,
        seed: cfg.rng_seed,
        event_time,
        event_source,
        ttc_pedestrian,
        ttc_counterpart,
        counterpart_speed: sim.params().counterpart_speed,
        los_time: sim.line_of_sight_time(),
        first_cue_time,
        calibration_rms,
        slam_resets: sim.resets().len() as u32,
    };
    let mut events = sim.events().to_vec();
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(TrialOutput {
        summary,
        params: sim.params().clone(),
        events,
        truth: sim.truth_log().to_vec(),
        detections: sim.detection_log().to_vec(),
        cue_log: collected.cue_log,
        counterpart_cue_log: collected.counterpart_cue_log,
        calibration: collected.calibration,
        peer_calibration: collected.peer_calibration,
        frames: collected.frames,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
