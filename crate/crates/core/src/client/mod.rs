//! Headset client: calibrates the roadside frame against its own tracking,
//! maps incoming targets into the wearer's view and chooses a cue per target.

pub mod cue;
pub mod ego;
pub mod link;

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{self, CalibrationError, CalibrationResult, PairedSamples};
use crate::geometry::{GeometryError, Pose, RigidTransform, Vec3};
use crate::server::wire::TargetMessage;

pub use cue::{decide, decide_cue, ArrowDisplay, ArrowSide, ArrowVertical, Cue, CueKind, Decision};
pub use ego::{apply_slam_reset, EgoState};
pub use link::{FrameLink, RecvError};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no usable calibration within {0:.1} s")]
    CalibrationTimeout(f64),
    #[error("calibration failed: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("targets received before calibration finished")]
    NotCalibrated,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("connection: {0}")]
    Connect(#[from] std::io::Error),
    #[error("invalid client config: {0}")]
    Config(String),
    #[error("pose file line {0}: {1}")]
    PoseFile(usize, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationPhaseConfig {
    /// Pairs collected before each solve attempt.
    pub min_samples: usize,
    /// Session seconds before giving up.
    pub timeout_s: f64,
    /// RMS residual (meters) above which a solution is discarded.
    pub residual_reject: f64,
}

impl Default for CalibrationPhaseConfig {
    fn default() -> Self {
        Self {
            min_samples: 100,
            timeout_s: 30.0,
            residual_reject: calibration::RESIDUAL_REJECT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub fov_deg: f64,
    pub proximity_m: f64,
    pub server: String,
    /// Box size drawn around in-view targets, meters.
    pub box_extents: Vec3,
    pub calibration: CalibrationPhaseConfig,
    /// Seconds to keep retrying a lost or refused connection.
    pub reconnect_s: f64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            fov_deg: 90.0,
            proximity_m: 3.0,
            server: format!("127.0.0.1:{}", crate::server::DEFAULT_PORT),
            box_extents: Vec3::new(0.8, 1.8, 0.8),
            calibration: CalibrationPhaseConfig::default(),
            reconnect_s: crate::server::RECONNECT_WINDOW.as_secs_f64(),
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 360.0) {
            return Err(ClientError::Config(format!("fov {} outside (0, 360)", self.fov_deg)));
        }
        if !(self.proximity_m > 0.0) {
            return Err(ClientError::Config(format!("proximity {} must be positive", self.proximity_m)));
        }
        if self.box_extents.iter().any(|e| !(*e > 0.0)) {
            return Err(ClientError::Config("box extents must be positive".into()));
        }
        if self.calibration.min_samples < calibration::MIN_SAMPLES {
            return Err(ClientError::Config("calibration needs at least 4 samples".into()));
        }
        Ok(())
    }
}

/// A target expressed in the wearer's frame: `x` right, `y` up, `z` forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoTarget {
    pub id: u32,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl EgoTarget {
    pub fn planar_distance(&self) -> f64 {
        self.position.x.hypot(self.position.z)
    }

    pub fn bearing_deg(&self) -> f64 {
        let deg = self.position.x.atan2(self.position.z).to_degrees();
        if deg <= -180.0 {
            deg + 360.0
        } else {
            deg
        }
    }
}

/// A non-ego target mapped into the headset world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldTarget {
    pub id: u32,
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Maps every non-ego target through `calib` into the headset world frame.
pub fn to_world(msg: &TargetMessage, calib: &RigidTransform) -> Vec<WorldTarget> {
    msg.targets
        .iter()
        .filter(|t| !t.ego)
        .map(|t| WorldTarget {
            id: t.id,
            position: calib.apply(&t.position()),
            velocity: calib.apply_vector(&t.velocity()),
        })
        .collect()
}

/// Roadside frame → headset world frame → wearer frame, skipping the wearer.
pub fn transform_targets(
    msg: &TargetMessage,
    calib: Option<&RigidTransform>,
    ego: &EgoState,
) -> Result<Vec<EgoTarget>, ClientError> {
    let calib = calib.ok_or(ClientError::NotCalibrated)?;
    let to_ego = ego.reported_pose().world_to_ego()?;
    Ok(to_world(msg, calib)
        .into_iter()
        .map(|w| EgoTarget {
            id: w.id,
            position: to_ego.apply(&w.position),
            velocity: to_ego.apply_vector(&w.velocity),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationProgress {
    Collecting(usize),
    Done(CalibrationResult),
}

/// Accumulates (roadside ego position, headset position) pairs and solves
/// once enough are available.
#[derive(Debug, Clone)]
pub struct CalibrationPhase {
    config: CalibrationPhaseConfig,
    samples: PairedSamples,
    started: Option<f64>,
    attempts: u32,
    last_error: Option<CalibrationError>,
    last_samples: PairedSamples,
}

impl CalibrationPhase {
    pub fn new(config: CalibrationPhaseConfig) -> Self {
        Self {
            config,
            samples: PairedSamples::default(),
            started: None,
            attempts: 0,
            last_error: None,
            last_samples: PairedSamples::default(),
        }
    }

    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    /// Pairs used by the most recent solve attempt.
    pub fn last_samples(&self) -> &PairedSamples {
        &self.last_samples
    }

    /// `ego_pose` must be the headset pose at `msg.timestamp`.
    pub fn feed(&mut self, msg: &TargetMessage, ego_pose: &Pose) -> Result<CalibrationProgress, ClientError> {
        let started = *self.started.get_or_insert(msg.timestamp);
        if msg.timestamp - started > self.config.timeout_s {
            return Err(match self.last_error.take() {
                Some(e @ CalibrationError::DegenerateGeometry) => ClientError::Calibration(e),
                _ => ClientError::CalibrationTimeout(self.config.timeout_s),
            });
        }
        // The ego is tagged by the server; id 1 by convention otherwise.
        let Some(entry) = msg.ego().or_else(|| msg.get(1)) else {
            return Ok(CalibrationProgress::Collecting(self.samples.len()));
        };
        self.samples.push(entry.position(), ego_pose.position);
        if self.samples.len() < self.config.min_samples {
            return Ok(CalibrationProgress::Collecting(self.samples.len()));
        }
        self.attempts += 1;
        self.last_samples = std::mem::take(&mut self.samples);
        match calibration::solve_rigid_alignment(&self.last_samples) {
            Ok(r) if r.rms_residual <= self.config.residual_reject => Ok(CalibrationProgress::Done(r)),
            Ok(r) => {
                warn!("calibration residual {:.3} m too large; retrying", r.rms_residual);
                self.last_error = None;
                Ok(CalibrationProgress::Collecting(0))
            }
            Err(e) => {
                warn!("calibration attempt failed: {e}; retrying");
                self.last_error = Some(e);
                Ok(CalibrationProgress::Collecting(0))
            }
        }
    }
}

/// Runs the calibration phase over a frame stream; `pose_at` supplies the
/// headset pose for each frame timestamp.
pub fn run_calibration_phase<I, F>(
    frames: I,
    mut pose_at: F,
    config: &CalibrationPhaseConfig,
) -> Result<CalibrationResult, ClientError>
where
    I: IntoIterator<Item = TargetMessage>,
    F: FnMut(f64) -> Option<Pose>,
{
    let mut phase = CalibrationPhase::new(config.clone());
    for msg in frames {
        let Some(pose) = pose_at(msg.timestamp) else { continue };
        if let CalibrationProgress::Done(r) = phase.feed(&msg, &pose)? {
            return Ok(r);
        }
    }
    Err(match phase.last_error {
        Some(e) => ClientError::Calibration(e),
        None => ClientError::CalibrationTimeout(config.timeout_s),
    })
}

/// One line of the cue log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueLogRecord {
    pub t: f64,
    pub target: u32,
    pub kind: String,
    pub side: Option<ArrowSide>,
    pub vertical: Option<ArrowVertical>,
    pub theta: f64,
    pub d: f64,
}

impl CueLogRecord {
    pub fn new(t: f64, cue: &Cue) -> Self {
        let (side, vertical) = match cue.kind {
            CueKind::Arrow { side, vertical, .. } => (Some(side), Some(vertical)),
            _ => (None, None),
        };
        Self {
            t,
            target: cue.target_id,
            kind: cue.kind.label().to_string(),
            side,
            vertical,
            theta: cue.theta,
            d: cue.distance,
        }
    }

    pub fn is_visible(&self) -> bool {
        self.kind != "none"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    Calibrating(usize),
    Calibrated(CalibrationResult),
    Cues(Vec<Cue>),
}

/// Client state machine: calibration first, then per-frame cues.
#[derive(Debug, Clone)]
pub struct HeadsetClient {
    config: ClientConfig,
    calibration: Option<CalibrationResult>,
    phase: CalibrationPhase,
    ego: Option<EgoState>,
    arrows: ArrowDisplay,
    log: Vec<CueLogRecord>,
}

impl HeadsetClient {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        config.validate()?;
        Ok(Self {
            phase: CalibrationPhase::new(config.calibration.clone()),
            config,
            calibration: None,
            ego: None,
            arrows: ArrowDisplay::default(),
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// Skips the calibration phase with a known frame map.
    pub fn set_calibration(&mut self, transform: RigidTransform) {
        self.calibration = Some(CalibrationResult {
            transform,
            rms_residual: 0.0,
            n_samples: 0,
        });
    }

    pub fn calibration(&self) -> Option<&CalibrationResult> {
        self.calibration.as_ref()
    }

    pub fn calibration_phase(&self) -> &CalibrationPhase {
        &self.phase
    }

    /// Latest measured pose from the headset tracker.
    pub fn update_pose(&mut self, pose: Pose) {
        match &mut self.ego {
            Some(e) => e.set_pose(pose),
            None => self.ego = Some(EgoState::new(pose)),
        }
    }

    pub fn ego(&self) -> Option<&EgoState> {
        self.ego.as_ref()
    }

    pub fn apply_slam_reset(&mut self, anchor: &Pose) {
        if let Some(e) = &self.ego {
            self.ego = Some(apply_slam_reset(e, anchor));
        }
    }

    pub fn cue_log(&self) -> &[CueLogRecord] {
        &self.log
    }

    pub fn take_cue_log(&mut self) -> Vec<CueLogRecord> {
        std::mem::take(&mut self.log)
    }

    pub fn handle_frame(&mut self, msg: &TargetMessage) -> Result<FrameOutcome, ClientError> {
        let ego = self.ego.ok_or(ClientError::NotCalibrated)?;
        let Some(calib) = self.calibration else {
            return match self.phase.feed(msg, &ego.reported_pose())? {
                CalibrationProgress::Done(r) => {
                    info!(
                        "calibrated from {} pairs, rms residual {:.4} m",
                        r.n_samples, r.rms_residual
                    );
                    self.calibration = Some(r);
                    Ok(FrameOutcome::Calibrated(r))
                }
                CalibrationProgress::Collecting(n) => Ok(FrameOutcome::Calibrating(n)),
            };
        };
        let targets = transform_targets(msg, Some(&calib.transform), &ego)?;
        let cues: Vec<Cue> = targets.iter().map(|t| decide_cue(t, &self.config)).collect();
        for c in &cues {
            self.arrows.apply(c);
            self.log.push(CueLogRecord::new(msg.timestamp, c));
        }
        Ok(FrameOutcome::Cues(cues))
    }
}

/// Timestamped headset poses, as recorded by the headset tracker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseTrack {
    samples: Vec<(f64, Pose)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub t: f64,
    pub p: [f64; 3],
    pub f: [f64; 3],
}

impl PoseTrack {
    pub fn new(mut samples: Vec<(f64, Pose)>) -> Self {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { samples }
    }

    /// JSON-lines of `{"t":sec,"p":[x,y,z],"f":[fx,fy,fz]}`.
    pub fn parse(text: &str) -> Result<Self, ClientError> {
        let mut v = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: PoseRecord = serde_json::from_str(line).map_err(|e| ClientError::PoseFile(i + 1, e.to_string()))?;
            let pose = Pose::new(Vec3::from(r.p), Vec3::from(r.f).normalize())
                .map_err(|e| ClientError::PoseFile(i + 1, e.to_string()))?;
            v.push((r.t, pose));
        }
        Ok(Self::new(v))
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for (t, p) in &self.samples {
            let r = PoseRecord {
                t: *t,
                p: p.position.into(),
                f: p.forward.into(),
            };
            s.push_str(&serde_json::to_string(&r).expect("pose serializes"));
            s.push('\n');
        }
        s
    }

    /// Nearest pose within the pairing window.
    pub fn at(&self, t: f64) -> Option<Pose> {
        let i = self.samples.partition_point(|(ts, _)| *ts < t);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| self.samples.get(j))
            .filter(|(ts, _)| (ts - t).abs() <= calibration::SYNC_WINDOW)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(_, p)| *p)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub frames: u64,
    pub cues: u64,
    pub visible_cues: u64,
    pub frames_without_pose: u64,
    pub reconnects: u32,
    pub calibration: Option<CalibrationResult>,
}

/// Live loop against a tracking server: connect, calibrate, then write one
/// cue record per target per frame to `cue_log` until the server goes away.
pub fn run_client<W: Write>(
    config: &ClientConfig,
    poses: &PoseTrack,
    cue_log: &mut W,
    stop: &AtomicBool,
) -> Result<ClientSummary, ClientError> {
    let mut client = HeadsetClient::new(config.clone())?;
    let window = Duration::from_secs_f64(config.reconnect_s.max(0.0));
    let mut link = FrameLink::connect(&config.server, window)?;
    info!("connected to {}", link.peer());
    let mut summary = ClientSummary::default();
    while !stop.load(Ordering::Relaxed) {
        let msg = match link.recv_timeout(window.max(Duration::from_millis(100))) {
            Ok(m) => m,
            Err(RecvError::Timeout) => break,
            Err(RecvError::Closed) => match FrameLink::connect(&config.server, window) {
                Ok(l) => {
                    link = l;
                    summary.reconnects += 1;
                    continue;
                }
                Err(_) => break,
            },
        };
        summary.frames += 1;
        let Some(pose) = poses.at(msg.timestamp) else {
            summary.frames_without_pose += 1;
            continue;
        };
        client.update_pose(pose);
        if let FrameOutcome::Cues(cues) = client.handle_frame(&msg)? {
            summary.cues += cues.len() as u64;
            summary.visible_cues += cues.iter().filter(|c| c.kind.is_visible()).count() as u64;
            for rec in client.take_cue_log() {
                serde_json::to_writer(&mut *cue_log, &rec).map_err(std::io::Error::from)?;
                cue_log.write_all(b"\n")?;
            }
        }
    }
    cue_log.flush()?;
    summary.calibration = client.calibration().copied();
    if summary.calibration.is_none() {
        return Err(ClientError::CalibrationTimeout(config.calibration.timeout_s));
    }
    Ok(summary)
}
