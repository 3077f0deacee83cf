//! Roadside tracking, headset calibration and cueing for occluded-corner
//! collision warnings, plus a deterministic trial simulator.

pub mod calibration;
pub mod client;
pub mod filtering;
pub mod geometry;
pub mod metrics;
pub mod server;
pub mod sim;

pub use calibration::{solve_rigid_alignment, CalibrationError, CalibrationResult, PairedSamples};
pub use client::{ClientConfig, Cue, CueKind, HeadsetClient};
pub use filtering::{KalmanState, KalmanTrack, NoiseParams};
pub use metrics::{compute_eip, compute_ttc, summarize_trials, AgentSample, TrialSummary};
pub use geometry::{apply_transform, invert_transform, Pose, RigidTransform, Rotation3, Vec3};
pub use server::wire::{TargetEntry, TargetMessage};
pub use server::{ServerConfig, TrackingServer};
pub use sim::{run_trial, Condition, Scenario, ScenarioConfig};
