//! Deterministic trial simulator: a pedestrian and a counterpart approach a
//! blind corner while roadside and headset sensors report on them.

pub mod config;
pub mod io;
pub mod kinematics;
pub mod pipeline;
pub mod scene;
pub mod sensors;
pub mod world;

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::client::ClientError;
use crate::server::wire::WireError;
use crate::server::ServerError;

pub use config::{Condition, Scenario, ScenarioConfig};
pub use pipeline::{run_trial, run_trial_with, trial_id, TrialOutput};
pub use world::{Agent, Frame, GroundTruth, SimEvent, Simulator, TrialParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("calibration failed: {0}")]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("link: {0}")]
    Link(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("the pedestrian never became aware of the counterpart")]
    NoEvent,
    #[error("time-to-collision undefined at t = {0:.3} s")]
    UndefinedTtc(f64),
}

