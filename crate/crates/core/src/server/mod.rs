//! Tracking server: per-target filtering of roadside detections and fixed-rate
//! broadcast of filtered position and velocity to headset clients.

pub mod broadcast;
pub mod tracker;
pub mod wire;

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filtering::{FilterError, NoiseParams};

pub use broadcast::{BroadcastStats, Broadcaster};
pub use tracker::{TargetTrack, Tracker};
pub use wire::{Detection, TargetEntry, TargetMessage, WireError};

pub const DEFAULT_PORT: u16 = 47800;

/// How long an unattended server keeps waiting for a (re)connecting client.
pub const RECONNECT_WINDOW: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {0}: {1}")]
    Bind(String, std::io::Error),
    #[error("invalid server config: {0}")]
    Config(String),
    #[error("detection for target {id} at t={got} is not newer than t={last}")]
    StaleDetection { id: u32, last: f64, got: f64 },
    #[error("target {id} exceeds capacity of {max} tracks")]
    UnknownCapacity { id: u32, max: usize },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    /// Hz.
    pub tick_rate: f64,
    pub bind_address: String,
    pub max_targets: usize,
    pub noise: NoiseParams,
    /// Sleep between ticks to hold the nominal rate. Off for replay as fast
    /// as possible.
    pub pace: bool,
    /// Seconds to wait for a first client before ticking.
    pub wait_for_client: Option<f64>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            tick_rate: 20.0,
            bind_address: format!("127.0.0.1:{DEFAULT_PORT}"),
            max_targets: 16,
            noise: NoiseParams::default(),
            pace: true,
            wait_for_client: Some(RECONNECT_WINDOW.as_secs_f64()),
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        if !(1.0..=100.0).contains(&self.tick_rate) {
            return Err(ServerError::Config(format!("tick rate {} outside [1, 100] Hz", self.tick_rate)));
        }
        if self.max_targets < 2 {
            return Err(ServerError::Config(format!("max_targets {} < 2", self.max_targets)));
        }
        self.noise.validate()?;
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.tick_rate
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    /// Frames produced, one per tick, whether or not anyone was listening.
    pub frames: u64,
    /// Frames queued to at least one client.
    pub frames_delivered: u64,
    pub clients_served: usize,
    pub dropped_detections: u64,
    pub stale_detections: u64,
    pub outbox_overflows: u64,
}

/// Tracking loop state: single owner of all tracks and the client fan-out.
pub struct TrackingServer {
    config: ServerConfig,
    tracker: Tracker,
    broadcaster: Broadcaster,
    next_seq: u64,
    delivered: u64,
}

impl TrackingServer {
    pub fn bind(config: ServerConfig) -> Result<Self, ServerError> {
        config.validate()?;
        let broadcaster = Broadcaster::bind(&config.bind_address)?;
        Ok(Self {
            tracker: Tracker::new(config.max_targets, config.noise),
            broadcaster,
            config,
            next_seq: 0,
            delivered: 0,
        })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.broadcaster.local_addr()
    }

    pub fn broadcaster_mut(&mut self) -> &mut Broadcaster {
        &mut self.broadcaster
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Feeds a detection into its track. Rejections are counted by the
    /// tracker and logged, never fatal.
    pub fn ingest(&mut self, d: &Detection) {
        if let Err(e) = self.tracker.ingest_detection(d.id, d.position(), d.t) {
            debug!("detection rejected: {e}");
        }
    }

    /// Snapshots the tracks and sends the frame to every client.
    pub fn broadcast_frame(&mut self, timestamp: f64) -> Result<(TargetMessage, BroadcastStats), ServerError> {
        self.broadcaster.accept_pending();
        let msg = self.tracker.snapshot(self.next_seq, timestamp);
        self.next_seq += 1;
        let line = wire::encode_line(&msg)?;
        let stats = self.broadcaster.broadcast(line.as_bytes());
        if stats.delivered > 0 {
            self.delivered += 1;
        }
        Ok((msg, stats))
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            frames: self.next_seq,
            frames_delivered: self.delivered,
            clients_served: self.broadcaster.clients_served(),
            dropped_detections: self.tracker.dropped(),
            stale_detections: self.tracker.stale(),
            outbox_overflows: self.broadcaster.overflowed(),
        }
    }

    pub fn shutdown(&mut self) {
        self.broadcaster.shutdown();
    }
}

/// Runs ticks until the detection source is exhausted or `stop` is raised.
///
/// Tick `k` is stamped `t0 + k / tick_rate`, where `t0` is the first
/// detection time, and absorbs every detection nearer to it than to the next
/// tick.
pub fn run_server<I>(config: ServerConfig, source: I, stop: &AtomicBool) -> Result<SessionSummary, ServerError>
where
    I: IntoIterator<Item = Detection>,
{
    let mut server = TrackingServer::bind(config.clone())?;
    info!("tracking server listening on {}", server.local_addr());
    serve(&mut server, source, stop)
}

/// Tick loop over an already bound server.
pub fn serve<I>(server: &mut TrackingServer, source: I, stop: &AtomicBool) -> Result<SessionSummary, ServerError>
where
    I: IntoIterator<Item = Detection>,
{
    let config = server.config.clone();
    let mut source = source.into_iter().peekable();
    let Some(first) = source.peek().copied() else {
        server.shutdown();
        return Ok(server.summary());
    };
    if let Some(wait) = config.wait_for_client {
        if !server
            .broadcaster
            .wait_for_clients(1, Duration::from_secs_f64(wait.max(0.0)))
        {
            info!("no client after {wait:.1} s; streaming to nobody until one connects");
        }
    }

    let period = config.period();
    let start = Instant::now();
    let mut k: u64 = 0;
    while source.peek().is_some() && !stop.load(Ordering::Relaxed) {
        let t_tick = first.t + k as f64 * period;
        while let Some(d) = source.next_if(|d| d.t < t_tick + period / 2.0) {
            server.ingest(&d);
        }
        server.broadcast_frame(t_tick)?;
        k += 1;
        if config.pace {
            let due = start + Duration::from_secs_f64(k as f64 * period);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }
    server.shutdown();
    let summary = server.summary();
    info!(
        "session done: {} frames, {} clients, {} dropped detections",
        summary.frames, summary.clients_served, summary.dropped_detections
    );
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast(bind: &str) -> ServerConfig {
        ServerConfig {
            bind_address: bind.into(),
            pace: false,
            wait_for_client: None,
            ..Default::default()
        }
    }

    #[test]
    fn config_bounds() {
        let mut c = ServerConfig::default();
        c.tick_rate = 0.0;
        assert!(c.validate().is_err());
        c.tick_rate = 101.0;
        assert!(c.validate().is_err());
        c.tick_rate = 20.0;
        c.max_targets = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_source_exits_cleanly() {
        let stop = AtomicBool::new(false);
        let s = run_server(fast("127.0.0.1:0"), Vec::new(), &stop).unwrap();
        assert_eq!(s.frames, 0);
    }

    #[test]
    fn ten_seconds_at_twenty_hz() {
        let dets: Vec<Detection> = (0..200)
            .flat_map(|k| {
                let t = k as f64 * 0.05;
                [
                    Detection { t, id: 1, p: [0.0, 0.0, 1.4 * t] },
                    Detection { t, id: 2, p: [10.0 - 3.0 * t, 0.0, 0.0] },
                ]
            })
            .collect();
        let stop = AtomicBool::new(false);
        let s = run_server(fast("127.0.0.1:0"), dets, &stop).unwrap();
        assert!((199..=201).contains(&s.frames), "{} frames", s.frames);
        assert_eq!(s.frames_delivered, 0);
        assert_eq!(s.dropped_detections, 0);
    }

    #[test]
    fn bind_failure() {
        let _hold = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = _hold.local_addr().unwrap().to_string();
        assert!(matches!(TrackingServer::bind(fast(&addr)), Err(ServerError::Bind(..))));
    }
}
