use std::collections::BTreeMap;

use crate::filtering::{KalmanState, KalmanTrack, Measurement, NoiseParams};
use crate::geometry::Vec3;

use super::wire::{TargetEntry, TargetMessage};
use super::ServerError;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrack {
    pub target_id: u32,
    pub raw_position: Vec3,
    filter: KalmanTrack,
}

impl TargetTrack {
    pub fn filtered(&self) -> &KalmanState {
        self.filter.state()
    }

    pub fn last_update(&self) -> f64 {
        self.filter.last_update()
    }
}

/// Per-target filter bank. The first target ever detected is tagged as the
/// ego (headset wearer).
#[derive(Debug, Clone)]
pub struct Tracker {
    tracks: BTreeMap<u32, TargetTrack>,
    max_targets: usize,
    noise: NoiseParams,
    ego_id: Option<u32>,
    dropped: u64,
    stale: u64,
}

impl Tracker {
    pub fn new(max_targets: usize, noise: NoiseParams) -> Self {
        Self {
            tracks: BTreeMap::new(),
            max_targets,
            noise,
            ego_id: None,
            dropped: 0,
            stale: 0,
        }
    }

    pub fn ingest_detection(&mut self, id: u32, position: Vec3, timestamp: f64) -> Result<&TargetTrack, ServerError> {
        let z = Measurement { position, timestamp };
        if !self.tracks.contains_key(&id) {
            if self.tracks.len() >= self.max_targets {
                self.dropped += 1;
                return Err(ServerError::UnknownCapacity { id, max: self.max_targets });
            }
            self.ego_id.get_or_insert(id);
            self.tracks.insert(
                id,
                TargetTrack {
                    target_id: id,
                    raw_position: position,
                    filter: KalmanTrack::new(&z, self.noise),
                },
            );
            return Ok(&self.tracks[&id]);
        }
        let track = self.tracks.get_mut(&id).expect("checked above");
        if timestamp <= track.last_update() {
            self.stale += 1;
            return Err(ServerError::StaleDetection {
                id,
                last: track.last_update(),
                got: timestamp,
            });
        }
        track.filter.observe(&z)?;
        track.raw_position = position;
        Ok(track)
    }

    pub fn track(&self, id: u32) -> Option<&TargetTrack> {
        self.tracks.get(&id)
    }

    pub fn tracks(&self) -> impl Iterator<Item = &TargetTrack> {
        self.tracks.values()
    }

    pub fn ego_id(&self) -> Option<u32> {
        self.ego_id
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn stale(&self) -> u64 {
        self.stale
    }

    /// Current filtered state of every track, sorted by id.
    pub fn snapshot(&self, frame_seq: u64, timestamp: f64) -> TargetMessage {
        TargetMessage {
            frame_seq,
            timestamp,
            targets: self
                .tracks
                .values()
                .map(|t| {
                    let s = t.filtered();
                    TargetEntry::new(t.target_id, s.position(), s.velocity(), Some(t.target_id) == self.ego_id)
                })
                .collect(),
        }
    }
}
