//! Cue selection for one target: world-locked box when in view, screen-edge
//! arrow when close but out of view, nothing otherwise.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

use super::{ClientConfig, EgoTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrowSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrowVertical {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CueKind {
    BoundingBox { center: Vec3, extents: Vec3 },
    Arrow { side: ArrowSide, vertical: ArrowVertical, angle_deg: f64 },
    None,
}

impl CueKind {
    pub fn label(&self) -> &'static str {
        match self {
            CueKind::BoundingBox { .. } => "box",
            CueKind::Arrow { .. } => "arrow",
            CueKind::None => "none",
        }
    }

    pub fn is_visible(&self) -> bool {
        !matches!(self, CueKind::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub target_id: u32,
    /// Planar distance, meters.
    pub distance: f64,
    /// Horizontal bearing, degrees, positive to the right.
    pub theta: f64,
    pub kind: CueKind,
}

/// Display decision as a pure function of planar distance `d` (meters) and
/// bearing `theta` (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Box,
    Arrow(ArrowSide, ArrowVertical),
    Hidden,
}

pub fn decide(d: f64, theta: f64, config: &ClientConfig) -> Decision {
    let half_fov = config.fov_deg / 2.0;
    let is_close = d <= config.proximity_m;
    let is_in_view = theta.abs() <= half_fov;
    if is_in_view {
        Decision::Box
    } else if is_close {
        let side = if theta > 0.0 { ArrowSide::Right } else { ArrowSide::Left };
        let vertical = if theta.abs() < 180.0 - half_fov {
            ArrowVertical::Up
        } else {
            ArrowVertical::Down
        };
        Decision::Arrow(side, vertical)
    } else {
        Decision::Hidden
    }
}

pub fn decide_cue(target: &EgoTarget, config: &ClientConfig) -> Cue {
    let d = target.planar_distance();
    let theta = target.bearing_deg();
    let kind = match decide(d, theta, config) {
        Decision::Box => CueKind::BoundingBox {
            center: target.position,
            extents: config.box_extents,
        },
        Decision::Arrow(side, vertical) => CueKind::Arrow {
            side,
            vertical,
            angle_deg: theta,
        },
        Decision::Hidden => CueKind::None,
    };
    Cue {
        target_id: target.id,
        distance: d,
        theta,
        kind,
    }
}

/// Which targets currently have an arrow on screen. Re-placing an active
/// arrow is not a new activation.
#[derive(Debug, Clone, Default)]
pub struct ArrowDisplay {
    active: BTreeSet<u32>,
}

impl ArrowDisplay {
    /// Returns true when this cue newly activates an arrow.
    pub fn apply(&mut self, cue: &Cue) -> bool {
        match cue.kind {
            CueKind::Arrow { .. } => self.active.insert(cue.target_id),
            _ => {
                self.active.remove(&cue.target_id);
                false
            }
        }
    }

    pub fn is_active(&self, id: u32) -> bool {
        self.active.contains(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(d: f64, theta_deg: f64) -> EgoTarget {
        let th = theta_deg.to_radians();
        EgoTarget {
            id: 2,
            position: Vec3::new(d * th.sin(), 0.0, d * th.cos()),
            velocity: Vec3::zeros(),
        }
    }

    fn kind(d: f64, th: f64) -> CueKind {
        decide_cue(&at(d, th), &ClientConfig::default()).kind
    }

    #[test]
    fn algorithm_examples() {
        assert!(matches!(kind(2.0, 0.0), CueKind::BoundingBox { .. }));
        assert!(matches!(
            kind(2.0, 120.0),
            CueKind::Arrow { side: ArrowSide::Right, vertical: ArrowVertical::Up, .. }
        ));
        assert!(matches!(
            kind(2.0, -170.0),
            CueKind::Arrow { side: ArrowSide::Left, vertical: ArrowVertical::Down, .. }
        ));
        assert_eq!(kind(5.0, 120.0), CueKind::None);
    }

    #[test]
    fn far_targets_in_view_still_get_boxes() {
        assert!(matches!(kind(40.0, 10.0), CueKind::BoundingBox { .. }));
    }

    #[test]
    fn fov_edge_is_in_view() {
        let cfg = ClientConfig::default();
        assert_eq!(decide(1.0, 45.0, &cfg), Decision::Box);
        assert_eq!(decide(1.0, -45.0, &cfg), Decision::Box);
        assert_eq!(decide(1.0, 45.0001, &cfg), Decision::Arrow(ArrowSide::Right, ArrowVertical::Up));
        assert_eq!(decide(3.0, -135.0, &cfg), Decision::Arrow(ArrowSide::Left, ArrowVertical::Down));
        assert_eq!(decide(3.0001, -135.0, &cfg), Decision::Hidden);
    }

    #[test]
    fn arrow_activation_is_idempotent() {
        let mut disp = ArrowDisplay::default();
        let cfg = ClientConfig::default();
        let c = decide_cue(&at(2.0, 100.0), &cfg);
        assert!(disp.apply(&c));
        assert!(!disp.apply(&decide_cue(&at(1.8, 110.0), &cfg)));
        assert!(disp.is_active(2));
        disp.apply(&decide_cue(&at(2.0, 0.0), &cfg));
        assert!(!disp.is_active(2));
    }
}
