use serde::{Deserialize, Serialize};

use crate::geometry::{horizontal, Pose, RigidTransform, Rotation3, Vec3};

/// Headset self-tracking state.
///
/// `pose` is what the tracker measures in its own world frame; `slam_offset`
/// accumulates re-anchoring jumps, so the pose the rest of the client sees is
/// `slam_offset ∘ pose`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: Pose,
    pub slam_offset: RigidTransform,
}

impl EgoState {
    pub fn new(pose: Pose) -> Self {
        Self {
            pose,
            slam_offset: RigidTransform::identity(),
        }
    }

    pub fn reported_pose(&self) -> Pose {
        self.pose.transformed(&self.slam_offset)
    }

    pub fn set_pose(&mut self, pose: Pose) {
        self.pose = pose;
    }
}

/// Rigid jump described by an anchor pose: translate by its position and yaw
/// so that `+z` maps onto its horizontal facing.
pub fn anchor_jump(anchor: &Pose) -> RigidTransform {
    let fwd = horizontal(&anchor.forward).unwrap_or(Vec3::z());
    RigidTransform::new(Rotation3::from_yaw(fwd.x.atan2(fwd.z)), anchor.position)
}

/// Re-anchors the tracker: the measured trajectory stays continuous while the
/// reported one jumps by `new_anchor`.
pub fn apply_slam_reset(ego: &EgoState, new_anchor: &Pose) -> EgoState {
    EgoState {
        pose: ego.pose,
        slam_offset: anchor_jump(new_anchor).then_after(&ego.slam_offset),
    }
}
