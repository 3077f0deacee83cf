//! Vectors, rotations, rigid transforms and bearing angles.
//!
//! Frames are right-handed with `+y` as the world up axis; a headset facing
//! `+z` has `+x` on its right.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or direction in meters (or m/s when used as a velocity).
pub type Vec3 = Vector3<f64>;

/// World up axis shared by every frame in the system.
pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

/// Tolerance for orthogonality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-9;

/// Ranges below this are treated as coincident with the observer.
pub const MIN_RANGE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a proper rotation (orthogonality error {ortho:.3e}, det {det:.12})")]
    NotRotation { ortho: f64, det: f64 },
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
    #[error("forward vector must have unit length, got norm {0}")]
    NotUnit(f64),
    #[error("target coincides with the observer")]
    ZeroRange,
    #[error("direction has no horizontal component")]
    Vertical,
}

/// A proper rotation matrix, a member of SO(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthogonality and `det = +1` within [`ROTATION_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotRotation { ortho, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix already known to be a rotation (e.g. produced by an SVD
    /// projection). Checked in debug builds.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        debug_assert!(Self::from_matrix(m).is_ok(), "not a rotation: {m}");
        Self(m)
    }

    /// Rotation by `angle` radians about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let k = axis.normalize();
        let (s, c) = angle.sin_cos();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Self(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
    }

    /// Rotation about the world up axis.
    pub fn from_yaw(angle: f64) -> Self {
        Self::from_axis_angle(&UP, angle)
    }

    /// Row-major elements.
    pub fn from_row_slice(rows: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(rows))
    }

    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn compose(&self, other: &Rotation3) -> Self {
        Self(self.0 * other.0)
    }

    /// Geodesic angle to `other`, in radians.
    pub fn angle_to(&self, other: &Rotation3) -> f64 {
        let rel = self.0.transpose() * other.0;
        let skew = Vec3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]);
        (skew.norm() / 2.0).atan2((rel.trace() - 1.0) / 2.0)
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl TryFrom<[f64; 9]> for Rotation3 {
    type Error = GeometryError;
    fn try_from(rows: [f64; 9]) -> Result<Self, Self::Error> {
        Self::from_row_slice(&rows)
    }
}

impl From<Rotation3> for [f64; 9] {
    fn from(r: Rotation3) -> Self {
        r.to_row_array()
    }
}

/// Rotation followed by translation: `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RigidTransform {
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Rotation3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation3::identity(), t)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        apply_transform(self, p)
    }

    /// Applies only the rotation, for directions and velocities.
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    pub fn inverse(&self) -> Self {
        invert_transform(self)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn then_after(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }
}

pub fn apply_transform(t: &RigidTransform, p: &Vec3) -> Vec3 {
    t.rotation.rotate(p) + t.translation
}

pub fn invert_transform(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        translation: -rt.rotate(&t.translation),
        rotation: rt,
    }
}

/// Headset position and facing direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub forward: Vec3,
}

impl Pose {
    pub fn new(position: Vec3, forward: Vec3) -> Result<Self, GeometryError> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("position"));
        }
        let n = forward.norm();
        if (n - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(Self { position, forward })
    }

    /// Pose facing `forward` after normalization.
    pub fn facing(position: Vec3, forward: Vec3) -> Self {
        Self {
            position,
            forward: forward.normalize(),
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            position: t.apply(&self.position),
            forward: t.apply_vector(&self.forward).normalize(),
        }
    }

    /// Horizontal right/up/forward basis of this pose, as rows of a rotation
    /// taking world vectors into ego coordinates (x right, y up, z forward).
    pub fn heading_basis(&self) -> Result<Rotation3, GeometryError> {
        let fwd = horizontal(&self.forward)?;
        let right = UP.cross(&fwd);
        let m = Matrix3::from_rows(&[right.transpose(), UP.transpose(), fwd.transpose()]);
        Ok(Rotation3::from_matrix_unchecked(m))
    }

    /// World frame to ego frame: translate to the headset, rotate into its heading.
    pub fn world_to_ego(&self) -> Result<RigidTransform, GeometryError> {
        let basis = self.heading_basis()?;
        Ok(RigidTransform {
            translation: -basis.rotate(&self.position),
            rotation: basis,
        })
    }
}

/// Projects onto the horizontal plane and normalizes.
pub fn horizontal(v: &Vec3) -> Result<Vec3, GeometryError> {
    let h = v - UP * v.dot(&UP);
    let n = h.norm();
    if n < MIN_RANGE {
        return Err(GeometryError::Vertical);
    }
    Ok(h / n)
}

/// Horizontal distance between two points.
pub fn planar_distance(a: &Vec3, b: &Vec3) -> f64 {
    let d = b - a;
    (d - UP * d.dot(&UP)).norm()
}

/// Signed horizontal bearing of `target_pos` from `ego`, in degrees within
/// `(-180, 180]`. Positive values lie to the right of the facing direction.
pub fn relative_bearing(ego: &Pose, target_pos: &Vec3) -> Result<f64, GeometryError> {
    let to_target = target_pos - ego.position;
    if to_target.norm() < MIN_RANGE {
        return Err(GeometryError::ZeroRange);
    }
    let fwd = horizontal(&ego.forward)?;
    let dir = horizontal(&to_target)?;
    let right = UP.cross(&fwd);
    let deg = dir.dot(&right).atan2(dir.dot(&fwd)).to_degrees();
    Ok(if deg <= -180.0 { deg + 360.0 } else { deg })
}

/// Unsigned 3D angle between the facing direction and the line of sight, in
/// degrees within `[0, 180]`. Includes pitch, unlike [`relative_bearing`].
pub fn view_angle_3d(ego: &Pose, target_pos: &Vec3) -> Result<f64, GeometryError> {
    let to_target = target_pos - ego.position;
    let n = to_target.norm();
    if n < MIN_RANGE {
        return Err(GeometryError::ZeroRange);
    }
    let c = (to_target.dot(&ego.forward) / (n * ego.forward.norm())).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}
