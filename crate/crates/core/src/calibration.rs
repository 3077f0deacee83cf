//! Rigid alignment between coordinate frames from paired point samples.
//!
//! Both the LiDAR-to-headset and headset-to-headset calibrations reduce to the
//! same least-squares problem: find `R ∈ SO(3)` and `t` minimizing
//! `Σ ‖target_i − R·source_i − t‖²`. After removing centroids the rotation is
//! the orthogonal Procrustes solution, obtained by projecting the centered
//! cross-covariance onto SO(3) through its SVD.

use std::path::Path;

use nalgebra::{Matrix3, Vector3, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Rotation3, Vec3};

pub const MIN_SAMPLES: usize = 4;

/// Pairs whose timestamps differ by more than this are dropped (half of a
/// 20 Hz period).
pub const SYNC_WINDOW: f64 = 0.025;

/// A solution with a larger RMS residual is treated as a bad association.
pub const RESIDUAL_REJECT: f64 = 0.5;

/// Ratio of second to first singular value below which the centered source
/// points are considered collinear.
pub const COLLINEAR_RATIO: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("need at least {MIN_SAMPLES} sample pairs, got {0}")]
    TooFewSamples(usize),
    #[error("source and target lengths differ ({source_len} vs {target_len})")]
    LengthMismatch { source_len: usize, target_len: usize },
    #[error("sample points are coincident or collinear; rotation is unobservable")]
    DegenerateGeometry,
    #[error("non-finite sample coordinate")]
    NonFinite,
    #[error("session file: {0}")]
    Session(String),
}

/// Corresponding points in two frames: `target_i ≈ R·source_i + t`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairedSamples {
    pub source: Vec<Vec3>,
    pub target: Vec<Vec3>,
}

impl PairedSamples {
    pub fn new(source: Vec<Vec3>, target: Vec<Vec3>) -> Result<Self, CalibrationError> {
        let s = Self { source, target };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.source.len() != self.target.len() {
            return Err(CalibrationError::LengthMismatch {
                source_len: self.source.len(),
                target_len: self.target.len(),
            });
        }
        if self.source.len() < MIN_SAMPLES {
            return Err(CalibrationError::TooFewSamples(self.source.len()));
        }
        let finite = self
            .source
            .iter()
            .chain(&self.target)
            .all(|p| p.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(CalibrationError::NonFinite);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn push(&mut self, source: Vec3, target: Vec3) {
        self.source.push(source);
        self.target.push(target);
    }

    pub fn clear(&mut self) {
        self.source.clear();
        self.target.clear();
    }
}

/// Matches timestamped samples from two streams by nearest timestamp, keeping
/// pairs within [`SYNC_WINDOW`]. Both inputs must be sorted by time.
pub fn pair_by_time(source: &[(f64, Vec3)], target: &[(f64, Vec3)]) -> PairedSamples {
    let mut out = PairedSamples::default();
    let mut j = 0;
    for &(ts, ps) in source {
        while j + 1 < target.len() && (target[j + 1].0 - ts).abs() <= (target[j].0 - ts).abs() {
            j += 1;
        }
        if let Some(&(tt, pt)) = target.get(j) {
            if (tt - ts).abs() <= SYNC_WINDOW {
                out.push(ps, pt);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub transform: RigidTransform,
    pub rms_residual: f64,
    pub n_samples: usize,
}

/// Factors of a 3×3 SVD, `M = U diag(s) Vᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix3<f64>,
    pub singular_values: Vector3<f64>,
    pub v_t: Matrix3<f64>,
}

impl SvdFactors {
    pub fn of(m: &Matrix3<f64>) -> Self {
        let svd = SVD::new(*m, true, true);
        Self {
            u: svd.u.expect("requested U"),
            singular_values: svd.singular_values,
            v_t: svd.v_t.expect("requested Vᵀ"),
        }
    }
}

/// Nearest proper rotation `U D Vᵀ`, where `D` flips the direction of the
/// smallest singular value when `U Vᵀ` would be a reflection.
pub fn reflect_guard(f: &SvdFactors) -> Rotation3 {
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (f.u * f.v_t).determinant() < 0.0 {
        d[f.singular_values.imin()] = -1.0;
    }
    let r = f.u * Matrix3::from_diagonal(&d) * f.v_t;
    // Re-orthonormalize to wash out accumulated rounding from the SVD.
    let r = orthonormalize(&r);
    Rotation3::from_matrix_unchecked(r)
}

fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x = r.column(0).normalize();
    let y = (r.column(1) - x * x.dot(&r.column(1))).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

pub fn solve_rigid_alignment(samples: &PairedSamples) -> Result<CalibrationResult, CalibrationError> {
    samples.validate()?;
    let n = samples.len();
    let src_c = centroid(&samples.source);
    let tgt_c = centroid(&samples.target);

    let mut spread = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, t) in samples.source.iter().zip(&samples.target) {
        let a = s - src_c;
        let b = t - tgt_c;
        spread += a * a.transpose();
        cross += b * a.transpose();
    }

    // Eigenvalues of the scatter matrix are the squared singular values of
    // the centered source matrix.
    let mut sv: Vec<f64> = spread.symmetric_eigenvalues().iter().map(|e| e.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= f64::EPSILON || sv[1] < COLLINEAR_RATIO * sv[0] {
        return Err(CalibrationError::DegenerateGeometry);
    }

    let rotation = reflect_guard(&SvdFactors::of(&cross));
    let translation = tgt_c - rotation.rotate(&src_c);
    let transform = RigidTransform::new(rotation, translation);
    let sse: f64 = samples
        .source
        .iter()
        .zip(&samples.target)
        .map(|(s, t)| (t - transform.apply(s)).norm_squared())
        .sum();
    Ok(CalibrationResult {
        transform,
        rms_residual: (sse / n as f64).sqrt(),
        n_samples: n,
    })
}

/// Aligns a secondary headset to the primary one. Index 0 of both lists is
/// the shared reference point where the users stood together; the rest are
/// synchronized samples of the joint calibration motion. Returns the map
/// from secondary coordinates into primary coordinates.
pub fn calibrate_multi_headset(
    primary_poses: &[Vec3],
    secondary_poses: &[Vec3],
) -> Result<CalibrationResult, CalibrationError> {
    let samples = PairedSamples::new(secondary_poses.to_vec(), primary_poses.to_vec())?;
    solve_rigid_alignment(&samples)
}

/// A reference pose recorded by one headset at the shared starting point.
/// Facing is stored for the record; the solver uses positions only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePose {
    pub position: Vec3,
    pub forward: Vec3,
}

/// Serialized result block of a calibration session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    pub t: [f64; 3],
    pub rms: f64,
}

impl From<&CalibrationResult> for SessionResult {
    fn from(r: &CalibrationResult) -> Self {
        let t = r.transform.translation;
        Self {
            rotation: r.transform.rotation.to_row_array(),
            t: [t.x, t.y, t.z],
            rms: r.rms_residual,
        }
    }
}

/// A recorded calibration session, replayable from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSession {
    pub source: Vec<[f64; 3]>,
    pub target: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<SessionResult>,
}

impl CalibrationSession {
    pub fn from_samples(samples: &PairedSamples, result: Option<&CalibrationResult>) -> Self {
        let arr = |v: &Vec3| [v.x, v.y, v.z];
        Self {
            source: samples.source.iter().map(arr).collect(),
            target: samples.target.iter().map(arr).collect(),
            result: result.map(SessionResult::from),
        }
    }

    pub fn samples(&self) -> PairedSamples {
        PairedSamples {
            source: self.source.iter().map(|p| Vec3::from(*p)).collect(),
            target: self.target.iter().map(|p| Vec3::from(*p)).collect(),
        }
    }

    pub fn stored_transform(&self) -> Option<Result<RigidTransform, CalibrationError>> {
        self.result.as_ref().map(|r| {
            let rotation =
                Rotation3::from_row_slice(&r.rotation).map_err(|e| CalibrationError::Session(e.to_string()))?;
            Ok(RigidTransform::new(rotation, Vec3::from(r.t)))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path).map_err(|e| CalibrationError::Session(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| CalibrationError::Session(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CalibrationError::Session(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CalibrationError::Session(e.to_string()))
    }
}
