//! Constant-velocity Kalman filter over 3D position measurements.
//!
//! State is `[x, y, z, vx, vy, vz]`. Only position is observed, so
//! `H = [I₃ | 0₃]`. Process noise is `Q = diag(λ², λ², λ², µ², µ², µ²)` and
//! measurement noise is `R = σ² I₃`.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Velocity bound used for the initial velocity variance.
pub const INIT_MAX_SPEED: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("measurement at t={got} is older than the last update at t={last}")]
    OutOfOrder { last: f64, got: f64 },
    #[error("noise parameters must be strictly positive")]
    InvalidNoise,
}

/// How `Q` relates to the time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProcessNoiseModel {
    /// `Q` added once per prediction regardless of `dt`.
    #[default]
    PerStep,
    /// `Q · dt`, treating λ² and µ² as per-second rates.
    DtScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Position process noise, meters.
    pub lambda: f64,
    /// Velocity process noise, m/s.
    pub mu: f64,
    /// Measurement noise, meters.
    pub sigma: f64,
    #[serde(default)]
    pub model: ProcessNoiseModel,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            mu: 0.5,
            sigma: 0.05,
            model: ProcessNoiseModel::PerStep,
        }
    }
}

impl NoiseParams {
    pub fn new(lambda: f64, mu: f64, sigma: f64) -> Result<Self, FilterError> {
        let p = Self {
            lambda,
            mu,
            sigma,
            model: ProcessNoiseModel::PerStep,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let ok = [self.lambda, self.mu, self.sigma]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(FilterError::InvalidNoise)
        }
    }

    pub fn process_covariance(&self, dt: f64) -> Matrix6<f64> {
        let l2 = self.lambda * self.lambda;
        let m2 = self.mu * self.mu;
        let q = Matrix6::from_diagonal(&Vector6::new(l2, l2, l2, m2, m2, m2));
        match self.model {
            ProcessNoiseModel::PerStep => q,
            ProcessNoiseModel::DtScaled => q * dt,
        }
    }

    pub fn measurement_covariance(&self) -> Matrix3<f64> {
        Matrix3::identity() * (self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub position: Vec3,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub estimate: Vector6<f64>,
    pub covariance: Matrix6<f64>,
}

impl KalmanState {
    /// Seeds position from a measurement with zero velocity and a wide
    /// velocity prior.
    pub fn from_measurement(position: &Vec3, noise: &NoiseParams) -> Self {
        let s2 = noise.sigma * noise.sigma;
        let v2 = INIT_MAX_SPEED * INIT_MAX_SPEED;
        Self {
            estimate: Vector6::new(position.x, position.y, position.z, 0.0, 0.0, 0.0),
            covariance: Matrix6::from_diagonal(&Vector6::new(s2, s2, s2, v2, v2, v2)),
        }
    }

    pub fn position(&self) -> Vec3 {
        self.estimate.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vec3 {
        self.estimate.fixed_rows::<3>(3).into_owned()
    }
}

/// Innovation `z - H x̂` and its covariance `S = H P Hᵀ + R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    pub residual: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

impl Innovation {
    /// Residual whitened by the Cholesky factor of `S`; components are unit
    /// variance when the filter is consistent.
    pub fn normalized(&self) -> Option<Vector3<f64>> {
        let chol = self.covariance.cholesky()?;
        chol.l().solve_lower_triangular(&self.residual)
    }

    /// Normalized innovation squared, `νᵀ S⁻¹ ν`.
    pub fn nis(&self) -> Option<f64> {
        self.normalized().map(|n| n.norm_squared())
    }
}

pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut a = Matrix6::identity();
    for i in 0..3 {
        a[(i, i + 3)] = dt;
    }
    a
}

fn observation() -> Matrix3x6<f64> {
    let mut h = Matrix3x6::zeros();
    for i in 0..3 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(p: Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

pub fn predict(state: &KalmanState, dt: f64, noise: &NoiseParams) -> Result<KalmanState, FilterError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FilterError::NonPositiveDt(dt));
    }
    let a = transition(dt);
    Ok(KalmanState {
        estimate: a * state.estimate,
        covariance: symmetrize(a * state.covariance * a.transpose() + noise.process_covariance(dt)),
    })
}

pub fn update(state: &KalmanState, z: &Measurement, noise: &NoiseParams) -> Result<KalmanState, FilterError> {
    update_with_innovation(state, z, noise).map(|(s, _)| s)
}

pub fn update_with_innovation(
    state: &KalmanState,
    z: &Measurement,
    noise: &NoiseParams,
) -> Result<(KalmanState, Innovation), FilterError> {
    let h = observation();
    let p = &state.covariance;
    let s = h * p * h.transpose() + noise.measurement_covariance();
    let s_inv = s.try_inverse().ok_or(FilterError::SingularInnovation)?;
    let gain: Matrix6x3<f64> = p * h.transpose() * s_inv;
    let residual = z.position - h * state.estimate;
    let posterior = KalmanState {
        estimate: state.estimate + gain * residual,
        covariance: symmetrize((Matrix6::identity() - gain * h) * p),
    };
    Ok((
        posterior,
        Innovation {
            residual,
            covariance: s,
        },
    ))
}

/// Predict over `dt`, then correct with `z`.
pub fn step(
    state: &KalmanState,
    z: &Measurement,
    dt: f64,
    noise: &NoiseParams,
) -> Result<KalmanState, FilterError> {
    let prior = predict(state, dt, noise)?;
    update(&prior, z, noise)
}

/// One filter instance bound to a single measurement stream.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    state: KalmanState,
    last_update: f64,
    noise: NoiseParams,
    last_innovation: Option<Innovation>,
}

impl KalmanTrack {
    pub fn new(first: &Measurement, noise: NoiseParams) -> Self {
        Self {
            state: KalmanState::from_measurement(&first.position, &noise),
            last_update: first.timestamp,
            noise,
            last_innovation: None,
        }
    }

    /// Advances to `z.timestamp` and corrects. Older measurements are rejected
    /// and leave the track unchanged.
    pub fn observe(&mut self, z: &Measurement) -> Result<&KalmanState, FilterError> {
        if z.timestamp < self.last_update {
            return Err(FilterError::OutOfOrder {
                last: self.last_update,
                got: z.timestamp,
            });
        }
        let dt = z.timestamp - self.last_update;
        let prior = predict(&self.state, dt, &self.noise)?;
        let (post, innov) = update_with_innovation(&prior, z, &self.noise)?;
        self.state = post;
        self.last_update = z.timestamp;
        self.last_innovation = Some(innov);
        Ok(&self.state)
    }

    pub fn state(&self) -> &KalmanState {
        &self.state
    }

    pub fn last_update(&self) -> f64 {
        self.last_update
    }

    pub fn last_innovation(&self) -> Option<&Innovation> {
        self.last_innovation.as_ref()
    }
}
