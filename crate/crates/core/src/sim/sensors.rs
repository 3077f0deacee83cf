use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, RigidTransform, Rotation3, Vec3};

pub fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    let n = Normal::new(0.0, sigma).expect("finite non-negative sigma");
    Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// Roadside scanner with a `z`-up frame, yawed about its vertical axis and
/// mounted at `mount` in the site frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarRig {
    pub site_to_lidar: RigidTransform,
    pub mount: Vec3,
    pub sigma: f64,
}

impl LidarRig {
    pub fn new(yaw: f64, mount: Vec3, sigma: f64) -> Self {
        let y_up_to_z_up = Rotation3::from_axis_angle(&Vec3::x(), FRAC_PI_2);
        let rotation = Rotation3::from_axis_angle(&Vec3::z(), yaw).compose(&y_up_to_z_up);
        let translation = -rotation.rotate(&mount);
        Self {
            site_to_lidar: RigidTransform::new(rotation, translation),
            mount,
            sigma,
        }
    }

    pub fn measure<R: Rng + ?Sized>(&self, site_point: &Vec3, rng: &mut R) -> Vec3 {
        self.site_to_lidar.apply(site_point) + gaussian3(rng, self.sigma)
    }
}

/// Headset tracker: a gravity-aligned world frame anchored wherever the
/// device started, with white position noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SlamRig {
    pub site_to_headset: RigidTransform,
    pub sigma: f64,
}

impl SlamRig {
    pub fn new(yaw: f64, origin: Vec3, sigma: f64) -> Self {
        Self {
            site_to_headset: RigidTransform::new(Rotation3::from_yaw(yaw), origin),
            sigma,
        }
    }

    pub fn measure_position<R: Rng + ?Sized>(&self, site_point: &Vec3, rng: &mut R) -> Vec3 {
        self.site_to_headset.apply(site_point) + gaussian3(rng, self.sigma)
    }

    pub fn measure<R: Rng + ?Sized>(&self, site_pose: &Pose, rng: &mut R) -> Pose {
        Pose::facing(
            self.measure_position(&site_pose.position, rng),
            self.site_to_headset.apply_vector(&site_pose.forward),
        )
    }
}

/// A tracking reset: the reported pose jumps by `offset` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlamReset {
    pub t: f64,
    pub offset: Vec3,
}

impl SlamReset {
    pub fn anchor(&self) -> Pose {
        Pose::facing(self.offset, Vec3::z())
    }
}

/// Poisson reset times on `[t0, t1)` with horizontal jumps up to `max_jump`.
pub fn reset_schedule<R: Rng + ?Sized>(rng: &mut R, rate_per_min: f64, t0: f64, t1: f64, max_jump: f64) -> Vec<SlamReset> {
    let mut out = Vec::new();
    if rate_per_min <= 0.0 {
        return out;
    }
    let rate = rate_per_min / 60.0;
    let mut t = t0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / rate;
        if t >= t1 {
            return out;
        }
        let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mag: f64 = rng.random_range(0.0..=max_jump);
        out.push(SlamReset {
            t,
            offset: Vec3::new(mag * dir.cos(), 0.0, mag * dir.sin()),
        });
    }
}
