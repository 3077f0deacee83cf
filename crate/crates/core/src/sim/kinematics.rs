//! Agents move along fixed polylines at constant speed until they brake to a
//! stop at a fixed deceleration. Everything is closed-form in time.

use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec3>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// At least two distinct consecutive points.
    pub fn new(points: Vec<Vec3>) -> Self {
        assert!(points.len() >= 2);
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let len = (w[1] - w[0]).norm();
            assert!(len > 0.0, "repeated polyline vertex");
            cumulative.push(cumulative.last().unwrap() + len);
        }
        Self { points, cumulative }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment(&self, s: f64) -> usize {
        let i = self.cumulative.partition_point(|c| *c <= s);
        i.saturating_sub(1).min(self.points.len() - 2)
    }

    /// Point at arc length `s`; extrapolates past either end.
    pub fn point_at(&self, s: f64) -> Vec3 {
        let i = self.segment(s);
        self.points[i] + self.direction(i) * (s - self.cumulative[i])
    }

    pub fn tangent_at(&self, s: f64) -> Vec3 {
        self.direction(self.segment(s))
    }

    fn direction(&self, i: usize) -> Vec3 {
        (self.points[i + 1] - self.points[i]).normalize()
    }
}

/// Speed profile: cruise at `speed` from `start`, then brake at `decel` from
/// `brake_at` (if set) until stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub path: Polyline,
    pub start: f64,
    pub speed: f64,
    pub decel: f64,
    pub brake_at: Option<f64>,
}

impl Motion {
    pub fn new(path: Polyline, start: f64, speed: f64, decel: f64) -> Self {
        Self {
            path,
            start,
            speed,
            decel,
            brake_at: None,
        }
    }

    /// Arc length travelled by time `t`.
    pub fn distance(&self, t: f64) -> f64 {
        let tau = (t - self.start).max(0.0);
        match self.brake_at {
            Some(b) if t > b => {
                let cruise = (b - self.start).max(0.0);
                let dt = (t - b.max(self.start)).min(self.speed / self.decel);
                self.speed * cruise + self.speed * dt - 0.5 * self.decel * dt * dt
            }
            _ => self.speed * tau,
        }
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        if t < self.start {
            return 0.0;
        }
        match self.brake_at {
            Some(b) if t > b => (self.speed - self.decel * (t - b.max(self.start))).max(0.0),
            _ => self.speed,
        }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.path.point_at(self.distance(t))
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        self.path.tangent_at(self.distance(t)) * self.speed_at(t)
    }

    /// Heading at `t`, valid even when stopped.
    pub fn heading(&self, t: f64) -> Vec3 {
        self.path.tangent_at(self.distance(t))
    }

    /// Begin braking at `t` unless already braking.
    pub fn brake_from(&mut self, t: f64) {
        if self.brake_at.is_none() {
            self.brake_at = Some(t);
        }
    }
}
