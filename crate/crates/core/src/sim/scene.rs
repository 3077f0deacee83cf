//! Corner layout in the site frame (`y` up, crossing point at the origin)
//! and 2D visibility tests in the ground plane.

use nalgebra::Vector2;

use crate::geometry::Vec3;

use super::config::ScenarioConfig;

pub type Vec2 = Vector2<f64>;

/// Ground-plane projection `(x, z)`.
pub fn ground(p: &Vec3) -> Vec2 {
    Vec2::new(p.x, p.z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

fn cross(u: &Vec2, v: &Vec2) -> f64 {
    u.x * v.y - u.y * v.x
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    /// Proper or touching intersection of two closed segments.
    pub fn intersects(&self, other: &Segment) -> bool {
        let d1 = self.b - self.a;
        let d2 = other.b - other.a;
        let denom = cross(&d1, &d2);
        let r = other.a - self.a;
        if denom.abs() < 1e-12 {
            // Parallel: only collinear overlap counts.
            if cross(&r, &d1).abs() > 1e-12 {
                return false;
            }
            let len2 = d1.norm_squared();
            if len2 == 0.0 {
                return (self.a - other.a).norm() < 1e-12;
            }
            let t0 = r.dot(&d1) / len2;
            let t1 = (other.b - self.a).dot(&d1) / len2;
            let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            return hi >= 0.0 && lo <= 1.0;
        }
        let t = cross(&r, &d2) / denom;
        let u = cross(&r, &d1) / denom;
        (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
    }
}

/// Building corner between the two approach legs.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    /// Outward direction of the pedestrian leg.
    pub ped_dir: Vec3,
    /// Outward direction of the counterpart leg.
    pub cp_dir: Vec3,
    pub corner: Vec3,
    pub walls: [Segment; 2],
}

impl Site {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let alpha = cfg.corner_angle.to_radians();
        let ped_dir = Vec3::new(0.0, 0.0, -1.0);
        let cp_dir = Vec3::new(alpha.sin(), 0.0, -alpha.cos());
        let s = &cfg.site;
        let corner = ped_dir * (s.counterpart_wall_offset / alpha.sin()) + cp_dir * (s.pedestrian_wall_offset / alpha.sin());
        let c = ground(&corner);
        let walls = [
            Segment::new(c, c + ground(&ped_dir) * s.wall_length),
            Segment::new(c, c + ground(&cp_dir) * s.wall_length),
        ];
        Self {
            ped_dir,
            cp_dir,
            corner,
            walls,
        }
    }

    /// Unobstructed sight line between two points.
    pub fn line_of_sight(&self, p: &Vec3, q: &Vec3) -> bool {
        let seg = Segment::new(ground(p), ground(q));
        !self.walls.iter().any(|w| seg.intersects(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{Condition, Scenario};
    use approx::assert_abs_diff_eq;

    #[test]
    fn corner_offsets() {
        for s in Scenario::ALL {
            let cfg = ScenarioConfig::preset(s, Condition::A, 0);
            let site = Site::new(&cfg);
            // Distance from the pedestrian line (x = 0) and the counterpart line.
            assert_abs_diff_eq!(site.corner.x, cfg.site.pedestrian_wall_offset, epsilon = 1e-12);
            let c = ground(&site.corner);
            let d = ground(&site.cp_dir);
            assert_abs_diff_eq!(cross(&c, &d).abs(), cfg.site.counterpart_wall_offset, epsilon = 1e-12);
        }
    }

    #[test]
    fn occlusion_around_corner() {
        let site = Site::new(&ScenarioConfig::preset(Scenario::EScooter, Condition::A, 0));
        let ped = Vec3::new(0.0, 1.0, -10.0);
        assert!(!site.line_of_sight(&ped, &Vec3::new(20.0, 1.0, 0.0)));
        assert!(site.line_of_sight(&ped, &Vec3::new(0.0, 1.0, 5.0)));
        assert!(site.line_of_sight(&Vec3::new(0.0, 1.0, -1.0), &Vec3::new(3.0, 1.0, 0.0)));
    }

    #[test]
    fn segment_cases() {
        let s = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0));
        assert!(s.intersects(&Segment::new(Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0))));
        assert!(!s.intersects(&Segment::new(Vec2::new(3.0, -1.0), Vec2::new(3.0, 1.0))));
        assert!(s.intersects(&Segment::new(Vec2::new(1.5, 0.0), Vec2::new(4.0, 0.0))));
        assert!(!s.intersects(&Segment::new(Vec2::new(0.0, 1.0), Vec2::new(2.0, 1.0))));
    }
}
