use proptest::prelude::*;
use roadcue_core::client::{transform_targets, EgoState};
use roadcue_core::geometry::{
    apply_transform, invert_transform, relative_bearing, Pose, RigidTransform, Rotation3, Vec3,
};
use roadcue_core::server::wire::{TargetEntry, TargetMessage};

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation3> {
    (vec3(1.0), -3.2f64..3.2).prop_filter_map("zero axis", |(axis, angle)| {
        (axis.norm() > 1e-3).then(|| Rotation3::from_axis_angle(&axis.normalize(), angle))
    })
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (rotation(), vec3(100.0)).prop_map(|(r, t)| RigidTransform::new(r, t))
}

/// Row-major product written out by hand.
fn oracle_apply(t: &RigidTransform, p: &Vec3) -> Vec3 {
    let m = t.rotation.to_row_array();
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[3 * i] * p.x + m[3 * i + 1] * p.y + m[3 * i + 2] * p.z + t.translation[i];
    }
    Vec3::new(out[0], out[1], out[2])
}

/// Planar bearing from first principles: heading angle of the forward
/// vector and of the direction to the target, both measured from +z toward +x.
fn oracle_bearing(fwd: &Vec3, from: &Vec3, to: &Vec3) -> f64 {
    let heading = fwd.x.atan2(fwd.z);
    let dir = (to.x - from.x).atan2(to.z - from.z);
    let mut d = (dir - heading).to_degrees();
    while d <= -180.0 {
        d += 360.0;
    }
    while d > 180.0 {
        d -= 360.0;
    }
    d
}

#[test]
fn spec_examples() {
    let id = RigidTransform::identity();
    assert_eq!(apply_transform(&id, &Vec3::new(1.0, 2.0, 3.0)), Vec3::new(1.0, 2.0, 3.0));
    let rz = RigidTransform::new(
        Rotation3::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2),
        Vec3::new(1.0, 0.0, 0.0),
    );
    assert!((apply_transform(&rz, &Vec3::x()) - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    let inv = invert_transform(&RigidTransform::from_translation(Vec3::new(1.0, 2.0, 3.0)));
    assert!((inv.translation - Vec3::new(-1.0, -2.0, -3.0)).norm() < 1e-15);
}

#[test]
fn bearings_on_a_circle() {
    let ego = Pose::facing(Vec3::new(2.0, 1.6, -3.0), Vec3::new(0.3, 0.1, 1.0));
    for k in 0..36 {
        let a = (k as f64 * 10.0).to_radians();
        let target = ego.position + Vec3::new(7.0 * a.sin(), 0.4, 7.0 * a.cos());
        let got = relative_bearing(&ego, &target).unwrap();
        let want = oracle_bearing(&ego.forward, &ego.position, &target);
        let diff = (got - want).abs();
        assert!(diff < 1e-9 || (diff - 360.0).abs() < 1e-9, "k={k}: {got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rotation_is_isometry(r in rotation(), a in vec3(50.0), b in vec3(50.0)) {
        let (ra, rb) = (r.rotate(&a), r.rotate(&b));
        prop_assert!((ra.norm() - a.norm()).abs() < 1e-9);
        prop_assert!((ra.dot(&rb) - a.dot(&b)).abs() < 1e-9);
    }

    #[test]
    fn apply_matches_oracle(t in transform(), p in vec3(100.0)) {
        prop_assert!((apply_transform(&t, &p) - oracle_apply(&t, &p)).norm() < 1e-12);
    }

    #[test]
    fn inverse_round_trip(t in transform(), p in vec3(100.0)) {
        let back = apply_transform(&invert_transform(&t), &apply_transform(&t, &p));
        prop_assert!((back - p).norm() < 1e-9);
    }

    #[test]
    fn composition_order(a in transform(), b in transform(), p in vec3(10.0)) {
        let composed = a.then_after(&b).apply(&p);
        prop_assert!((composed - a.apply(&b.apply(&p))).norm() < 1e-9);
    }

    #[test]
    fn bearing_mirror_antisymmetry(yaw in -3.1f64..3.1, x in 0.1f64..20.0, z in -20.0f64..20.0) {
        let ego = Pose::facing(Vec3::new(0.0, 1.6, 0.0), Vec3::z());
        let right = relative_bearing(&ego, &Vec3::new(x, 0.0, z)).unwrap();
        let left = relative_bearing(&ego, &Vec3::new(-x, 0.0, z)).unwrap();
        prop_assert!((right + left).abs() < 1e-9);
        prop_assert!(right > 0.0 && right <= 180.0);
        let turned = Pose::facing(Vec3::zeros(), Rotation3::from_yaw(yaw).rotate(&Vec3::z()));
        let b = relative_bearing(&turned, &Vec3::new(x, 0.0, z)).unwrap();
        prop_assert!(b > -180.0 && b <= 180.0);
    }

    #[test]
    fn two_stage_mapping_matches_single_stage(
        calib in transform(),
        ego_p in vec3(30.0),
        yaw in -3.1f64..3.1,
        pts in proptest::collection::vec(vec3(40.0), 2..6),
    ) {
        let fwd = Rotation3::from_yaw(yaw).rotate(&Vec3::z());
        let ego = EgoState::new(Pose::facing(ego_p, fwd));
        let targets: Vec<TargetEntry> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| TargetEntry::new(i as u32 + 2, *p, Vec3::zeros(), false))
            .collect();
        let msg = TargetMessage { frame_seq: 0, timestamp: 0.0, targets };
        let out = transform_targets(&msg, Some(&calib), &ego).unwrap();

        // Single-stage oracle: heading rotation applied to (R p + t - ego).
        let right = Vec3::y().cross(&fwd).normalize();
        for (o, p) in out.iter().zip(&pts) {
            let w = oracle_apply(&calib, p) - ego_p;
            let want = Vec3::new(w.dot(&right), w.y, w.dot(&fwd));
            prop_assert!((o.position - want).norm() < 1e-9);
        }
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d0 = (pts[i] - pts[j]).norm();
                let d1 = (out[i].position - out[j].position).norm();
                prop_assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }
}
