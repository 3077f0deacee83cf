use nalgebra::{Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use roadcue_core::filtering::{
    predict, step, update, FilterError, KalmanState, KalmanTrack, Measurement, NoiseParams,
};
use roadcue_core::geometry::Vec3;

fn gauss3(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    let n = Normal::new(0.0, s).unwrap();
    Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

fn min_eigen(p: &Matrix6<f64>) -> f64 {
    p.symmetric_eigenvalues().min()
}

/// Textbook prediction with explicit loops: x' = A x, P' = A P Aᵀ + Q.
fn oracle_predict(x: &[f64; 6], p: &[[f64; 6]; 6], dt: f64, lambda: f64, mu: f64) -> ([f64; 6], [[f64; 6]; 6]) {
    let mut a = [[0.0; 6]; 6];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
        if i < 3 {
            row[i + 3] = dt;
        }
    }
    let mut xn = [0.0; 6];
    for i in 0..6 {
        for j in 0..6 {
            xn[i] += a[i][j] * x[j];
        }
    }
    let mut ap = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            for k in 0..6 {
                ap[i][j] += a[i][k] * p[k][j];
            }
        }
    }
    let mut pn = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            for k in 0..6 {
                pn[i][j] += ap[i][k] * a[j][k];
            }
        }
        pn[i][i] += if i < 3 { lambda * lambda } else { mu * mu };
    }
    (xn, pn)
}

#[test]
fn prediction_matches_explicit_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = NoiseParams::default();
    for _ in 0..200 {
        let x: [f64; 6] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
        let l: [[f64; 6]; 6] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let lm = Matrix6::from_fn(|i, j| l[i][j]);
        let pm = lm * lm.transpose();
        let p: [[f64; 6]; 6] = std::array::from_fn(|i| std::array::from_fn(|j| pm[(i, j)]));
        let state = KalmanState {
            estimate: Vector6::from_row_slice(&x),
            covariance: pm,
        };
        let got = predict(&state, 0.05, &noise).unwrap();
        let (xo, po) = oracle_predict(&x, &p, 0.05, noise.lambda, noise.mu);
        for i in 0..6 {
            assert!((got.estimate[i] - xo[i]).abs() < 1e-10);
            for j in 0..6 {
                assert!((got.covariance[(i, j)] - po[i][j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn spec_examples() {
    let noise = NoiseParams::default();
    let mut s = KalmanState::from_measurement(&Vec3::zeros(), &noise);
    s.estimate[3] = 1.0;
    let p = predict(&s, 0.05, &noise).unwrap();
    assert!((p.position() - Vec3::new(0.05, 0.0, 0.0)).norm() < 1e-15);

    // Prior exactly at the measurement leaves the estimate alone.
    let z = Measurement {
        position: p.position(),
        timestamp: 0.05,
    };
    let u = update(&p, &z, &noise).unwrap();
    assert!((u.estimate - p.estimate).norm() < 1e-12);

    // Huge prior: the posterior snaps to the measurement.
    let mut wide = p;
    wide.covariance = Matrix6::identity() * 1e12;
    let z = Measurement {
        position: Vec3::new(4.0, -2.0, 1.0),
        timestamp: 0.05,
    };
    assert!((update(&wide, &z, &noise).unwrap().position() - z.position).norm() < 1e-6);

    assert!(matches!(predict(&s, 0.0, &noise), Err(FilterError::NonPositiveDt(_))));
}

#[test]
fn covariance_stays_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for noise in [
        NoiseParams::default(),
        NoiseParams::new(1e-4, 1e-3, 1e-3).unwrap(),
        NoiseParams::new(2.0, 5.0, 3.0).unwrap(),
    ] {
        let mut s = KalmanState::from_measurement(&Vec3::zeros(), &noise);
        for _ in 0..10_000 {
            let dt = rng.random_range(0.001..0.5);
            let z = Measurement {
                position: gauss3(&mut rng, 50.0),
                timestamp: 0.0,
            };
            s = step(&s, &z, dt, &noise).unwrap();
            let p = &s.covariance;
            assert!((p - p.transpose()).amax() < 1e-12);
            assert!(min_eigen(p) >= -1e-9, "{}", min_eigen(p));
        }
    }
}

#[test]
fn innovations_are_white_on_model_data() {
    let noise = NoiseParams::default();
    let dt = 0.05;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut pos = Vec3::zeros();
        let mut vel = Vec3::new(1.4, 0.0, 0.3);
        let mut track = KalmanTrack::new(
            &Measurement {
                position: pos + gauss3(&mut rng, noise.sigma),
                timestamp: 0.0,
            },
            noise,
        );
        let mut comps = Vec::new();
        for k in 1..=2000 {
            pos += vel * dt + gauss3(&mut rng, noise.lambda);
            vel += gauss3(&mut rng, noise.mu);
            let z = Measurement {
                position: pos + gauss3(&mut rng, noise.sigma),
                timestamp: k as f64 * dt,
            };
            track.observe(&z).unwrap();
            if k > 20 {
                let n = track.last_innovation().unwrap().normalized().unwrap();
                comps.extend(n.iter().copied());
            }
        }
        let m = comps.iter().sum::<f64>() / comps.len() as f64;
        let var = comps.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (comps.len() - 1) as f64;
        assert!(m.abs() < 0.1, "seed {seed}: mean {m}");
        assert!((0.7..=1.3).contains(&var), "seed {seed}: variance {var}");
    }
}

#[test]
fn identical_inputs_identical_outputs() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = NoiseParams::default();
        let mut t = KalmanTrack::new(
            &Measurement {
                position: Vec3::zeros(),
                timestamp: 0.0,
            },
            noise,
        );
        for k in 1..500 {
            t.observe(&Measurement {
                position: gauss3(&mut rng, 1.0),
                timestamp: k as f64 * 0.05,
            })
            .unwrap();
        }
        *t.state()
    };
    assert_eq!(run(), run());
}

#[test]
fn filtered_beats_raw_on_straight_walk() {
    let noise = NoiseParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = Vec3::new(1.5, 0.0, 0.0);
    let mut t = KalmanTrack::new(
        &Measurement {
            position: gauss3(&mut rng, 0.05),
            timestamp: 0.0,
        },
        noise,
    );
    let (mut raw, mut filt) = (0.0, 0.0);
    for k in 1..100 {
        let truth = v * (k as f64 * 0.05);
        let z = truth + gauss3(&mut rng, 0.05);
        let s = t
            .observe(&Measurement {
                position: z,
                timestamp: k as f64 * 0.05,
            })
            .unwrap();
        raw += (z - truth).norm_squared();
        filt += (s.position() - truth).norm_squared();
    }
    assert!(filt < raw, "filtered {filt} raw {raw}");
}

#[test]
fn stationary_velocity_converges() {
    let noise = NoiseParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut t = KalmanTrack::new(
        &Measurement {
            position: gauss3(&mut rng, 0.05),
            timestamp: 0.0,
        },
        noise,
    );
    for k in 1..=50 {
        t.observe(&Measurement {
            position: gauss3(&mut rng, 0.05),
            timestamp: k as f64 * 0.05,
        })
        .unwrap();
    }
    assert!(t.state().velocity().norm() < 1.0);
}
