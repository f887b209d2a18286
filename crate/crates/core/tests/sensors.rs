use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use conemap_core::color::ConeColor;
use conemap_core::sim::{
    noisy_velocity, observe_cones, OdometryBias, SensorProfile, SimRun, Simulator, SpeedProfile, TrackCone,
    TrackDefinition, VelocityNoise,
};
use conemap_core::{ColorClass, Pose2, Velocity2};

fn one_cone(x: f64, y: f64, color: ConeColor) -> TrackDefinition {
    TrackDefinition {
        cones: vec![TrackCone { x, y, color }],
        centerline: vec![[0.0, 0.0], [50.0, 0.0], [50.0, 50.0]],
        total_length: 170.7,
        width: None,
    }
}

fn std(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[test]
fn position_noise_matches_profile() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for profile in [SensorProfile::fusion(), SensorProfile::lidar_only(), SensorProfile::camera_only()] {
        let mut profile = profile;
        profile.false_positive_rate = 0.0;
        for r in [4.0, 9.0, 13.0] {
            let track = one_cone(r, 0.0, ConeColor::Blue);
            let (mut radial, mut lateral) = (Vec::new(), Vec::new());
            while radial.len() < 20_000 {
                for o in observe_cones(&mut rng, &track, &Pose2::IDENTITY, &profile, 0.0) {
                    radial.push(o.position.mean.x - r);
                    lateral.push(o.position.mean.y);
                }
            }
            let sigma = profile.position_noise.sigma(r);
            let want_radial = sigma * profile.position_noise.radial_factor;
            assert!((std(&radial) / want_radial - 1.0).abs() < 0.03, "{:?} r={r}", profile.mode);
            assert!((std(&lateral) / sigma - 1.0).abs() < 0.03, "{:?} r={r}", profile.mode);
        }
    }
}

#[test]
fn color_accuracy_matches_profile() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for profile in [SensorProfile::fusion(), SensorProfile::camera_only()] {
        let mut profile = profile;
        profile.false_positive_rate = 0.0;
        for r in [3.0, 6.0, 11.0, 14.0] {
            let track = one_cone(0.0, r, ConeColor::Yellow);
            let pose = Pose2::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
            let (mut n, mut correct) = (0usize, 0usize);
            while n < 20_000 {
                for o in observe_cones(&mut rng, &track, &pose, &profile, 0.0) {
                    n += 1;
                    correct += (o.color.argmax() == ColorClass::Yellow) as usize;
                }
            }
            let p = profile.color_accuracy(r);
            let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-9;
            let got = correct as f64 / n as f64;
            assert!((got - p).abs() <= tol, "{:?} r={r}: {got} vs {p}", profile.mode);
        }
    }
}

#[test]
fn velocity_noise_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth = Velocity2::new(10.0, 0.0, 0.2);
    let noise = VelocityNoise::default();
    let bias = OdometryBias { speed_scale: 1.01, yaw_rate_offset_radps: 0.003 };
    let samples: Vec<Velocity2> = (0..20_000).map(|_| noisy_velocity(&mut rng, &truth, &noise, &bias)).collect();
    let vx: Vec<f64> = samples.iter().map(|v| v.vx).collect();
    let w: Vec<f64> = samples.iter().map(|v| v.yaw_rate).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((mean(&vx) - 10.1).abs() < 0.002);
    assert!((mean(&w) - 0.203).abs() < 1e-4);
    assert!((std(&vx) / noise.vx_sigma_mps - 1.0).abs() < 0.03);
    assert!((std(&w) / noise.yaw_rate_sigma_radps - 1.0).abs() < 0.03);

    let exact = noisy_velocity(&mut rng, &truth, &VelocityNoise::NONE, &OdometryBias::NONE);
    assert_eq!(exact, truth);
}

#[test]
fn bias_is_fixed_per_run_and_seeded() {
    let track = one_cone(5.0, 0.0, ConeColor::Blue);
    let sim = |seed, noise| {
        let run = SimRun {
            track: track.clone(),
            speed_profile: SpeedProfile::constant(5.0),
            frame_rate_hz: 10.0,
            seed,
            velocity_noise: noise,
            schedule: Default::default(),
        };
        Simulator::new(&run, &[SensorProfile::fusion()]).unwrap().odometry_bias()
    };
    let noise = VelocityNoise::default();
    assert_eq!(sim(4, noise), sim(4, noise));
    assert_ne!(sim(4, noise), sim(5, noise));
    assert_eq!(sim(4, VelocityNoise::NONE), OdometryBias::NONE);
}

#[test]
fn noise_free_profile_reports_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let track = one_cone(7.0, 1.0, ConeColor::Orange);
    let profile = SensorProfile::fusion().noise_free();
    for _ in 0..100 {
        let obs = observe_cones(&mut rng, &track, &Pose2::IDENTITY, &profile, 0.0);
        assert_eq!(obs.len(), 1);
        assert!((obs[0].position.mean - Vector2::new(7.0, 1.0)).norm() < 1e-12);
        assert_eq!(obs[0].color.argmax(), ColorClass::Unknown);
    }
}
