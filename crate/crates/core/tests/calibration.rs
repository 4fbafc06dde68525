mod common;

use common::checks::{gyro_allan_slope, magless_z_bias_variance};
use imufuse::calibration::*;
use imufuse::estimators::EstimatorConfig;
use imufuse::simulator::simulate;
use imufuse::{MeasurementSeries, ScenarioConfig, ScenarioKind};
use nalgebra::Vector3;

const BIAS: Vector3<f64> = Vector3::new(0.05, 0.01, -0.04);

fn biased(seed: u64) -> (MeasurementSeries, EstimatorConfig) {
    let mut sc = ScenarioConfig::new(ScenarioKind::Orientation, seed);
    sc.gyro_bias = BIAS;
    let (_, meas) = simulate(&sc).unwrap();
    (meas, EstimatorConfig::new(sc.noise, sc.env))
}

#[test]
fn flat_prior_map_agrees_with_ml() {
    for seed in 0..4 {
        let (meas, mut cfg) = biased(seed);
        let ml = ml_bias_estimate(&meas, &cfg, &MlSettings::default()).unwrap();
        assert!(ml.converged);
        cfg.noise.sigma_bias_prior = 1e3;
        let (_, map) = map_bias_smoothing(&meas, &cfg).unwrap();
        assert!((ml.bias - map.bias).amax() <= 5e-4, "seed {seed}: ml {:?} map {:?}", ml.bias, map.bias);
    }
}

#[test]
fn tighter_priors_shrink_further() {
    let batches: Vec<_> = (0..8).map(|s| biased(s).0).collect();
    let cfg = biased(0).1;
    let priors = [1e-4, 1e-3, 1e-2, 5e-2];
    let rows = map_shrinkage_study(&batches, &cfg, &priors).unwrap();
    for i in 0..3 {
        let m: Vec<f64> = rows.iter().map(|r| r.mean[i].abs()).collect();
        assert!(m.windows(2).all(|w| w[0] < w[1]), "axis {i}: {m:?}");
        assert!(m[0] < 0.5 * BIAS[i].abs());
    }
    assert!(map_shrinkage_study(&batches, &cfg, &[0.05]).is_err());
}

#[test]
fn every_bias_filter_converges_near_the_truth() {
    let (meas, cfg) = biased(5);
    for f in [BiasFilter::FilterOpt, BiasFilter::EkfQuat, BiasFilter::EkfDev] {
        let (trace, est) = map_bias_filtering(&meas, &cfg, f).unwrap();
        trace.validate().unwrap();
        assert!((est.bias - BIAS).amax() < 5e-3, "{f:?}: {:?}", est.bias);
        let sd = est.covariance.unwrap().diagonal().map(f64::sqrt);
        assert!(sd.iter().all(|s| *s < 5e-3));
    }
}

#[test]
fn z_bias_is_unidentifiable_until_the_sensor_tilts() {
    let (var, prior) = magless_z_bias_variance(1).unwrap();
    assert!(var[..=100].iter().all(|v| *v >= 0.5 * prior));
    assert!(var[200] * 10.0 <= var[100], "{} -> {}", var[100], var[200]);
}

#[test]
fn white_gyroscope_noise_has_half_slope() {
    let s = gyro_allan_slope(2).unwrap();
    assert!(s.iter().all(|v| (v + 0.5).abs() <= 0.05), "{s:?}");
}

#[test]
fn ml_rejects_bad_settings() {
    let (meas, cfg) = biased(0);
    let bad = MlSettings { gradient_tol: 0.0, ..MlSettings::default() };
    assert!(ml_bias_estimate(&meas, &cfg, &bad).is_err());
}
