//! Estimator-level checks shared by the integration tests and the
//! acceptance runner.

use imufuse::allan::{allan_deviation, log_spaced_clusters};
use imufuse::calibration::{map_bias_filtering, BiasFilter};
use imufuse::estimators::ekf_dev::ekf_orientation_deviation;
use imufuse::estimators::filter_opt::filter_orientation_opt;
use imufuse::estimators::smoothing::smoothing_history;
use imufuse::estimators::EstimatorConfig;
use imufuse::simulator::simulate;
use imufuse::{Environment, MeasurementSeries, Result, ScenarioConfig, ScenarioKind};
use nalgebra::Vector3;

pub fn orientation_data(seed: u64) -> (imufuse::GroundTruth, MeasurementSeries, EstimatorConfig) {
    let sc = ScenarioConfig::new(ScenarioKind::Orientation, seed);
    let (truth, meas) = simulate(&sc).expect("default scenario simulates");
    (truth, meas, EstimatorConfig::new(sc.noise, sc.env))
}

/// Largest gap between the single-iteration optimization filter and the
/// deviation EKF: `(orientation angle, covariance entry)`.
pub fn one_step_gap(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<(f64, f64)> {
    let mut one = cfg.clone();
    one.settings.max_iterations = 1;
    one.settings.line_search = false;
    let a = filter_orientation_opt(meas, &one)?;
    let b = ekf_orientation_deviation(meas, cfg)?;
    let mut state: f64 = 0.0;
    let mut cov: f64 = 0.0;
    for t in 0..meas.len() {
        state = state.max(a.q[t].angle_to(&b.q[t]));
        cov = cov.max((&a.cov[t] - &b.cov[t]).amax());
    }
    Ok((state, cov))
}

/// Largest relative increase of the smoothing objective between iterations.
pub fn worst_ascent(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<f64> {
    let h = smoothing_history(meas, cfg)?;
    Ok(h.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1e-300)).fold(f64::NEG_INFINITY, f64::max))
}

/// Allan slope of a stationary gyroscope sampled at 100 Hz, fitted over
/// cluster times 0.1 to 10 s.
pub fn gyro_allan_slope(seed: u64) -> Result<Vector3<f64>> {
    let mut sc = ScenarioConfig::new(ScenarioKind::PoseStationary, seed);
    sc.env = Environment { sample_period: 0.01, ..sc.env };
    sc.n = 200_000;
    let (_, meas) = simulate(&sc)?;
    let clusters = log_spaced_clusters(0.01, 0.1, 10.0, 12);
    Ok(allan_deviation(&meas.gyr, 0.01, &clusters)?.slope)
}

/// Variance of the z-axis bias estimate per sample for magnetometer-free
/// filtering of the orientation scenario, and the prior variance.
pub fn magless_z_bias_variance(seed: u64) -> Result<(Vec<f64>, f64)> {
    let mut sc = ScenarioConfig::new(ScenarioKind::Orientation, seed);
    sc.gyro_bias = Vector3::new(0.05, 0.01, -0.04);
    let (_, meas) = simulate(&sc)?;
    let mut cfg = EstimatorConfig::new(sc.noise, sc.env);
    cfg.use_mag = false;
    let (trace, _) = map_bias_filtering(&meas, &cfg, BiasFilter::EkfDev)?;
    let var = (0..trace.len()).map(|t| trace.bias_cov(t).expect("bias states")[(2, 2)]).collect();
    Ok((var, sc.noise.sigma_bias_prior.powi(2)))
}
