//! Fixtures shared by the benchmarks.

use imufuse::estimators::EstimatorConfig;
use imufuse::simulator::simulate;
use imufuse::{MeasurementSeries, ScenarioConfig, ScenarioKind};

/// Default orientation data set and the matching estimator configuration.
pub fn orientation_fixture(seed: u64) -> (MeasurementSeries, EstimatorConfig) {
    let cfg = ScenarioConfig::new(ScenarioKind::Orientation, seed);
    let (_, meas) = simulate(&cfg).expect("default scenario is valid");
    (meas, EstimatorConfig::new(cfg.noise, cfg.env))
}

/// Stationary pose data set and the matching estimator configuration.
pub fn pose_fixture(seed: u64) -> (MeasurementSeries, EstimatorConfig) {
    let cfg = ScenarioConfig::new(ScenarioKind::PoseStationary, seed);
    let (_, meas) = simulate(&cfg).expect("default scenario is valid");
    (meas, EstimatorConfig::new(cfg.noise, cfg.env))
}
