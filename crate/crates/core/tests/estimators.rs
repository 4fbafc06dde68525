mod common;

use common::checks::{one_step_gap, orientation_data, worst_ascent};
use imufuse::estimators::ekf_dev::ekf_orientation_deviation;
use imufuse::estimators::smoothing::smooth_orientation;
use imufuse::estimators::{Algorithm, EstimateTrace};
use imufuse::metrics::{trace_error, RmseSummary};
use imufuse::orientation::log_q;
use imufuse::simulator::{dead_reckon, simulate};
use imufuse::studies::{orientation_algorithms, pose_scenarios};
use imufuse::{GroundTruth, ScenarioConfig};
use nalgebra::Vector3;
use proptest::prelude::*;

/// Mean normalized estimation error squared per degree of freedom.
fn orientation_nees(est: &EstimateTrace, truth: &GroundTruth) -> f64 {
    let mut sum = 0.0;
    for t in 0..est.len() {
        let e = 2.0 * log_q(&(truth.q[t] * est.q[t].conjugate()));
        let p = est.orientation_cov(t).unwrap();
        sum += e.dot(&p.cholesky().unwrap().solve(&e)) / 3.0;
    }
    sum / est.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gauss_newton_never_increases_the_objective(seed in 0u64..10_000, mag in any::<bool>()) {
        let (_, meas, mut cfg) = orientation_data(seed);
        cfg.use_mag = mag;
        prop_assert!(worst_ascent(&meas, &cfg).unwrap() <= 0.0);
    }

    #[test]
    fn one_iteration_filter_equals_deviation_ekf(seed in 0u64..10_000, mag in any::<bool>(), bias in any::<bool>()) {
        let (_, meas, mut cfg) = orientation_data(seed);
        cfg.use_mag = mag;
        cfg.estimate_bias = bias;
        let (state, cov) = one_step_gap(&meas, &cfg).unwrap();
        prop_assert!(state <= 1e-8, "state gap {state:e}");
        prop_assert!(cov <= 1e-6, "covariance gap {cov:e}");
    }

    #[test]
    fn magless_heading_variance_only_grows(seed in 0u64..10_000) {
        let (_, meas, mut cfg) = orientation_data(seed);
        cfg.use_mag = false;
        let est = ekf_orientation_deviation(&meas, &cfg).unwrap();
        for t in 1..est.len() {
            let (a, b) = (est.orientation_cov(t - 1).unwrap()[(2, 2)], est.orientation_cov(t).unwrap()[(2, 2)]);
            prop_assert!(b >= a * (1.0 - 1e-9), "heading variance fell at sample {t}: {a} -> {b}");
        }
    }
}

#[test]
fn estimator_outputs_meet_the_trace_contract() {
    let (_, meas, cfg) = orientation_data(4);
    for (label, alg) in orientation_algorithms() {
        let est = alg.estimate_orientation(&meas, &cfg).unwrap();
        est.validate().unwrap_or_else(|e| panic!("{label}: {e}"));
        assert_eq!(est.len(), meas.len(), "{label}");
    }
    for (label, kind) in pose_scenarios() {
        let sc = ScenarioConfig::new(kind, 4);
        let (_, meas) = simulate(&sc).unwrap();
        let cfg = imufuse::estimators::EstimatorConfig::new(sc.noise, sc.env);
        for alg in [Algorithm::Smoothing, Algorithm::FilterOpt, Algorithm::EkfQuat, Algorithm::EkfDev] {
            let est = alg.estimate_pose(&meas, &cfg).unwrap();
            est.validate().unwrap_or_else(|e| panic!("{label} {}: {e}", alg.name()));
            assert!(est.p.is_some() && est.v.is_some());
        }
    }
}

#[test]
fn reported_sigma_matches_empirical_rmse() {
    let runs = 100;
    let mut rmse = [Vector3::zeros(), Vector3::zeros()];
    let mut sigma = [Vector3::zeros(), Vector3::zeros()];
    let mut nees = [0.0; 2];
    for seed in 0..runs {
        let (truth, meas, cfg) = orientation_data(seed);
        let ests = [ekf_orientation_deviation(&meas, &cfg).unwrap(), smooth_orientation(&meas, &cfg, None).unwrap()];
        for (k, est) in ests.iter().enumerate() {
            let r = RmseSummary::of(&trace_error(est, &truth).unwrap()).unwrap();
            rmse[k] += Vector3::new(r.roll, r.pitch, r.heading);
            sigma[k] += (0..est.len()).map(|t| est.orientation_sigma(t).unwrap().map(f64::to_degrees)).sum::<Vector3<f64>>() / est.len() as f64;
            nees[k] += orientation_nees(est, &truth);
        }
    }
    for (k, name) in ["ekf-dev", "smoothing"].iter().enumerate() {
        let ratio = rmse[k].component_div(&sigma[k]);
        assert!(ratio.iter().all(|r| (0.7..=1.5).contains(r)), "{name}: RMSE/σ {ratio:?}");
        let nees = nees[k] / runs as f64;
        assert!((0.7..1.5).contains(&nees), "{name}: NEES {nees}");
    }
}

/// Runs out of 100 in which each estimator has a lower total and a lower
/// inclination RMSE than gyroscope dead reckoning from the same prior.
fn dead_reckoning_wins() -> Vec<(String, usize, usize)> {
    let algs = orientation_algorithms();
    let mut wins = vec![(0, 0); algs.len()];
    for seed in 0..100 {
        let (truth, meas, cfg) = orientation_data(seed);
        let q0 = cfg.initial_orientation(&meas).unwrap();
        let dr = dead_reckon(&meas, &cfg.env, &q0, &Vector3::zeros(), &Vector3::zeros());
        let tilt = |r: &RmseSummary| r.roll.powi(2) + r.pitch.powi(2);
        let base = RmseSummary::of(&trace_error(&dr, &truth).unwrap()).unwrap();
        for (k, (_, alg)) in algs.iter().enumerate() {
            let r = RmseSummary::of(&trace_error(&alg.estimate_orientation(&meas, &cfg).unwrap(), &truth).unwrap()).unwrap();
            wins[k].0 += usize::from(tilt(&r) + r.heading.powi(2) < tilt(&base) + base.heading.powi(2));
            wins[k].1 += usize::from(tilt(&r) < tilt(&base));
        }
    }
    algs.into_iter().zip(wins).map(|((l, _), (a, b))| (l, a, b)).collect()
}

#[test]
fn every_estimator_beats_dead_reckoning() {
    for (label, total, tilt) in dead_reckoning_wins() {
        assert!(tilt >= 95, "{label} inclination beat dead reckoning in only {tilt} of 100 runs");
        // α = 0.7 trades heading for inclination: its ≈13° heading RMSE is
        // above the ≈8° of a 400 s gyroscope random walk, so only the
        // inclination is held to the 95-run bar.
        let bar = if label == "complementary alpha=0.7" { 60 } else { 95 };
        assert!(total >= bar, "{label} beat dead reckoning in only {total} of 100 runs");
    }
}

#[test]
fn smoothed_heading_is_most_certain_mid_trajectory() {
    let (_, meas, cfg) = orientation_data(2);
    let est = smooth_orientation(&meas, &cfg, None).unwrap();
    let sigma: Vec<f64> = (0..est.len()).map(|t| est.orientation_sigma(t).unwrap().z).collect();
    let n = sigma.len();
    let mid = sigma[n / 4..3 * n / 4].iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(mid < sigma[0] && mid < sigma[n - 1], "ends {} {}, middle {mid}", sigma[0], sigma[n - 1]);
}

#[test]
fn magless_smoothed_heading_sigma_grows_from_the_prior() {
    let (_, meas, mut cfg) = orientation_data(2);
    cfg.use_mag = false;
    let est = smooth_orientation(&meas, &cfg, None).unwrap();
    let sigma: Vec<f64> = (0..est.len()).map(|t| est.orientation_sigma(t).unwrap().z).collect();
    assert!((sigma[0].to_degrees() - 20.0).abs() < 0.5, "initial heading σ {}", sigma[0].to_degrees());
    assert!(sigma.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)));
}

#[test]
fn filters_are_most_uncertain_at_the_start() {
    let (_, meas, cfg) = orientation_data(2);
    let est = ekf_orientation_deviation(&meas, &cfg).unwrap();
    let first = est.orientation_sigma(0).unwrap();
    let last = est.orientation_sigma(est.len() - 1).unwrap();
    assert!((0..3).all(|i| last[i] < first[i]));
}
