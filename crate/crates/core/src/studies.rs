//! Monte Carlo studies over simulated data.
//!
//! Run `r` of a study uses seed `base_seed + r`. Runs execute in parallel and
//! are reduced in run order, so the output does not depend on scheduling.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{map_bias_filtering, map_bias_smoothing, ml_bias_estimate, BiasFilter, BiasSummary, MlSettings};
use crate::error::{Error, Result};
use crate::estimators::{Algorithm, EstimatorConfig, Initialization};
use crate::metrics::{trace_error, RmseSummary};
use crate::orientation::{exp_q, UnitQuaternion};
use crate::simulator::{simulate, ScenarioConfig, ScenarioKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Bias used by the calibration comparison, rad/s.
pub const CALIBRATION_BIAS: [f64; 3] = [0.05, 0.01, -0.04];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyId {
    /// Orientation without the magnetometer.
    #[serde(rename = "T4.2")]
    NoMagnetometer,
    /// Orientation with all sensors.
    #[serde(rename = "T4.4")]
    Orientation,
    /// Orientation from a perturbed prior instead of a measured one.
    #[serde(rename = "T4.5")]
    PerturbedInit,
    /// Pose with position aiding under four motions.
    #[serde(rename = "T4.6")]
    Pose,
    /// Orientation with an estimated random gyroscope bias.
    #[serde(rename = "T5.1")]
    BiasOrientation,
    /// ML against MAP bias estimates under two priors.
    #[serde(rename = "T5.2")]
    BiasComparison,
}

impl StudyId {
    pub const ALL: [StudyId; 6] =
        [Self::NoMagnetometer, Self::Orientation, Self::PerturbedInit, Self::Pose, Self::BiasOrientation, Self::BiasComparison];

    pub fn code(&self) -> &'static str {
        match self {
            Self::NoMagnetometer => "T4.2",
            Self::Orientation => "T4.4",
            Self::PerturbedInit => "T4.5",
            Self::Pose => "T4.6",
            Self::BiasOrientation => "T5.1",
            Self::BiasComparison => "T5.2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().trim_start_matches(['T', 't']);
        Self::ALL
            .into_iter()
            .find(|id| &id.code()[1..] == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown study {s}; expected one of T4.2, T4.4, T4.5, T4.6, T5.1, T5.2")))
    }

    pub fn default_runs(&self) -> usize {
        match self {
            Self::BiasComparison => 500,
            _ => 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub label: String,
    pub rmse: RmseSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyDocument {
    pub schema_version: u32,
    pub table: StudyId,
    pub runs: usize,
    pub base_seed: u64,
    /// Orientation and position RMSE rows; empty for the bias comparison.
    pub rows: Vec<RmseRow>,
    /// Bias estimate rows; only for the bias comparison.
    pub bias: Vec<BiasSummary>,
    /// Plain-text rendering of the rows.
    pub text: String,
}

impl StudyDocument {
    pub fn row(&self, label: &str) -> Option<&RmseSummary> {
        self.rows.iter().find(|r| r.label == label).map(|r| &r.rmse)
    }

    pub fn bias_row(&self, method: &str, prior_sigma: Option<f64>) -> Option<&BiasSummary> {
        self.bias.iter().find(|b| b.method == method && b.prior_sigma == prior_sigma)
    }
}

/// Orientation estimators of the full comparison, with their row labels.
pub fn orientation_algorithms() -> Vec<(String, Algorithm)> {
    vec![
        ("smoothing".into(), Algorithm::Smoothing),
        ("filtering-opt".into(), Algorithm::FilterOpt),
        ("ekf-quat".into(), Algorithm::EkfQuat),
        ("ekf-dev".into(), Algorithm::EkfDev),
        ("complementary alpha=0.07".into(), Algorithm::Complementary { alpha: 0.07 }),
        ("complementary alpha=0.7".into(), Algorithm::Complementary { alpha: 0.7 }),
    ]
}

/// Pose scenarios with their row labels.
pub fn pose_scenarios() -> Vec<(String, ScenarioKind)> {
    vec![
        ("stationary".into(), ScenarioKind::PoseStationary),
        ("constant acceleration".into(), ScenarioKind::PoseConstAcc),
        ("acceleration N(0,0.5)".into(), ScenarioKind::PoseRandAcc { variance: 0.5 }),
        ("acceleration N(0,5)".into(), ScenarioKind::PoseRandAcc { variance: 5.0 }),
    ]
}

/// A draw from `exp_q(η/2) ⊙ q` with `η ~ N(0, σ² I)`.
pub fn perturbed_orientation(q: &UnitQuaternion, sigma: f64, seed: u64) -> UnitQuaternion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x696e_6974);
    let eta: Vector3<f64> = Vector3::from_fn(|_, _| sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng));
    exp_q(&(0.5 * eta)) * *q
}

/// A gyroscope bias drawn from `N(0, σ² I)`.
pub fn random_bias(sigma: f64, seed: u64) -> Vector3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6269_6173);
    Vector3::from_fn(|_, _| sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
}

fn config_for(sc: &ScenarioConfig) -> EstimatorConfig {
    EstimatorConfig::new(sc.noise, sc.env)
}

fn rmse_run(id: StudyId, seed: u64) -> Result<Vec<RmseSummary>> {
    let one = |sc: &ScenarioConfig, alg: Algorithm, cfg: &EstimatorConfig| -> Result<RmseSummary> {
        let (truth, meas) = simulate(sc)?;
        let est = if sc.kind.is_pose() { alg.estimate_pose(&meas, cfg)? } else { alg.estimate_orientation(&meas, cfg)? };
        RmseSummary::of(&trace_error(&est, &truth)?)
    };
    match id {
        StudyId::NoMagnetometer | StudyId::Orientation | StudyId::PerturbedInit => {
            let sc = ScenarioConfig::new(ScenarioKind::Orientation, seed);
            let (truth, meas) = simulate(&sc)?;
            let mut cfg = config_for(&sc);
            let algs = if id == StudyId::NoMagnetometer {
                cfg.use_mag = false;
                orientation_algorithms().into_iter().take(4).collect()
            } else {
                orientation_algorithms()
            };
            if id == StudyId::PerturbedInit {
                cfg.init = Initialization::Given(perturbed_orientation(&truth.q[0], sc.noise.sigma_ori_prior, seed));
            }
            algs.into_iter().map(|(_, alg)| RmseSummary::of(&trace_error(&alg.estimate_orientation(&meas, &cfg)?, &truth)?)).collect()
        }
        StudyId::Pose => pose_scenarios()
            .into_iter()
            .map(|(_, kind)| {
                let sc = ScenarioConfig::new(kind, seed);
                one(&sc, Algorithm::Smoothing, &config_for(&sc))
            })
            .collect(),
        StudyId::BiasOrientation => {
            let mut sc = ScenarioConfig::new(ScenarioKind::Orientation, seed);
            sc.gyro_bias = random_bias(sc.noise.sigma_bias_prior, seed);
            let (truth, meas) = simulate(&sc)?;
            let cfg = config_for(&sc);
            let (smooth, _) = map_bias_smoothing(&meas, &cfg)?;
            let (filt, _) = map_bias_filtering(&meas, &cfg, BiasFilter::EkfDev)?;
            [smooth, filt].iter().map(|tr| RmseSummary::of(&trace_error(tr, &truth)?)).collect()
        }
        StudyId::BiasComparison => unreachable!("bias comparison has no RMSE rows"),
    }
}

/// Prior standard deviations of the MAP rows in the bias comparison.
pub const COMPARISON_PRIORS: [f64; 2] = [0.05, 1e-3];

fn bias_run(seed: u64) -> Result<Vec<Vector3<f64>>> {
    let mut sc = ScenarioConfig::new(ScenarioKind::Orientation, seed);
    sc.gyro_bias = Vector3::from(CALIBRATION_BIAS);
    let (_, meas) = simulate(&sc)?;
    let cfg = config_for(&sc);
    let mut out = vec![ml_bias_estimate(&meas, &cfg, &MlSettings::default())?.bias];
    for s in COMPARISON_PRIORS {
        let mut c = cfg.clone();
        c.noise.sigma_bias_prior = s;
        out.push(map_bias_smoothing(&meas, &c)?.1.bias);
    }
    Ok(out)
}

fn labels(id: StudyId) -> Vec<String> {
    match id {
        StudyId::NoMagnetometer => orientation_algorithms().into_iter().take(4).map(|(l, _)| l).collect(),
        StudyId::Orientation | StudyId::PerturbedInit => orientation_algorithms().into_iter().map(|(l, _)| l).collect(),
        StudyId::Pose => pose_scenarios().into_iter().map(|(l, _)| l).collect(),
        StudyId::BiasOrientation => vec!["smoothing".into(), "ekf-dev".into()],
        StudyId::BiasComparison => vec![],
    }
}

/// Runs the study `id` over `runs` seeds starting at `base_seed`.
pub fn monte_carlo(id: StudyId, runs: usize, base_seed: u64) -> Result<StudyDocument> {
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|r| base_seed.wrapping_add(r)).collect();
    let mut doc = StudyDocument { schema_version: SCHEMA_VERSION, table: id, runs, base_seed, rows: vec![], bias: vec![], text: String::new() };
    if id == StudyId::BiasComparison {
        let per_run = seeds.par_iter().map(|&s| bias_run(s)).collect::<Result<Vec<_>>>()?;
        let column = |k: usize| per_run.iter().map(|r| r[k]).collect::<Vec<_>>();
        doc.bias.push(BiasSummary::of("ml", None, &column(0))?);
        for (k, s) in COMPARISON_PRIORS.iter().enumerate() {
            doc.bias.push(BiasSummary::of("map-smoothing", Some(*s), &column(k + 1))?);
        }
    } else {
        let per_run = seeds.par_iter().map(|&s| rmse_run(id, s)).collect::<Result<Vec<_>>>()?;
        for (k, label) in labels(id).into_iter().enumerate() {
            let col: Vec<RmseSummary> = per_run.iter().map(|r| r[k].clone()).collect();
            doc.rows.push(RmseRow { label, rmse: RmseSummary::mean(&col)? });
        }
    }
    doc.text = render(&doc);
    Ok(doc)
}

fn render(doc: &StudyDocument) -> String {
    let mut s = format!("{} mean over {} runs (seeds {}..)\n", doc.table.code(), doc.runs, doc.base_seed);
    if doc.table == StudyId::BiasComparison {
        let _ = writeln!(s, "{:<24} {:>24} {:>24}", "method", "mean (1e-2 rad/s)", "std (1e-4 rad/s)");
        for b in &doc.bias {
            let name = match b.prior_sigma {
                Some(p) => format!("{} sigma={p}", b.method),
                None => b.method.clone(),
            };
            let m = b.mean.map(|x| format!("{:.2}", x * 1e2)).join(" ");
            let d = b.std.map(|x| format!("{:.2}", x * 1e4)).join(" ");
            let _ = writeln!(s, "{name:<24} {m:>24} {d:>24}");
        }
        return s;
    }
    let _ = write!(s, "{:<26} {:>8} {:>8} {:>8}", "rmse", "roll", "pitch", "heading");
    let pose = doc.rows.iter().any(|r| r.rmse.position.is_some());
    if pose {
        let _ = write!(s, " {:>10}", "pos [cm]");
    }
    s.push('\n');
    for r in &doc.rows {
        let _ = write!(s, "{:<26} {:>8.2} {:>8.2} {:>8.2}", r.label, r.rmse.roll, r.rmse.pitch, r.rmse.heading);
        if let Some(p) = r.rmse.position {
            let _ = write!(s, " {:>10.2}", p * 100.0);
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_ids_round_trip() {
        for id in StudyId::ALL {
            assert_eq!(StudyId::parse(id.code()).unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.code()));
        }
        assert!(StudyId::parse("T9.9").is_err());
    }

    #[test]
    fn single_run_is_reproducible() {
        let a = monte_carlo(StudyId::Orientation, 1, 11).unwrap();
        let b = monte_carlo(StudyId::Orientation, 1, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.rows.len(), 6);
        assert!(monte_carlo(StudyId::Orientation, 0, 0).is_err());
    }

    #[test]
    fn perturbation_has_requested_spread() {
        let q = UnitQuaternion::identity();
        let ms: f64 = (0..2000).map(|s| q.angle_to(&perturbed_orientation(&q, 0.1, s)).powi(2)).sum::<f64>() / 2000.0;
        // Squared angle of a 3-D isotropic draw has mean 3σ².
        assert!((ms / 0.03 - 1.0).abs() < 0.1, "{ms}");
    }
}
