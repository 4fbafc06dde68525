//! Gyroscope bias calibration.
//!
//! MAP estimates append the bias to the state of an estimator and place a
//! zero-mean prior on it. The ML estimate instead minimizes the prediction
//! error objective of the orientation deviation EKF over a constant offset
//! subtracted from the gyroscope, using BFGS with central-difference
//! gradients.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ekf_dev::ekf_dev_pass;
use crate::estimators::ekf_quat::{ekf_quaternion, Renormalization};
use crate::estimators::filter_opt::filter_orientation_opt;
use crate::estimators::smoothing::smooth_orientation;
use crate::estimators::{EstimateTrace, EstimatorConfig};
use crate::simulator::MeasurementSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMethod {
    MapSmoothing,
    MapFilterOpt,
    MapEkfQuat,
    MapEkfDev,
    Ml,
}

impl BiasMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MapSmoothing => "map-smoothing",
            Self::MapFilterOpt => "map-filt-opt",
            Self::MapEkfQuat => "map-ekf-quat",
            Self::MapEkfDev => "map-ekf-dev",
            Self::Ml => "ml",
        }
    }
}

/// Filters that can carry bias states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasFilter {
    FilterOpt,
    EkfQuat,
    EkfDev,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    /// rad/s.
    pub bias: Vector3<f64>,
    /// Posterior covariance for MAP, inverse BFGS Hessian for ML.
    pub covariance: Option<Matrix3<f64>>,
    pub method: BiasMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// Outer-loop settings of the ML estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlSettings {
    /// Central-difference step is `relative_step · max(1, |θ_i|)`.
    pub relative_step: f64,
    pub max_iterations: usize,
    /// Converged once the gradient norm falls below this. The objective
    /// curvature is of order `N/σ_ω²`, so the default leaves a bias error
    /// far below its standard deviation while staying above the noise floor
    /// of the difference quotients.
    pub gradient_tol: f64,
    /// Length of the first steepest-descent step, rad/s. Later steps use the
    /// curvature learned by the BFGS updates.
    pub initial_step: f64,
    pub initial: Vector3<f64>,
}

impl Default for MlSettings {
    fn default() -> Self {
        Self { relative_step: 1e-6, max_iterations: 100, gradient_tol: 1e-1, initial_step: 1e-2, initial: Vector3::zeros() }
    }
}

impl MlSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_step > 0.0 && self.gradient_tol > 0.0 && self.initial_step > 0.0) {
            return Err(Error::InvalidConfig("ML step sizes and tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("ML iteration cap must be at least 1".into()));
        }
        Ok(())
    }
}

fn with_bias(cfg: &EstimatorConfig) -> EstimatorConfig {
    EstimatorConfig { estimate_bias: true, ..cfg.clone() }
}

fn final_estimate(trace: &EstimateTrace, method: BiasMethod) -> Result<BiasEstimate> {
    let n = trace.len();
    let bias = trace.bias.as_ref().and_then(|b| b.last().copied()).ok_or_else(|| Error::Numerical("estimator returned no bias".into()))?;
    Ok(BiasEstimate { bias, covariance: trace.bias_cov(n - 1), method, iterations: trace.iterations, converged: trace.converged })
}

/// Joint smoothing of the orientation and a constant bias with prior
/// `N(0, σ_bias_prior² I)`.
pub fn map_bias_smoothing(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<(EstimateTrace, BiasEstimate)> {
    let trace = smooth_orientation(meas, &with_bias(cfg), None)?;
    let est = final_estimate(&trace, BiasMethod::MapSmoothing)?;
    Ok((trace, est))
}

/// Filtering with the bias as a slowly varying state. The estimate is the
/// bias at the last sample.
pub fn map_bias_filtering(meas: &MeasurementSeries, cfg: &EstimatorConfig, filter: BiasFilter) -> Result<(EstimateTrace, BiasEstimate)> {
    let cfg = with_bias(cfg);
    let (trace, method) = match filter {
        BiasFilter::FilterOpt => (filter_orientation_opt(meas, &cfg)?, BiasMethod::MapFilterOpt),
        BiasFilter::EkfQuat => (ekf_quaternion(meas, &cfg, Renormalization::default())?, BiasMethod::MapEkfQuat),
        BiasFilter::EkfDev => (ekf_dev_pass::<6>(meas, &cfg, &Vector3::zeros(), true)?.trace, BiasMethod::MapEkfDev),
    };
    let est = final_estimate(&trace, method)?;
    Ok((trace, est))
}

/// Prediction-error objective of the bias-free deviation EKF with `theta`
/// removed from the gyroscope.
pub fn ml_objective(meas: &MeasurementSeries, cfg: &EstimatorConfig, theta: &Vector3<f64>) -> Result<f64> {
    let cfg = EstimatorConfig { estimate_bias: false, ..cfg.clone() };
    let f = ekf_dev_pass::<3>(meas, &cfg, theta, false)?.neg_log_likelihood;
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::Numerical(format!("non-finite ML objective at θ = {theta:?}")))
    }
}

fn numeric_gradient(f: &impl Fn(&Vector3<f64>) -> Result<f64>, x: &Vector3<f64>, rel: f64) -> Result<Vector3<f64>> {
    let mut g = Vector3::zeros();
    for i in 0..3 {
        let h = rel * x[i].abs().max(1.0);
        let (mut xp, mut xm) = (*x, *x);
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp)? - f(&xm)?) / (2.0 * h);
    }
    Ok(g)
}

/// Maximum likelihood bias.
pub fn ml_bias_estimate(meas: &MeasurementSeries, cfg: &EstimatorConfig, settings: &MlSettings) -> Result<BiasEstimate> {
    settings.validate()?;
    let f = |th: &Vector3<f64>| ml_objective(meas, cfg, th);
    let mut x = settings.initial;
    let mut fx = f(&x)?;
    let mut g = numeric_gradient(&f, &x, settings.relative_step)?;
    let mut h_inv: Option<Matrix3<f64>> = None;
    let mut iterations = 0;
    let mut converged = g.norm() < settings.gradient_tol;
    while !converged && iterations < settings.max_iterations {
        iterations += 1;
        let dir = match &h_inv {
            Some(h) => -(h * g),
            None => -g * (settings.initial_step / g.norm()),
        };
        let slope = g.dot(&dir);
        if slope >= 0.0 {
            return Err(Error::Numerical("ML search direction is not a descent direction".into()));
        }
        let mut beta = 1.0;
        let (x_new, f_new) = loop {
            let xn = x + beta * dir;
            let fnew = f(&xn)?;
            if fnew <= fx + 1e-4 * beta * slope {
                break (xn, fnew);
            }
            beta *= 0.5;
            if beta < 2f64.powi(-30) {
                return Err(Error::Numerical(format!("ML line search failed at iteration {iterations}, gradient norm {:e}", g.norm())));
            }
        };
        let g_new = numeric_gradient(&f, &x_new, settings.relative_step)?;
        let s = x_new - x;
        let y = g_new - g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let h = h_inv.unwrap_or_else(|| Matrix3::identity() * (sy / y.dot(&y)));
            let rho = 1.0 / sy;
            let a = Matrix3::identity() - rho * s * y.transpose();
            h_inv = Some(a * h * a.transpose() + rho * s * s.transpose());
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        converged = g.norm() < settings.gradient_tol;
    }
    Ok(BiasEstimate { bias: x, covariance: h_inv, method: BiasMethod::Ml, iterations, converged })
}

/// Mean and standard deviation of bias estimates over a batch, one record
/// per method and prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub method: String,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub runs: usize,
    pub prior_sigma: Option<f64>,
}

impl BiasSummary {
    pub fn of(method: &str, prior_sigma: Option<f64>, estimates: &[Vector3<f64>]) -> Result<Self> {
        let k = estimates.len();
        if k == 0 {
            return Err(Error::InvalidInput("no bias estimates to summarize".into()));
        }
        let mean = estimates.iter().sum::<Vector3<f64>>() / k as f64;
        let var = if k > 1 {
            estimates.iter().map(|e| (e - mean).component_mul(&(e - mean))).sum::<Vector3<f64>>() / (k - 1) as f64
        } else {
            Vector3::zeros()
        };
        Ok(Self { method: method.into(), mean: mean.into(), std: var.map(f64::sqrt).into(), runs: k, prior_sigma })
    }
}

/// MAP smoothing bias estimates under each prior standard deviation.
pub fn map_shrinkage_study(batches: &[MeasurementSeries], cfg: &EstimatorConfig, prior_sigmas: &[f64]) -> Result<Vec<BiasSummary>> {
    if prior_sigmas.len() < 2 {
        return Err(Error::InvalidInput("the shrinkage study needs at least two priors".into()));
    }
    prior_sigmas
        .par_iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.noise.sigma_bias_prior = s;
            let est = batches.iter().map(|m| map_bias_smoothing(m, &c).map(|(_, b)| b.bias)).collect::<Result<Vec<_>>>()?;
            BiasSummary::of(BiasMethod::MapSmoothing.name(), Some(s), &est)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate, ScenarioConfig, ScenarioKind};

    fn biased(seed: u64) -> (MeasurementSeries, EstimatorConfig) {
        let mut sc = ScenarioConfig::new(ScenarioKind::Orientation, seed);
        sc.gyro_bias = Vector3::new(0.05, 0.01, -0.04);
        let (_, meas) = simulate(&sc).unwrap();
        (meas, EstimatorConfig::new(sc.noise, sc.env))
    }

    #[test]
    fn ml_objective_prefers_true_bias() {
        let (meas, cfg) = biased(3);
        let at_truth = ml_objective(&meas, &cfg, &Vector3::new(0.05, 0.01, -0.04)).unwrap();
        let at_zero = ml_objective(&meas, &cfg, &Vector3::zeros()).unwrap();
        assert!(at_truth < at_zero);
    }

    #[test]
    fn ml_and_map_recover_bias() {
        let (meas, cfg) = biased(4);
        let ml = ml_bias_estimate(&meas, &cfg, &MlSettings::default()).unwrap();
        assert!(ml.converged);
        let (_, map) = map_bias_smoothing(&meas, &cfg).unwrap();
        let truth = Vector3::new(0.05, 0.01, -0.04);
        assert!((ml.bias - truth).norm() < 5e-3, "{:?}", ml.bias);
        assert!((map.bias - truth).norm() < 5e-3, "{:?}", map.bias);
    }

    #[test]
    fn summary_statistics() {
        let s = BiasSummary::of("x", None, &[Vector3::new(1.0, 0.0, 0.0), Vector3::new(3.0, 0.0, 0.0)]).unwrap();
        assert_eq!(s.mean, [2.0, 0.0, 0.0]);
        assert!((s.std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(map_shrinkage_study(&[], &EstimatorConfig::new(Default::default(), Default::default()), &[1.0]).is_err());
    }
}
