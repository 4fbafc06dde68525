//! Orientation and pose estimators.
//!
//! All estimators share [`EstimatorConfig`] and return an [`EstimateTrace`].
//! Covariances are always expressed over the navigation-frame orientation
//! deviation, so the quaternion-state EKF converts its 4×4 covariance before
//! returning it.

pub mod block_tridiag;
pub mod complementary;
pub mod ekf_dev;
pub mod ekf_quat;
pub mod filter_opt;
pub mod gauss_newton;
pub mod smoothing;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use gauss_newton::{gauss_newton_solve, GaussNewtonProblem, GaussNewtonReport, GaussNewtonSettings, Linearization};

use crate::error::{Error, Result};
use crate::orientation::UnitQuaternion;
use crate::sensor_models::{inclination_initial_orientation, quest_initial_orientation, Environment, NoiseModel};
use crate::simulator::MeasurementSeries;

/// Per-sample estimates.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EstimateTrace {
    pub q: Vec<UnitQuaternion>,
    pub p: Option<Vec<Vector3<f64>>>,
    pub v: Option<Vec<Vector3<f64>>>,
    /// Gyroscope bias estimate at each sample.
    pub bias: Option<Vec<Vector3<f64>>>,
    /// Covariance of the deviation state at each sample; see [`Self::layout`].
    pub cov: Vec<DMatrix<f64>>,
    pub layout: StateLayout,
    pub converged: bool,
    /// Gauss-Newton iterations, summed over time steps for the filters.
    pub iterations: usize,
    /// Final smoothing objective, when there is one.
    pub objective: Option<f64>,
}

/// Where each quantity sits inside a covariance block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StateLayout {
    pub position: Option<usize>,
    pub velocity: Option<usize>,
    pub orientation: usize,
    pub bias: Option<usize>,
}

impl StateLayout {
    pub const ORIENTATION: Self = Self { position: None, velocity: None, orientation: 0, bias: None };
    pub const ORIENTATION_BIAS: Self = Self { position: None, velocity: None, orientation: 0, bias: Some(3) };
    pub const POSE: Self = Self { position: Some(0), velocity: Some(3), orientation: 6, bias: None };

    pub fn dim(&self) -> usize {
        3 + [self.position, self.velocity, self.bias].iter().flatten().count() * 3
    }
}

impl EstimateTrace {
    pub fn from_orientations(q: Vec<UnitQuaternion>) -> Self {
        Self { q, converged: true, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    fn block(&self, t: usize, offset: Option<usize>) -> Option<Matrix3<f64>> {
        let c = self.cov.get(t)?;
        let o = offset?;
        Some(c.fixed_view::<3, 3>(o, o).into_owned())
    }

    pub fn orientation_cov(&self, t: usize) -> Option<Matrix3<f64>> {
        self.block(t, Some(self.layout.orientation))
    }

    pub fn bias_cov(&self, t: usize) -> Option<Matrix3<f64>> {
        self.block(t, self.layout.bias)
    }

    /// Standard deviations of the orientation deviation, rad.
    pub fn orientation_sigma(&self, t: usize) -> Option<Vector3<f64>> {
        self.orientation_cov(t).map(|c| c.diagonal().map(|v| v.max(0.0).sqrt()))
    }

    /// Checks the contract every estimator output must meet.
    pub fn validate(&self) -> Result<()> {
        for (t, q) in self.q.iter().enumerate() {
            if (q.quaternion().norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Numerical(format!("quaternion {t} not unit")));
            }
        }
        for (t, c) in self.cov.iter().enumerate() {
            let asym = (c - c.transpose()).amax();
            if asym > 1e-9 * c.amax().max(1.0) {
                return Err(Error::Numerical(format!("covariance {t} not symmetric")));
            }
            let min = c.clone().symmetric_eigenvalues().min();
            if min < -1e-10 {
                return Err(Error::Numerical(format!("covariance {t} not positive semidefinite ({min:e})")));
            }
        }
        Ok(())
    }
}

/// How the initial orientation is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub enum Initialization {
    /// Two-vector initialization from the first accelerometer and
    /// magnetometer samples, or inclination with zero heading when the
    /// magnetometer is unused.
    #[default]
    Measurements,
    /// A user-supplied prior mean.
    Given(UnitQuaternion),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub noise: NoiseModel,
    pub env: Environment,
    pub settings: GaussNewtonSettings,
    /// Ignored when the series has no magnetometer.
    pub use_mag: bool,
    pub estimate_bias: bool,
    pub init: Initialization,
}

impl EstimatorConfig {
    pub fn new(noise: NoiseModel, env: Environment) -> Self {
        Self { noise, env, settings: GaussNewtonSettings::smoothing(), use_mag: true, estimate_bias: false, init: Initialization::Measurements }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.env.validate()?;
        self.settings.validate()
    }

    /// Effective magnetometer samples for this series.
    pub fn mag<'a>(&self, meas: &'a MeasurementSeries) -> Option<&'a [Vector3<f64>]> {
        if self.use_mag {
            meas.mag.as_deref()
        } else {
            None
        }
    }

    /// Prior mean of the first orientation.
    pub fn initial_orientation(&self, meas: &MeasurementSeries) -> Result<UnitQuaternion> {
        match self.init {
            Initialization::Given(q) => Ok(q),
            Initialization::Measurements => match self.mag(meas) {
                Some(m) => quest_initial_orientation(&meas.acc[0], &m[0], &self.env),
                None => inclination_initial_orientation(&meas.acc[0]),
            },
        }
    }

    fn check(&self, meas: &MeasurementSeries) -> Result<()> {
        self.validate()?;
        meas.validate()?;
        if (meas.sample_period - self.env.sample_period).abs() > 1e-9 * self.env.sample_period {
            return Err(Error::InvalidInput(format!(
                "series sample period {} differs from configured {}",
                meas.sample_period, self.env.sample_period
            )));
        }
        Ok(())
    }
}

/// The orientation estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "alg", rename_all = "kebab-case")]
pub enum Algorithm {
    Smoothing,
    FilterOpt,
    EkfQuat,
    EkfDev,
    Complementary { alpha: f64 },
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Self::Smoothing => "smoothing".into(),
            Self::FilterOpt => "filtering-opt".into(),
            Self::EkfQuat => "ekf-quat".into(),
            Self::EkfDev => "ekf-dev".into(),
            Self::Complementary { alpha } => format!("complementary(alpha={alpha})"),
        }
    }

    /// Parses `smooth`, `filt-opt`, `ekf-quat`, `ekf-dev` and `compl`, the
    /// last one taking `alpha`.
    pub fn parse(s: &str, alpha: f64) -> Result<Self> {
        Ok(match s {
            "smooth" | "smoothing" => Self::Smoothing,
            "filt-opt" | "filtering-opt" => Self::FilterOpt,
            "ekf-quat" => Self::EkfQuat,
            "ekf-dev" => Self::EkfDev,
            "compl" | "complementary" => Self::Complementary { alpha },
            _ => return Err(Error::InvalidConfig(format!("unknown algorithm {s}"))),
        })
    }

    pub fn estimate_orientation(&self, meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<EstimateTrace> {
        match *self {
            Self::Smoothing => smoothing::smooth_orientation(meas, cfg, None),
            Self::FilterOpt => filter_opt::filter_orientation_opt(meas, cfg),
            Self::EkfQuat => ekf_quat::ekf_quaternion(meas, cfg, ekf_quat::Renormalization::default()),
            Self::EkfDev => ekf_dev::ekf_orientation_deviation(meas, cfg),
            Self::Complementary { alpha } => complementary::complementary_filter(meas, cfg, alpha),
        }
    }

    pub fn estimate_pose(&self, meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<EstimateTrace> {
        match *self {
            Self::Smoothing => smoothing::smooth_pose(meas, cfg, None),
            Self::FilterOpt => filter_opt::filter_pose_opt(meas, cfg),
            Self::EkfQuat => ekf_quat::ekf_pose_quaternion(meas, cfg),
            Self::EkfDev => ekf_dev::ekf_pose_deviation(meas, cfg),
            Self::Complementary { .. } => Err(Error::InvalidConfig("the complementary filter has no pose variant".into())),
        }
    }
}
