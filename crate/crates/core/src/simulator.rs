//! Ground-truth trajectories, noisy measurements and dead reckoning.
//!
//! The orientation scenario keeps the sensor level and still for a number of
//! samples and then rotates it about its x, y and z axes in turn. Each
//! rotation segment is a raised-cosine angular-velocity pulse that integrates
//! to a configurable angle, a quarter turn by default. The pose scenarios keep
//! the sensor at identity orientation and vary the linear acceleration along
//! the navigation y axis.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimateTrace;
use crate::orientation::{exp_q, UnitQuaternion};
use crate::sensor_models::{Environment, NoiseModel};

/// Which motion the simulated sensor performs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Still, then rotations about the body x, y and z axes.
    Orientation,
    /// As [`ScenarioKind::Orientation`] with a magnetometer offset in a window.
    OrientationMagDisturbed,
    /// Non-rotating and at rest.
    PoseStationary,
    /// Non-rotating with 1 m/s² along the navigation y axis.
    PoseConstAcc,
    /// Non-rotating with an i.i.d. Gaussian y acceleration of this variance.
    PoseRandAcc { variance: f64 },
}

impl ScenarioKind {
    pub fn is_pose(&self) -> bool {
        matches!(self, Self::PoseStationary | Self::PoseConstAcc | Self::PoseRandAcc { .. })
    }

    /// Parses `orientation`, `orientation-mag-disturbed`, `pose-stationary`,
    /// `pose-const-acc` and `pose-rand-acc:<variance>`.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "orientation" => Self::Orientation,
            "orientation-mag-disturbed" => Self::OrientationMagDisturbed,
            "pose-stationary" => Self::PoseStationary,
            "pose-const-acc" => Self::PoseConstAcc,
            _ => match s.strip_prefix("pose-rand-acc:") {
                Some(v) => Self::PoseRandAcc { variance: v.parse().map_err(|_| Error::InvalidConfig(format!("bad variance in scenario {s}")))? },
                None => return Err(Error::InvalidConfig(format!("unknown scenario kind {s}"))),
            },
        })
    }
}

/// Additive magnetometer offset over the zero-based sample range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagDisturbance {
    pub offset: Vector3<f64>,
    pub start: usize,
    pub end: usize,
}

impl Default for MagDisturbance {
    fn default() -> Self {
        Self { offset: Vector3::new(0.1, 0.3, 0.5), start: 149, end: 250 }
    }
}

/// Everything needed to generate one simulated data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Number of samples.
    pub n: usize,
    pub env: Environment,
    pub noise: NoiseModel,
    /// Constant gyroscope bias added to every sample, rad/s.
    pub gyro_bias: Vector3<f64>,
    pub mag_disturbance: Option<MagDisturbance>,
    /// Samples at rest before the rotations start.
    pub stationary_samples: usize,
    /// Rotation angle of each per-axis segment, rad.
    pub rotation_per_axis: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            n: 400,
            env: Environment::default(),
            noise: NoiseModel::default(),
            gyro_bias: Vector3::zeros(),
            mag_disturbance: match kind {
                ScenarioKind::OrientationMagDisturbed => Some(MagDisturbance::default()),
                _ => None,
            },
            stationary_samples: 100,
            rotation_per_axis: std::f64::consts::FRAC_PI_2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig("need at least two samples".into()));
        }
        self.env.validate()?;
        self.noise.validate()?;
        if let Some(d) = &self.mag_disturbance {
            if d.start > d.end || d.end > self.n {
                return Err(Error::InvalidConfig("disturbance window outside the data".into()));
            }
        }
        if let ScenarioKind::PoseRandAcc { variance } = self.kind {
            if !(variance >= 0.0) {
                return Err(Error::InvalidConfig("acceleration variance must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// True sensor motion.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub q: Vec<UnitQuaternion>,
    /// Body-frame angular velocity applied between samples `t` and `t + 1`.
    pub omega: Vec<Vector3<f64>>,
    pub p: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    /// Navigation-frame linear acceleration.
    pub a: Vec<Vector3<f64>>,
    pub sample_period: f64,
    pub gyro_bias: Vector3<f64>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Uniformly sampled sensor data.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSeries {
    pub sample_period: f64,
    /// Time of the first sample, s.
    pub t0: f64,
    pub gyr: Vec<Vector3<f64>>,
    pub acc: Vec<Vector3<f64>>,
    /// Raw magnetometer samples; `None` for a magnetometer-free series.
    pub mag: Option<Vec<Vector3<f64>>>,
    pub pos: Option<Vec<Vector3<f64>>>,
}

impl MeasurementSeries {
    pub fn len(&self) -> usize {
        self.gyr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gyr.is_empty()
    }

    pub fn is_magless(&self) -> bool {
        self.mag.is_none()
    }

    pub fn time(&self, t: usize) -> f64 {
        self.t0 + t as f64 * self.sample_period
    }

    /// The same data with the magnetometer removed.
    pub fn without_mag(&self) -> Self {
        Self { mag: None, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gyr.len();
        if n < 2 {
            return Err(Error::InvalidInput("need at least two samples".into()));
        }
        if self.acc.len() != n {
            return Err(Error::LengthMismatch(n, self.acc.len()));
        }
        for other in [&self.mag, &self.pos].into_iter().flatten() {
            if other.len() != n {
                return Err(Error::LengthMismatch(n, other.len()));
            }
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::InvalidInput("sample period must be positive".into()));
        }
        let finite = |s: &Vec<Vector3<f64>>| s.iter().all(|v| v.iter().all(|x| x.is_finite()));
        if !finite(&self.gyr) || !finite(&self.acc) || !self.mag.iter().chain(self.pos.iter()).all(finite) {
            return Err(Error::InvalidInput("non-finite measurement".into()));
        }
        Ok(())
    }
}

/// Angular velocity of the default rotation profile at sample `t`.
fn profile_rate(cfg: &ScenarioConfig, t: usize) -> Vector3<f64> {
    let start = cfg.stationary_samples;
    if t < start || cfg.n <= start {
        return Vector3::zeros();
    }
    let span = cfg.n - 1 - start;
    let seg = (span / 3).max(1);
    let k = ((t - start) / seg).min(2);
    let len = if k == 2 { span - 2 * seg } else { seg };
    let s = t - start - k * seg;
    if s >= len || len == 0 {
        return Vector3::zeros();
    }
    // Midpoint sampling makes the cosine sum vanish over a full period, so
    // the segment integrates to exactly `rotation_per_axis`.
    let amp = cfg.rotation_per_axis / (len as f64 * cfg.env.sample_period);
    let phase = 2.0 * std::f64::consts::PI * (s as f64 + 0.5) / len as f64;
    let mut w = Vector3::zeros();
    if len > 1 {
        w[k] = amp * (1.0 - phase.cos());
    } else {
        w[k] = amp;
    }
    w
}

/// Generates the true trajectory for a scenario.
pub fn simulate_truth(cfg: &ScenarioConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let n = cfg.n;
    let dt = cfg.env.sample_period;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7275_7468);
    let a: Vec<Vector3<f64>> = (0..n)
        .map(|_| match cfg.kind {
            ScenarioKind::PoseConstAcc => Vector3::new(0.0, 1.0, 0.0),
            ScenarioKind::PoseRandAcc { variance } => {
                let z: f64 = rng.sample(StandardNormal);
                Vector3::new(0.0, variance.sqrt() * z, 0.0)
            }
            _ => Vector3::zeros(),
        })
        .collect();
    let omega: Vec<Vector3<f64>> = (0..n).map(|t| if cfg.kind.is_pose() { Vector3::zeros() } else { profile_rate(cfg, t) }).collect();
    let mut q = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let (mut qt, mut pt, mut vt) = (UnitQuaternion::identity(), Vector3::zeros(), Vector3::zeros());
    for t in 0..n {
        q.push(qt);
        p.push(pt);
        v.push(vt);
        qt = qt * exp_q(&(0.5 * dt * omega[t]));
        pt += dt * vt + 0.5 * dt * dt * a[t];
        vt += dt * a[t];
    }
    Ok(GroundTruth { q, omega, p, v, a, sample_period: dt, gyro_bias: cfg.gyro_bias })
}

/// Draws noisy measurements of a trajectory.
///
/// Pose scenarios carry position measurements and no magnetometer.
pub fn generate_measurements(truth: &GroundTruth, cfg: &ScenarioConfig) -> Result<MeasurementSeries> {
    cfg.validate()?;
    if truth.len() != cfg.n {
        return Err(Error::LengthMismatch(truth.len(), cfg.n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal3 = |s: f64| {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        s * Vector3::new(x, y, z)
    };
    let env = &cfg.env;
    let noise = &cfg.noise;
    let pose = cfg.kind.is_pose();
    let n = cfg.n;
    let (mut gyr, mut acc) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut mag = (!pose).then(|| Vec::with_capacity(n));
    let mut pos = pose.then(|| Vec::with_capacity(n));
    for t in 0..n {
        let q_bn = truth.q[t].conjugate();
        gyr.push(truth.omega[t] + truth.gyro_bias + normal3(noise.sigma_gyr));
        acc.push(q_bn.rotate_vector(&(truth.a[t] - env.gravity_n)) + normal3(noise.sigma_acc));
        if let Some(m) = mag.as_mut() {
            let mut y = q_bn.rotate_vector(&env.mag_field_n) + normal3(noise.sigma_mag);
            if let Some(d) = &cfg.mag_disturbance {
                if (d.start..d.end).contains(&t) {
                    y += d.offset;
                }
            }
            m.push(y);
        }
        if let Some(p) = pos.as_mut() {
            p.push(truth.p[t] + normal3(noise.sigma_pos));
        }
    }
    Ok(MeasurementSeries { sample_period: env.sample_period, t0: 0.0, gyr, acc, mag, pos })
}

/// Convenience: truth and measurements for one configuration.
pub fn simulate(cfg: &ScenarioConfig) -> Result<(GroundTruth, MeasurementSeries)> {
    let truth = simulate_truth(cfg)?;
    let meas = generate_measurements(&truth, cfg)?;
    Ok((truth, meas))
}

/// Integrates the gyroscope for orientation and the gravity-compensated
/// accelerometer twice for position.
pub fn dead_reckon(
    meas: &MeasurementSeries,
    env: &Environment,
    q_init: &UnitQuaternion,
    p_init: &Vector3<f64>,
    v_init: &Vector3<f64>,
) -> EstimateTrace {
    let n = meas.len();
    let dt = meas.sample_period;
    let mut q = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let (mut qt, mut pt, mut vt) = (*q_init, *p_init, *v_init);
    for t in 0..n {
        q.push(qt);
        p.push(pt);
        v.push(vt);
        let a_n = qt.rotate_vector(&meas.acc[t]) + env.gravity_n;
        pt += dt * vt + 0.5 * dt * dt * a_n;
        vt += dt * a_n;
        qt = qt * exp_q(&(0.5 * dt * meas.gyr[t]));
    }
    let mut trace = EstimateTrace::from_orientations(q);
    trace.p = Some(p);
    trace.v = Some(v);
    trace
}
