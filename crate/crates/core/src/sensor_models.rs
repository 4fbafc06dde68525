//! Measurement models, residuals and their Jacobians for the orientation and
//! pose state-space models, plus the two-vector initial orientation.
//!
//! Every residual is a 3-vector with isotropic noise, so a [`Residual`]
//! carries its value, a scalar whitening weight `1/σ` and one 3×3 Jacobian
//! block per state block it touches. Orientation blocks are deviations
//! `η` in the navigation frame around a linearization point `q̃`, with
//! `q^nb = exp_q(η/2) ⊙ q̃^nb`. All Jacobians are exact at `η = 0`.

use arrayvec::ArrayVec;
use nalgebra::{Matrix3, Matrix4, Matrix4x3, SymmetricEigen, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orientation::{cross_matrix, dlog_q, exp_q, exp_r, log_q, quat_to_rotmat, UnitQuaternion};

/// Standard deviations of the sensor noise, priors and bias random walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Gyroscope white noise, rad/s.
    pub sigma_gyr: f64,
    /// Accelerometer white noise, m/s².
    pub sigma_acc: f64,
    /// Magnetometer white noise on the unit-norm field.
    pub sigma_mag: f64,
    /// Position measurement noise, m.
    pub sigma_pos: f64,
    /// Initial orientation uncertainty per axis, rad.
    pub sigma_ori_prior: f64,
    /// Initial velocity uncertainty per axis, m/s.
    pub sigma_vel_prior: f64,
    /// Gyroscope bias prior, rad/s.
    pub sigma_bias_prior: f64,
    /// Gyroscope bias random walk per sample, rad/s.
    pub sigma_bias_walk: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_gyr: 1e-2,
            sigma_acc: 1e-1,
            sigma_mag: 1e-1,
            sigma_pos: 1e-2,
            sigma_ori_prior: 20f64.to_radians(),
            sigma_vel_prior: 0.1,
            sigma_bias_prior: 5e-2,
            sigma_bias_walk: 1e-10,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("sigma_gyr", self.sigma_gyr),
            ("sigma_acc", self.sigma_acc),
            ("sigma_mag", self.sigma_mag),
            ("sigma_pos", self.sigma_pos),
            ("sigma_ori_prior", self.sigma_ori_prior),
            ("sigma_vel_prior", self.sigma_vel_prior),
            ("sigma_bias_prior", self.sigma_bias_prior),
            ("sigma_bias_walk", self.sigma_bias_walk),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Gravity, magnetic field and sample period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Gravity in the navigation frame, m/s². z points up.
    pub gravity_n: Vector3<f64>,
    /// Unit magnetic field in the navigation frame.
    pub mag_field_n: Vector3<f64>,
    /// Sample period, s.
    pub sample_period: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self::with_dip(71f64.to_radians(), 1.0)
    }
}

impl Environment {
    /// Field `(cos δ, 0, −sin δ)` for dip angle `δ`, gravity `(0, 0, −9.82)`.
    pub fn with_dip(dip: f64, sample_period: f64) -> Self {
        Self { gravity_n: Vector3::new(0.0, 0.0, -9.82), mag_field_n: Vector3::new(dip.cos(), 0.0, -dip.sin()), sample_period }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(Error::InvalidConfig("sample period must be positive".into()));
        }
        if (self.mag_field_n.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("magnetic field must have unit norm".into()));
        }
        Ok(())
    }
}

/// Identifies a 3-wide block of the estimation state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateBlock {
    Orientation(usize),
    Position(usize),
    Velocity(usize),
    Bias,
}

/// A whitened residual term `weight · value` with its Jacobian blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub value: Vector3<f64>,
    pub blocks: ArrayVec<(StateBlock, Matrix3<f64>), 4>,
    /// Inverse standard deviation.
    pub weight: f64,
}

impl Residual {
    pub fn new(value: Vector3<f64>, weight: f64) -> Self {
        Self { value, blocks: ArrayVec::new(), weight }
    }

    pub fn with(mut self, block: StateBlock, jacobian: Matrix3<f64>) -> Self {
        self.blocks.push((block, jacobian));
        self
    }

    pub fn jacobian(&self, block: StateBlock) -> Option<&Matrix3<f64>> {
        self.blocks.iter().find(|(b, _)| *b == block).map(|(_, j)| j)
    }

    /// Contribution `½ w² ‖value‖²` to the objective.
    pub fn cost(&self) -> f64 {
        0.5 * self.weight * self.weight * self.value.norm_squared()
    }
}

/// Perturbs a linearization point: `exp_q(η/2) ⊙ q̃`.
pub fn perturb(eta: &Vector3<f64>, q: &UnitQuaternion) -> UnitQuaternion {
    exp_q(&(0.5 * eta)) * *q
}

/// Two-vector initial orientation from the first accelerometer and
/// magnetometer samples.
///
/// Builds the normalized gravity and horizontal-field directions in both
/// frames and returns an eigenvector of the quadratic form `A`, choosing among
/// the eigenvectors of `A` by evaluating the vector-alignment objective
/// `Σ ‖v̄ⁿ − q ⊙ v̄ᵇ ⊙ q^c‖²` at each.
pub fn quest_initial_orientation(y_a: &Vector3<f64>, y_m: &Vector3<f64>, env: &Environment) -> Result<UnitQuaternion> {
    if y_a.norm() <= 1.0 || y_m.norm() <= 0.0 || !y_a.iter().chain(y_m.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("initialization needs ‖y_a‖ > 1 and nonzero y_m".into()));
    }
    let g_n = -env.gravity_n.normalize();
    let g_b = y_a.normalize();
    let m_b_raw = g_b.cross(&y_m.normalize().cross(&g_b));
    if m_b_raw.norm() < 1e-6 {
        return Err(Error::DegenerateInitialization);
    }
    let m_b = m_b_raw.normalize();
    let m_n_raw = g_n.cross(&env.mag_field_n.cross(&g_n));
    if m_n_raw.norm() < 1e-6 {
        return Err(Error::DegenerateInitialization);
    }
    let m_n = m_n_raw.normalize();
    let a = quest_matrix(&g_n, &g_b, &m_n, &m_b);
    let eig = SymmetricEigen::new(a);
    let pairs = [(g_n, g_b), (m_n, m_b)];
    let best = (0..4)
        .map(|i| UnitQuaternion::normalize(crate::orientation::Quaternion::from_vector(eig.eigenvectors.column(i).into_owned())))
        .min_by(|x, y| quest_objective(x, &pairs).total_cmp(&quest_objective(y, &pairs)))
        .expect("four eigenvectors");
    Ok(best.canonical())
}

/// Symmetric part of `A = −(ĝⁿ)ᴸ(ĝᵇ)ᴿ − (m̂ⁿ)ᴸ(m̂ᵇ)ᴿ`.
pub fn quest_matrix(g_n: &Vector3<f64>, g_b: &Vector3<f64>, m_n: &Vector3<f64>, m_b: &Vector3<f64>) -> Matrix4<f64> {
    use crate::orientation::Quaternion as Q;
    let a = -Q::pure(g_n).left_matrix() * Q::pure(g_b).right_matrix() - Q::pure(m_n).left_matrix() * Q::pure(m_b).right_matrix();
    0.5 * (a + a.transpose())
}

/// Alignment error `Σ ‖nᵢ − q ⊙ bᵢ ⊙ q^c‖²` over direction pairs `(nᵢ, bᵢ)`.
pub fn quest_objective(q: &UnitQuaternion, pairs: &[(Vector3<f64>, Vector3<f64>)]) -> f64 {
    pairs.iter().map(|(n, b)| (n - q.rotate_vector(b)).norm_squared()).sum()
}

/// Initial orientation from the accelerometer alone: inclination from the
/// measured gravity direction and zero heading.
pub fn inclination_initial_orientation(y_a: &Vector3<f64>) -> Result<UnitQuaternion> {
    if y_a.norm() <= 1.0 {
        return Err(Error::InvalidInput("initialization needs ‖y_a‖ > 1".into()));
    }
    let g = y_a.normalize();
    let pitch = (-g.x).clamp(-1.0, 1.0).asin();
    let roll = g.y.atan2(g.z);
    let r_bn = crate::orientation::euler_to_rotmat(&crate::orientation::EulerAngles::new(0.0, pitch, roll));
    Ok(crate::orientation::rotmat_to_quat(&r_bn.transpose()))
}

/// Prior covariances of the initial orientation, as a deviation `Σ_η` and as
/// a quaternion `Σ_q = ¼ q̆ᴿ E Σ_η Eᵀ (q̆^c)ᴿ` with `E = [0₁ₓ₃; I₃]`.
pub fn prior_covariances(q1: &UnitQuaternion, noise: &NoiseModel) -> (Matrix3<f64>, Matrix4<f64>) {
    let s2 = noise.sigma_ori_prior * noise.sigma_ori_prior;
    let sigma_eta = Matrix3::identity() * s2;
    let e = dexp_zero();
    let sigma_q = 0.25 * q1.right_matrix() * e * sigma_eta * e.transpose() * q1.conjugate().right_matrix();
    (sigma_eta, sigma_q)
}

/// `d exp_q / dη` at zero.
pub fn dexp_zero() -> Matrix4x3<f64> {
    let mut e = Matrix4x3::zeros();
    e.fixed_view_mut::<3, 3>(1, 0).copy_from(&Matrix3::identity());
    e
}

/// `e = 2 log_q(exp_q(η/2) ⊙ q̃₁ ⊙ q̆₁^c)` with weight `1/σ_η`.
pub fn residual_prior_orientation(eta: &Vector3<f64>, q_lin: &UnitQuaternion, q_init: &UnitQuaternion, sigma: f64) -> Residual {
    let c = *q_lin * q_init.conjugate();
    let value = 2.0 * log_q(&(exp_q(&(0.5 * eta)) * c));
    let jac = dlog_q(c.coords()) * c.right_matrix() * dexp_zero();
    Residual::new(value, 1.0 / sigma).with(StateBlock::Orientation(0), jac)
}

/// Gyroscope dynamics residual between samples `t` and `t + 1`:
/// `(2/T) log_q(q_t^bn ⊙ q_{t+1}^nb) − (y_ω − δ_ω)`.
///
/// When `bias` is given the residual also depends on the bias block with
/// Jacobian `I₃`.
#[allow(clippy::too_many_arguments)]
pub fn residual_gyr_dynamics(
    t: usize,
    eta_t: &Vector3<f64>,
    eta_next: &Vector3<f64>,
    q_t: &UnitQuaternion,
    q_next: &UnitQuaternion,
    y_w: &Vector3<f64>,
    sample_period: f64,
    bias: Option<&Vector3<f64>>,
    sigma: f64,
) -> Residual {
    let qt = perturb(eta_t, q_t);
    let qn = perturb(eta_next, q_next);
    let rate = match bias {
        Some(b) => y_w - b,
        None => *y_w,
    };
    let value = (2.0 / sample_period) * log_q(&(qt.conjugate() * qn)) - rate;
    // At η = 0 the argument of the logarithm is q̃_t^c ⊙ q̃_{t+1}.
    let c = q_t.conjugate() * *q_next;
    let base = (1.0 / sample_period) * dlog_q(c.coords()) * q_t.conjugate().left_matrix() * q_next.right_matrix();
    let e = dexp_zero();
    let flip = Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0));
    let d_next = base * e;
    let d_t = base * flip * e;
    let mut r = Residual::new(value, 1.0 / sigma).with(StateBlock::Orientation(t), d_t).with(StateBlock::Orientation(t + 1), d_next);
    if bias.is_some() {
        r = r.with(StateBlock::Bias, Matrix3::identity());
    }
    r
}

/// Accelerometer residual `y_a + R̃^bn exp_R(η)ᵀ gⁿ`.
pub fn residual_acc(t: usize, eta: &Vector3<f64>, q_lin: &UnitQuaternion, y_a: &Vector3<f64>, env: &Environment, sigma: f64) -> Residual {
    let r_bn = quat_to_rotmat(q_lin).transpose();
    let value = y_a + r_bn.matrix() * exp_r(eta).matrix().transpose() * env.gravity_n;
    let jac = r_bn.matrix() * cross_matrix(&env.gravity_n);
    Residual::new(value, 1.0 / sigma).with(StateBlock::Orientation(t), jac)
}

/// Magnetometer residual `y_m − R̃^bn exp_R(η)ᵀ mⁿ`. `y_m` is normalized first.
pub fn residual_mag(t: usize, eta: &Vector3<f64>, q_lin: &UnitQuaternion, y_m: &Vector3<f64>, env: &Environment, sigma: f64) -> Residual {
    let r_bn = quat_to_rotmat(q_lin).transpose();
    let value = y_m.normalize() - r_bn.matrix() * exp_r(eta).matrix().transpose() * env.mag_field_n;
    let jac = -r_bn.matrix() * cross_matrix(&env.mag_field_n);
    Residual::new(value, 1.0 / sigma).with(StateBlock::Orientation(t), jac)
}

/// Position and velocity propagation residuals between samples `t` and
/// `t + 1`, both driven by the accelerometer with noise `σ_a`:
///
/// `(2/T²)(p_{t+1} − p_t − T v_t) − R^nb y_a − gⁿ` and
/// `(1/T)(v_{t+1} − v_t) − R^nb y_a − gⁿ`.
#[allow(clippy::too_many_arguments)]
pub fn residual_pose_dynamics(
    t: usize,
    p_t: &Vector3<f64>,
    p_next: &Vector3<f64>,
    v_t: &Vector3<f64>,
    v_next: &Vector3<f64>,
    eta_t: &Vector3<f64>,
    q_t: &UnitQuaternion,
    y_a: &Vector3<f64>,
    env: &Environment,
    sigma: f64,
) -> (Residual, Residual) {
    let dt = env.sample_period;
    let r_nb = quat_to_rotmat(q_t);
    let f_n = exp_r(eta_t).matrix() * r_nb.matrix() * y_a;
    let d_eta = cross_matrix(&(r_nb.matrix() * y_a));
    let i3 = Matrix3::identity();
    let pos = Residual::new((2.0 / (dt * dt)) * (p_next - p_t - dt * v_t) - f_n - env.gravity_n, 1.0 / sigma)
        .with(StateBlock::Position(t + 1), (2.0 / (dt * dt)) * i3)
        .with(StateBlock::Position(t), -(2.0 / (dt * dt)) * i3)
        .with(StateBlock::Velocity(t), -(2.0 / dt) * i3)
        .with(StateBlock::Orientation(t), d_eta);
    let vel = Residual::new((v_next - v_t) / dt - f_n - env.gravity_n, 1.0 / sigma)
        .with(StateBlock::Velocity(t + 1), i3 / dt)
        .with(StateBlock::Velocity(t), -i3 / dt)
        .with(StateBlock::Orientation(t), d_eta);
    (pos, vel)
}

/// Position measurement residual `y_p − p_t`.
pub fn residual_pos(t: usize, p: &Vector3<f64>, y_p: &Vector3<f64>, sigma: f64) -> Residual {
    Residual::new(y_p - p, 1.0 / sigma).with(StateBlock::Position(t), -Matrix3::identity())
}

/// Prior on the initial position, `p₁ − y_{p,1}`.
pub fn residual_prior_position(p: &Vector3<f64>, y_p: &Vector3<f64>, sigma: f64) -> Residual {
    Residual::new(p - y_p, 1.0 / sigma).with(StateBlock::Position(0), Matrix3::identity())
}

/// Prior on the initial velocity, `v₁`.
pub fn residual_prior_velocity(v: &Vector3<f64>, sigma: f64) -> Residual {
    Residual::new(*v, 1.0 / sigma).with(StateBlock::Velocity(0), Matrix3::identity())
}

/// Prior on the gyroscope bias, `δ_ω`.
pub fn residual_prior_bias(b: &Vector3<f64>, sigma: f64) -> Residual {
    Residual::new(*b, 1.0 / sigma).with(StateBlock::Bias, Matrix3::identity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::axis_angle_to_quat;
    use approx::assert_abs_diff_eq;

    #[test]
    fn level_sensor_residuals_vanish() {
        let env = Environment::default();
        let q = UnitQuaternion::identity();
        let z = Vector3::zeros();
        let ra = residual_acc(0, &z, &q, &Vector3::new(0.0, 0.0, 9.82), &env, 0.1);
        assert_abs_diff_eq!(ra.value, z, epsilon = 1e-15);
        let rm = residual_mag(0, &z, &q, &env.mag_field_n, &env, 0.1);
        assert_abs_diff_eq!(rm.value, z, epsilon = 1e-15);
    }

    #[test]
    fn quest_aligned_and_half_turn() {
        let env = Environment::default();
        let ya = Vector3::new(0.0, 0.0, 9.82);
        let q = quest_initial_orientation(&ya, &env.mag_field_n, &env).unwrap();
        assert!(q.angle_to(&UnitQuaternion::identity()) < 1e-9);
        let flipped = Vector3::new(-env.mag_field_n.x, 0.0, env.mag_field_n.z);
        let q = quest_initial_orientation(&ya, &flipped, &env).unwrap();
        let yaw = UnitQuaternion::from_components(0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(q.angle_to(&yaw) < 1e-9);
    }

    #[test]
    fn quest_rejects_vertical_field() {
        let env = Environment::default();
        let ya = Vector3::new(0.0, 0.0, 9.82);
        let err = quest_initial_orientation(&ya, &Vector3::new(0.0, 0.0, -1.0), &env);
        assert!(matches!(err, Err(Error::DegenerateInitialization)));
    }

    #[test]
    fn inclination_init_has_zero_heading() {
        let truth = axis_angle_to_quat(&Vector3::new(1.0, 0.5, 0.0), 0.4);
        let g_b = truth.conjugate().rotate_vector(&Vector3::new(0.0, 0.0, 9.82));
        let q = inclination_initial_orientation(&g_b).unwrap();
        assert_abs_diff_eq!(q.conjugate().rotate_vector(&Vector3::z()), g_b.normalize(), epsilon = 1e-12);
        let e = crate::orientation::rotmat_to_euler(&quat_to_rotmat(&q).transpose());
        assert_abs_diff_eq!(e.yaw, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn prior_covariance_values() {
        let noise = NoiseModel::default();
        let (se, sq) = prior_covariances(&UnitQuaternion::identity(), &noise);
        assert_abs_diff_eq!(se[(0, 0)], 0.349_065_850_398_865_9f64.powi(2), epsilon = 1e-15);
        assert_eq!(sq.row(0).norm(), 0.0);
        assert_abs_diff_eq!(sq.trace(), 0.75 * se[(0, 0)], epsilon = 1e-15);
    }

    #[test]
    fn gyro_residual_zero_for_consistent_linearization() {
        let q0 = axis_angle_to_quat(&Vector3::new(0.2, -1.0, 0.4), 0.9);
        let w = Vector3::new(0.1, 0.0, 0.0);
        let q1 = q0 * exp_q(&(0.5 * w));
        let z = Vector3::zeros();
        let r = residual_gyr_dynamics(0, &z, &z, &q0, &q1, &w, 1.0, None, 0.01);
        assert_abs_diff_eq!(r.value, z, epsilon = 1e-14);
    }

    #[test]
    fn position_residual() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        let r = residual_pos(4, &p, &(p + Vector3::x()), 0.01);
        assert_eq!(r.value, Vector3::x());
        assert_eq!(*r.jacobian(StateBlock::Position(4)).unwrap(), -Matrix3::identity());
    }
}
