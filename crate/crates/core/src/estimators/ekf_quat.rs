//! Extended Kalman filter with the unit quaternion as state.
//!
//! The measurement update leaves the quaternion unnormalized, so each step
//! ends with a renormalization of both the quaternion and its covariance.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::ekf_dev::pose_prior;
use super::{EstimateTrace, EstimatorConfig, StateLayout};
use crate::error::{Error, Result};
use crate::orientation::{d_rotate_dq, d_rotate_transpose_dq, dexp_q, exp_q, rotmat_polynomial, Quaternion, UnitQuaternion};
use crate::sensor_models::prior_covariances;
use crate::simulator::MeasurementSeries;

/// Covariance map applied when the quaternion is renormalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Renormalization {
    /// Jacobian of `q ↦ q/‖q‖`, `(I − q̂q̂ᵀ)/‖q̃‖`: removes the radial
    /// component and keeps the rotational uncertainty.
    #[default]
    Projection,
    /// `q̃q̃ᵀ/‖q̃‖³`, which keeps only the radial component.
    RadialOuterProduct,
}

impl Renormalization {
    /// Covariance map for the unnormalized quaternion `q_raw`.
    pub fn jacobian(&self, q_raw: &Vector4<f64>) -> Matrix4<f64> {
        let n = q_raw.norm();
        match self {
            Self::Projection => {
                let u = q_raw / n;
                (Matrix4::identity() - u * u.transpose()) / n
            }
            Self::RadialOuterProduct => q_raw * q_raw.transpose() / (n * n * n),
        }
    }
}

/// Maps a quaternion covariance to the navigation-frame deviation:
/// `η = 2 [0 I] (q̂^c)ᴿ δq`.
pub fn quat_to_deviation_jacobian(q: &UnitQuaternion) -> Matrix3x4<f64> {
    let m = q.conjugate().right_matrix();
    2.0 * m.fixed_view::<3, 4>(1, 0).into_owned()
}

/// Time-update matrices of the quaternion filters for gyroscope rate
/// `rate`: `F = exp_q(T/2·ω)ᴿ` and the noise input `G = −T/2 q̂ᴸ d exp_q(T/2·ω)`.
/// `G` is also the sensitivity to the gyroscope bias.
pub fn quat_time_update(q: &UnitQuaternion, rate: &Vector3<f64>, dt: f64) -> (Matrix4<f64>, Matrix4x3<f64>) {
    let half = 0.5 * dt * rate;
    (exp_q(&half).right_matrix(), -0.5 * dt * q.left_matrix() * dexp_q(&half))
}

fn update(x: &mut DVector<f64>, p: &mut DMatrix<f64>, h: &DMatrix<f64>, eps: &DVector<f64>, r: &DVector<f64>) -> Result<()> {
    let s = h * &*p * h.transpose() + DMatrix::from_diagonal(r);
    let s = 0.5 * (&s + s.transpose());
    let chol = s.clone().cholesky().ok_or_else(|| Error::Numerical("innovation covariance not positive definite".into()))?;
    let pht = &*p * h.transpose();
    let k = chol.solve(&pht.transpose()).transpose();
    *x += &k * eps;
    let p_new = &*p - &k * s * k.transpose();
    *p = 0.5 * (&p_new + p_new.transpose());
    Ok(())
}

/// Renormalizes the quaternion at `off` in `x` and the matching covariance block.
fn renormalize(x: &mut DVector<f64>, p: &mut DMatrix<f64>, off: usize, mode: Renormalization) -> UnitQuaternion {
    let raw: Vector4<f64> = x.fixed_rows::<4>(off).into_owned();
    let mut j = DMatrix::identity(x.len(), x.len());
    j.fixed_view_mut::<4, 4>(off, off).copy_from(&mode.jacobian(&raw));
    let p_new = &j * &*p * j.transpose();
    *p = 0.5 * (&p_new + p_new.transpose());
    let q = UnitQuaternion::normalize(Quaternion::from_vector(raw));
    x.fixed_rows_mut::<4>(off).copy_from(q.coords());
    q
}

/// Converts the filter covariance to deviation coordinates, replacing the
/// four quaternion rows and columns at `off` by three.
fn deviation_cov(p: &DMatrix<f64>, q: &UnitQuaternion, off: usize) -> DMatrix<f64> {
    let n = p.nrows();
    let mut t = DMatrix::zeros(n - 1, n);
    for i in 0..off {
        t[(i, i)] = 1.0;
    }
    t.fixed_view_mut::<3, 4>(off, off).copy_from(&quat_to_deviation_jacobian(q));
    for i in off + 4..n {
        t[(i - 1, i)] = 1.0;
    }
    let c = &t * p * t.transpose();
    0.5 * (&c + c.transpose())
}

/// Quaternion-state EKF, with bias states when `cfg.estimate_bias` is set.
pub fn ekf_quaternion(meas: &MeasurementSeries, cfg: &EstimatorConfig, renorm: Renormalization) -> Result<EstimateTrace> {
    cfg.check(meas)?;
    let n = meas.len();
    let dt = cfg.env.sample_period;
    let noise = &cfg.noise;
    let env = &cfg.env;
    let mag = cfg.mag(meas);
    let bias_on = cfg.estimate_bias;
    let d = if bias_on { 7 } else { 4 };
    let q0 = cfg.initial_orientation(meas)?;
    let mut x = DVector::zeros(d);
    x.fixed_rows_mut::<4>(0).copy_from(q0.coords());
    let mut p = DMatrix::zeros(d, d);
    p.fixed_view_mut::<4, 4>(0, 0).copy_from(&prior_covariances(&q0, noise).1);
    if bias_on {
        p.fixed_view_mut::<3, 3>(4, 4).copy_from(&(Matrix3::identity() * noise.sigma_bias_prior.powi(2)));
    }
    let mut q = q0;
    let mut trace = EstimateTrace {
        layout: if bias_on { StateLayout::ORIENTATION_BIAS } else { StateLayout::ORIENTATION },
        converged: true,
        ..Default::default()
    };
    let mut biases = Vec::with_capacity(n);
    let bias_of = |x: &DVector<f64>| if bias_on { Vector3::new(x[4], x[5], x[6]) } else { Vector3::zeros() };
    trace.q.push(q);
    trace.cov.push(deviation_cov(&p, &q, 0));
    biases.push(bias_of(&x));
    let rows = if mag.is_some() { 6 } else { 3 };
    let mut r = DVector::from_element(rows, noise.sigma_acc.powi(2));
    if rows == 6 {
        r.rows_mut(3, 3).fill(noise.sigma_mag.powi(2));
    }
    for t in 1..n {
        // Time update.
        let rate = meas.gyr[t - 1] - bias_of(&x);
        let half = 0.5 * dt * rate;
        let (f_q, g) = quat_time_update(&q, &rate, dt);
        let mut f = DMatrix::identity(d, d);
        f.fixed_view_mut::<4, 4>(0, 0).copy_from(&f_q);
        let mut gqg = DMatrix::zeros(d, d);
        gqg.fixed_view_mut::<4, 4>(0, 0).copy_from(&(noise.sigma_gyr.powi(2) * g * g.transpose()));
        if bias_on {
            f.fixed_view_mut::<4, 3>(0, 4).copy_from(&g);
            gqg.fixed_view_mut::<3, 3>(4, 4).copy_from(&(Matrix3::identity() * noise.sigma_bias_walk.powi(2)));
        }
        let q_pred = q * exp_q(&half);
        x.fixed_rows_mut::<4>(0).copy_from(q_pred.coords());
        p = &f * &p * f.transpose() + gqg;
        // Measurement update.
        let qc = q_pred.coords();
        let r_bn = rotmat_polynomial(qc).transpose();
        let mut h = DMatrix::zeros(rows, d);
        let mut eps = DVector::zeros(rows);
        h.fixed_view_mut::<3, 4>(0, 0).copy_from(&(-d_rotate_transpose_dq(qc, &env.gravity_n)));
        eps.fixed_rows_mut::<3>(0).copy_from(&(meas.acc[t] + r_bn * env.gravity_n));
        if let Some(m) = mag {
            h.fixed_view_mut::<3, 4>(3, 0).copy_from(&d_rotate_transpose_dq(qc, &env.mag_field_n));
            eps.fixed_rows_mut::<3>(3).copy_from(&(m[t].normalize() - r_bn * env.mag_field_n));
        }
        update(&mut x, &mut p, &h, &eps, &r)?;
        q = renormalize(&mut x, &mut p, 0, renorm);
        trace.q.push(q);
        trace.cov.push(deviation_cov(&p, &q, 0));
        biases.push(bias_of(&x));
    }
    if bias_on {
        trace.bias = Some(biases);
    }
    Ok(trace)
}

/// Quaternion-state pose EKF with state `[p, v, q]` and position measurements.
pub fn ekf_pose_quaternion(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<EstimateTrace> {
    cfg.check(meas)?;
    let (p0, q0, _) = pose_prior(meas, cfg)?;
    let y_p = meas.pos.as_ref().expect("checked by pose_prior");
    let n = meas.len();
    let dt = cfg.env.sample_period;
    let noise = &cfg.noise;
    let mut x = DVector::zeros(10);
    x.fixed_rows_mut::<3>(0).copy_from(&p0);
    x.fixed_rows_mut::<4>(6).copy_from(q0.coords());
    let mut p = DMatrix::zeros(10, 10);
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * noise.sigma_pos.powi(2)));
    p.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * noise.sigma_vel_prior.powi(2)));
    p.fixed_view_mut::<4, 4>(6, 6).copy_from(&prior_covariances(&q0, noise).1);
    let mut q = q0;
    let mut trace = EstimateTrace { layout: StateLayout::POSE, converged: true, ..Default::default() };
    let (mut ps, mut vs) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut record = |trace: &mut EstimateTrace, x: &DVector<f64>, p: &DMatrix<f64>, q: &UnitQuaternion| {
        trace.q.push(*q);
        trace.cov.push(deviation_cov(p, q, 6));
        ps.push(x.fixed_rows::<3>(0).into_owned());
        vs.push(x.fixed_rows::<3>(3).into_owned());
    };
    record(&mut trace, &x, &p, &q);
    let mut h = DMatrix::zeros(3, 10);
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    let r = DVector::from_element(3, noise.sigma_pos.powi(2));
    let va = noise.sigma_acc.powi(2);
    for t in 1..n {
        let y_a = &meas.acc[t - 1];
        let half = 0.5 * dt * meas.gyr[t - 1];
        let (f_q, g) = quat_time_update(&q, &meas.gyr[t - 1], dt);
        let d_rot = d_rotate_dq(q.coords(), y_a);
        let mut f = DMatrix::identity(10, 10);
        f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
        f.fixed_view_mut::<3, 4>(0, 6).copy_from(&(0.5 * dt * dt * d_rot));
        f.fixed_view_mut::<3, 4>(3, 6).copy_from(&(dt * d_rot));
        f.fixed_view_mut::<4, 4>(6, 6).copy_from(&f_q);
        let mut gqg = DMatrix::zeros(10, 10);
        for k in 0..6 {
            gqg[(k, k)] = va;
        }
        gqg.fixed_view_mut::<4, 4>(6, 6).copy_from(&(noise.sigma_gyr.powi(2) * g * g.transpose()));
        let a = q.rotate_vector(y_a) + cfg.env.gravity_n;
        let pos = x.fixed_rows::<3>(0).into_owned();
        let vel = x.fixed_rows::<3>(3).into_owned();
        x.fixed_rows_mut::<3>(0).copy_from(&(pos + dt * vel + 0.5 * dt * dt * a));
        x.fixed_rows_mut::<3>(3).copy_from(&(vel + dt * a));
        x.fixed_rows_mut::<4>(6).copy_from((q * exp_q(&half)).coords());
        p = &f * &p * f.transpose() + gqg;
        let eps = DVector::from_column_slice((y_p[t] - x.fixed_rows::<3>(0)).as_slice());
        update(&mut x, &mut p, &h, &eps, &r)?;
        q = renormalize(&mut x, &mut p, 6, Renormalization::Projection);
        record(&mut trace, &x, &p, &q);
    }
    trace.p = Some(ps);
    trace.v = Some(vs);
    Ok(trace)
}
