//! Extended Kalman filter with orientation deviation states (multiplicative
//! EKF).
//!
//! The filter state is the deviation `η` around a quaternion linearization
//! point, optionally augmented with a gyroscope bias (6 states) or with
//! position and velocity (9 states). After each measurement update the
//! deviation is folded into the linearization point and reset to zero.

use nalgebra::{Cholesky, DMatrix, Matrix3, SMatrix, SVector, Vector3};

use super::{EstimateTrace, EstimatorConfig, StateLayout};
use crate::error::{Error, Result};
use crate::orientation::{cross_matrix, dexp_q, exp_q, quat_to_rotmat, UnitQuaternion};
use crate::sensor_models::{perturb, residual_acc, residual_mag};
use crate::simulator::MeasurementSeries;

/// Sensitivity of the propagated deviation to the gyroscope input:
/// `T [0 I] q̂ᴸ (q̃_{t+1}^c)ᴿ d exp_q(T/2·ω)`.
///
/// To first order this equals `T R̃^nb_{t+1}`. The exact form keeps the
/// filter identical to one Gauss-Newton step of the optimization filter.
pub fn gyro_input_matrix(q_hat: &UnitQuaternion, q_pred: &UnitQuaternion, rate: &Vector3<f64>, sample_period: f64) -> Matrix3<f64> {
    let m = q_hat.left_matrix() * q_pred.conjugate().right_matrix() * dexp_q(&(0.5 * sample_period * rate));
    sample_period * m.fixed_view::<3, 3>(1, 0).into_owned()
}

/// Outcome of a Kalman measurement update.
pub struct Update<const D: usize> {
    pub dx: SVector<f64, D>,
    pub p: SMatrix<f64, D, D>,
    /// `½ εᵀS⁻¹ε + log det S` for this update.
    pub nll: f64,
}

/// Kalman update with innovation `eps`, measurement matrix `h` and diagonal
/// measurement noise variances `r`.
pub fn kalman_update<const D: usize, const M: usize>(
    p: &SMatrix<f64, D, D>,
    h: &SMatrix<f64, M, D>,
    eps: &SVector<f64, M>,
    r: &SVector<f64, M>,
) -> Result<Update<D>> {
    let pht = p * h.transpose();
    let s = h * pht + SMatrix::<f64, M, M>::from_diagonal(r);
    let s = 0.5 * (s + s.transpose());
    let chol = Cholesky::new(s).ok_or_else(|| Error::Numerical("innovation covariance not positive definite".into()))?;
    let s_inv_eps = chol.solve(eps);
    // K = P Hᵀ S⁻¹
    let k = chol.solve(&pht.transpose()).transpose();
    let dx = k * eps;
    let p_new = p - k * s * k.transpose();
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(Update { dx, p: 0.5 * (p_new + p_new.transpose()), nll: 0.5 * eps.dot(&s_inv_eps) + log_det })
}

/// Innovations and `H` for the stacked accelerometer and magnetometer update.
fn orientation_update<const D: usize>(
    p: &SMatrix<f64, D, D>,
    q: &UnitQuaternion,
    y_a: &Vector3<f64>,
    y_m: Option<&Vector3<f64>>,
    cfg: &EstimatorConfig,
) -> Result<Update<D>> {
    let z = Vector3::zeros();
    let noise = &cfg.noise;
    let ra = residual_acc(0, &z, q, y_a, &cfg.env, noise.sigma_acc);
    // The residual Jacobian is −H.
    let ha = -ra.blocks[0].1;
    match y_m {
        Some(y_m) => {
            let rm = residual_mag(0, &z, q, y_m, &cfg.env, noise.sigma_mag);
            let hm = -rm.blocks[0].1;
            let mut h = SMatrix::<f64, 6, D>::zeros();
            h.fixed_view_mut::<3, 3>(0, 0).copy_from(&ha);
            h.fixed_view_mut::<3, 3>(3, 0).copy_from(&hm);
            let mut eps = SVector::<f64, 6>::zeros();
            eps.fixed_rows_mut::<3>(0).copy_from(&ra.value);
            eps.fixed_rows_mut::<3>(3).copy_from(&rm.value);
            let (va, vm) = (noise.sigma_acc.powi(2), noise.sigma_mag.powi(2));
            let r = SVector::<f64, 6>::from_column_slice(&[va, va, va, vm, vm, vm]);
            kalman_update(p, &h, &eps, &r)
        }
        None => {
            let mut h = SMatrix::<f64, 3, D>::zeros();
            h.fixed_view_mut::<3, 3>(0, 0).copy_from(&ha);
            kalman_update(p, &h, &ra.value, &SVector::<f64, 3>::repeat(noise.sigma_acc.powi(2)))
        }
    }
}

/// Result of a full filter pass.
pub struct EkfDevRun {
    pub trace: EstimateTrace,
    /// Prediction-error objective `Σ_t ½ εᵀS⁻¹ε + log det S` over all updates.
    pub neg_log_likelihood: f64,
}

/// Filter pass with `D = 3` (orientation) or `D = 6` (orientation and bias).
/// `gyro_offset` is subtracted from every gyroscope sample. When `keep_trace`
/// is false only the likelihood is accumulated.
pub fn ekf_dev_pass<const D: usize>(
    meas: &MeasurementSeries,
    cfg: &EstimatorConfig,
    gyro_offset: &Vector3<f64>,
    keep_trace: bool,
) -> Result<EkfDevRun> {
    assert!(D == 3 || D == 6, "orientation deviation EKF supports 3 or 6 states");
    cfg.check(meas)?;
    let bias_on = D == 6;
    let n = meas.len();
    let dt = cfg.env.sample_period;
    let noise = &cfg.noise;
    let mag = cfg.mag(meas);
    let mut q = cfg.initial_orientation(meas)?;
    let mut bias = Vector3::zeros();
    let mut p = SMatrix::<f64, D, D>::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * noise.sigma_ori_prior.powi(2)));
    if bias_on {
        p.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * noise.sigma_bias_prior.powi(2)));
    }
    let cap = if keep_trace { n } else { 0 };
    let (mut qs, mut covs, mut biases) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    let mut record = |q: &UnitQuaternion, p: &SMatrix<f64, D, D>, b: &Vector3<f64>| {
        if keep_trace {
            qs.push(*q);
            covs.push(DMatrix::from_iterator(D, D, p.iter().copied()));
            biases.push(*b);
        }
    };
    record(&q, &p, &bias);
    let mut nll = 0.0;
    let var_w = noise.sigma_gyr.powi(2);
    let var_b = noise.sigma_bias_walk.powi(2);
    for t in 1..n {
        let rate = meas.gyr[t - 1] - gyro_offset - bias;
        let q_pred = q * exp_q(&(0.5 * dt * rate));
        let g = gyro_input_matrix(&q, &q_pred, &rate, dt);
        let mut f = SMatrix::<f64, D, D>::identity();
        if bias_on {
            f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-g));
        }
        let mut gqg = SMatrix::<f64, D, D>::zeros();
        gqg.fixed_view_mut::<3, 3>(0, 0).copy_from(&(var_w * g * g.transpose()));
        if bias_on {
            gqg.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * var_b));
        }
        let p_pred = f * p * f.transpose() + gqg;
        let up = orientation_update(&p_pred, &q_pred, &meas.acc[t], mag.map(|m| &m[t]), cfg)?;
        nll += up.nll;
        q = perturb(&Vector3::new(up.dx[0], up.dx[1], up.dx[2]), &q_pred);
        if bias_on {
            bias += Vector3::new(up.dx[3], up.dx[4], up.dx[5]);
        }
        p = up.p;
        record(&q, &p, &bias);
    }
    let trace = EstimateTrace {
        q: qs,
        bias: (bias_on && keep_trace).then_some(biases),
        cov: covs,
        layout: if bias_on { StateLayout::ORIENTATION_BIAS } else { StateLayout::ORIENTATION },
        converged: true,
        ..Default::default()
    };
    Ok(EkfDevRun { trace, neg_log_likelihood: nll })
}

/// Orientation deviation EKF, with bias states when `cfg.estimate_bias` is set.
pub fn ekf_orientation_deviation(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<EstimateTrace> {
    let z = Vector3::zeros();
    Ok(if cfg.estimate_bias { ekf_dev_pass::<6>(meas, cfg, &z, true)? } else { ekf_dev_pass::<3>(meas, cfg, &z, true)? }.trace)
}

/// Initial pose prior shared by the pose filters: position from the first
/// position sample, zero velocity and the configured orientation prior.
pub(crate) fn pose_prior(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<(Vector3<f64>, UnitQuaternion, SMatrix<f64, 9, 9>)> {
    let pos = meas.pos.as_ref().ok_or_else(|| Error::InvalidInput("pose estimation needs position measurements".into()))?;
    if cfg.estimate_bias {
        return Err(Error::InvalidConfig("bias estimation is only available for orientation".into()));
    }
    let noise = &cfg.noise;
    let mut p = SMatrix::<f64, 9, 9>::zeros();
    let diag = [noise.sigma_pos, noise.sigma_vel_prior, noise.sigma_ori_prior];
    for (k, &s) in diag.iter().enumerate() {
        p.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&(Matrix3::identity() * s * s));
    }
    Ok((pos[0], cfg.initial_orientation(meas)?, p))
}

/// Process noise of the pose filters: `G Q Gᵀ` with `G = diag(I₆, G_η)` and
/// `Q = diag(Σ_a, Σ_a, Σ_ω)`.
pub fn pose_process_noise(g_eta: &Matrix3<f64>, cfg: &EstimatorConfig) -> SMatrix<f64, 9, 9> {
    let va = cfg.noise.sigma_acc.powi(2);
    let mut q = SMatrix::<f64, 9, 9>::zeros();
    q.fixed_view_mut::<6, 6>(0, 0).copy_from(&(SMatrix::<f64, 6, 6>::identity() * va));
    q.fixed_view_mut::<3, 3>(6, 6).copy_from(&(cfg.noise.sigma_gyr.powi(2) * g_eta * g_eta.transpose()));
    q
}

/// Transition matrix of the pose filters around orientation `q`.
pub fn pose_transition(q: &UnitQuaternion, y_a: &Vector3<f64>, dt: f64) -> SMatrix<f64, 9, 9> {
    let f_n = cross_matrix(&(quat_to_rotmat(q).matrix() * y_a));
    let mut f = SMatrix::<f64, 9, 9>::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    f.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-0.5 * dt * dt * f_n));
    f.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-dt * f_n));
    f
}

/// Propagates position and velocity with the accelerometer as input.
pub fn propagate_pv(
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    q: &UnitQuaternion,
    y_a: &Vector3<f64>,
    cfg: &EstimatorConfig,
) -> (Vector3<f64>, Vector3<f64>) {
    let dt = cfg.env.sample_period;
    let a = q.rotate_vector(y_a) + cfg.env.gravity_n;
    (p + dt * v + 0.5 * dt * dt * a, v + dt * a)
}

/// Pose EKF with states `[p, v, η]` and position measurements.
pub fn ekf_pose_deviation(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<EstimateTrace> {
    cfg.check(meas)?;
    let (mut pos, mut q, mut cov) = pose_prior(meas, cfg)?;
    let y_p = meas.pos.as_ref().expect("checked by pose_prior");
    let n = meas.len();
    let dt = cfg.env.sample_period;
    let mut vel = Vector3::zeros();
    let mut trace = EstimateTrace { layout: StateLayout::POSE, converged: true, ..Default::default() };
    let (mut ps, mut vs) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut record = |trace: &mut EstimateTrace, p: &Vector3<f64>, v: &Vector3<f64>, q: &UnitQuaternion, c: &SMatrix<f64, 9, 9>| {
        trace.q.push(*q);
        trace.cov.push(DMatrix::from_iterator(9, 9, c.iter().copied()));
        ps.push(*p);
        vs.push(*v);
    };
    record(&mut trace, &pos, &vel, &q, &cov);
    let mut h = SMatrix::<f64, 3, 9>::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    let r = SVector::<f64, 3>::repeat(cfg.noise.sigma_pos.powi(2));
    for t in 1..n {
        let rate = meas.gyr[t - 1];
        let q_pred = q * exp_q(&(0.5 * dt * rate));
        let f = pose_transition(&q, &meas.acc[t - 1], dt);
        let g = gyro_input_matrix(&q, &q_pred, &rate, dt);
        let (p_pred, v_pred) = propagate_pv(&pos, &vel, &q, &meas.acc[t - 1], cfg);
        let c_pred = f * cov * f.transpose() + pose_process_noise(&g, cfg);
        let up = kalman_update(&c_pred, &h, &(y_p[t] - p_pred), &r)?;
        pos = p_pred + up.dx.fixed_rows::<3>(0);
        vel = v_pred + up.dx.fixed_rows::<3>(3);
        q = perturb(&up.dx.fixed_rows::<3>(6).into_owned(), &q_pred);
        cov = up.p;
        record(&mut trace, &pos, &vel, &q, &cov);
    }
    trace.p = Some(ps);
    trace.v = Some(vs);
    Ok(trace)
}
