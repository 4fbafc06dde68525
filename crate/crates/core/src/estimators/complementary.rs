//! Complementary filter: gyroscope integration blended with one Gauss-Newton
//! step towards the accelerometer and magnetometer orientation.

use nalgebra::{DMatrix, DVector, Matrix4};

use super::{EstimateTrace, EstimatorConfig};
use crate::error::{Error, Result};
use crate::orientation::{d_rotate_transpose_dq, exp_q, rotmat_polynomial, Quaternion, UnitQuaternion};
use crate::simulator::MeasurementSeries;

/// Added to `JᵀJ` before inversion; without the magnetometer `JᵀJ` is
/// rank deficient.
pub const REGULARIZATION: f64 = 1e-12;

/// Runs the filter with blend weight `alpha` in (0, 1). Covariances are not
/// produced.
pub fn complementary_filter(meas: &MeasurementSeries, cfg: &EstimatorConfig, alpha: f64) -> Result<EstimateTrace> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    blend(meas, cfg, alpha)
}

/// The filter recursion for any `alpha` in [0, 1]; zero is pure gyroscope
/// integration.
pub fn blend(meas: &MeasurementSeries, cfg: &EstimatorConfig, alpha: f64) -> Result<EstimateTrace> {
    cfg.check(meas)?;
    let n = meas.len();
    let dt = cfg.env.sample_period;
    let env = &cfg.env;
    let noise = &cfg.noise;
    let mag = cfg.mag(meas);
    let rows = if mag.is_some() { 6 } else { 3 };
    let mut q = cfg.initial_orientation(meas)?;
    let mut out = Vec::with_capacity(n);
    out.push(q);
    let (wa, wm) = (1.0 / noise.sigma_acc, 1.0 / noise.sigma_mag);
    let mut j = DMatrix::zeros(rows, 4);
    let mut eps = DVector::zeros(rows);
    for t in 1..n {
        let q_pred = q * exp_q(&(0.5 * dt * meas.gyr[t - 1]));
        if alpha == 0.0 {
            q = q_pred;
            out.push(q);
            continue;
        }
        let qc = q_pred.coords();
        let r_bn = rotmat_polynomial(qc).transpose();
        eps.fixed_rows_mut::<3>(0).copy_from(&(wa * (meas.acc[t] + r_bn * env.gravity_n)));
        j.fixed_view_mut::<3, 4>(0, 0).copy_from(&(wa * d_rotate_transpose_dq(qc, &env.gravity_n)));
        if let Some(m) = mag {
            eps.fixed_rows_mut::<3>(3).copy_from(&(wm * (m[t].normalize() - r_bn * env.mag_field_n)));
            j.fixed_view_mut::<3, 4>(3, 0).copy_from(&(-wm * d_rotate_transpose_dq(qc, &env.mag_field_n)));
        }
        let jtj: Matrix4<f64> = (j.transpose() * &j).fixed_view::<4, 4>(0, 0).into_owned() + Matrix4::identity() * REGULARIZATION;
        let jte = (j.transpose() * &eps).fixed_rows::<4>(0).into_owned();
        let step = jtj.cholesky().ok_or_else(|| Error::Numerical("singular complementary-filter normal matrix".into()))?.solve(&jte);
        let raw = qc - alpha * step;
        q = UnitQuaternion::normalize(Quaternion::from_vector(raw));
        out.push(q);
    }
    Ok(EstimateTrace::from_orientations(out))
}
