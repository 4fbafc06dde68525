//! Filtering as a sequence of small optimization problems.
//!
//! At each sample the cost combines the predicted distribution of the current
//! state (an arrival-cost style term weighted by `P_{t|t−1}⁻¹`) with the
//! current measurements, and is minimized by Gauss-Newton. With one unit
//! step per sample this reduces to the orientation deviation EKF.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};

use super::ekf_dev::{gyro_input_matrix, pose_prior, pose_process_noise, pose_transition, propagate_pv};
use super::gauss_newton::{gauss_newton_solve, solve_normal_equations, GaussNewtonProblem, Linearization};
use super::{EstimateTrace, EstimatorConfig, StateLayout};
use crate::error::{Error, Result};
use crate::orientation::{exp_q, UnitQuaternion};
use crate::sensor_models::{perturb, residual_acc, residual_mag, residual_prior_orientation};
use crate::simulator::MeasurementSeries;

enum StepMeasurement<'a> {
    Orientation { y_a: &'a Vector3<f64>, y_m: Option<&'a Vector3<f64>> },
    Position { y_p: &'a Vector3<f64> },
}

/// One time step: the state is a quaternion plus a Euclidean part (the bias,
/// or position and velocity) and the tangent vector is laid out with the
/// orientation deviation at `eta`.
struct StepProblem<'a> {
    cfg: &'a EstimatorConfig,
    q_pred: UnitQuaternion,
    e_pred: DVector<f64>,
    /// Inverse Cholesky factor of `P_{t|t−1}`.
    whiten: DMatrix<f64>,
    eta: usize,
    meas: StepMeasurement<'a>,
    last_hessian: RefCell<Option<DMatrix<f64>>>,
}

type StepPoint = (UnitQuaternion, DVector<f64>);

impl StepProblem<'_> {
    fn dim(&self) -> usize {
        self.e_pred.len() + 3
    }

    /// Euclidean coordinates inside the tangent vector, in order.
    fn euclid_index(&self, k: usize) -> usize {
        if k < self.eta {
            k
        } else {
            k + 3
        }
    }

    fn stack(&self, x: &StepPoint) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let z = Vector3::zeros();
        let mut e_f = DVector::zeros(d);
        let mut j_f = DMatrix::zeros(d, d);
        // The orientation row keeps a unit Jacobian and P_{t|t−1} is not
        // relinearized between iterations. The exact log-map Jacobian would
        // rotate the large heading variance of magnetometer-free runs into
        // the inclination and let the accelerometer steer the heading.
        let prior = residual_prior_orientation(&z, &x.0, &self.q_pred, 1.0);
        e_f.fixed_rows_mut::<3>(self.eta).copy_from(&prior.value);
        j_f.fixed_view_mut::<3, 3>(self.eta, self.eta).copy_from(&Matrix3::identity());
        for k in 0..self.e_pred.len() {
            let i = self.euclid_index(k);
            e_f[i] = x.1[k] - self.e_pred[k];
            j_f[(i, i)] = 1.0;
        }
        let mut rows: Vec<(Vector3<f64>, DMatrix<f64>)> = Vec::with_capacity(2);
        let noise = &self.cfg.noise;
        match &self.meas {
            StepMeasurement::Orientation { y_a, y_m } => {
                let mut push = |r: crate::sensor_models::Residual| {
                    let mut j = DMatrix::zeros(3, d);
                    j.fixed_view_mut::<3, 3>(0, self.eta).copy_from(&(r.weight * r.blocks[0].1));
                    rows.push((r.weight * r.value, j));
                };
                push(residual_acc(0, &z, &x.0, y_a, &self.cfg.env, noise.sigma_acc));
                if let Some(y_m) = y_m {
                    push(residual_mag(0, &z, &x.0, y_m, &self.cfg.env, noise.sigma_mag));
                }
            }
            StepMeasurement::Position { y_p } => {
                let w = 1.0 / noise.sigma_pos;
                let p = Vector3::new(x.1[0], x.1[1], x.1[2]);
                let mut j = DMatrix::zeros(3, d);
                j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-w * Matrix3::identity()));
                rows.push((w * (*y_p - p), j));
            }
        }
        let m = d + 3 * rows.len();
        let mut r = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, d);
        r.rows_mut(0, d).copy_from(&(&self.whiten * e_f));
        jac.view_mut((0, 0), (d, d)).copy_from(&(&self.whiten * j_f));
        for (k, (v, j)) in rows.iter().enumerate() {
            r.fixed_rows_mut::<3>(d + 3 * k).copy_from(v);
            jac.view_mut((d + 3 * k, 0), (3, d)).copy_from(j);
        }
        (r, jac)
    }
}

impl GaussNewtonProblem for StepProblem<'_> {
    type Point = StepPoint;

    fn objective(&self, x: &StepPoint) -> f64 {
        0.5 * self.stack(x).0.norm_squared()
    }

    fn linearize(&self, x: &StepPoint) -> Result<Linearization> {
        let (r, j) = self.stack(x);
        let h = j.transpose() * &j;
        let gradient = j.transpose() * &r;
        let step = solve_normal_equations(&h, &gradient)?;
        *self.last_hessian.borrow_mut() = Some(h);
        Ok(Linearization { objective: 0.5 * r.norm_squared(), gradient, step })
    }

    fn retract(&self, x: &StepPoint, delta: &DVector<f64>) -> StepPoint {
        let eta = Vector3::new(delta[self.eta], delta[self.eta + 1], delta[self.eta + 2]);
        let mut e = x.1.clone();
        for k in 0..e.len() {
            e[k] += delta[self.euclid_index(k)];
        }
        (perturb(&eta, &x.0), e)
    }
}

/// Solves one step and returns the estimate, `P_{t|t}` and the iteration count.
///
/// `P_{t|t}` is the inverse approximate Hessian of the last linearization.
/// At convergence the final step is below tolerance, so this matches the
/// Hessian at the returned estimate to working precision; with a single
/// iteration it is exactly the Kalman covariance.
fn solve_step(problem: &StepProblem<'_>, cfg: &EstimatorConfig) -> Result<(StepPoint, DMatrix<f64>, usize, bool)> {
    let x0 = (problem.q_pred, problem.e_pred.clone());
    let report = gauss_newton_solve(problem, x0, &cfg.settings)?;
    let h = problem.last_hessian.borrow_mut().take().expect("at least one linearization");
    let p = h.cholesky().ok_or_else(|| Error::Numerical("filter Hessian not positive definite".into()))?.inverse();
    let p = 0.5 * (&p + p.transpose());
    Ok((report.solution, p, report.iterations, report.converged))
}

fn whitening(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = p.clone().cholesky().ok_or_else(|| Error::Numerical("predicted covariance not positive definite".into()))?.l();
    l.try_inverse().ok_or_else(|| Error::Numerical("singular covariance factor".into()))
}

/// Optimization-based orientation filter, with bias states when
/// `cfg.estimate_bias` is set.
pub fn filter_orientation_opt(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<EstimateTrace> {
    cfg.check(meas)?;
    let n = meas.len();
    let dt = cfg.env.sample_period;
    let noise = &cfg.noise;
    let mag = cfg.mag(meas);
    let bias_on = cfg.estimate_bias;
    let d = if bias_on { 6 } else { 3 };
    let mut q = cfg.initial_orientation(meas)?;
    let mut bias = Vector3::zeros();
    let mut p = DMatrix::<f64>::zeros(d, d);
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * noise.sigma_ori_prior.powi(2)));
    if bias_on {
        p.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * noise.sigma_bias_prior.powi(2)));
    }
    let mut trace = EstimateTrace {
        layout: if bias_on { StateLayout::ORIENTATION_BIAS } else { StateLayout::ORIENTATION },
        converged: true,
        ..Default::default()
    };
    let mut biases = Vec::with_capacity(n);
    trace.q.push(q);
    trace.cov.push(p.clone());
    biases.push(bias);
    for t in 1..n {
        let rate = meas.gyr[t - 1] - bias;
        let q_pred = q * exp_q(&(0.5 * dt * rate));
        let g = gyro_input_matrix(&q, &q_pred, &rate, dt);
        let mut f = DMatrix::<f64>::identity(d, d);
        let mut gqg = DMatrix::<f64>::zeros(d, d);
        gqg.fixed_view_mut::<3, 3>(0, 0).copy_from(&(noise.sigma_gyr.powi(2) * g * g.transpose()));
        if bias_on {
            f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-g));
            gqg.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * noise.sigma_bias_walk.powi(2)));
        }
        let p_pred = &f * &p * f.transpose() + gqg;
        let e_pred = if bias_on { DVector::from_column_slice(bias.as_slice()) } else { DVector::zeros(0) };
        let problem = StepProblem {
            cfg,
            q_pred,
            e_pred,
            whiten: whitening(&p_pred)?,
            eta: 0,
            meas: StepMeasurement::Orientation { y_a: &meas.acc[t], y_m: mag.map(|m| &m[t]) },
            last_hessian: RefCell::new(None),
        };
        let ((q_new, e_new), p_new, iterations, converged) = solve_step(&problem, cfg)?;
        q = q_new;
        if bias_on {
            bias = Vector3::new(e_new[0], e_new[1], e_new[2]);
        }
        p = p_new;
        trace.iterations += iterations;
        trace.converged &= converged;
        trace.q.push(q);
        trace.cov.push(p.clone());
        biases.push(bias);
    }
    if bias_on {
        trace.bias = Some(biases);
    }
    Ok(trace)
}

/// Optimization-based pose filter with states `[p, v, η]`.
pub fn filter_pose_opt(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<EstimateTrace> {
    cfg.check(meas)?;
    let (p0, mut q, cov0) = pose_prior(meas, cfg)?;
    let y_p = meas.pos.as_ref().expect("checked by pose_prior");
    let n = meas.len();
    let dt = cfg.env.sample_period;
    let mut pos = p0;
    let mut vel = Vector3::zeros();
    let mut cov: SMatrix<f64, 9, 9> = cov0;
    let mut trace = EstimateTrace { layout: StateLayout::POSE, converged: true, ..Default::default() };
    let (mut ps, mut vs) = (vec![pos], vec![vel]);
    trace.q.push(q);
    trace.cov.push(DMatrix::from_iterator(9, 9, cov.iter().copied()));
    for t in 1..n {
        let rate = meas.gyr[t - 1];
        let q_pred = q * exp_q(&(0.5 * dt * rate));
        let f = pose_transition(&q, &meas.acc[t - 1], dt);
        let g = gyro_input_matrix(&q, &q_pred, &rate, dt);
        let (p_pred, v_pred) = propagate_pv(&pos, &vel, &q, &meas.acc[t - 1], cfg);
        let c_pred = f * cov * f.transpose() + pose_process_noise(&g, cfg);
        let c_pred = DMatrix::from_iterator(9, 9, c_pred.iter().copied());
        let mut e_pred = DVector::zeros(6);
        e_pred.fixed_rows_mut::<3>(0).copy_from(&p_pred);
        e_pred.fixed_rows_mut::<3>(3).copy_from(&v_pred);
        let problem = StepProblem {
            cfg,
            q_pred,
            e_pred,
            whiten: whitening(&c_pred)?,
            eta: 6,
            meas: StepMeasurement::Position { y_p: &y_p[t] },
            last_hessian: RefCell::new(None),
        };
        let ((q_new, e_new), p_new, iterations, converged) = solve_step(&problem, cfg)?;
        q = q_new;
        pos = Vector3::new(e_new[0], e_new[1], e_new[2]);
        vel = Vector3::new(e_new[3], e_new[4], e_new[5]);
        cov = SMatrix::<f64, 9, 9>::from_iterator(p_new.iter().copied());
        trace.iterations += iterations;
        trace.converged &= converged;
        trace.q.push(q);
        trace.cov.push(p_new);
        ps.push(pos);
        vs.push(vel);
    }
    trace.p = Some(ps);
    trace.v = Some(vs);
    Ok(trace)
}
