//! Smoothing as a batch nonlinear least-squares problem over the whole
//! trajectory.
//!
//! Every sample carries an orientation deviation around its own linearization
//! point (plus position and velocity for pose estimation). Each Gauss-Newton
//! iteration solves for all deviations at once, folds them into the
//! linearization points and resets them to zero. Only neighbouring samples
//! are coupled, so the normal equations are block-tridiagonal apart from the
//! optional constant gyroscope bias.

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};

use super::block_tridiag::{BlockTridiagonal, Marginals};
use super::gauss_newton::{gauss_newton_solve, GaussNewtonProblem, Linearization};
use super::{EstimateTrace, EstimatorConfig, StateLayout};
use crate::error::{Error, Result};
use crate::orientation::{exp_q, UnitQuaternion};
use crate::sensor_models::{
    perturb, residual_acc, residual_gyr_dynamics, residual_mag, residual_pos, residual_pose_dynamics, residual_prior_bias,
    residual_prior_orientation, residual_prior_position, residual_prior_velocity, Residual, StateBlock,
};
use crate::simulator::MeasurementSeries;

/// Linearization point of the smoothing problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingState {
    pub q: Vec<UnitQuaternion>,
    /// Empty for orientation-only problems.
    pub p: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub bias: Option<Vector3<f64>>,
}

/// The trajectory problem with `D` deviation states per sample: 3 for
/// orientation and 9 for pose `[p, v, η]`.
pub struct SmoothingProblem<'a, const D: usize> {
    meas: &'a MeasurementSeries,
    cfg: &'a EstimatorConfig,
    mag: Option<&'a [Vector3<f64>]>,
    q_prior: UnitQuaternion,
}

enum Slot {
    Time(usize, usize),
    Global,
}

impl<'a, const D: usize> SmoothingProblem<'a, D> {
    const POSE: bool = D == 9;
    const ETA: usize = if D == 9 { 6 } else { 0 };

    pub fn new(meas: &'a MeasurementSeries, cfg: &'a EstimatorConfig) -> Result<Self> {
        assert!(D == 3 || D == 9, "smoothing supports 3 or 9 states per sample");
        cfg.check(meas)?;
        if Self::POSE {
            if meas.pos.is_none() {
                return Err(Error::InvalidInput("pose estimation needs position measurements".into()));
            }
            if cfg.estimate_bias {
                return Err(Error::InvalidConfig("bias estimation is only available for orientation".into()));
            }
        }
        let q_prior = cfg.initial_orientation(meas)?;
        Ok(Self { meas, cfg, mag: cfg.mag(meas), q_prior })
    }

    pub fn prior(&self) -> UnitQuaternion {
        self.q_prior
    }

    fn slot(block: StateBlock) -> Slot {
        match block {
            StateBlock::Orientation(t) => Slot::Time(t, Self::ETA),
            StateBlock::Position(t) => Slot::Time(t, 0),
            StateBlock::Velocity(t) => Slot::Time(t, 3),
            StateBlock::Bias => Slot::Global,
        }
    }

    /// All residual terms at the linearization point.
    pub fn residuals(&self, x: &SmoothingState) -> Vec<Residual> {
        let n = self.meas.len();
        let noise = &self.cfg.noise;
        let env = &self.cfg.env;
        let z = Vector3::zeros();
        let mut out = Vec::with_capacity(4 * n);
        out.push(residual_prior_orientation(&z, &x.q[0], &self.q_prior, noise.sigma_ori_prior));
        for t in 0..n - 1 {
            out.push(residual_gyr_dynamics(t, &z, &z, &x.q[t], &x.q[t + 1], &self.meas.gyr[t], env.sample_period, x.bias.as_ref(), noise.sigma_gyr));
        }
        if Self::POSE {
            let pos = self.meas.pos.as_ref().expect("checked in new");
            out.push(residual_prior_position(&x.p[0], &pos[0], noise.sigma_pos));
            out.push(residual_prior_velocity(&x.v[0], noise.sigma_vel_prior));
            for t in 0..n - 1 {
                let (rp, rv) =
                    residual_pose_dynamics(t, &x.p[t], &x.p[t + 1], &x.v[t], &x.v[t + 1], &z, &x.q[t], &self.meas.acc[t], env, noise.sigma_acc);
                out.push(rp);
                out.push(rv);
            }
            for t in 1..n {
                out.push(residual_pos(t, &x.p[t], &pos[t], noise.sigma_pos));
            }
        } else {
            for t in 1..n {
                out.push(residual_acc(t, &z, &x.q[t], &self.meas.acc[t], env, noise.sigma_acc));
            }
        }
        if let Some(mag) = self.mag {
            for t in 1..n {
                out.push(residual_mag(t, &z, &x.q[t], &mag[t], env, noise.sigma_mag));
            }
        }
        if let Some(b) = &x.bias {
            out.push(residual_prior_bias(b, noise.sigma_bias_prior));
        }
        out
    }

    /// Accumulates `JᵀJ` and `−Jᵀε` into the block-tridiagonal normal system.
    pub fn normal_system(&self, x: &SmoothingState) -> (BlockTridiagonal<D>, DVector<f64>, f64) {
        let n = self.meas.len();
        let with_bias = x.bias.is_some();
        let mut sys = BlockTridiagonal::<D>::zeros(n, with_bias);
        let mut cost = 0.0;
        for r in self.residuals(x) {
            let w2 = r.weight * r.weight;
            cost += r.cost();
            for (a, ja) in &r.blocks {
                let g = w2 * ja.transpose() * r.value;
                match Self::slot(*a) {
                    Slot::Time(t, o) => {
                        let mut rhs = sys.rhs[t].fixed_rows_mut::<3>(o);
                        rhs -= g;
                    }
                    Slot::Global => sys.border.as_mut().expect("bias block").rhs -= g,
                }
                for (b, jb) in &r.blocks {
                    let h = w2 * ja.transpose() * jb;
                    match (Self::slot(*a), Self::slot(*b)) {
                        (Slot::Time(ta, oa), Slot::Time(tb, ob)) if ta == tb => {
                            let mut v = sys.diag[ta].fixed_view_mut::<3, 3>(oa, ob);
                            v += h;
                        }
                        (Slot::Time(ta, oa), Slot::Time(tb, ob)) if ta == tb + 1 => {
                            let mut v = sys.sub[tb].fixed_view_mut::<3, 3>(oa, ob);
                            v += h;
                        }
                        (Slot::Time(ta, oa), Slot::Global) => {
                            let border = sys.border.as_mut().expect("bias block");
                            let mut v = border.coupling[ta].fixed_view_mut::<3, 3>(oa, 0);
                            v += h;
                        }
                        (Slot::Global, Slot::Global) => sys.border.as_mut().expect("bias block").diag += h,
                        _ => {}
                    }
                }
            }
        }
        // Assemble the full gradient for the line search.
        let dim = n * D + if with_bias { 3 } else { 0 };
        let mut grad = DVector::zeros(dim);
        for t in 0..n {
            grad.rows_mut(t * D, D).copy_from(&(-sys.rhs[t]));
        }
        if let Some(b) = &sys.border {
            grad.rows_mut(n * D, 3).copy_from(&(-b.rhs));
        }
        (sys, grad, cost)
    }

    pub fn marginals(&self, x: &SmoothingState) -> Result<Marginals<D>> {
        let (sys, _, _) = self.normal_system(x);
        let (_, m) = sys.solve(true)?;
        Ok(m.expect("requested"))
    }

    /// Dead-reckoned orientation from the prior, and positions taken from
    /// the position measurements.
    pub fn initial_state(&self) -> SmoothingState {
        let n = self.meas.len();
        let dt = self.cfg.env.sample_period;
        let mut q = Vec::with_capacity(n);
        let mut qt = self.q_prior;
        for t in 0..n {
            q.push(qt);
            qt = qt * exp_q(&(0.5 * dt * self.meas.gyr[t]));
        }
        let (p, v) = match (&self.meas.pos, Self::POSE) {
            (Some(pos), true) => {
                let v = (0..n).map(|t| if t + 1 < n { (pos[t + 1] - pos[t]) / dt } else { (pos[t] - pos[t - 1]) / dt }).collect();
                (pos.clone(), v)
            }
            _ => (Vec::new(), Vec::new()),
        };
        SmoothingState { q, p, v, bias: self.cfg.estimate_bias.then(Vector3::zeros) }
    }

    /// Packs the final state and its marginal covariances.
    pub fn trace(&self, x: &SmoothingState, marg: &Marginals<D>) -> EstimateTrace {
        let n = x.q.len();
        let (layout, cov) = if let (Some(cross), Some(global)) = (&marg.cross, &marg.global) {
            let cov = (0..n)
                .map(|t| {
                    let mut c = DMatrix::zeros(6, 6);
                    c.view_mut((0, 0), (3, 3)).copy_from(&marg.blocks[t].fixed_view::<3, 3>(0, 0));
                    c.view_mut((0, 3), (3, 3)).copy_from(&cross[t].fixed_view::<3, 3>(0, 0));
                    c.view_mut((3, 0), (3, 3)).copy_from(&cross[t].fixed_view::<3, 3>(0, 0).transpose());
                    c.view_mut((3, 3), (3, 3)).copy_from(global);
                    c
                })
                .collect();
            (StateLayout::ORIENTATION_BIAS, cov)
        } else {
            let layout = if Self::POSE { StateLayout::POSE } else { StateLayout::ORIENTATION };
            (layout, marg.blocks.iter().map(|b: &SMatrix<f64, D, D>| DMatrix::from_iterator(D, D, b.iter().copied())).collect())
        };
        EstimateTrace {
            q: x.q.clone(),
            p: Self::POSE.then(|| x.p.clone()),
            v: Self::POSE.then(|| x.v.clone()),
            bias: x.bias.map(|b| vec![b; n]),
            cov,
            layout,
            converged: true,
            iterations: 0,
            objective: None,
        }
    }
}

impl<const D: usize> GaussNewtonProblem for SmoothingProblem<'_, D> {
    type Point = SmoothingState;

    fn objective(&self, x: &SmoothingState) -> f64 {
        self.residuals(x).iter().map(Residual::cost).sum()
    }

    fn linearize(&self, x: &SmoothingState) -> Result<Linearization> {
        let (sys, gradient, objective) = self.normal_system(x);
        let (sol, _) = sys.solve(false)?;
        let n = self.meas.len();
        let mut step = DVector::zeros(gradient.len());
        for t in 0..n {
            step.rows_mut(t * D, D).copy_from(&sol.x[t]);
        }
        if let Some(y) = sol.y {
            step.rows_mut(n * D, 3).copy_from(&y);
        }
        Ok(Linearization { objective, gradient, step })
    }

    fn retract(&self, x: &SmoothingState, delta: &DVector<f64>) -> SmoothingState {
        let n = x.q.len();
        let mut out = x.clone();
        for t in 0..n {
            let d = delta.fixed_rows::<D>(t * D);
            let eta = Vector3::new(d[Self::ETA], d[Self::ETA + 1], d[Self::ETA + 2]);
            out.q[t] = perturb(&eta, &x.q[t]);
            if Self::POSE {
                out.p[t] += d.fixed_rows::<3>(0);
                out.v[t] += d.fixed_rows::<3>(3);
            }
        }
        if let Some(b) = out.bias.as_mut() {
            *b += delta.fixed_rows::<3>(n * D);
        }
        out
    }
}

fn run<const D: usize>(meas: &MeasurementSeries, cfg: &EstimatorConfig, init: Option<&EstimateTrace>) -> Result<EstimateTrace> {
    let problem = SmoothingProblem::<D>::new(meas, cfg)?;
    let mut x0 = problem.initial_state();
    if let Some(tr) = init {
        if tr.len() != meas.len() {
            return Err(Error::LengthMismatch(meas.len(), tr.len()));
        }
        x0.q = tr.q.clone();
        if let (Some(b), Some(tb)) = (x0.bias.as_mut(), tr.bias.as_ref().and_then(|v| v.last())) {
            *b = *tb;
        }
        if D == 9 {
            if let (Some(p), Some(v)) = (&tr.p, &tr.v) {
                x0.p = p.clone();
                x0.v = v.clone();
            }
        }
    }
    let report = gauss_newton_solve(&problem, x0, &cfg.settings)?;
    let marg = problem.marginals(&report.solution)?;
    let mut trace = problem.trace(&report.solution, &marg);
    trace.converged = report.converged;
    trace.iterations = report.iterations;
    trace.objective = Some(report.objective);
    Ok(trace)
}

/// Smoothed orientation over the whole series, optionally with a constant
/// gyroscope bias when `cfg.estimate_bias` is set. Without `init` the
/// trajectory starts from gyroscope dead reckoning from the prior, or from
/// the bias-augmented deviation EKF when the bias is estimated.
pub fn smooth_orientation(meas: &MeasurementSeries, cfg: &EstimatorConfig, init: Option<&EstimateTrace>) -> Result<EstimateTrace> {
    if init.is_none() && cfg.estimate_bias {
        // Dead reckoning with an unknown bias drifts far enough to stall
        // Gauss-Newton; the bias-augmented filter is a much closer start.
        let start = super::ekf_dev::ekf_orientation_deviation(meas, cfg)?;
        return run::<3>(meas, cfg, Some(&start));
    }
    run::<3>(meas, cfg, init)
}

/// Smoothed position, velocity and orientation from inertial and position
/// measurements.
pub fn smooth_pose(meas: &MeasurementSeries, cfg: &EstimatorConfig, init: Option<&EstimateTrace>) -> Result<EstimateTrace> {
    run::<9>(meas, cfg, init)
}

/// Objective history of a smoothing run, for descent checks.
pub fn smoothing_history(meas: &MeasurementSeries, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    let problem = SmoothingProblem::<3>::new(meas, cfg)?;
    let report = gauss_newton_solve(&problem, problem.initial_state(), &cfg.settings)?;
    Ok(report.history)
}
