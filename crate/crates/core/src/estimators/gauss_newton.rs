//! Damped Gauss-Newton iterations with a backtracking line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Termination and line-search parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussNewtonSettings {
    pub max_iterations: usize,
    /// Converged once the infinity norm of the applied step drops below this.
    pub convergence_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    pub backtracking_factor: f64,
    pub min_step: f64,
    /// With `false` every iteration takes the full step.
    pub line_search: bool,
}

impl Default for GaussNewtonSettings {
    fn default() -> Self {
        Self::smoothing()
    }
}

impl GaussNewtonSettings {
    pub fn smoothing() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-6,
            sufficient_decrease: 1e-4,
            backtracking_factor: 0.5,
            min_step: 2f64.powi(-20),
            line_search: true,
        }
    }

    pub fn filtering() -> Self {
        Self { max_iterations: 10, ..Self::smoothing() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence_tol must be positive".into()));
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            return Err(Error::InvalidConfig("backtracking_factor must lie in (0, 1)".into()));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) || !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::InvalidConfig("line-search constants out of range".into()));
        }
        Ok(())
    }
}

/// Objective value, gradient `Jᵀε` and Gauss-Newton step `−(JᵀJ)⁻¹Jᵀε` at a point.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub step: DVector<f64>,
}

/// A nonlinear least-squares problem `½‖ε(x)‖²` on a manifold of points.
pub trait GaussNewtonProblem {
    type Point: Clone;

    fn objective(&self, x: &Self::Point) -> f64;

    fn linearize(&self, x: &Self::Point) -> Result<Linearization>;

    /// Moves `x` along a tangent vector.
    fn retract(&self, x: &Self::Point, delta: &DVector<f64>) -> Self::Point;
}

#[derive(Clone, Debug)]
pub struct GaussNewtonReport<P> {
    pub solution: P,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when backtracking fell below `min_step`; `solution` is then the
    /// last accepted iterate.
    pub line_search_failed: bool,
    /// Objective value before the first and after every accepted iteration.
    pub history: Vec<f64>,
}

/// Runs Gauss-Newton from `x0`.
pub fn gauss_newton_solve<P: GaussNewtonProblem>(problem: &P, x0: P::Point, settings: &GaussNewtonSettings) -> Result<GaussNewtonReport<P::Point>> {
    settings.validate()?;
    let mut x = x0;
    let mut f = problem.objective(&x);
    if !f.is_finite() {
        return Err(Error::Numerical("non-finite objective at the initial point".into()));
    }
    let mut history = vec![f];
    let mut converged = false;
    let mut line_search_failed = false;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        let lin = problem.linearize(&x)?;
        iterations += 1;
        let slope = lin.gradient.dot(&lin.step);
        let mut beta = 1.0;
        let (x_new, f_new) = loop {
            let candidate = problem.retract(&x, &(beta * &lin.step));
            let fc = problem.objective(&candidate);
            if !settings.line_search || (fc.is_finite() && fc <= f + settings.sufficient_decrease * beta * slope) {
                break (Some(candidate), fc);
            }
            beta *= settings.backtracking_factor;
            if beta < settings.min_step {
                break (None, f);
            }
        };
        let Some(x_new) = x_new else {
            // No decrease along the Gauss-Newton direction: we are at a
            // minimum to working precision unless the step is still large.
            line_search_failed = lin.step.amax() >= settings.convergence_tol;
            converged = !line_search_failed;
            break;
        };
        x = x_new;
        f = f_new;
        history.push(f);
        if beta * lin.step.amax() < settings.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(GaussNewtonReport { solution: x, objective: f, iterations, converged, line_search_failed, history })
}

/// A Euclidean least-squares problem given by a function returning the
/// residual vector and its Jacobian.
pub struct DenseLeastSquares<F> {
    pub residual: F,
}

impl<F> DenseLeastSquares<F>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    pub fn new(residual: F) -> Self {
        Self { residual }
    }
}

impl<F> GaussNewtonProblem for DenseLeastSquares<F>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    type Point = DVector<f64>;

    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (self.residual)(x).0.norm_squared()
    }

    fn linearize(&self, x: &DVector<f64>) -> Result<Linearization> {
        let (r, j) = (self.residual)(x);
        let gradient = j.transpose() * &r;
        let step = solve_normal_equations(&(j.transpose() * &j), &gradient)?;
        Ok(Linearization { objective: 0.5 * r.norm_squared(), gradient, step })
    }

    fn retract(&self, x: &DVector<f64>, delta: &DVector<f64>) -> DVector<f64> {
        x + delta
    }
}

/// Returns `−H⁻¹g` for a symmetric positive definite `H`.
pub fn solve_normal_equations(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = h.clone().cholesky().ok_or_else(|| Error::Numerical("normal equations are not positive definite".into()))?;
    Ok(-chol.solve(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_problem_solved_in_one_iteration() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 4.0]);
        let problem = DenseLeastSquares::new(|x: &DVector<f64>| (&a * x - &b, a.clone()));
        let settings = GaussNewtonSettings { line_search: false, ..GaussNewtonSettings::smoothing() };
        let report = gauss_newton_solve(&problem, DVector::zeros(2), &settings).unwrap();
        let exact = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * &b));
        assert_abs_diff_eq!(report.solution, exact, epsilon = 1e-12);
        // The second iteration only confirms convergence with a zero step.
        assert!(report.converged && report.iterations <= 2);
    }

    #[test]
    fn rosenbrock_residuals_converge() {
        // ε = (10(x₂ − x₁²), 1 − x₁) has its minimum at (1, 1).
        let problem = DenseLeastSquares::new(|x: &DVector<f64>| {
            let r = DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
            let j = DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]);
            (r, j)
        });
        let report = gauss_newton_solve(&problem, DVector::from_vec(vec![-1.2, 1.0]), &GaussNewtonSettings::smoothing()).unwrap();
        assert!(report.converged);
        assert_abs_diff_eq!(report.solution, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-8);
        assert!(report.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_settings_rejected() {
        let s = GaussNewtonSettings { backtracking_factor: 1.0, ..Default::default() };
        assert!(s.validate().is_err());
    }
}
