//! Block-tridiagonal normal equations, optionally bordered by one dense
//! 3-wide block for a global parameter such as a constant gyroscope bias.
//!
//! The tridiagonal part is factored by block Cholesky. The border is
//! eliminated through its Schur complement, so the cost stays linear in the
//! number of time steps. Marginal covariances of the per-time blocks come from
//! the standard backward recursion on the factors, without forming the
//! inverse.

use nalgebra::{Cholesky, Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};

/// `H = [A B; Bᵀ C]` with `A` block-tridiagonal and right-hand side `[r; s]`.
#[derive(Clone, Debug)]
pub struct BlockTridiagonal<const D: usize> {
    pub diag: Vec<SMatrix<f64, D, D>>,
    /// `sub[t]` is the block at row `t + 1`, column `t`.
    pub sub: Vec<SMatrix<f64, D, D>>,
    pub rhs: Vec<SVector<f64, D>>,
    pub border: Option<Border<D>>,
}

#[derive(Clone, Debug)]
pub struct Border<const D: usize> {
    /// Coupling between each time block and the global block.
    pub coupling: Vec<SMatrix<f64, D, 3>>,
    pub diag: Matrix3<f64>,
    pub rhs: Vector3<f64>,
}

/// Solution `x` and global part `y` of `H [x; y] = [r; s]`.
#[derive(Clone, Debug)]
pub struct TridiagSolution<const D: usize> {
    pub x: Vec<SVector<f64, D>>,
    pub y: Option<Vector3<f64>>,
}

/// Diagonal blocks of `H⁻¹`.
#[derive(Clone, Debug)]
pub struct Marginals<const D: usize> {
    pub blocks: Vec<SMatrix<f64, D, D>>,
    /// Cross-covariance of each time block with the global block.
    pub cross: Option<Vec<SMatrix<f64, D, 3>>>,
    pub global: Option<Matrix3<f64>>,
}

struct Factor<const D: usize> {
    diag: Vec<SMatrix<f64, D, D>>,
    /// Inverse of each diagonal factor.
    diag_inv: Vec<SMatrix<f64, D, D>>,
    sub: Vec<SMatrix<f64, D, D>>,
}

impl<const D: usize> Factor<D> {
    fn new(diag: &[SMatrix<f64, D, D>], sub: &[SMatrix<f64, D, D>]) -> Result<Self> {
        let n = diag.len();
        let mut l_diag = Vec::with_capacity(n);
        let mut l_inv = Vec::with_capacity(n);
        let mut l_sub = Vec::with_capacity(n.saturating_sub(1));
        for t in 0..n {
            let mut d = diag[t];
            if t > 0 {
                let s: &SMatrix<f64, D, D> = &l_sub[t - 1];
                d -= s * s.transpose();
            }
            let chol = Cholesky::new(d).ok_or_else(|| Error::Numerical(format!("normal equations not positive definite at block {t}")))?;
            let l = chol.l();
            let inv = l.try_inverse().ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
            if t + 1 < n {
                // L_{t+1,t} = E_t L_tt^{-T}
                l_sub.push(sub[t] * inv.transpose());
            }
            l_diag.push(l);
            l_inv.push(inv);
        }
        Ok(Self { diag: l_diag, diag_inv: l_inv, sub: l_sub })
    }

    /// Solves `A x = r` by forward and back substitution.
    fn solve<const C: usize>(&self, rhs: &[SMatrix<f64, D, C>]) -> Vec<SMatrix<f64, D, C>> {
        let n = self.diag.len();
        let mut z: Vec<SMatrix<f64, D, C>> = Vec::with_capacity(n);
        for t in 0..n {
            let mut b = rhs[t];
            if t > 0 {
                b -= self.sub[t - 1] * z[t - 1];
            }
            z.push(self.diag_inv[t] * b);
        }
        for t in (0..n).rev() {
            let mut b = z[t];
            if t + 1 < n {
                b -= self.sub[t].transpose() * z[t + 1];
            }
            z[t] = self.diag_inv[t].transpose() * b;
        }
        z
    }

    /// Diagonal blocks of `A⁻¹`.
    fn marginals(&self) -> Vec<SMatrix<f64, D, D>> {
        let n = self.diag.len();
        let mut cov = vec![SMatrix::<f64, D, D>::zeros(); n];
        let last = n - 1;
        cov[last] = self.diag_inv[last].transpose() * self.diag_inv[last];
        for t in (0..last).rev() {
            // Σ_{t+1,t} = −Σ_{t+1,t+1} L_{t+1,t} L_tt⁻¹
            let cross = -cov[t + 1] * self.sub[t] * self.diag_inv[t];
            // Σ_tt = L_tt^{−T}(L_tt⁻¹ − L_{t+1,t}ᵀ Σ_{t+1,t})
            let c = self.diag_inv[t].transpose() * (self.diag_inv[t] - self.sub[t].transpose() * cross);
            cov[t] = 0.5 * (c + c.transpose());
        }
        cov
    }
}

impl<const D: usize> BlockTridiagonal<D> {
    pub fn zeros(n: usize, with_border: bool) -> Self {
        Self {
            diag: vec![SMatrix::zeros(); n],
            sub: vec![SMatrix::zeros(); n.saturating_sub(1)],
            rhs: vec![SVector::zeros(); n],
            border: with_border.then(|| Border { coupling: vec![SMatrix::zeros(); n], diag: Matrix3::zeros(), rhs: Vector3::zeros() }),
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Factors the matrix and returns the solution together with the
    /// marginal covariances when `marginals` is set.
    pub fn solve(&self, marginals: bool) -> Result<(TridiagSolution<D>, Option<Marginals<D>>)> {
        if self.diag.is_empty() {
            return Err(Error::InvalidInput("empty system".into()));
        }
        let factor = Factor::new(&self.diag, &self.sub)?;
        let a_inv_r = factor.solve::<1>(&self.rhs);
        let Some(border) = &self.border else {
            let m = marginals.then(|| Marginals { blocks: factor.marginals(), cross: None, global: None });
            return Ok((TridiagSolution { x: a_inv_r, y: None }, m));
        };
        // X_B = A⁻¹B, S = C − BᵀX_B
        let x_b = factor.solve::<3>(&border.coupling);
        let mut s = border.diag;
        let mut s_rhs = border.rhs;
        for t in 0..self.len() {
            s -= border.coupling[t].transpose() * x_b[t];
            s_rhs -= border.coupling[t].transpose() * a_inv_r[t];
        }
        let s = 0.5 * (s + s.transpose());
        let s_inv = Cholesky::new(s).ok_or_else(|| Error::Numerical("Schur complement not positive definite".into()))?.inverse();
        let y = s_inv * s_rhs;
        let x = a_inv_r.iter().zip(&x_b).map(|(ar, xb)| ar - xb * y).collect();
        let m = marginals.then(|| {
            let blocks = factor
                .marginals()
                .into_iter()
                .zip(&x_b)
                .map(|(c, xb)| {
                    let c = c + xb * s_inv * xb.transpose();
                    0.5 * (c + c.transpose())
                })
                .collect();
            let cross = x_b.iter().map(|xb| -xb * s_inv).collect();
            Marginals { blocks, cross: Some(cross), global: Some(s_inv) }
        });
        Ok((TridiagSolution { x, y: Some(y) }, m))
    }

    /// Dense copy of the full matrix, for tests and diagnostics.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let extra = if self.border.is_some() { 3 } else { 0 };
        let mut h = nalgebra::DMatrix::zeros(n * D + extra, n * D + extra);
        for t in 0..n {
            h.view_mut((t * D, t * D), (D, D)).copy_from(&self.diag[t]);
            if t + 1 < n {
                h.view_mut(((t + 1) * D, t * D), (D, D)).copy_from(&self.sub[t]);
                h.view_mut((t * D, (t + 1) * D), (D, D)).copy_from(&self.sub[t].transpose());
            }
            if let Some(b) = &self.border {
                h.view_mut((t * D, n * D), (D, 3)).copy_from(&b.coupling[t]);
                h.view_mut((n * D, t * D), (3, D)).copy_from(&b.coupling[t].transpose());
            }
        }
        if let Some(b) = &self.border {
            h.view_mut((n * D, n * D), (3, 3)).copy_from(&b.diag);
        }
        h
    }
}
