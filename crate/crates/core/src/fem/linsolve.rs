use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::MatMut;

use super::sparse::SparseOperator;
use crate::error::{check_len, Error, Result};

/// Relative residual bound accepted from a direct solve.
pub const SOLVE_RTOL: f64 = 1e-10;

/// Reusable symbolic analysis (fill-reducing ordering) for a fixed sparsity pattern.
#[derive(Clone)]
pub struct SymbolicFactor {
    inner: SymbolicLu<usize>,
    n: usize,
}

impl SymbolicFactor {
    pub fn analyze(op: &SparseOperator) -> Result<Self> {
        let mat = op.to_faer()?;
        let inner = SymbolicLu::try_new(mat.symbolic())
            .map_err(|e| Error::solver(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Self { inner, n: op.dim() })
    }
}

/// Sparse LU factorization with partial pivoting, kept for repeated solves
/// with the same operator (and its transpose).
#[derive(Clone)]
pub struct DirectSolver {
    lu: Lu<usize, f64>,
    op: SparseOperator,
    norm: f64,
}

impl DirectSolver {
    pub fn factorize(op: &SparseOperator) -> Result<Self> {
        let symbolic = SymbolicFactor::analyze(op)?;
        Self::factorize_with(&symbolic, op)
    }

    /// Numeric factorization reusing an existing symbolic analysis of the same pattern.
    pub fn factorize_with(symbolic: &SymbolicFactor, op: &SparseOperator) -> Result<Self> {
        check_len(symbolic.n, op.dim())?;
        let mat = op.to_faer()?;
        let lu = Lu::try_new_with_symbolic(symbolic.inner.clone(), mat.as_ref())
            .map_err(|e| Error::solver(format!("LU factorization failed: {e:?}")))?;
        Ok(Self {
            lu,
            op: op.clone(),
            norm: op.frobenius_norm(),
        })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.op
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_impl(b, false)
    }

    /// Solves `A^T x = b` with the same factorization.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_impl(b, true)
    }

    fn raw_solve(&self, rhs: &mut [f64], transpose: bool) {
        let n = rhs.len();
        let mat = MatMut::from_column_major_slice_mut(rhs, n, 1);
        if transpose {
            self.lu.solve_transpose_in_place(mat);
        } else {
            self.lu.solve_in_place(mat);
        }
    }

    fn residual(&self, x: &[f64], b: &[f64], transpose: bool) -> Vec<f64> {
        let ax = if transpose {
            self.op.mul_vec_transpose(x)
        } else {
            self.op.mul_vec(x)
        };
        b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
    }

    fn solve_impl(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        check_len(self.dim(), b.len())?;
        let mut x = b.to_vec();
        self.raw_solve(&mut x, transpose);
        let b_norm = norm2(b);
        let mut r = self.residual(&x, b, transpose);
        let bound = |x: &[f64]| SOLVE_RTOL * (self.norm * norm2(x) + b_norm);
        if x.iter().all(|v| v.is_finite()) && norm2(&r) > bound(&x) {
            // one step of iterative refinement
            self.raw_solve(&mut r, transpose);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
            r = self.residual(&x, b, transpose);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::solver(format!(
                "non-finite solution from a {}x{} factorization (singular operator?)",
                self.dim(),
                self.dim()
            )));
        }
        let res = norm2(&r);
        if res > bound(&x) {
            return Err(Error::solver(format!(
                "residual {res:.3e} exceeds bound {:.3e} (|A|_F = {:.3e}, |x| = {:.3e}, |b| = {b_norm:.3e})",
                bound(&x),
                self.norm,
                norm2(&x)
            )));
        }
        Ok(x)
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
