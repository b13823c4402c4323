//! Sensitivities of `Q(u) = |u - u_d|^2_{L2}` with respect to the substrate
//! field through the equilibrium equations: adjoint, gradient, and Hessian
//! actions from incremental state and adjoint solves.
//!
//! All four linear systems share the Jacobian
//! `J = [[sigma M, K], [-(M_W'' + eps^2 K), M]]` of the residual pair at the
//! linearization state, or its transpose, so one LU factorization serves them all.

use crate::energy::{double_well, ModelParams, WellOrder};
use crate::error::{check_len, Result};
use crate::fem::{DirectSolver, FemSpace, NodalField, SparseOperator};

/// Multipliers of the two equilibrium equations.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointPair {
    pub p: NodalField,
    pub lambda: NodalField,
}

/// `Q(u) = (u - u_d)^T M (u - u_d)`.
pub fn design_objective(space: &FemSpace, u: &[f64], u_d: &[f64]) -> Result<f64> {
    check_len(space.n(), u.len())?;
    check_len(space.n(), u_d.len())?;
    let e: Vec<f64> = u.iter().zip(u_d).map(|(a, b)| a - b).collect();
    Ok(space.l2_inner(&e, &e))
}

/// Factorized Jacobian of the equilibrium equations at a fixed state.
pub struct Linearization<'a> {
    space: &'a FemSpace,
    u: Vec<f64>,
    solver: DirectSolver,
}

impl std::fmt::Debug for Linearization<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Linearization")
            .field("n", &self.u.len())
            .finish_non_exhaustive()
    }
}

impl<'a> Linearization<'a> {
    pub fn new(space: &'a FemSpace, u: &[f64], p: &ModelParams) -> Result<Self> {
        check_len(space.n(), u.len())?;
        let a11 = space.mass().scaled(p.sigma);
        let curvature = space.weighted_mass(u, None, |x, _| double_well(x, WellOrder::Second));
        let a21 = SparseOperator::linear_combination(
            -1.0,
            &curvature,
            -p.eps * p.eps,
            space.stiffness(),
        )?;
        let solver = space.factorize_block(&a11, space.stiffness(), &a21, space.mass())?;
        Ok(Self {
            space,
            u: u.to_vec(),
            solver,
        })
    }

    pub fn space(&self) -> &FemSpace {
        self.space
    }

    pub fn state(&self) -> &[f64] {
        &self.u
    }

    /// The assembled Jacobian `J` (unknowns ordered `(u, mu)`).
    pub fn jacobian(&self) -> &SparseOperator {
        self.solver.operator()
    }

    fn split(&self, mut x: Vec<f64>) -> (NodalField, NodalField) {
        let second = x.split_off(self.u.len());
        (NodalField::from_vec(x), NodalField::from_vec(second))
    }

    /// `J^T (p, lambda) = -(2 M (u - u_d), 0)`.
    pub fn solve_adjoint(&self, u_d: &[f64]) -> Result<AdjointPair> {
        let n = self.u.len();
        check_len(n, u_d.len())?;
        let e: Vec<f64> = self.u.iter().zip(u_d).map(|(a, b)| a - b).collect();
        let mut rhs: Vec<f64> = self
            .space
            .mass()
            .mul_vec(&e)
            .iter()
            .map(|v| -2.0 * v)
            .collect();
        rhs.resize(2 * n, 0.0);
        let x = self.solver.solve_transpose(&rhs)?;
        self.space.counters().add_adjoint();
        let (p, lambda) = self.split(x);
        Ok(AdjointPair { p, lambda })
    }

    /// `J (u_hat, mu_hat) = (0, M f_hat)`: first-order response of the state.
    pub fn solve_incremental_state(&self, f_hat: &[f64]) -> Result<(NodalField, NodalField)> {
        let n = self.u.len();
        check_len(n, f_hat.len())?;
        let mut rhs = vec![0.0; n];
        rhs.extend(self.space.mass().mul_vec(f_hat));
        let x = self.solver.solve(&rhs)?;
        self.space.counters().add_incremental_state();
        Ok(self.split(x))
    }

    /// `J^T (p_hat, lambda_hat) = -(2 M u_hat - T u_hat, 0)` with
    /// `T_ij = int W'''(u) lambda N_i N_j`.
    pub fn solve_incremental_adjoint(&self, lambda: &[f64], u_hat: &[f64]) -> Result<AdjointPair> {
        let n = self.u.len();
        check_len(n, lambda.len())?;
        check_len(n, u_hat.len())?;
        let t = self.space.weighted_mass(&self.u, Some(lambda), |x, l| {
            double_well(x, WellOrder::Third) * l
        });
        let m_uhat = self.space.mass().mul_vec(u_hat);
        let tu = t.mul_vec(u_hat);
        let mut rhs: Vec<f64> = m_uhat
            .iter()
            .zip(&tu)
            .map(|(a, b)| -(2.0 * a - b))
            .collect();
        rhs.resize(2 * n, 0.0);
        let x = self.solver.solve_transpose(&rhs)?;
        self.space.counters().add_incremental_adjoint();
        let (p, lambda) = self.split(x);
        Ok(AdjointPair { p, lambda })
    }

    /// L2 representative `-lambda_hat` of `D_f^2 Q f_hat`.
    pub fn hessian_action_f(&self, lambda: &[f64], f_hat: &[f64]) -> Result<NodalField> {
        let (u_hat, _) = self.solve_incremental_state(f_hat)?;
        let pair = self.solve_incremental_adjoint(lambda, &u_hat)?;
        Ok(gradient_f(&pair.lambda))
    }
}

/// L2 representative of `D_f Q`: `-lambda`.
pub fn gradient_f(lambda: &[f64]) -> NodalField {
    NodalField::from_vec(lambda.iter().map(|v| -v).collect())
}

pub fn solve_adjoint(
    space: &FemSpace,
    u: &[f64],
    u_d: &[f64],
    p: &ModelParams,
) -> Result<AdjointPair> {
    Linearization::new(space, u, p)?.solve_adjoint(u_d)
}

pub fn solve_incremental_state(
    space: &FemSpace,
    u: &[f64],
    f_hat: &[f64],
    p: &ModelParams,
) -> Result<(NodalField, NodalField)> {
    Linearization::new(space, u, p)?.solve_incremental_state(f_hat)
}

pub fn solve_incremental_adjoint(
    space: &FemSpace,
    u: &[f64],
    lambda: &[f64],
    u_hat: &[f64],
    p: &ModelParams,
) -> Result<AdjointPair> {
    Linearization::new(space, u, p)?.solve_incremental_adjoint(lambda, u_hat)
}

pub fn hessian_action_f(
    space: &FemSpace,
    u: &[f64],
    lambda: &[f64],
    p: &ModelParams,
    f_hat: &[f64],
) -> Result<NodalField> {
    Linearization::new(space, u, p)?.hessian_action_f(lambda, f_hat)
}
