//! Energy-stable Newton minimization of the free energy.
//!
//! Each iteration solves a linearized system in which the curvature of the
//! double well is replaced by the convexified `W''_gamma`, backtracks on gamma
//! until the step is a descent direction for `F`, and then backtracks on the
//! step length with an Armijo test. The chemical potential is recovered from
//! `u` at every iterate, so only the `u`-equation residual drives the step.

use serde::Serialize;

use crate::energy::{
    chemical_potential, energy_change, evaluate_energy, first_variation_with, pairing, residual,
    well_gamma, ModelParams,
};
use crate::error::{check_len, Error, Result};
use crate::fem::{DirectSolver, FemSpace, NodalField, SparseOperator};

/// Tuning of the state iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateSolverOptions {
    /// stop once the dual norm of the residual pair is at most this
    pub tol: f64,
    pub max_iter: usize,
    pub c_armijo: f64,
    pub max_halvings: usize,
    /// gamma is multiplied by this after a failed descent test
    pub gamma_factor: f64,
    /// below this gamma jumps to zero
    pub gamma_min: f64,
}

impl Default for StateSolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            c_armijo: 1e-4,
            max_halvings: 40,
            gamma_factor: 0.5,
            gamma_min: 1e-3,
        }
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// no descent direction or no acceptable step; the message has diagnostics
    Breakdown(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct StateSolveReport {
    pub u: NodalField,
    pub mu: NodalField,
    /// accepted Newton steps
    pub iterations: usize,
    /// `F` at the initial guess, then updated by the exactly evaluated energy
    /// change of every accepted step
    pub energies: Vec<f64>,
    /// gamma used by each accepted step
    pub gammas: Vec<f64>,
    /// step length of each accepted step
    pub step_sizes: Vec<f64>,
    /// residual dual norm at every iterate, initial guess included
    pub residuals: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
    pub termination: Termination,
}

impl StateSolveReport {
    pub fn final_energy(&self) -> f64 {
        *self.energies.last().expect("at least the initial energy")
    }
}

/// A descent direction found by the gamma backtracking.
#[derive(Debug, Clone)]
pub struct DescentDirection {
    pub du: NodalField,
    pub dmu: NodalField,
    pub gamma: f64,
    /// `<D_u F(u), du>`, negative
    pub slope: f64,
    /// linear systems solved, the accepted one included
    pub trials: usize,
}

/// Accepted Armijo step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoStep {
    pub beta: f64,
    /// `F(u + beta du) - F(u)`
    pub energy_change: f64,
}

/// Factorized step operator `[[sigma M, K], [-(M_gamma + eps^2 K), M]]` acting
/// on `(du, dmu)`. `M_gamma` is the mass matrix weighted by `W''_gamma(u)`;
/// the curvature multiplies the increment `du` inside the integral.
fn step_operator(space: &FemSpace, u: &[f64], p: &ModelParams, gamma: f64) -> Result<DirectSolver> {
    let a11 = space.mass().scaled(p.sigma);
    let curvature = space.weighted_mass(u, None, |x, _| well_gamma(x, gamma));
    let a21 =
        SparseOperator::linear_combination(-1.0, &curvature, -p.eps * p.eps, space.stiffness())?;
    space.factorize_block(&a11, space.stiffness(), &a21, space.mass())
}

fn solve_step(solver: &DirectSolver, r_u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = r_u.len();
    let mut rhs: Vec<f64> = r_u.iter().map(|v| -v).collect();
    rhs.resize(2 * n, 0.0);
    let mut x = solver.solve(&rhs)?;
    let dmu = x.split_off(n);
    Ok((x, dmu))
}

/// One modified Newton step at `(u, mu)` for a fixed `gamma`.
///
/// The right-hand side is `-(r_u, 0)`: the second equation is homogeneous
/// because `mu` is recomputed from `u` after every step.
pub fn newton_step(
    space: &FemSpace,
    u: &[f64],
    mu: &[f64],
    f: &[f64],
    p: &ModelParams,
    gamma: f64,
) -> Result<(NodalField, NodalField)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    let r = residual(space, u, mu, f, p)?;
    let solver = step_operator(space, u, p, gamma)?;
    space.counters().add_state_trial();
    let (du, dmu) = solve_step(&solver, &r.r_u)?;
    Ok((NodalField::from_vec(du), NodalField::from_vec(dmu)))
}

/// Gamma backtracking 1, 1/2, 1/4, ... and finally 0 until `<D_u F, du> < 0`.
pub fn find_descent_direction(
    space: &FemSpace,
    u: &[f64],
    mu: &[f64],
    f: &[f64],
    p: &ModelParams,
) -> Result<DescentDirection> {
    let opts = StateSolverOptions::default();
    let r = residual(space, u, mu, f, p)?;
    let eval = evaluate_energy(space, u, f, p)?;
    let variation = first_variation_with(space, u, f, p, &eval.potential)?;
    descent_with(space, u, &r.r_u, &variation, p, &opts)
}

fn descent_with(
    space: &FemSpace,
    u: &[f64],
    r_u: &[f64],
    variation: &[f64],
    p: &ModelParams,
    opts: &StateSolverOptions,
) -> Result<DescentDirection> {
    let mut gamma = 1.0;
    let mut trials = 0;
    let mut history = Vec::new();
    loop {
        trials += 1;
        space.counters().add_state_trial();
        let attempt = step_operator(space, u, p, gamma).and_then(|s| solve_step(&s, r_u));
        match attempt {
            Ok((mut du, dmu)) => {
                remove_mass(space, &mut du);
                let slope = pairing(variation, &du);
                if slope < 0.0 && slope.is_finite() {
                    return Ok(DescentDirection {
                        du: NodalField::from_vec(du),
                        dmu: NodalField::from_vec(dmu),
                        gamma,
                        slope,
                        trials,
                    });
                }
                history.push(format!("gamma {gamma:.3e}: slope {slope:.3e}"));
            }
            Err(e) => history.push(format!("gamma {gamma:.3e}: {e}")),
        }
        if gamma == 0.0 {
            return Err(Error::solver(format!(
                "no descent direction found ({})",
                history.join("; ")
            )));
        }
        gamma *= opts.gamma_factor;
        if gamma < opts.gamma_min {
            gamma = 0.0;
        }
    }
}

/// Projects out the mass a step would add. From a start on the mass
/// constraint the step conserves mass exactly in exact arithmetic; the rounding
/// residue otherwise dominates the slope once the residual is near machine
/// precision.
fn remove_mass(space: &FemSpace, du: &mut [f64]) {
    let m1 = space.mass_ones();
    let shift = crate::fem::dot(m1, du) / m1.iter().sum::<f64>();
    for v in du.iter_mut() {
        *v -= shift;
    }
}

/// Halves `beta` from 1 until `F(u + beta du) <= F(u) + c beta <D_u F, du>`.
pub fn armijo_search(
    space: &FemSpace,
    u: &[f64],
    du: &[f64],
    f: &[f64],
    p: &ModelParams,
    c_armijo: f64,
) -> Result<ArmijoStep> {
    for v in [u, du, f] {
        check_len(space.n(), v.len())?;
    }
    let eval = evaluate_energy(space, u, f, p)?;
    let variation = first_variation_with(space, u, f, p, &eval.potential)?;
    let slope = pairing(&variation, du);
    let max_halvings = StateSolverOptions::default().max_halvings;
    armijo_with(
        space,
        u,
        &eval.potential,
        du,
        f,
        p,
        slope,
        c_armijo,
        max_halvings,
    )
}

#[allow(clippy::too_many_arguments)]
fn armijo_with(
    space: &FemSpace,
    u: &[f64],
    potential: &[f64],
    du: &[f64],
    f: &[f64],
    p: &ModelParams,
    slope: f64,
    c_armijo: f64,
    max_halvings: usize,
) -> Result<ArmijoStep> {
    if !(slope < 0.0) {
        return Err(Error::invalid(format!(
            "not a descent direction: slope {slope:.3e}"
        )));
    }
    let mut beta = 1.0;
    let mut last = f64::NAN;
    for _ in 0..=max_halvings {
        let step: Vec<f64> = du.iter().map(|d| beta * d).collect();
        match energy_change(space, u, potential, &step, f, p) {
            Ok((change, _)) => {
                if change <= c_armijo * beta * slope {
                    return Ok(ArmijoStep {
                        beta,
                        energy_change: change,
                    });
                }
                last = change;
            }
            Err(Error::NumericalDomain(_)) => {}
            Err(e) => return Err(e),
        }
        beta *= 0.5;
    }
    Err(Error::solver(format!(
        "Armijo search failed after {max_halvings} halvings (slope {slope:.3e}, last change {last:.3e})"
    )))
}

/// Minimizes `F(., f)` starting from `u0` with default iteration controls
/// apart from `tol` and `max_iter`.
pub fn solve_state(
    space: &FemSpace,
    f: &[f64],
    u0: &[f64],
    p: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<StateSolveReport> {
    let opts = StateSolverOptions {
        tol,
        max_iter,
        ..StateSolverOptions::default()
    };
    solve_state_with(space, f, u0, p, &opts)
}

pub fn solve_state_with(
    space: &FemSpace,
    f: &[f64],
    u0: &[f64],
    p: &ModelParams,
    opts: &StateSolverOptions,
) -> Result<StateSolveReport> {
    check_len(space.n(), f.len())?;
    check_len(space.n(), u0.len())?;
    if !u0.iter().chain(f).all(|v| v.is_finite()) {
        return Err(Error::invalid(
            "initial guess and substrate field must be finite",
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }

    // every equilibrium has mean m; the first Newton step would apply this
    // constant shift anyway, and starting on the constraint keeps later steps
    // mass-free
    let mut u = u0.to_vec();
    let m1 = space.mass_ones();
    let area: f64 = m1.iter().sum();
    let shift = p.m - crate::fem::dot(m1, &u) / area;
    if shift.abs() > 1e-15 {
        u.iter_mut().for_each(|v| *v += shift);
    }
    let mut eval = evaluate_energy(space, &u, f, p)?;
    let mut energies = vec![eval.value];
    let mut gammas = Vec::new();
    let mut step_sizes = Vec::new();
    let mut residuals = Vec::new();
    let mut iterations = 0;

    let (mu, final_residual, termination) = loop {
        let mu = chemical_potential(space, &u, f, p)?.into_vec();
        let r = residual(space, &u, &mu, f, p)?;
        let norm = r.dual_norm(space)?;
        residuals.push(norm);
        log::debug!(
            "state iteration {iterations}: F = {:.12e}, |B| = {norm:.3e}",
            eval.value
        );
        if norm <= opts.tol {
            break (mu, norm, Termination::Converged);
        }
        if iterations >= opts.max_iter {
            break (mu, norm, Termination::MaxIterations);
        }

        let variation = first_variation_with(space, &u, f, p, &eval.potential)?;
        let direction = match descent_with(space, &u, &r.r_u, &variation, p, opts) {
            Ok(d) => d,
            Err(e) => break (mu, norm, Termination::Breakdown(e.to_string())),
        };
        let step = match armijo_with(
            space,
            &u,
            &eval.potential,
            &direction.du,
            f,
            p,
            direction.slope,
            opts.c_armijo,
            opts.max_halvings,
        ) {
            Ok(s) => s,
            Err(e) => break (mu, norm, Termination::Breakdown(e.to_string())),
        };

        for (ui, di) in u.iter_mut().zip(direction.du.iter()) {
            *ui += step.beta * di;
        }
        eval = evaluate_energy(space, &u, f, p)?;
        // the accurate difference, not eval.value: near convergence the decrease
        // is below the rounding error of a direct evaluation
        let previous = *energies.last().expect("initial energy");
        energies.push(previous + step.energy_change);
        gammas.push(direction.gamma);
        step_sizes.push(step.beta);
        iterations += 1;
        space.counters().add_state_newton();
    };

    if let Termination::Breakdown(msg) = &termination {
        log::warn!("state solve stopped after {iterations} iterations: {msg}");
    }
    Ok(StateSolveReport {
        u: NodalField::from_vec(u),
        mu: NodalField::from_vec(mu),
        iterations,
        energies,
        gammas,
        step_sizes,
        residuals,
        final_residual,
        converged: termination == Termination::Converged,
        termination,
    })
}
