//! Ohta–Kawasaki free energy with a linear substrate term, its first
//! variation, and the mixed (u, mu) residual of the equilibrium equations.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::{dot, norm2, FemSpace, NodalField};

/// Relative tolerance on `|1^T g|` for a datum of the Neumann problem.
pub const COMPATIBILITY_RTOL: f64 = 1e-8;

/// Material constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// interface width
    pub eps: f64,
    /// strength of the nonlocal (chain connectivity) term
    pub sigma: f64,
    /// mass average of the order parameter
    pub m: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            eps: 0.08,
            sigma: 12.8,
            m: 0.0,
        }
    }
}

impl ModelParams {
    pub fn new(eps: f64, sigma: f64, m: f64) -> Result<Self> {
        let p = Self { eps, sigma, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if !(self.m.abs() < 1.0) {
            return Err(Error::invalid(format!(
                "mass average must lie in (-1, 1), got {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// Discrete residuals of the two weak equilibrium equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub r_u: Vec<f64>,
    pub r_mu: Vec<f64>,
}

impl ResidualPair {
    /// Norm in `(H^1)' x (H^1)'`.
    pub fn dual_norm(&self, space: &FemSpace) -> Result<f64> {
        space.h1_dual_norm_pair(&self.r_u, &self.r_mu)
    }
}

/// Derivatives of the double well `W(u) = (u^2 - 1)^2 / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WellOrder {
    Value,
    First,
    Second,
    Third,
}

pub fn double_well(u: f64, order: WellOrder) -> f64 {
    match order {
        WellOrder::Value => 0.25 * (u * u - 1.0).powi(2),
        WellOrder::First => u * u * u - u,
        WellOrder::Second => 3.0 * u * u - 1.0,
        WellOrder::Third => 6.0 * u,
    }
}

/// Convexified curvature `2u^2 + gamma (u^2 - 1)`; equals `W''` at `gamma = 1`
/// and is nonnegative at `gamma = 0`.
pub fn double_well_gamma(u: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    Ok(well_gamma(u, gamma))
}

#[inline]
pub(crate) fn well_gamma(u: f64, gamma: f64) -> f64 {
    // (2 + gamma) u^2 - gamma, arranged to agree bitwise with W'' at gamma = 1
    (2.0 + gamma) * u * u - gamma
}

/// `w = (-Laplace_N)^{-1} g` for a zero-mean dual datum `g`, normalized to zero mean.
pub fn inv_neumann_laplacian(space: &FemSpace, g: &[f64]) -> Result<NodalField> {
    check_len(space.n(), g.len())?;
    let total: f64 = g.iter().sum();
    if total.abs() > COMPATIBILITY_RTOL * norm2(g) {
        return Err(Error::invalid(format!(
            "Neumann datum has nonzero mean: |1^T g| = {:.3e}, |g| = {:.3e}",
            total.abs(),
            norm2(g)
        )));
    }
    let (w, _) = space.neumann_solve(g)?;
    Ok(NodalField::from_vec(w))
}

/// Potential `w` of the nonlocal term for state `u`: zero-mean solution of
/// `K w = M (u - m)` after projecting out any mass defect.
pub(crate) fn nonlocal_potential(space: &FemSpace, u: &[f64], m: f64) -> Result<Vec<f64>> {
    let shifted: Vec<f64> = u.iter().map(|x| x - m).collect();
    let g = space.mass().mul_vec(&shifted);
    let (w, c) = space.neumann_solve(&g)?;
    let tol = COMPATIBILITY_RTOL * space.mesh().area().max(norm2(&g));
    if (c * space.mesh().area()).abs() > tol {
        log::trace!(
            "mass defect {:.3e} projected out of the nonlocal term",
            c * space.mesh().area()
        );
    }
    Ok(w)
}

/// Free energy and its ingredients, evaluated once.
#[derive(Debug, Clone)]
pub(crate) struct EnergyEval {
    pub value: f64,
    /// nonlocal potential, reused by the first variation
    pub potential: Vec<f64>,
}

pub(crate) fn evaluate_energy(
    space: &FemSpace,
    u: &[f64],
    f: &[f64],
    p: &ModelParams,
) -> Result<EnergyEval> {
    let well = space.integrate_pointwise(u, |x| double_well(x, WellOrder::Value));
    let grad = 0.5 * p.eps * p.eps * space.stiffness().bilinear(u, u);
    let w = nonlocal_potential(space, u, p.m)?;
    let nonlocal = 0.5 * p.sigma * space.stiffness().bilinear(&w, &w);
    let substrate = space.l2_inner(f, u);
    let value = well + grad + nonlocal + substrate;
    if !value.is_finite() {
        return Err(Error::NumericalDomain(format!("free energy is {value}")));
    }
    Ok(EnergyEval {
        value,
        potential: w,
    })
}

/// `F(u) = int W(u) + eps^2/2 |grad u|^2 + sigma/2 |R(u - m)|^2_{H^-1} + int f u`.
pub fn free_energy(space: &FemSpace, u: &[f64], f: &[f64], p: &ModelParams) -> Result<f64> {
    check_len(space.n(), u.len())?;
    check_len(space.n(), f.len())?;
    Ok(evaluate_energy(space, u, f, p)?.value)
}

/// Vector `d_i = <D_u F(u), N_i>`; pairing with a direction `v` gives `<D_u F, v>`.
pub fn energy_first_variation(
    space: &FemSpace,
    u: &[f64],
    f: &[f64],
    p: &ModelParams,
) -> Result<Vec<f64>> {
    let w = nonlocal_potential(space, u, p.m)?;
    first_variation_with(space, u, f, p, &w)
}

pub(crate) fn first_variation_with(
    space: &FemSpace,
    u: &[f64],
    f: &[f64],
    p: &ModelParams,
    potential: &[f64],
) -> Result<Vec<f64>> {
    let mut g = local_part(space, u, f, p)?;
    let mw = space.mass().mul_vec(potential);
    for (gi, wi) in g.iter_mut().zip(mw) {
        *gi += p.sigma * wi;
    }
    Ok(g)
}

/// `load(W'(u)) + eps^2 K u + M f`
fn local_part(space: &FemSpace, u: &[f64], f: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    let mut g = space.assemble_pointwise_load(u, |x| double_well(x, WellOrder::First))?;
    let ku = space.stiffness().mul_vec(u);
    let mf = space.mass().mul_vec(f);
    let e2 = p.eps * p.eps;
    for i in 0..g.len() {
        g[i] += e2 * ku[i] + mf[i];
    }
    Ok(g)
}

/// `mu = M^{-1} (load(W'(u)) + eps^2 K u + M f)`.
pub fn chemical_potential(
    space: &FemSpace,
    u: &[f64],
    f: &[f64],
    p: &ModelParams,
) -> Result<NodalField> {
    check_len(space.n(), u.len())?;
    check_len(space.n(), f.len())?;
    let g = local_part(space, u, f, p)?;
    Ok(NodalField::from_vec(space.mass_solve(&g)?))
}

/// `r_u = K mu + sigma M (u - m 1)`, `r_mu = M mu - load(W'(u)) - eps^2 K u - M f`.
pub fn residual(
    space: &FemSpace,
    u: &[f64],
    mu: &[f64],
    f: &[f64],
    p: &ModelParams,
) -> Result<ResidualPair> {
    for v in [u, mu, f] {
        check_len(space.n(), v.len())?;
    }
    let kmu = space.stiffness().mul_vec(mu);
    let shifted: Vec<f64> = u.iter().map(|x| x - p.m).collect();
    let ms = space.mass().mul_vec(&shifted);
    let r_u = kmu.iter().zip(&ms).map(|(a, b)| a + p.sigma * b).collect();
    let local = local_part(space, u, f, p)?;
    let mmu = space.mass().mul_vec(mu);
    let r_mu = mmu.iter().zip(&local).map(|(a, b)| a - b).collect();
    Ok(ResidualPair { r_u, r_mu })
}

/// `F(u + d) - F(u)` evaluated term by term, without the cancellation of
/// subtracting two nearly equal energies. `potential` is the nonlocal potential
/// of `u`; returns the change and the potential of `u + d`.
pub(crate) fn energy_change(
    space: &FemSpace,
    u: &[f64],
    potential: &[f64],
    d: &[f64],
    f: &[f64],
    p: &ModelParams,
) -> Result<(f64, Vec<f64>)> {
    // W(a) - W(b) = (a - b)(a + b)(a^2 + b^2 - 2) / 4 with a = u + d, b = u
    let well = space.integrate_pointwise2(u, d, |b, dq| {
        let a = b + dq;
        0.25 * dq * (a + b) * (a * a + b * b - 2.0)
    });
    let k = space.stiffness();
    let e2 = p.eps * p.eps;
    let grad = e2 * (k.bilinear(d, u) + 0.5 * k.bilinear(d, d));
    let (dw, _) = space.neumann_solve(&space.mass().mul_vec(d))?;
    let nonlocal = p.sigma * (k.bilinear(&dw, potential) + 0.5 * k.bilinear(&dw, &dw));
    let substrate = space.l2_inner(f, d);
    let change = well + grad + nonlocal + substrate;
    if !change.is_finite() {
        return Err(Error::NumericalDomain(format!("energy change is {change}")));
    }
    let next = potential.iter().zip(&dw).map(|(a, b)| a + b).collect();
    Ok((change, next))
}

/// `<D_u F(u), v>` for a precomputed first-variation vector.
pub(crate) fn pairing(variation: &[f64], v: &[f64]) -> f64 {
    dot(variation, v)
}
