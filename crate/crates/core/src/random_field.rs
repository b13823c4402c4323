//! Random initial guesses `u0 = m + s erf(xi)`, with `xi` a zero-mean Gaussian
//! field of covariance `(delta I - gamma Laplace)^{-2}`.
//!
//! The field is sampled by solving `(delta M + gamma K) xi = b` with white
//! noise `b_i = sqrt(m_i) eta_i`, where `m_i` is the lumped mass of node `i`
//! and `eta_i` are i.i.d. standard normal draws from a ChaCha8 stream seeded
//! with the 64-bit seed. ChaCha8 output is specified bit for bit, so a seed
//! gives the same field on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::fem::{DirectSolver, FemSpace, NodalField, SparseOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSamplerParams {
    pub delta_g: f64,
    pub gamma_g: f64,
    /// perturbation scale `s`
    pub scale: f64,
    pub seed: u64,
}

impl Default for FieldSamplerParams {
    fn default() -> Self {
        Self {
            delta_g: 0.8,
            gamma_g: 0.02,
            scale: 1.0,
            seed: 0,
        }
    }
}

impl FieldSamplerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_g > 0.0 && self.gamma_g > 0.0) {
            return Err(Error::invalid(format!(
                "covariance constants must be positive, got ({}, {})",
                self.delta_g, self.gamma_g
            )));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(format!(
                "scale must be >= 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Sampler with the covariance operator factorized once, for drawing many
/// fields on one mesh.
pub struct FieldSampler {
    params: FieldSamplerParams,
    solver: DirectSolver,
    lumped_sqrt: Vec<f64>,
}

impl FieldSampler {
    pub fn new(space: &FemSpace, params: FieldSamplerParams) -> Result<Self> {
        params.validate()?;
        let a = SparseOperator::linear_combination(
            params.delta_g,
            space.mass(),
            params.gamma_g,
            space.stiffness(),
        )?;
        Ok(Self {
            params,
            solver: DirectSolver::factorize(&a)?,
            lumped_sqrt: space.mass_ones().iter().map(|m| m.sqrt()).collect(),
        })
    }

    /// Gaussian field `xi` for `seed`.
    pub fn gaussian(&self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = self
            .lumped_sqrt
            .iter()
            .map(|s| {
                let eta: f64 = StandardNormal.sample(&mut rng);
                s * eta
            })
            .collect();
        self.solver.solve(&b)
    }

    /// `m + s erf(xi)` for `seed`, strictly inside `(m - s, m + s)`.
    pub fn sample(&self, m: f64, seed: u64) -> Result<NodalField> {
        let s = self.params.scale;
        if s == 0.0 {
            return Ok(NodalField::constant(self.lumped_sqrt.len(), m));
        }
        let xi = self.gaussian(seed)?;
        let (lo, hi) = (m - s, m + s);
        let u = xi
            .iter()
            .map(|&x| {
                // erf rounds to +-1 for |x| > ~5.9; keep the open range
                let v = m + s * libm::erf(x);
                if v >= hi {
                    hi.next_down()
                } else if v <= lo {
                    lo.next_up()
                } else {
                    v
                }
            })
            .collect();
        NodalField::new(u)
    }
}

pub fn sample_initial_guess(
    space: &FemSpace,
    p: &ModelParams,
    fp: &FieldSamplerParams,
) -> Result<NodalField> {
    FieldSampler::new(space, *fp)?.sample(p.m, fp.seed)
}
