//! Robustness of a design: equilibria from many random initial guesses,
//! ranked by free energy, with statistics of the design objective.

use std::sync::Mutex;

use serde::Serialize;

use crate::adjoint::design_objective;
use crate::energy::ModelParams;
use crate::error::{check_len, Error, Result};
use crate::fem::{FemSpace, NodalField};
use crate::random_field::{FieldSampler, FieldSamplerParams};
use crate::state::{solve_state_with, StateSolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub seed: u64,
    pub energy: f64,
    pub q: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// sample standard deviation (`n - 1` denominator; 0 for one sample)
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssessmentReport {
    pub samples: Vec<SampleOutcome>,
    /// position in `samples` of the lowest-energy converged sample
    pub min_energy_index: usize,
    /// statistics of `Q` over converged samples
    pub q_stats: Summary,
    /// equilibrium of the lowest-energy sample
    #[serde(skip)]
    pub best_state: NodalField,
}

/// Everything fixed across samples.
pub struct AssessmentSetup<'a> {
    pub space: &'a FemSpace,
    pub params: ModelParams,
    /// substrate field of the design under assessment
    pub substrate: &'a [f64],
    pub u_d: &'a [f64],
    pub sampler: FieldSamplerParams,
    pub state: StateSolverOptions,
}

/// Solves the state from seeds `base_seed .. base_seed + n` on up to `jobs`
/// threads. The report does not depend on `jobs` or on execution order.
pub fn assess(
    setup: &AssessmentSetup<'_>,
    n: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<AssessmentReport> {
    if n == 0 {
        return Err(Error::invalid("at least one sample is required"));
    }
    check_len(setup.space.n(), setup.substrate.len())?;
    check_len(setup.space.n(), setup.u_d.len())?;
    let sampler = FieldSampler::new(setup.space, setup.sampler)?;

    let run = |i: usize| -> Result<(SampleOutcome, NodalField)> {
        let seed = base_seed + i as u64;
        let u0 = sampler.sample(setup.params.m, seed)?;
        let rep = solve_state_with(
            setup.space,
            setup.substrate,
            &u0,
            &setup.params,
            &setup.state,
        )?;
        let q = design_objective(setup.space, &rep.u, setup.u_d)?;
        log::info!(
            "sample {seed}: F = {:.6e}, Q = {q:.6e}, converged {} after {} iterations",
            rep.final_energy(),
            rep.converged,
            rep.iterations
        );
        Ok((
            SampleOutcome {
                seed,
                energy: rep.final_energy(),
                q,
                converged: rep.converged,
                iterations: rep.iterations,
                residual: rep.final_residual,
            },
            rep.u,
        ))
    };

    type Slot = Result<(SampleOutcome, NodalField)>;
    let results: Vec<Slot> = if jobs <= 1 {
        (0..n).map(run).collect()
    } else {
        let slots: Vec<Mutex<Option<Slot>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(n) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = run(i);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| {
                s.into_inner()
                    .expect("slot lock")
                    .expect("every sample ran")
            })
            .collect()
    };

    let mut samples = Vec::with_capacity(n);
    let mut best: Option<(usize, f64, NodalField)> = None;
    for (i, r) in results.into_iter().enumerate() {
        let (outcome, u) = r?;
        if outcome.converged && best.as_ref().is_none_or(|b| outcome.energy < b.1) {
            best = Some((i, outcome.energy, u));
        }
        samples.push(outcome);
    }
    let (min_energy_index, _, best_state) = best.ok_or_else(|| {
        Error::solver(format!(
            "none of the {n} samples converged; the design is unusable"
        ))
    })?;
    let qs: Vec<f64> = samples
        .iter()
        .filter(|s| s.converged)
        .map(|s| s.q)
        .collect();
    let q_stats = Summary::of(&qs).expect("at least one converged sample");
    Ok(AssessmentReport {
        samples,
        min_energy_index,
        q_stats,
        best_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mesh;

    #[test]
    fn summary_values() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (2.0, 1.0, 1.0, 3.0));
        assert_eq!(Summary::of(&[4.0]).unwrap().std, 0.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn small_assessment_is_reproducible_and_ranked() {
        let space = FemSpace::new(Mesh::rectangle(1.0, 1.0, 12, 12).unwrap()).unwrap();
        let f = space
            .mesh()
            .interpolate(|x, _| -0.5 * (-(x - 0.5).powi(2) / 0.08).exp());
        let u_d = space
            .mesh()
            .interpolate(|x, _| if (x - 0.5).abs() < 0.25 { 1.0 } else { -1.0 });
        let setup = AssessmentSetup {
            space: &space,
            params: ModelParams::default(),
            substrate: &f,
            u_d: &u_d,
            sampler: FieldSamplerParams::default(),
            state: StateSolverOptions::default(),
        };
        let a = assess(&setup, 3, 10, 1).unwrap();
        let b = assess(&setup, 3, 10, 2).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.min_energy_index, b.min_energy_index);
        let best = a.samples[a.min_energy_index].energy;
        for s in a.samples.iter().filter(|s| s.converged) {
            assert!(best <= s.energy);
        }
        assert_eq!(
            a.samples.iter().map(|s| s.seed).collect::<Vec<_>>(),
            vec![10, 11, 12]
        );

        let one = assess(&setup, 1, 10, 1).unwrap();
        assert_eq!(one.min_energy_index, 0);
        assert!(assess(&setup, 0, 10, 1).is_err());
    }
}
