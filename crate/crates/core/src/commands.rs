//! The four CLI commands. Each takes a validated [`RunConfig`] and an output
//! directory, writes its files there and returns what it wrote in memory.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::adjoint::design_objective;
use crate::config::{RunConfig, SweepMode};
use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::fem::{FemSpace, NodalField, SolveCounts};
use crate::guidepost::{eval_substrate, DesignVariables, GuidepostShape};
use crate::io::{read_design_csv, write_design_csv, write_field_csv, write_json};
use crate::optimizer::{optimize, OptResult, OptTermination, PdeObjective};
use crate::robustness::{assess, AssessmentReport, AssessmentSetup};
use crate::state::{solve_state_with, StateSolveReport, Termination};

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn substrate(cfg: &RunConfig, space: &FemSpace, z: Option<&DesignVariables>) -> Result<NodalField> {
    match (&cfg.guideposts, z) {
        (Some(g), Some(z)) => eval_substrate(z, g, space.mesh()),
        _ => Ok(NodalField::zeros(space.n())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    #[serde(rename = "F")]
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// design objective, when a target is configured
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

pub struct SimulateOutput {
    pub report: SimulateReport,
    pub u0: NodalField,
    pub f: NodalField,
    pub state: StateSolveReport,
}

/// Equilibrium for the configured substrate (the initial design, or a
/// neutral substrate without guideposts). Writes `u0.csv`, `u.csv`,
/// `mu.csv`, `f.csv` and `report.json`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateOutput> {
    prepare(out)?;
    let space = cfg.space()?;
    let z = cfg.guideposts.map(|_| cfg.initial_design()).transpose()?;
    let f = substrate(cfg, &space, z.as_ref())?;
    let u0 = cfg.initial_state(&space)?;
    let state = solve_state_with(&space, &f, &u0, &cfg.model, &cfg.state)?;
    let q = match &cfg.target {
        Some(t) => Some(design_objective(
            &space,
            &state.u,
            &t.evaluate(space.mesh())?,
        )?),
        None => None,
    };
    let report = SimulateReport {
        energy: state.final_energy(),
        residual: state.final_residual,
        iterations: state.iterations,
        converged: state.converged,
        termination: state.termination.clone(),
        q,
    };
    let mesh = space.mesh();
    write_field_csv(&out.join("u0.csv"), mesh, &u0)?;
    write_field_csv(&out.join("u.csv"), mesh, &state.u)?;
    write_field_csv(&out.join("mu.csv"), mesh, &state.mu)?;
    write_field_csv(&out.join("f.csv"), mesh, &f)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(SimulateOutput {
        report,
        u0,
        f,
        state,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub termination: OptTermination,
    pub outer_iterations: usize,
    pub total_inner_iterations: usize,
    pub total_cg_iterations: usize,
    /// linear PDE solves implied by the trace
    pub linear_solves: usize,
    /// linear PDE solves as counted by the solvers
    pub counters: SolveCounts,
    pub z: Vec<f64>,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub grad_norm: f64,
}

pub struct OptimizeOutput {
    pub report: OptimizeReport,
    pub result: OptResult,
    pub design: DesignVariables,
    /// continuation state at the last iterate
    pub state: NodalField,
    pub substrate: NodalField,
}

impl OptimizeOutput {
    /// 0 when the gradient tolerance was met, 2 when the budget ran out, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.result.termination {
            OptTermination::GradientTolerance => 0,
            OptTermination::BudgetExhausted => 2,
            OptTermination::Aborted(_) => 1,
        }
    }
}

/// Optimizes guidepost positions. Writes `design.csv`, `trace.jsonl`,
/// `u.csv`, `f.csv` and `report.json`.
pub fn cmd_optimize(cfg: &RunConfig, out: &Path) -> Result<OptimizeOutput> {
    prepare(out)?;
    let space = cfg.space()?;
    let guideposts = cfg.guideposts()?;
    let u_d = cfg.target()?.evaluate(space.mesh())?;
    let z0 = cfg.initial_design()?;
    let u0 = cfg.initial_state(&space)?;
    let opt_cfg = cfg.optimizer_config();
    let mut objective = PdeObjective::new(
        &space,
        cfg.model,
        guideposts,
        z0.clone(),
        &u_d,
        &u0,
        &opt_cfg,
    )?;
    let result = optimize(&mut objective, z0.as_slice(), &opt_cfg)?;
    let last = result
        .trace
        .records
        .last()
        .expect("trace has the initial record");
    let design = z0.with_values(last.z.clone())?;
    let state = objective.state().clone();
    let substrate = eval_substrate(&design, &guideposts, space.mesh())?;
    let report = OptimizeReport {
        termination: result.termination.clone(),
        outer_iterations: result.trace.outer_iterations(),
        total_inner_iterations: result.trace.total_inner_iters(),
        total_cg_iterations: result.trace.total_cg_iters(),
        linear_solves: result.trace.linear_solves(),
        counters: space.counters().snapshot(),
        z: last.z.clone(),
        j: last.j,
        q: last.q,
        p: last.p,
        grad_norm: last.grad_norm,
    };
    write_design_csv(&out.join("design.csv"), &design)?;
    result.trace.save(&out.join("trace.jsonl"))?;
    write_field_csv(&out.join("u.csv"), space.mesh(), &state)?;
    write_field_csv(&out.join("f.csv"), space.mesh(), &substrate)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(OptimizeOutput {
        report,
        result,
        design,
        state,
        substrate,
    })
}

/// Re-solves the state for `samples` random initial guesses on the design
/// at `design` (or `[assess] design`). Writes `assessment.json` and the
/// lowest-energy equilibrium as `best_state.csv`.
pub fn cmd_assess(
    cfg: &RunConfig,
    design: Option<&Path>,
    samples: usize,
    jobs: usize,
    out: &Path,
) -> Result<AssessmentReport> {
    prepare(out)?;
    let path: PathBuf = design
        .map(Path::to_path_buf)
        .or_else(|| cfg.assess.design.clone())
        .ok_or_else(|| Error::Config {
            field: "assess.design".into(),
            message: "no design file given".into(),
        })?;
    let z = read_design_csv(&path)?;
    let mut guideposts = cfg.guideposts()?;
    if guideposts.shape != z.shape() {
        return Err(Error::invalid(format!(
            "{} holds {} guideposts but the config describes {}",
            path.display(),
            z.shape(),
            guideposts.shape
        )));
    }
    guideposts.count = z.count();
    let space = cfg.space()?;
    let f = eval_substrate(&z, &guideposts, space.mesh())?;
    let u_d = cfg.target()?.evaluate(space.mesh())?;
    let setup = AssessmentSetup {
        space: &space,
        params: cfg.model,
        substrate: &f,
        u_d: &u_d,
        sampler: cfg.sampler,
        state: cfg.state,
    };
    let report = assess(&setup, samples, cfg.sampler.seed, jobs)?;
    write_json(&out.join("assessment.json"), &report)?;
    write_field_csv(
        &out.join("best_state.csv"),
        space.mesh(),
        &report.best_state,
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub spacing: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "F")]
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `Q` for equally spaced strips over the configured spacing grid, leftmost
/// strip fixed. Writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, mode: SweepMode, out: &Path) -> Result<Vec<SweepRow>> {
    prepare(out)?;
    let guideposts = cfg.guideposts()?;
    if guideposts.shape != GuidepostShape::Strip {
        return Err(Error::Config {
            field: "guideposts.shape".into(),
            message: "the spacing sweep needs strip guideposts".into(),
        });
    }
    let space = cfg.space()?;
    let u_d = cfg.target()?.evaluate(space.mesh())?;
    let u0 = cfg.initial_state(&space)?;
    let rows = sweep_spacings(&space, &cfg.model, cfg, &u_d, &u0, &cfg.sweep.grid()?, mode)?;
    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

fn sweep_spacings(
    space: &FemSpace,
    params: &ModelParams,
    cfg: &RunConfig,
    u_d: &[f64],
    u0: &NodalField,
    grid: &[f64],
    mode: SweepMode,
) -> Result<Vec<SweepRow>> {
    let guideposts = cfg.guideposts()?;
    let mut warm = u0.clone();
    let mut rows = Vec::with_capacity(grid.len());
    for &spacing in grid {
        let z: Vec<f64> = (0..guideposts.count)
            .map(|k| cfg.sweep.leftmost + k as f64 * spacing)
            .collect();
        let f = eval_substrate(
            &DesignVariables::new(GuidepostShape::Strip, z)?,
            &guideposts,
            space.mesh(),
        )?;
        let start = match mode {
            SweepMode::Continuation => &warm,
            SweepMode::Fixed => u0,
        };
        let rep = solve_state_with(space, &f, start, params, &cfg.state)?;
        let q = design_objective(space, &rep.u, u_d)?;
        log::info!(
            "spacing {spacing:.4}: Q = {q:.6e} after {} iterations",
            rep.iterations
        );
        rows.push(SweepRow {
            spacing,
            q,
            energy: rep.final_energy(),
            iterations: rep.iterations,
            converged: rep.converged,
        });
        if mode == SweepMode::Continuation {
            warm = rep.u;
        }
    }
    Ok(rows)
}
