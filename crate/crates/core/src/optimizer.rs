//! Bounded-step inexact Newton-CG over guidepost coordinates.
//!
//! No line search on the cost: the Newton direction from truncated CG is only
//! clipped in the max norm. State solves are warm-started from the previous
//! design's equilibrium (continuation), which keeps the iteration on one
//! solution branch.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adjoint::{design_objective, gradient_f, AdjointPair, Linearization};
use crate::energy::ModelParams;
use crate::error::{check_len, Error, Result};
use crate::fem::{dot, norm2, FemSpace, NodalField};
use crate::guidepost::{
    hessian_action_design, penalty_repel, penalty_wall, DesignVariables, GuidepostConfig,
    PenaltyEval, PenaltyParams, SubstrateMap,
};
use crate::state::{solve_state_with, StateSolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// bound on `|beta_z dz|_inf`
    pub l_max: f64,
    /// stop once `|grad J|_2 <= g_tol`
    pub g_tol: f64,
    pub max_outer: usize,
    pub cg_max: usize,
    /// fixed CG tolerance instead of the forcing term
    pub cg_rtol: Option<f64>,
    pub penalty: PenaltyParams,
    /// set from the run-wide state solver section
    #[serde(skip)]
    pub state: StateSolverOptions,
    /// an unconverged state is still used when its residual is below this
    pub salvage_residual: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            l_max: 0.2,
            g_tol: 1e-6,
            max_outer: 500,
            cg_max: 100,
            cg_rtol: None,
            penalty: PenaltyParams::default(),
            state: StateSolverOptions::default(),
            salvage_residual: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_max > 0.0) {
            return Err(Error::invalid(format!(
                "l_max must be positive, got {}",
                self.l_max
            )));
        }
        if !(self.g_tol > 0.0) {
            return Err(Error::invalid(format!(
                "g_tol must be positive, got {}",
                self.g_tol
            )));
        }
        if self.cg_max == 0 {
            return Err(Error::invalid("cg_max must be at least 1"));
        }
        self.penalty.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgStatus {
    Converged,
    NegativeCurvature,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub dz: Vec<f64>,
    pub status: CgStatus,
    /// Hessian actions applied
    pub iterations: usize,
}

/// Truncated CG for `H dz = -g` from `dz = 0`.
///
/// Stops when `|H dz + g| <= rtol |g|`, or on nonpositive curvature: at the
/// first iteration the steepest descent direction `-g` is returned, later the
/// last iterate.
pub fn cg_solve(
    mut hess: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    g: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<CgResult> {
    let n = g.len();
    let g_norm = norm2(g);
    let mut x = vec![0.0; n];
    if g_norm == 0.0 {
        return Ok(CgResult {
            dz: x,
            status: CgStatus::Converged,
            iterations: 0,
        });
    }
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        let hd = hess(&d)?;
        check_len(n, hd.len())?;
        let curv = dot(&d, &hd);
        if !(curv > 0.0) {
            let dz = if it == 0 {
                g.iter().map(|v| -v).collect()
            } else {
                x
            };
            return Ok(CgResult {
                dz,
                status: CgStatus::NegativeCurvature,
                iterations: it + 1,
            });
        }
        let alpha = rr / curv;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * hd[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= rtol * g_norm {
            return Ok(CgResult {
                dz: x,
                status: CgStatus::Converged,
                iterations: it + 1,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
    }
    Ok(CgResult {
        dz: x,
        status: CgStatus::MaxIter,
        iterations: max_iter,
    })
}

/// `min(0.5, sqrt(|g| / |g0|))`.
pub fn forcing_term(g_norm: f64, g0_norm: f64) -> Result<f64> {
    if !(g0_norm > 0.0) {
        return Err(Error::invalid(format!(
            "initial gradient norm must be positive, got {g0_norm}"
        )));
    }
    if !(g_norm >= 0.0) {
        return Err(Error::invalid(format!(
            "gradient norm must be nonnegative, got {g_norm}"
        )));
    }
    Ok(0.5f64.min((g_norm / g0_norm).sqrt()))
}

/// `beta = min(1, l_max / |dz|_inf)` and the clipped step `beta dz`.
pub fn clip_step(dz: &[f64], l_max: f64) -> Result<(f64, Vec<f64>)> {
    if !(l_max > 0.0) {
        return Err(Error::invalid(format!(
            "l_max must be positive, got {l_max}"
        )));
    }
    let inf = dz.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let beta = if inf > l_max { l_max / inf } else { 1.0 };
    let step = dz.iter().map(|v| beta * v).collect();
    Ok((beta, step))
}

/// One evaluation of the design cost at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub q: f64,
    pub penalty: f64,
    pub gradient: Vec<f64>,
    /// accepted Newton iterations spent on the state
    pub inner_iters: usize,
    pub gammas: Vec<f64>,
    pub state_residual: f64,
    pub state_converged: bool,
}

impl ObjectiveEval {
    pub fn cost(&self) -> f64 {
        self.q + self.penalty
    }
}

/// A twice-differentiable cost over design coordinates. `hessian_action`
/// acts at the point of the most recent `evaluate`.
pub trait DesignObjective {
    fn evaluate(&mut self, z: &[f64]) -> Result<ObjectiveEval>;
    fn hessian_action(&mut self, v: &[f64]) -> Result<Vec<f64>>;
}

/// Penalty terms alone: repulsion plus walls.
#[derive(Debug, Clone)]
pub struct PenaltyObjective {
    pub template: DesignVariables,
    pub penalty: PenaltyParams,
    pub l1: f64,
    pub l2: f64,
    current: Option<PenaltyEval>,
}

impl PenaltyObjective {
    pub fn new(template: DesignVariables, penalty: PenaltyParams, l1: f64, l2: f64) -> Self {
        Self {
            template,
            penalty,
            l1,
            l2,
            current: None,
        }
    }

    fn penalties(&self, z: &[f64]) -> Result<PenaltyEval> {
        let dv = self.template.with_values(z.to_vec())?;
        let mut total = penalty_repel(&dv, self.penalty.alpha)?;
        total.add(&penalty_wall(
            &dv,
            self.penalty.a1,
            self.penalty.a2,
            self.l1,
            self.l2,
        ));
        Ok(total)
    }
}

impl DesignObjective for PenaltyObjective {
    fn evaluate(&mut self, z: &[f64]) -> Result<ObjectiveEval> {
        let p = self.penalties(z)?;
        let out = ObjectiveEval {
            q: 0.0,
            penalty: p.value,
            gradient: p.gradient.clone(),
            inner_iters: 0,
            gammas: Vec::new(),
            state_residual: 0.0,
            state_converged: true,
        };
        self.current = Some(p);
        Ok(out)
    }

    fn hessian_action(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        let p = self
            .current
            .as_ref()
            .ok_or_else(|| Error::invalid("hessian action before evaluate"))?;
        Ok(p.hessian_action(v))
    }
}

/// `J(z) = Q(u(f(z))) + P_repel(z) + P_wall(z)` with the state from
/// continuation: every state solve starts at the previous equilibrium.
pub struct PdeObjective<'a> {
    space: &'a FemSpace,
    params: ModelParams,
    guideposts: GuidepostConfig,
    penalties: PenaltyObjective,
    u_d: Vec<f64>,
    state_opts: StateSolverOptions,
    salvage_residual: f64,
    state: NodalField,
    current: Option<Linearized<'a>>,
}

struct Linearized<'a> {
    map: SubstrateMap,
    lin: Linearization<'a>,
    adjoint: AdjointPair,
    penalty: PenaltyEval,
}

impl<'a> PdeObjective<'a> {
    /// `template` fixes shape and count; `initial_state` seeds the first state solve.
    pub fn new(
        space: &'a FemSpace,
        params: ModelParams,
        guideposts: GuidepostConfig,
        template: DesignVariables,
        u_d: &[f64],
        initial_state: &[f64],
        cfg: &OptimizerConfig,
    ) -> Result<Self> {
        check_len(space.n(), u_d.len())?;
        check_len(space.n(), initial_state.len())?;
        params.validate()?;
        guideposts.validate()?;
        let mesh = space.mesh();
        Ok(Self {
            space,
            params,
            guideposts,
            penalties: PenaltyObjective::new(template, cfg.penalty, mesh.l1(), mesh.l2()),
            u_d: u_d.to_vec(),
            state_opts: cfg.state,
            salvage_residual: cfg.salvage_residual,
            state: NodalField::new(initial_state.to_vec())?,
            current: None,
        })
    }

    /// The most recent equilibrium (the warm start for the next solve).
    pub fn state(&self) -> &NodalField {
        &self.state
    }

    pub fn substrate(&self) -> Option<&NodalField> {
        self.current.as_ref().map(|c| c.map.field())
    }
}

impl DesignObjective for PdeObjective<'_> {
    fn evaluate(&mut self, z: &[f64]) -> Result<ObjectiveEval> {
        let dv = self.penalties.template.with_values(z.to_vec())?;
        let map = SubstrateMap::new(&dv, &self.guideposts, self.space.mesh())?;
        let rep = solve_state_with(
            self.space,
            map.field(),
            &self.state,
            &self.params,
            &self.state_opts,
        )?;
        if !rep.converged {
            if rep.final_residual < self.salvage_residual {
                log::warn!(
                    "state solve unconverged ({:?}), residual {:.3e} below salvage threshold",
                    rep.termination,
                    rep.final_residual
                );
            } else {
                return Err(Error::solver(format!(
                    "state solve failed at z = {z:?}: {:?} with residual {:.3e} after {} iterations",
                    rep.termination, rep.final_residual, rep.iterations
                )));
            }
        }
        self.state = rep.u.clone();
        let lin = Linearization::new(self.space, &rep.u, &self.params)?;
        let adjoint = lin.solve_adjoint(&self.u_d)?;
        let grad_f = gradient_f(&adjoint.lambda);
        let grad_q = map.pull_back(self.space, &grad_f)?;
        let penalty = self.penalties.penalties(z)?;
        let gradient = grad_q
            .iter()
            .zip(&penalty.gradient)
            .map(|(a, b)| a + b)
            .collect();
        let out = ObjectiveEval {
            q: design_objective(self.space, &rep.u, &self.u_d)?,
            penalty: penalty.value,
            gradient,
            inner_iters: rep.iterations,
            gammas: rep.gammas.clone(),
            state_residual: rep.final_residual,
            state_converged: rep.converged,
        };
        self.current = Some(Linearized {
            map,
            lin,
            adjoint,
            penalty,
        });
        Ok(out)
    }

    fn hessian_action(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        let c = self
            .current
            .as_ref()
            .ok_or_else(|| Error::invalid("hessian action before evaluate"))?;
        let hq = hessian_action_design(&c.map, v, &c.lin, &c.adjoint.lambda)?;
        let hp = c.penalty.hessian_action(v);
        Ok(hq.iter().zip(&hp).map(|(a, b)| a + b).collect())
    }
}

/// One line of the optimization trace, describing iterate `z_k` and the step
/// taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub grad_norm: f64,
    /// Hessian actions in the CG solve from this iterate
    pub cg_iters: usize,
    pub cg_status: Option<CgStatus>,
    /// Newton iterations of the state solve at this iterate
    pub inner_iters: usize,
    pub gammas: Vec<f64>,
    /// step scaling applied from this iterate; 0 for the final record
    pub beta_z: f64,
    pub state_residual: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub records: Vec<TraceRecord>,
}

impl OptTrace {
    pub fn outer_iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn total_inner_iters(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).sum()
    }

    pub fn total_cg_iters(&self) -> usize {
        self.records.iter().map(|r| r.cg_iters).sum()
    }

    /// Linear PDE solves implied by the trace: inner Newton iterations, one
    /// adjoint per evaluated iterate and two solves per Hessian action.
    pub fn linear_solves(&self) -> usize {
        self.total_inner_iters() + self.records.len() + 2 * self.total_cg_iters()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<trace>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<trace>", e))?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OptTermination {
    GradientTolerance,
    BudgetExhausted,
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub z: Vec<f64>,
    pub trace: OptTrace,
    pub termination: OptTermination,
}

impl OptResult {
    pub fn converged(&self) -> bool {
        self.termination == OptTermination::GradientTolerance
    }
}

/// Runs the outer iteration from `z0`.
pub fn optimize(
    objective: &mut dyn DesignObjective,
    z0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    cfg.validate()?;
    if z0.is_empty() || !z0.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("initial design must be nonempty and finite"));
    }
    let mut z = z0.to_vec();
    let mut trace = OptTrace::default();
    let mut eval = objective.evaluate(&z)?;
    let g0 = norm2(&eval.gradient);

    let termination = loop {
        let k = trace.records.len();
        let g_norm = norm2(&eval.gradient);
        let mut record = TraceRecord {
            k,
            j: eval.cost(),
            q: eval.q,
            p: eval.penalty,
            grad_norm: g_norm,
            cg_iters: 0,
            cg_status: None,
            inner_iters: eval.inner_iters,
            gammas: eval.gammas.clone(),
            beta_z: 0.0,
            state_residual: eval.state_residual,
            z: z.clone(),
        };
        log::info!(
            "outer {k}: J = {:.6e} (Q = {:.6e}, P = {:.6e}), |g| = {g_norm:.3e}, inner {}",
            record.j,
            record.q,
            record.p,
            record.inner_iters
        );
        if g_norm <= cfg.g_tol {
            trace.records.push(record);
            break OptTermination::GradientTolerance;
        }
        if k >= cfg.max_outer {
            trace.records.push(record);
            break OptTermination::BudgetExhausted;
        }

        let rtol = match cfg.cg_rtol {
            Some(r) => r,
            None => forcing_term(g_norm, g0)?,
        };
        let cg = match cg_solve(
            |v| objective.hessian_action(v),
            &eval.gradient,
            rtol,
            cfg.cg_max,
        ) {
            Ok(c) => c,
            Err(e) => {
                trace.records.push(record);
                break OptTermination::Aborted(format!("Hessian action failed: {e}"));
            }
        };
        let (beta, step) = clip_step(&cg.dz, cfg.l_max)?;
        record.cg_iters = cg.iterations;
        record.cg_status = Some(cg.status);
        record.beta_z = beta;
        trace.records.push(record);

        for (zi, si) in z.iter_mut().zip(&step) {
            *zi += si;
        }
        eval = match objective.evaluate(&z) {
            Ok(e) => e,
            Err(e) => {
                break OptTermination::Aborted(format!(
                    "evaluation at iterate {} failed: {e}",
                    k + 1
                ))
            }
        };
    };
    Ok(OptResult {
        z,
        trace,
        termination,
    })
}
