use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use super::linsolve::{DirectSolver, SymbolicFactor};
use super::mesh::Mesh;
use super::quadrature::{POINTS, WEIGHTS};
use super::sparse::SparseOperator;
use crate::error::{check_len, Error, Result};

/// Consistent P1 mass matrix `M_ij = (N_i, N_j)`.
pub fn assemble_mass(mesh: &Mesh) -> SparseOperator {
    let mut entries = Vec::with_capacity(9 * mesh.n_elements());
    for (e, el) in mesh.elements().iter().enumerate() {
        let area = mesh.signed_area(e);
        for (a, &i) in el.iter().enumerate() {
            for (b, &j) in el.iter().enumerate() {
                let v = if a == b { area / 6.0 } else { area / 12.0 };
                entries.push((i, j, v));
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_nodes(), &entries, true).expect("element indices in range")
}

/// P1 stiffness matrix `K_ij = (grad N_i, grad N_j)`.
pub fn assemble_stiffness(mesh: &Mesh) -> SparseOperator {
    let mut entries = Vec::with_capacity(9 * mesh.n_elements());
    for (e, el) in mesh.elements().iter().enumerate() {
        let (area, grads) = element_gradients(mesh, e);
        for (a, &i) in el.iter().enumerate() {
            for (b, &j) in el.iter().enumerate() {
                let v = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                entries.push((i, j, v));
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_nodes(), &entries, true).expect("element indices in range")
}

fn element_gradients(mesh: &Mesh, e: usize) -> (f64, [[f64; 2]; 3]) {
    let [a, b, c] = mesh.elements()[e];
    let (pa, pb, pc) = (mesh.nodes()[a], mesh.nodes()[b], mesh.nodes()[c]);
    let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
    let grads = [
        [(pb[1] - pc[1]) / det, (pc[0] - pb[0]) / det],
        [(pc[1] - pa[1]) / det, (pa[0] - pc[0]) / det],
        [(pa[1] - pb[1]) / det, (pb[0] - pa[0]) / det],
    ];
    (0.5 * det, grads)
}

/// Counts of linear PDE solves, by kind.
#[derive(Debug, Default)]
pub struct SolveCounters {
    state_newton: AtomicUsize,
    state_trials: AtomicUsize,
    adjoint: AtomicUsize,
    incremental_state: AtomicUsize,
    incremental_adjoint: AtomicUsize,
}

/// Snapshot of [`SolveCounters`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolveCounts {
    /// Accepted inner Newton iterations (one linearized state solve each).
    pub state_newton: usize,
    /// Newton systems solved including rejected gamma trials.
    pub state_trials: usize,
    pub adjoint: usize,
    pub incremental_state: usize,
    pub incremental_adjoint: usize,
}

impl SolveCounts {
    /// Total linear PDE solves in the accounting of inner Newton iterations,
    /// adjoint solves and incremental pairs.
    pub fn total(&self) -> usize {
        self.state_newton + self.adjoint + self.incremental_state + self.incremental_adjoint
    }
}

impl SolveCounters {
    pub(crate) fn add_state_newton(&self) {
        self.state_newton.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn add_state_trial(&self) {
        self.state_trials.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn add_adjoint(&self) {
        self.adjoint.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn add_incremental_state(&self) {
        self.incremental_state.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn add_incremental_adjoint(&self) {
        self.incremental_adjoint.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> SolveCounts {
        SolveCounts {
            state_newton: self.state_newton.load(Ordering::Relaxed),
            state_trials: self.state_trials.load(Ordering::Relaxed),
            adjoint: self.adjoint.load(Ordering::Relaxed),
            incremental_state: self.incremental_state.load(Ordering::Relaxed),
            incremental_adjoint: self.incremental_adjoint.load(Ordering::Relaxed),
        }
    }
}

struct ElementData {
    area: f64,
    /// value-array positions of the local 3x3 block in the P1 pattern
    slots: [[usize; 3]; 3],
}

/// Mesh plus everything assembled once and reused: mass and stiffness
/// operators, element-to-pattern maps and cached factorizations.
///
/// Immutable after construction apart from the atomic solve counters, so it
/// can be shared across threads.
pub struct FemSpace {
    mesh: Mesh,
    mass: SparseOperator,
    stiffness: SparseOperator,
    pattern: SparseOperator,
    elements: Vec<ElementData>,
    mass_solver: DirectSolver,
    h1_solver: DirectSolver,
    neumann_solver: DirectSolver,
    mass_ones: Vec<f64>,
    block_symbolic: SymbolicFactor,
    counters: SolveCounters,
}

impl std::fmt::Debug for FemSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FemSpace")
            .field("nodes", &self.mesh.n_nodes())
            .field("elements", &self.mesh.n_elements())
            .finish_non_exhaustive()
    }
}

impl FemSpace {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let n = mesh.n_nodes();
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh);

        let mut entries = Vec::with_capacity(9 * mesh.n_elements());
        for el in mesh.elements() {
            for &i in el {
                for &j in el {
                    entries.push((i, j, 0.0));
                }
            }
        }
        let pattern = SparseOperator::from_triplets(n, &entries, true)?;
        let elements = mesh
            .elements()
            .iter()
            .enumerate()
            .map(|(e, el)| {
                let mut slots = [[0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        slots[a][b] = pattern.slot(el[a], el[b]).expect("pattern covers element");
                    }
                }
                ElementData {
                    area: mesh.signed_area(e),
                    slots,
                }
            })
            .collect();

        let mass_solver = DirectSolver::factorize(&mass)?;
        let h1 = SparseOperator::linear_combination(1.0, &mass, 1.0, &stiffness)?;
        let h1_solver = DirectSolver::factorize(&h1)?;

        // K with node 0 pinned; the pure-Neumann nullspace is handled in
        // `neumann_solve`. A bordered row of M1 would fill in the LU.
        let mass_ones = mass.row_sums();
        let mut pinned: Vec<_> = stiffness
            .triplets()
            .filter(|&(i, j, _)| i != 0 && j != 0)
            .collect();
        pinned.push((0, 0, 1.0));
        let neumann = SparseOperator::from_triplets(n, &pinned, true)?;
        let neumann_solver = DirectSolver::factorize(&neumann)?;

        let zero = pattern.clone();
        let block = SparseOperator::block2x2(&zero, &zero, &zero, &zero)?;
        let block_symbolic = SymbolicFactor::analyze(&block)?;

        Ok(Self {
            mesh,
            mass,
            stiffness,
            pattern,
            elements,
            mass_solver,
            h1_solver,
            neumann_solver,
            mass_ones,
            block_symbolic,
            counters: SolveCounters::default(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    /// `M 1`: integrals of the basis functions.
    pub fn mass_ones(&self) -> &[f64] {
        &self.mass_ones
    }

    pub fn counters(&self) -> &SolveCounters {
        &self.counters
    }

    /// `int u_h dx`
    pub fn integral(&self, u: &[f64]) -> f64 {
        dot(&self.mass_ones, u)
    }

    /// `(u_h, v_h)` in L2.
    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.bilinear(u, v)
    }

    pub fn mass_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.mass_solver.solve(b)
    }

    /// Vector with entries `int g(u_h) N_i dx` under the degree-4 rule.
    pub fn assemble_pointwise_load(&self, u: &[f64], g: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        check_len(self.n(), u.len())?;
        let mut out = vec![0.0; self.n()];
        for (el, data) in self.mesh.elements().iter().zip(&self.elements) {
            let ue = [u[el[0]], u[el[1]], u[el[2]]];
            let mut local = [0.0; 3];
            for (bary, w) in POINTS.iter().zip(WEIGHTS) {
                let uq = bary[0] * ue[0] + bary[1] * ue[1] + bary[2] * ue[2];
                let gq = g(uq);
                if !gq.is_finite() {
                    return Err(Error::NumericalDomain(format!(
                        "pointwise load integrand is {gq} at u = {uq}"
                    )));
                }
                for a in 0..3 {
                    local[a] += w * gq * bary[a];
                }
            }
            for a in 0..3 {
                out[el[a]] += data.area * local[a];
            }
        }
        Ok(out)
    }

    /// Sum over quadrature points of `g(u_h)`: `int g(u_h) dx`.
    pub fn integrate_pointwise(&self, u: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for (el, data) in self.mesh.elements().iter().zip(&self.elements) {
            let ue = [u[el[0]], u[el[1]], u[el[2]]];
            let mut local = 0.0;
            for (bary, w) in POINTS.iter().zip(WEIGHTS) {
                let uq = bary[0] * ue[0] + bary[1] * ue[1] + bary[2] * ue[2];
                local += w * g(uq);
            }
            total += data.area * local;
        }
        total
    }

    /// `int g(u_h, d_h) dx` for two nodal fields under the degree-4 rule.
    pub fn integrate_pointwise2(&self, u: &[f64], d: &[f64], g: impl Fn(f64, f64) -> f64) -> f64 {
        let mut total = 0.0;
        for (el, data) in self.mesh.elements().iter().zip(&self.elements) {
            let ue = [u[el[0]], u[el[1]], u[el[2]]];
            let de = [d[el[0]], d[el[1]], d[el[2]]];
            let mut local = 0.0;
            for (bary, w) in POINTS.iter().zip(WEIGHTS) {
                let uq = bary[0] * ue[0] + bary[1] * ue[1] + bary[2] * ue[2];
                let dq = bary[0] * de[0] + bary[1] * de[1] + bary[2] * de[2];
                local += w * g(uq, dq);
            }
            total += data.area * local;
        }
        total
    }

    /// Operator with entries `int c(u_h, a_h) N_i N_j dx` on the P1 pattern.
    ///
    /// `aux` is a second nodal field passed to the weight (zero when absent).
    pub fn weighted_mass(
        &self,
        u: &[f64],
        aux: Option<&[f64]>,
        c: impl Fn(f64, f64) -> f64,
    ) -> SparseOperator {
        let mut vals = vec![0.0; self.pattern.nnz()];
        for (el, data) in self.mesh.elements().iter().zip(&self.elements) {
            let ue = [u[el[0]], u[el[1]], u[el[2]]];
            let ae = aux.map_or([0.0; 3], |a| [a[el[0]], a[el[1]], a[el[2]]]);
            let mut local = [[0.0; 3]; 3];
            for (bary, w) in POINTS.iter().zip(WEIGHTS) {
                let uq = bary[0] * ue[0] + bary[1] * ue[1] + bary[2] * ue[2];
                let aq = bary[0] * ae[0] + bary[1] * ae[1] + bary[2] * ae[2];
                let cq = w * c(uq, aq);
                for a in 0..3 {
                    for b in 0..3 {
                        local[a][b] += cq * bary[a] * bary[b];
                    }
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    vals[data.slots[a][b]] += data.area * local[a][b];
                }
            }
        }
        self.pattern.with_values(vals, true)
    }

    /// `[[a11, a12], [a21, a22]]` factorized with the cached symbolic analysis of
    /// the P1 block pattern. All blocks must be assembled on the P1 pattern.
    pub fn factorize_block(
        &self,
        a11: &SparseOperator,
        a12: &SparseOperator,
        a21: &SparseOperator,
        a22: &SparseOperator,
    ) -> Result<DirectSolver> {
        let block = SparseOperator::block2x2(a11, a12, a21, a22)?;
        DirectSolver::factorize_with(&self.block_symbolic, &block)
    }

    /// `sqrt(r^T (M + K)^{-1} r)`: norm of a residual in the dual of H1.
    pub fn h1_dual_norm(&self, r: &[f64]) -> Result<f64> {
        let z = self.h1_solver.solve(r)?;
        Ok(dot(r, &z).max(0.0).sqrt())
    }

    /// Dual norm of a residual pair, combined in quadrature.
    pub fn h1_dual_norm_pair(&self, r_u: &[f64], r_mu: &[f64]) -> Result<f64> {
        let a = self.h1_dual_norm(r_u)?;
        let b = self.h1_dual_norm(r_mu)?;
        Ok(a.hypot(b))
    }

    /// Solves `K w = g - c M 1`, `1^T M w = 0`; returns `(w, c)`. `c` is the
    /// multiplier that absorbs any incompatible (nonzero-mean) part of `g`.
    pub(crate) fn neumann_solve(&self, g: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_len(self.n(), g.len())?;
        let area: f64 = self.mass_ones.iter().sum();
        let c = g.iter().sum::<f64>() / area;
        let mut rhs: Vec<f64> = g
            .iter()
            .zip(&self.mass_ones)
            .map(|(gi, mi)| gi - c * mi)
            .collect();
        rhs[0] = 0.0;
        let mut w = self.neumann_solver.solve(&rhs)?;
        let shift = dot(&self.mass_ones, &w) / area;
        for wi in &mut w {
            *wi -= shift;
        }
        Ok((w, c))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
