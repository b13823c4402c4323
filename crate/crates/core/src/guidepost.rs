//! Substrate fields generated by guideposts (circular spots or strips), the
//! chain rule from field sensitivities to guidepost coordinates, and the
//! repulsion and wall penalties on the coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adjoint::Linearization;
use crate::energy::ModelParams;
use crate::error::{check_len, Error, Result};
use crate::fem::{FemSpace, Mesh, NodalField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidepostShape {
    /// spot centered at `(r1, r2)`
    Circle,
    /// line `x1 = r`, uniform in `x2`
    Strip,
}

impl GuidepostShape {
    /// Coordinates per guidepost.
    pub fn dim(self) -> usize {
        match self {
            GuidepostShape::Circle => 2,
            GuidepostShape::Strip => 1,
        }
    }
}

impl fmt::Display for GuidepostShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidepostShape::Circle => "circle",
            GuidepostShape::Strip => "strip",
        })
    }
}

impl FromStr for GuidepostShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circle" => Ok(GuidepostShape::Circle),
            "strip" => Ok(GuidepostShape::Strip),
            other => Err(Error::invalid(format!("unknown guidepost shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidepostConfig {
    pub shape: GuidepostShape,
    /// `w` in `phi(t) = w exp(-t / 2b^2)`
    pub strength: f64,
    /// `b`
    pub width: f64,
    pub count: usize,
    /// `c_s` of the vertical decay length; only used off the film plane
    pub decay_constant: f64,
}

impl Default for GuidepostConfig {
    fn default() -> Self {
        Self {
            shape: GuidepostShape::Circle,
            strength: 0.5,
            width: 0.2,
            count: 1,
            decay_constant: 0.75,
        }
    }
}

impl GuidepostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::invalid(format!(
                "guidepost strength must be >= 0, got {}",
                self.strength
            )));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::invalid(format!(
                "guidepost width must be > 0, got {}",
                self.width
            )));
        }
        if self.count == 0 {
            return Err(Error::invalid("at least one guidepost is required"));
        }
        if !(self.decay_constant > 0.0) {
            return Err(Error::invalid(format!(
                "decay constant must be > 0, got {}",
                self.decay_constant
            )));
        }
        Ok(())
    }

    /// `(phi, phi', phi'')` at `t`.
    pub fn profile(&self, t: f64) -> (f64, f64, f64) {
        let b2 = self.width * self.width;
        let phi = self.strength * (-t / (2.0 * b2)).exp();
        (phi, -phi / (2.0 * b2), phi / (4.0 * b2 * b2))
    }
}

/// Guidepost coordinates: `(r1, r2)` pairs interleaved for circles, one `r`
/// per strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVariables {
    shape: GuidepostShape,
    z: Vec<f64>,
}

impl DesignVariables {
    pub fn new(shape: GuidepostShape, z: Vec<f64>) -> Result<Self> {
        if z.is_empty() || !z.len().is_multiple_of(shape.dim()) {
            return Err(Error::invalid(format!(
                "{} coordinates do not describe whole {shape} guideposts",
                z.len()
            )));
        }
        if let Some(v) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain(format!(
                "non-finite guidepost coordinate {v}"
            )));
        }
        Ok(Self { shape, z })
    }

    pub fn shape(&self) -> GuidepostShape {
        self.shape
    }

    pub fn count(&self) -> usize {
        self.z.len() / self.shape.dim()
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.z
    }

    /// Coordinates of guidepost `i`.
    pub fn position(&self, i: usize) -> &[f64] {
        let d = self.shape.dim();
        &self.z[d * i..d * (i + 1)]
    }

    /// Same shape, new coordinates.
    pub fn with_values(&self, z: Vec<f64>) -> Result<Self> {
        check_len(self.z.len(), z.len())?;
        Self::new(self.shape, z)
    }

    fn check(&self, cfg: &GuidepostConfig) -> Result<()> {
        if self.shape != cfg.shape {
            return Err(Error::invalid(format!(
                "design holds {} guideposts but the configuration is for {}",
                self.shape, cfg.shape
            )));
        }
        if self.count() != cfg.count {
            return Err(Error::invalid(format!(
                "design holds {} guideposts, configuration expects {}",
                self.count(),
                cfg.count
            )));
        }
        Ok(())
    }
}

/// `r_i - x` restricted to the coordinates the guidepost depends on.
#[inline]
fn offset(shape: GuidepostShape, r: &[f64], x: [f64; 2]) -> [f64; 2] {
    match shape {
        GuidepostShape::Circle => [r[0] - x[0], r[1] - x[1]],
        GuidepostShape::Strip => [r[0] - x[0], 0.0],
    }
}

/// `tau(x3) = exp(-x3^2 / 2 d_s^2)`.
pub fn decay_profile(x3: f64, d_s: f64) -> Result<f64> {
    if !(d_s > 0.0) {
        return Err(Error::invalid(format!(
            "decay length must be positive, got {d_s}"
        )));
    }
    Ok((-x3 * x3 / (2.0 * d_s * d_s)).exp())
}

/// `d_s = 12 sqrt(3) c_s^2 eps / sqrt(sigma (1 - m^2))`.
pub fn decay_length(c_s: f64, p: &ModelParams) -> Result<f64> {
    let denom = p.sigma * (1.0 - p.m * p.m);
    if !(c_s > 0.0) || !(denom > 0.0) {
        return Err(Error::invalid(format!(
            "decay length needs c_s > 0 and sigma (1 - m^2) > 0 (c_s = {c_s}, sigma = {}, m = {})",
            p.sigma, p.m
        )));
    }
    Ok(12.0 * 3f64.sqrt() * c_s * c_s * p.eps / denom.sqrt())
}

/// Substrate field at a point above the film plane: `-tau(x3) sum phi(|x - r_i|^2)`.
/// With `d_s = None` the film is thin and `tau = 1`.
pub fn substrate_at(
    z: &DesignVariables,
    cfg: &GuidepostConfig,
    x: [f64; 3],
    d_s: Option<f64>,
) -> Result<f64> {
    let tau = match d_s {
        Some(d) => decay_profile(x[2], d)?,
        None => 1.0,
    };
    let sum: f64 = (0..z.count())
        .map(|i| {
            let d = offset(z.shape, z.position(i), [x[0], x[1]]);
            cfg.profile(d[0] * d[0] + d[1] * d[1]).0
        })
        .sum();
    Ok(-tau * sum)
}

/// Nodal interpolant of the thin-film substrate field.
pub fn eval_substrate(
    z: &DesignVariables,
    cfg: &GuidepostConfig,
    mesh: &Mesh,
) -> Result<NodalField> {
    Ok(SubstrateMap::new(z, cfg, mesh)?.field)
}

/// Substrate field at a design together with its first derivatives with
/// respect to each coordinate, all as nodal fields.
#[derive(Debug, Clone)]
pub struct SubstrateMap {
    cfg: GuidepostConfig,
    z: DesignVariables,
    nodes: Vec<[f64; 2]>,
    field: NodalField,
    /// `jacobian[k]` is the nodal field `df/dz_k`
    jacobian: Vec<Vec<f64>>,
}

impl SubstrateMap {
    pub fn new(z: &DesignVariables, cfg: &GuidepostConfig, mesh: &Mesh) -> Result<Self> {
        cfg.validate()?;
        z.check(cfg)?;
        let dim = z.shape.dim();
        let n = mesh.n_nodes();
        let mut field = vec![0.0; n];
        let mut jacobian = vec![vec![0.0; n]; z.len()];
        let b2 = cfg.width * cfg.width;
        for (node, x) in mesh.nodes().iter().enumerate() {
            for i in 0..z.count() {
                let d = offset(z.shape, z.position(i), *x);
                let (phi, _, _) = cfg.profile(d[0] * d[0] + d[1] * d[1]);
                field[node] -= phi;
                // df/dr_i = -2 phi'(t) (r_i - x) = phi (r_i - x) / b^2
                for a in 0..dim {
                    jacobian[dim * i + a][node] = phi * d[a] / b2;
                }
            }
        }
        Ok(Self {
            cfg: *cfg,
            z: z.clone(),
            nodes: mesh.nodes().to_vec(),
            field: NodalField::from_vec(field),
            jacobian,
        })
    }

    pub fn design(&self) -> &DesignVariables {
        &self.z
    }

    pub fn field(&self) -> &NodalField {
        &self.field
    }

    pub fn jacobian(&self) -> &[Vec<f64>] {
        &self.jacobian
    }

    /// `sum_k df/dz_k z_hat_k`
    pub fn push_forward(&self, z_hat: &[f64]) -> Result<Vec<f64>> {
        check_len(self.z.len(), z_hat.len())?;
        let mut out = vec![0.0; self.field.len()];
        for (col, &zk) in self.jacobian.iter().zip(z_hat) {
            if zk != 0.0 {
                for (o, c) in out.iter_mut().zip(col) {
                    *o += zk * c;
                }
            }
        }
        Ok(out)
    }

    /// `(df/dz_k, g)_{L2}` for every `k`, with `g` an L2 representative.
    pub fn pull_back(&self, space: &FemSpace, g: &[f64]) -> Result<Vec<f64>> {
        check_len(space.n(), g.len())?;
        let mg = space.mass().mul_vec(g);
        Ok(self
            .jacobian
            .iter()
            .map(|col| crate::fem::dot(col, &mg))
            .collect())
    }

    /// `(sum_l d^2 f / dz_k dz_l z_hat_l, g)_{L2}` for every `k`.
    pub fn curvature_action(&self, space: &FemSpace, z_hat: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.z.len(), z_hat.len())?;
        check_len(space.n(), g.len())?;
        let mg = space.mass().mul_vec(g);
        let dim = self.z.shape.dim();
        let mut out = vec![0.0; self.z.len()];
        for (x, &w) in self.nodes.iter().zip(&mg) {
            if w == 0.0 {
                continue;
            }
            for i in 0..self.z.count() {
                let d = offset(self.z.shape, self.z.position(i), *x);
                let (_, dphi, ddphi) = self.cfg.profile(d[0] * d[0] + d[1] * d[1]);
                let zh = &z_hat[dim * i..dim * (i + 1)];
                // d^2 f / dr_i^2 = -(4 phi'' d d^T + 2 phi' I)
                let dz: f64 = (0..dim).map(|b| d[b] * zh[b]).sum();
                for a in 0..dim {
                    let v = -(4.0 * ddphi * d[a] * dz + 2.0 * dphi * zh[a]);
                    out[dim * i + a] += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// `dQ/dz_k = (D_f Q, df/dz_k)` for an L2 representative `grad_f`.
pub fn grad_design(
    z: &DesignVariables,
    cfg: &GuidepostConfig,
    grad_f: &[f64],
    space: &FemSpace,
) -> Result<Vec<f64>> {
    SubstrateMap::new(z, cfg, space.mesh())?.pull_back(space, grad_f)
}

/// `nabla_z^2 Q z_hat`: one Hessian action in the field direction
/// `sum_j df/dz_j z_hat_j` plus the curvature of the field map against `D_f Q`.
pub fn hessian_action_design(
    map: &SubstrateMap,
    z_hat: &[f64],
    lin: &Linearization<'_>,
    lambda: &[f64],
) -> Result<Vec<f64>> {
    let space = lin.space();
    let f_hat = map.push_forward(z_hat)?;
    let h = lin.hessian_action_f(lambda, &f_hat)?;
    let grad_f = crate::adjoint::gradient_f(lambda);
    let first = map.pull_back(space, &h)?;
    let second = map.curvature_action(space, z_hat, &grad_f)?;
    Ok(first.iter().zip(&second).map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyParams {
    /// repulsion strength
    pub alpha: f64,
    /// wall steepness in `x1` and `x2`
    pub a1: f64,
    pub a2: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self {
            alpha: 1e3,
            a1: 10.0,
            a2: 10.0,
        }
    }
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.a1 > 0.0 && self.a2 > 0.0) {
            return Err(Error::invalid(format!(
                "wall steepness must be positive, got ({}, {})",
                self.a1, self.a2
            )));
        }
        Ok(())
    }
}

/// Value, gradient and dense Hessian of a penalty on the coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// row-major, `len x len`
    pub hessian: Vec<f64>,
}

impl PenaltyEval {
    pub fn zero(len: usize) -> Self {
        Self {
            value: 0.0,
            gradient: vec![0.0; len],
            hessian: vec![0.0; len * len],
        }
    }

    pub fn add(&mut self, other: &PenaltyEval) {
        self.value += other.value;
        for (a, b) in self.gradient.iter_mut().zip(&other.gradient) {
            *a += b;
        }
        for (a, b) in self.hessian.iter_mut().zip(&other.hessian) {
            *a += b;
        }
    }

    pub fn hessian_action(&self, v: &[f64]) -> Vec<f64> {
        let n = self.gradient.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.hessian[i * n + j] * v[j]).sum())
            .collect()
    }
}

/// `alpha sum_{i<j} psi(|r_i - r_j|^2)` with `psi(t) = 1/t`, summed over
/// unordered pairs.
pub fn penalty_repel(z: &DesignVariables, alpha: f64) -> Result<PenaltyEval> {
    let dim = z.shape.dim();
    let len = z.len();
    let mut out = PenaltyEval::zero(len);
    for i in 0..z.count() {
        for j in (i + 1)..z.count() {
            let (ri, rj) = (z.position(i), z.position(j));
            let d: Vec<f64> = ri.iter().zip(rj).map(|(a, b)| a - b).collect();
            let t: f64 = d.iter().map(|v| v * v).sum();
            if !(t > 0.0) {
                return Err(Error::NumericalDomain(format!(
                    "guideposts {i} and {j} coincide"
                )));
            }
            let (psi, dpsi, ddpsi) = (1.0 / t, -1.0 / (t * t), 2.0 / (t * t * t));
            out.value += alpha * psi;
            for a in 0..dim {
                let g = alpha * 2.0 * dpsi * d[a];
                out.gradient[dim * i + a] += g;
                out.gradient[dim * j + a] -= g;
                for b in 0..dim {
                    let block =
                        alpha * (4.0 * ddpsi * d[a] * d[b] + if a == b { 2.0 * dpsi } else { 0.0 });
                    out.hessian[(dim * i + a) * len + dim * i + b] += block;
                    out.hessian[(dim * j + a) * len + dim * j + b] += block;
                    out.hessian[(dim * i + a) * len + dim * j + b] -= block;
                    out.hessian[(dim * j + a) * len + dim * i + b] -= block;
                }
            }
        }
    }
    Ok(out)
}

/// Exponential walls keeping guideposts inside `(0, l1) x (0, l2)`; strips
/// only feel the walls in `x1`.
pub fn penalty_wall(z: &DesignVariables, a1: f64, a2: f64, l1: f64, l2: f64) -> PenaltyEval {
    let dim = z.shape.dim();
    let len = z.len();
    let mut out = PenaltyEval::zero(len);
    for i in 0..z.count() {
        for (a, (&r, (steep, l))) in z.position(i).iter().zip([(a1, l1), (a2, l2)]).enumerate() {
            let lo = (-steep * r).exp();
            let hi = (-steep * (l - r)).exp();
            let k = dim * i + a;
            out.value += lo + hi;
            out.gradient[k] += -steep * (lo - hi);
            out.hessian[k * len + k] += steep * steep * (lo + hi);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strip_cfg(count: usize) -> GuidepostConfig {
        GuidepostConfig {
            shape: GuidepostShape::Strip,
            count,
            ..GuidepostConfig::default()
        }
    }

    #[test]
    fn substrate_examples() {
        let mesh = Mesh::rectangle(1.0, 1.0, 4, 4).unwrap();
        let cfg = GuidepostConfig::default();
        let z = DesignVariables::new(GuidepostShape::Circle, vec![0.5, 0.5]).unwrap();
        let f = eval_substrate(&z, &cfg, &mesh).unwrap();
        let center = mesh.nodes().iter().position(|x| x == &[0.5, 0.5]).unwrap();
        assert!((f[center] + 0.5).abs() < 1e-15);
        assert!(f.iter().all(|v| *v <= 0.0));

        let zs = DesignVariables::new(GuidepostShape::Strip, vec![0.3]).unwrap();
        let v = substrate_at(&zs, &strip_cfg(1), [0.5, 0.9, 0.0], None).unwrap();
        assert!((v + 0.5 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((v + 0.3033).abs() < 1e-4);

        let cfg0 = GuidepostConfig {
            strength: 0.0,
            ..cfg
        };
        assert!(eval_substrate(&z, &cfg0, &mesh)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));

        // off-plane attenuation
        let v3 = substrate_at(&z, &cfg, [0.5, 0.5, 0.2], Some(0.2)).unwrap();
        assert!((v3 + 0.5 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn design_shape_mismatch_rejected() {
        let mesh = Mesh::rectangle(1.0, 1.0, 2, 2).unwrap();
        assert!(DesignVariables::new(GuidepostShape::Circle, vec![0.5]).is_err());
        assert!(DesignVariables::new(GuidepostShape::Strip, vec![]).is_err());
        let z = DesignVariables::new(GuidepostShape::Strip, vec![0.5]).unwrap();
        assert!(eval_substrate(&z, &GuidepostConfig::default(), &mesh).is_err());
        assert!(eval_substrate(&z, &strip_cfg(2), &mesh).is_err());
    }

    #[test]
    fn decay_formulas() {
        assert_eq!(decay_profile(0.0, 0.3).unwrap(), 1.0);
        assert!((decay_profile(0.3, 0.3).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!(decay_profile(0.4, 0.3).unwrap() < decay_profile(0.2, 0.3).unwrap());
        assert!(decay_profile(0.1, 0.0).is_err());
        let d = decay_length(0.75, &ModelParams::new(0.08, 12.8, 0.0).unwrap()).unwrap();
        assert!((d - 0.2614).abs() < 1e-4, "{d}");
    }

    #[test]
    fn repel_two_circles() {
        let z = DesignVariables::new(GuidepostShape::Circle, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let p = penalty_repel(&z, 1.0).unwrap();
        assert_eq!(p.value, 1.0);
        assert_eq!(&p.gradient[..2], &[2.0, 0.0]);
        let p2 = penalty_repel(&z, 2.0).unwrap();
        assert_eq!(p2.value, 2.0 * p.value);
        let same = DesignVariables::new(GuidepostShape::Circle, vec![0.3, 0.3, 0.3, 0.3]).unwrap();
        assert!(matches!(
            penalty_repel(&same, 1.0),
            Err(Error::NumericalDomain(_))
        ));
    }

    #[test]
    fn wall_examples() {
        let z = DesignVariables::new(GuidepostShape::Circle, vec![1.5, 1.0]).unwrap();
        let w = penalty_wall(&z, 10.0, 10.0, 3.0, 2.0);
        assert!(w.gradient.iter().all(|g| g.abs() < 1e-15));
        assert!(w.value > 0.0);
        assert!(w.hessian[0] > 0.0 && w.hessian[3] > 0.0);
        assert_eq!(w.hessian[1], 0.0);
        let s = DesignVariables::new(GuidepostShape::Strip, vec![0.1, 9.0]).unwrap();
        let w = penalty_wall(&s, 10.0, 10.0, 10.0, 5.0);
        assert!(w.gradient[0] < 0.0 && w.gradient[1] > 0.0);
    }

    /// Central differences of `value` and `gradient` against the analytic
    /// gradient and Hessian; errors must shrink like `h^2`.
    fn check_derivatives(eval: impl Fn(&[f64]) -> PenaltyEval, z: &[f64]) {
        let base = eval(z);
        let n = z.len();
        let mut errs = Vec::new();
        let hs = [1e-2, 1e-3];
        for &h in &hs {
            let mut worst: f64 = 0.0;
            for k in 0..n {
                let mut zp = z.to_vec();
                let mut zm = z.to_vec();
                zp[k] += h;
                zm[k] -= h;
                let (ep, em) = (eval(&zp), eval(&zm));
                let fd = (ep.value - em.value) / (2.0 * h);
                let scale = 1.0 + base.gradient[k].abs();
                worst = worst.max((fd - base.gradient[k]).abs() / scale);
                for j in 0..n {
                    let fd = (ep.gradient[j] - em.gradient[j]) / (2.0 * h);
                    let an = base.hessian[j * n + k];
                    worst = worst.max((fd - an).abs() / (1.0 + an.abs()));
                }
            }
            errs.push(worst);
        }
        assert!(errs[1] < 1e-6 || errs[1] < errs[0] / 50.0, "{errs:?}");
        for i in 0..n {
            for j in 0..n {
                assert_eq!(base.hessian[i * n + j], base.hessian[j * n + i]);
            }
        }
    }

    #[test]
    fn penalty_derivatives_match_differences() {
        let circ = vec![0.3, 0.7, 1.1, 0.4, 0.8, 1.6];
        check_derivatives(
            |z| {
                penalty_repel(
                    &DesignVariables::new(GuidepostShape::Circle, z.to_vec()).unwrap(),
                    3.0,
                )
                .unwrap()
            },
            &circ,
        );
        check_derivatives(
            |z| {
                penalty_wall(
                    &DesignVariables::new(GuidepostShape::Circle, z.to_vec()).unwrap(),
                    4.0,
                    6.0,
                    2.0,
                    2.0,
                )
            },
            &circ,
        );
        let strips = vec![0.5, 2.1, 2.9, 4.2];
        check_derivatives(
            |z| {
                penalty_repel(
                    &DesignVariables::new(GuidepostShape::Strip, z.to_vec()).unwrap(),
                    1e3,
                )
                .unwrap()
            },
            &strips,
        );
        check_derivatives(
            |z| {
                penalty_wall(
                    &DesignVariables::new(GuidepostShape::Strip, z.to_vec()).unwrap(),
                    10.0,
                    10.0,
                    5.0,
                    5.0,
                )
            },
            &strips,
        );
    }

    /// Field-map derivatives against differences of the field itself.
    #[test]
    fn substrate_jacobian_and_curvature() {
        let mesh = Mesh::rectangle(2.0, 1.5, 10, 8).unwrap();
        let space = FemSpace::new(mesh.clone()).unwrap();
        let cfg = GuidepostConfig {
            count: 2,
            ..GuidepostConfig::default()
        };
        let z = DesignVariables::new(GuidepostShape::Circle, vec![0.7, 0.6, 1.3, 0.9]).unwrap();
        let map = SubstrateMap::new(&z, &cfg, &mesh).unwrap();
        let g = mesh.interpolate(|x, y| (2.0 * x).sin() + y * y);
        let z_hat = [0.3, -0.2, 0.5, 0.1];
        let h = 1e-5;
        let shifted = |s: f64| {
            let zz: Vec<f64> = z
                .as_slice()
                .iter()
                .zip(&z_hat)
                .map(|(a, b)| a + s * b)
                .collect();
            SubstrateMap::new(&z.with_values(zz).unwrap(), &cfg, &mesh).unwrap()
        };
        let (mp, mm) = (shifted(h), shifted(-h));
        let fd: Vec<f64> = mp
            .field()
            .iter()
            .zip(mm.field().iter())
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let an = map.push_forward(&z_hat).unwrap();
        for (a, b) in fd.iter().zip(&an) {
            assert!((a - b).abs() < 1e-8);
        }
        let gp = mp.pull_back(&space, &g).unwrap();
        let gm = mm.pull_back(&space, &g).unwrap();
        let curv = map.curvature_action(&space, &z_hat, &g).unwrap();
        for k in 0..z.len() {
            assert!(((gp[k] - gm[k]) / (2.0 * h) - curv[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn strip_gradient_vanishes_for_symmetric_placement() {
        let mesh = Mesh::rectangle(2.0, 1.0, 20, 4).unwrap();
        let space = FemSpace::new(mesh).unwrap();
        let z = DesignVariables::new(GuidepostShape::Strip, vec![1.0]).unwrap();
        let g = grad_design(&z, &strip_cfg(1), &vec![1.0; space.n()], &space).unwrap();
        assert!(g[0].abs() < 1e-12);
        let g0 = grad_design(&z, &strip_cfg(1), &vec![0.0; space.n()], &space).unwrap();
        assert_eq!(g0, vec![0.0]);
    }

    #[test]
    fn translated_guideposts_translate_the_field() {
        let mesh = Mesh::rectangle(2.0, 2.0, 20, 20).unwrap();
        let cfg = GuidepostConfig::default();
        let z = DesignVariables::new(GuidepostShape::Circle, vec![0.8, 1.0]).unwrap();
        let zs = DesignVariables::new(GuidepostShape::Circle, vec![1.0, 1.1]).unwrap();
        let f = eval_substrate(&z, &cfg, &mesh).unwrap();
        let fs = eval_substrate(&zs, &cfg, &mesh).unwrap();
        // node (x, y) of the shifted field equals node (x - 0.2, y - 0.1) of the original
        for (k, x) in mesh.nodes().iter().enumerate() {
            if x[0] < 0.2 || x[1] < 0.1 {
                continue;
            }
            let src = mesh.nodes().iter().position(|y| {
                (y[0] - (x[0] - 0.2)).abs() < 1e-9 && (y[1] - (x[1] - 0.1)).abs() < 1e-9
            });
            if let Some(j) = src {
                assert!((fs[k] - f[j]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn repel_invariances(
            pts in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0), 2..5),
            shift in (-2.0f64..2.0, -2.0f64..2.0),
        ) {
            let flat: Vec<f64> = pts.iter().flat_map(|p| [p.0, p.1]).collect();
            let z = DesignVariables::new(GuidepostShape::Circle, flat).unwrap();
            let close = (0..z.count()).any(|i| (0..i).any(|j| {
                let (a, b) = (z.position(i), z.position(j));
                (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-2
            }));
            prop_assume!(!close);
            let base = penalty_repel(&z, 2.0).unwrap();

            let moved: Vec<f64> = pts.iter().flat_map(|p| [p.0 + shift.0, p.1 + shift.1]).collect();
            let moved = penalty_repel(&z.with_values(moved).unwrap(), 2.0).unwrap();
            prop_assert!((moved.value - base.value).abs() <= 1e-9 * base.value);

            let reversed: Vec<f64> = pts.iter().rev().flat_map(|p| [p.0, p.1]).collect();
            let reversed = penalty_repel(&z.with_values(reversed).unwrap(), 2.0).unwrap();
            prop_assert!((reversed.value - base.value).abs() <= 1e-12 * base.value);

            let scale = base.gradient.iter().map(|g| g.abs()).fold(1.0, f64::max);
            let sx: f64 = base.gradient.iter().step_by(2).sum();
            let sy: f64 = base.gradient.iter().skip(1).step_by(2).sum();
            prop_assert!(sx.abs() <= 1e-9 * scale && sy.abs() <= 1e-9 * scale);
        }

        #[test]
        fn wall_is_positive_with_positive_diagonal(r in proptest::collection::vec(-1.0f64..6.0, 1..6)) {
            let z = DesignVariables::new(GuidepostShape::Strip, r).unwrap();
            let w = penalty_wall(&z, 10.0, 10.0, 5.0, 5.0);
            let n = z.len();
            prop_assert!(w.value > 0.0);
            for i in 0..n {
                prop_assert!(w.hessian[i * n + i] > 0.0);
            }
        }
    }
}
