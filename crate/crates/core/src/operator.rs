//! Assembly of `P = Δᵏ + Σ_l (lower-order terms)` on clamped fields, and its
//! spectral diagnostics.
//!
//! The quadratic form is
//! `I(w) = ∫(Δ^{k/2}w)² + Σ_{l<k} ∫ a_l (Δ^{l/2}w)²`, with each `Δ^{i/2}`
//! evaluated by [`crate::discretization`] rows composed with the clamped
//! ghost extension. Unknowns are the free nodes only: the boundary node(s)
//! carry zero and the ghosts are eliminated.

use serde::Serialize;

use crate::discretization::{dof_bounds, DiscreteField, Extension, Geometry, OrderOperator};
use crate::error::{Error, Result};
use crate::linalg::{dense_solve, dot, gram_from_rows, norm, BandMatrix};
use crate::profile::Profile;
use crate::sobolev::SobolevParams;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub params: SobolevParams,
    /// `a_0, …, a_{k−1}`.
    pub lower_order: Vec<Profile>,
    pub weight_f: Profile,
}

impl OperatorSpec {
    /// Pure polyharmonic operator with `f ≡ 1`.
    pub fn pure(params: SobolevParams) -> Self {
        Self {
            params,
            lower_order: vec![Profile::zero(); params.k() as usize],
            weight_f: Profile::constant(1.0),
        }
    }

    pub fn without_lower_order(&self) -> Self {
        Self {
            params: self.params,
            lower_order: vec![Profile::zero(); self.params.k() as usize],
            weight_f: self.weight_f.clone(),
        }
    }

    fn validate(&self, g: &Geometry) -> Result<()> {
        let k = self.params.k() as usize;
        if self.lower_order.len() != k {
            return Err(Error::InvalidSpec(format!(
                "expected {k} lower-order coefficients, got {}",
                self.lower_order.len()
            )));
        }
        if self.params.n() != g.dimension() {
            return Err(Error::InvalidSpec(format!(
                "operator dimension {} differs from geometry dimension {}",
                self.params.n(),
                g.dimension()
            )));
        }
        for p in &self.lower_order {
            p.validate()?;
        }
        self.weight_f.validate()?;
        let f: Vec<f64> = g.nodes().iter().map(|&x| self.weight_f.eval(x)).collect();
        if let Some((i, v)) = f.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::InvalidSpec(format!(
                "weight f must be > 0, got {v} at node {i}"
            )));
        }
        let fmax = f.iter().cloned().fold(f64::MIN, f64::max);
        let (lo, hi) = dof_bounds(g);
        let interior_max = (lo..=hi).any(|i| f[i as usize] >= fmax * (1.0 - 1e-14));
        if !interior_max {
            return Err(Error::InvalidSpec(
                "weight f must attain its maximum at an interior node".into(),
            ));
        }
        if k + 1 > g.node_count() / 4 {
            return Err(Error::InvalidSpec(format!(
                "order {k} too high for {} nodes",
                g.node_count()
            )));
        }
        Ok(())
    }
}

/// Values and normal derivatives `φ₁, …, φ_k` on each boundary component.
/// The slab lists `x = 0` first; normals point out of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    components: Vec<Vec<f64>>,
}

impl BoundaryData {
    pub fn new(components: Vec<Vec<f64>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParams("boundary data has no components".into()));
        }
        let k = components[0].len();
        if k == 0 || components.iter().any(|c| c.len() != k) {
            return Err(Error::InvalidParams(
                "every boundary component needs the same number (k) of scalars".into(),
            ));
        }
        if components.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("boundary data must be finite".into()));
        }
        Ok(Self { components })
    }

    pub fn zeros(components: usize, k: usize) -> Self {
        Self {
            components: vec![vec![0.0; k]; components],
        }
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().flatten().all(|v| *v == 0.0)
    }

    pub fn add(&self, other: &BoundaryData) -> Result<BoundaryData> {
        if self.components.len() != other.components.len()
            || self.components[0].len() != other.components[0].len()
        {
            return Err(Error::InvalidParams("boundary data shapes differ".into()));
        }
        BoundaryData::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub lambda: f64,
    pub coercive: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    pub psi1: DiscreteField,
    /// Normwise backward error `‖Kψ − λMψ‖ / ((‖K‖ + |λ|‖M‖)‖ψ‖)` of the
    /// weak form; `‖Kψ‖` itself loses digits to cancellation at high order.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct AssembledOperator {
    spec: OperatorSpec,
    geometry: Geometry,
    dof_lo: usize,
    ndof: usize,
    orders: Vec<OrderOperator>,
    pure: BandMatrix,
    lower: BandMatrix,
    form: BandMatrix,
    gram: BandMatrix,
    mass: Vec<f64>,
    f: Vec<f64>,
}

/// Coefficient multiplying `(Δ^{i/2}w)²` in the form.
fn coefficient(spec: &OperatorSpec, i: usize) -> Option<&Profile> {
    spec.lower_order.get(i)
}

pub fn assemble(spec: &OperatorSpec, g: &Geometry) -> Result<AssembledOperator> {
    spec.validate(g)?;
    let k = spec.params.k() as usize;
    let (lo, hi) = dof_bounds(g);
    let ndof = (hi - lo + 1) as usize;
    let ext = Extension::clamped(g, k)?;
    let orders: Vec<OrderOperator> = (0..=k).map(|i| ext.order_operator(g, i)).collect();
    let pure = gram_from_rows(&orders[k].rows, &orders[k].weights, ndof);
    let mut lower = BandMatrix::zeros(ndof, 0);
    let mut gram = pure.clone();
    for (i, op) in orders.iter().enumerate().take(k) {
        gram = gram.plus_scaled(&gram_from_rows(&op.rows, &op.weights, ndof), 1.0);
        let a = coefficient(spec, i).expect("validated arity");
        if !a.is_zero() {
            let w: Vec<f64> = op
                .weights
                .iter()
                .zip(&op.points)
                .map(|(w, &x)| w * a.eval(x))
                .collect();
            lower = lower.plus_scaled(&gram_from_rows(&op.rows, &w, ndof), 1.0);
        }
    }
    let form = pure.plus_scaled(&lower, 1.0);
    let mass = g.control_volumes();
    let f = g.nodes().iter().map(|&x| spec.weight_f.eval(x)).collect();
    Ok(AssembledOperator {
        spec: spec.clone(),
        geometry: g.clone(),
        dof_lo: lo as usize,
        ndof,
        orders,
        pure,
        lower,
        form,
        gram,
        mass,
        f,
    })
}

impl AssembledOperator {
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn params(&self) -> SobolevParams {
        self.spec.params
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dof_count(&self) -> usize {
        self.ndof
    }

    /// Matrix of `I` on the free nodes.
    pub fn form_matrix(&self) -> &BandMatrix {
        &self.form
    }

    pub fn pure_matrix(&self) -> &BandMatrix {
        &self.pure
    }

    pub fn lower_matrix(&self) -> &BandMatrix {
        &self.lower
    }

    /// Gram matrix of `Σ_{i≤k} ‖Δ^{i/2}w‖²` on clamped fields.
    pub fn gram_matrix(&self) -> &BandMatrix {
        &self.gram
    }

    /// Control-volume weights at every node (the L² pairing).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Weight `f` at every node.
    pub fn f_values(&self) -> &[f64] {
        &self.f
    }

    pub fn f_max(&self) -> f64 {
        self.f.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Free-node values of a field.
    pub fn restrict(&self, u: &DiscreteField) -> Result<Vec<f64>> {
        self.geometry.check(u)?;
        Ok(u.values()[self.dof_lo..self.dof_lo + self.ndof].to_vec())
    }

    pub(crate) fn restrict_slice(&self, v: &[f64]) -> Vec<f64> {
        v[self.dof_lo..self.dof_lo + self.ndof].to_vec()
    }

    /// Field with the given free-node values and zero on the boundary.
    pub fn prolong(&self, dofs: &[f64]) -> DiscreteField {
        assert_eq!(dofs.len(), self.ndof);
        let mut v = vec![0.0; self.geometry.node_count()];
        v[self.dof_lo..self.dof_lo + self.ndof].copy_from_slice(dofs);
        DiscreteField::from_raw(v, self.geometry.id())
    }

    /// `∫ u v` with the control-volume pairing.
    pub fn l2_inner(&self, u: &DiscreteField, v: &DiscreteField) -> Result<f64> {
        self.geometry.check(u)?;
        self.geometry.check(v)?;
        Ok(self
            .mass
            .iter()
            .zip(u.values().iter().zip(v.values()))
            .map(|(m, (a, b))| m * a * b)
            .sum())
    }

    /// `Σ_{i≤k} ‖Δ^{i/2}w‖²` for a clamped field, through the same ghost
    /// closure as the form.
    pub fn clamped_hk_norm(&self, w: &DiscreteField) -> Result<f64> {
        Ok(self.gram.quadratic(&self.restrict(w)?))
    }

    /// `I(w)` summed point by point over the quadrature of each term.
    pub fn form_by_quadrature(&self, w: &DiscreteField) -> Result<f64> {
        Ok(self.energy_dofs(&self.restrict(w)?))
    }

    /// `I` of free-node values as a sum of squares; avoids the cancellation
    /// of `xᵀAx` when the entries of `A` scale like `h^{−2k}`.
    pub(crate) fn energy_dofs(&self, x: &[f64]) -> f64 {
        let k = self.spec.params.k() as usize;
        let mut total = self.orders[k].bilinear(x, x, |_| 1.0);
        for (i, op) in self.orders.iter().enumerate().take(k) {
            let a = coefficient(&self.spec, i).expect("validated arity");
            if !a.is_zero() {
                total += op.bilinear(x, x, |p| a.eval(p));
            }
        }
        total
    }

    /// Lower-order part `Σ_{l<k} ∫ a_l (Δ^{l/2}w)²` alone.
    pub fn lower_order_part(&self, w: &DiscreteField) -> Result<f64> {
        Ok(self.lower.quadratic(&self.restrict(w)?))
    }

    /// `Δᵏ w` at the free nodes (zero on the boundary nodes), built from the
    /// clamped ghost closure.
    pub fn polyharmonic_strong(&self, w: &DiscreteField) -> Result<DiscreteField> {
        let x = self.restrict(w)?;
        let k = self.spec.params.k() as usize;
        let g = &self.geometry;
        let ext = Extension::clamped(g, k)?;
        let layer = ext.laplacian_power(g, k);
        let mut v = vec![0.0; g.node_count()];
        for j in 0..self.ndof {
            let node = (self.dof_lo + j) as isize;
            v[node as usize] = layer.row(node).iter().map(|&(c, a)| a * x[c]).sum();
        }
        Ok(DiscreteField::from_raw(v, g.id()))
    }
}

/// `I(w)`; equal to `xᵀ A x` on the free-node values `x`, summed over the
/// quadrature points instead.
pub fn quadratic_form(op: &AssembledOperator, w: &DiscreteField) -> Result<f64> {
    Ok(op.energy_dofs(&op.restrict(w)?))
}

/// Lowest eigenpair of `A x = λ B x` with `B` positive definite, by
/// shift-and-invert iteration. The residual is the normwise backward error. `shift` must lie below the spectrum; a
/// Cholesky success certifies every later shift.
fn lowest_eigenpair(
    a: &BandMatrix,
    b: &BandMatrix,
    shift: f64,
    rq_tol: f64,
    res_tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, f64, usize)> {
    let n = a.dim();
    let mut sigma = shift;
    let mut chol = a
        .plus_scaled(b, -sigma)
        .cholesky()
        .map_err(|e| Error::EigenSolverFailure(format!("initial shift {sigma}: {e}")))?;
    let a_norm = a.inf_norm();
    let b_norm = b.inf_norm();
    let mut x = vec![1.0; n];
    let bx = b.matvec(&x);
    let s = dot(&x, &bx).sqrt();
    x.iter_mut().for_each(|v| *v /= s);
    let mut theta = a.quadratic(&x);
    let mut refined = 0;
    for it in 1..=max_iter {
        let bx = b.matvec(&x);
        let mut y = chol.solve(&bx);
        let yby = dot(&y, &b.matvec(&y));
        let s = yby.sqrt();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::EigenSolverFailure("iterate collapsed".into()));
        }
        // Rayleigh quotient of y without forming yᵀAy: (A − σB)y = Bx
        let next = sigma + dot(&y, &bx) / yby;
        y.iter_mut().for_each(|v| *v /= s);
        let ay = a.matvec(&y);
        let by = b.matvec(&y);
        let res: Vec<f64> = ay.iter().zip(&by).map(|(p, q)| p - next * q).collect();
        let scale = (a_norm + next.abs() * b_norm) * norm(&y);
        let residual = if scale == 0.0 { 0.0 } else { norm(&res) / scale };
        let change = (next - theta).abs();
        x = y;
        theta = next;
        if change <= rq_tol * theta.abs().max(f64::MIN_POSITIVE) && residual <= res_tol {
            return Ok((theta, x, residual, it));
        }
        // move the shift closer once the estimate settles
        if refined < 3 && change <= 1e-4 * (theta - sigma).abs() {
            let gap = theta - sigma;
            for frac in [1e-3, 1e-2, 1e-1] {
                let cand = theta - frac * gap;
                if let Ok(c) = a.plus_scaled(b, -cand).cholesky() {
                    sigma = cand;
                    chol = c;
                    break;
                }
            }
            refined += 1;
        }
    }
    Err(Error::EigenSolverFailure(format!(
        "no convergence in {max_iter} iterations (estimate {theta:.12e})"
    )))
}

fn diagonal(values: &[f64]) -> BandMatrix {
    let mut m = BandMatrix::zeros(values.len(), 0);
    for (i, v) in values.iter().enumerate() {
        m.add(i, i, *v);
    }
    m
}

/// Smallest generalized eigenvalue `Λ` of the form against the clamped
/// `H²_k` Gram matrix.
pub fn coercivity_check(op: &AssembledOperator) -> Result<CoercivityReport> {
    let c = op
        .orders
        .iter()
        .enumerate()
        .take(op.spec.params.k() as usize)
        .map(|(i, o)| {
            let a = coefficient(&op.spec, i).expect("validated arity");
            o.points.iter().map(|&p| -a.eval(p)).fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max);
    let (lambda, _, _, iterations) =
        lowest_eigenpair(&op.form, &op.gram, -c - 1.0, 1e-13, 1e-7, 20000)?;
    Ok(CoercivityReport {
        lambda,
        coercive: lambda > 0.0,
        iterations,
    })
}

/// `(2/(n−2k)) P(1)`. Powers of `Δ` annihilate constants, leaving `a₀`.
pub fn q_curvature(op: &AssembledOperator) -> DiscreteField {
    let p = op.spec.params;
    let scale = 2.0 / (p.n() as f64 - 2.0 * p.k() as f64);
    let a0 = &op.spec.lower_order[0];
    DiscreteField::from_fn(&op.geometry, |x| scale * a0.eval(x))
}

/// Lowest clamped eigenpair of `Δᵏ` (the leading part of `op`).
pub fn first_eigenpair(op_pure: &AssembledOperator) -> Result<EigenPair> {
    if op_pure.spec.lower_order.iter().any(|a| !a.is_zero()) {
        log::debug!("first_eigenpair ignores the lower-order terms");
    }
    let m = op_pure.restrict_slice(&op_pure.mass);
    let (lambda1, x, residual, iterations) =
        lowest_eigenpair(&op_pure.pure, &diagonal(&m), 0.0, 1e-12, 1e-10, 20000)?;
    let nrm: f64 = m.iter().zip(&x).map(|(w, v)| w * v * v).sum::<f64>().sqrt();
    let sign = if m.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let x: Vec<f64> = x.iter().map(|v| sign * v / nrm).collect();
    if !(lambda1 > 0.0) {
        return Err(Error::EigenSolverFailure(format!(
            "nonpositive first eigenvalue {lambda1}"
        )));
    }
    Ok(EigenPair {
        lambda1,
        psi1: op_pure.prolong(&x),
        residual,
        iterations,
    })
}

/// First eigenvalue on three nested grids (`N`, `2N−1`, `4N−3`) and the
/// twice Richardson-extrapolated value, assuming an even-power error series.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementStudy {
    pub node_counts: Vec<usize>,
    pub raw: Vec<f64>,
    pub extrapolated: f64,
}

pub fn refined_first_eigenvalue(
    spec: &OperatorSpec,
    base: &Geometry,
) -> Result<RefinementStudy> {
    let n0 = base.node_count();
    let node_counts = vec![n0, 2 * n0 - 1, 4 * n0 - 3];
    let mut raw = Vec::new();
    for &nc in &node_counts {
        let g = crate::discretization::build_geometry(
            base.kind(),
            base.dimension(),
            base.radius(),
            nc,
        )?;
        let op = assemble(&spec.without_lower_order(), &g)?;
        raw.push(first_eigenpair(&op)?.lambda1);
    }
    let r1: Vec<f64> = raw.windows(2).map(|w| (4.0 * w[1] - w[0]) / 3.0).collect();
    let extrapolated = (16.0 * r1[1] - r1[0]) / 15.0;
    Ok(RefinementStudy {
        node_counts,
        raw,
        extrapolated,
    })
}

/// Polynomial with the prescribed boundary values and normal derivatives:
/// Hermite of degree `2k−1` on the slab, `p(r²)` of degree `k−1` on the ball.
fn lifting(op: &AssembledOperator, bd: &BoundaryData) -> Result<Vec<f64>> {
    let k = op.spec.params.k() as usize;
    let g = &op.geometry;
    let comps = bd.components();
    if comps.len() != g.boundary_components() || comps[0].len() != k {
        return Err(Error::InvalidParams(format!(
            "boundary data must have {} component(s) of {k} scalars",
            g.boundary_components()
        )));
    }
    // m-th derivative of x^j at x
    let dmono = |j: usize, m: usize, x: f64| -> f64 {
        if m > j {
            return 0.0;
        }
        let ff: f64 = ((j - m + 1)..=j).map(|v| v as f64).product();
        ff * x.powi((j - m) as i32)
    };
    if g.is_ball() {
        let r = g.radius();
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|m| (0..k).map(|j| dmono(2 * j, m, r)).collect())
            .collect();
        let c = dense_solve(rows, comps[0].clone())?;
        Ok((0..k).map(|j| c[j]).flat_map(|cj| [cj, 0.0]).collect())
    } else {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for m in 0..k {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            rows.push((0..2 * k).map(|j| dmono(j, m, 0.0)).collect());
            rhs.push(sign * comps[0][m]);
            rows.push((0..2 * k).map(|j| dmono(j, m, 1.0)).collect());
            rhs.push(comps[1][m]);
        }
        dense_solve(rows, rhs)
    }
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Solution of `P h = 0` with the given boundary data: exact polynomial
/// lifting plus a clamped correction solved against the form.
pub fn harmonic_extension(op: &AssembledOperator, bd: &BoundaryData) -> Result<DiscreteField> {
    let report = coercivity_check(op)?;
    if !report.coercive {
        return Err(Error::NotCoercive(report));
    }
    Ok(harmonic_extension_with_residual(op, bd)?.0)
}

/// As [`harmonic_extension`] without the coercivity guard, also returning
/// the relative weak residual of `P h = 0`.
pub fn harmonic_extension_with_residual(
    op: &AssembledOperator,
    bd: &BoundaryData,
) -> Result<(DiscreteField, f64)> {
    let g = &op.geometry;
    let k = op.spec.params.k() as usize;
    let coef = lifting(op, bd)?;
    let lift = |x: f64| poly_eval(&coef, x);
    let sampled = Extension::sampled(g, k.saturating_sub(1), lift);
    // b_j = B(L, e_j)
    let mut b = vec![0.0; op.ndof];
    for (i, clamped) in op.orders.iter().enumerate() {
        let a = if i < k {
            match coefficient(&op.spec, i) {
                Some(prof) if !prof.is_zero() => Some(prof),
                _ => continue,
            }
        } else {
            None
        };
        let lv = sampled.order_operator(g, i).rows.apply(&[1.0]);
        for p in 0..clamped.rows.nrows() {
            let c = a.map_or(1.0, |prof| prof.eval(clamped.points[p]));
            let s = clamped.weights[p] * c * lv[p];
            for &(j, v) in clamped.rows.row(p) {
                b[j] += s * v;
            }
        }
    }
    let rhs: Vec<f64> = b.iter().map(|v| -v).collect();
    let z = op.form.cholesky()?.solve(&rhs);
    let az = op.form.matvec(&z);
    let res: Vec<f64> = az.iter().zip(&b).map(|(p, q)| p + q).collect();
    let scale = norm(&b);
    let residual = if scale == 0.0 { 0.0 } else { norm(&res) / scale };
    let dz = op.prolong(&z);
    let values: Vec<f64> = g
        .nodes()
        .iter()
        .zip(dz.values())
        .map(|(&x, v)| lift(x) + v)
        .collect();
    Ok((DiscreteField::from_raw(values, g.id()), residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_geometry, GeometryKind};
    use std::f64::consts::PI;

    fn slab_op(k: u32, a0: f64, nodes: usize) -> AssembledOperator {
        let p = SobolevParams::new(5.max(2 * k + 1), k).unwrap();
        let g = build_geometry(GeometryKind::Slab, p.n(), 1.0, nodes).unwrap();
        let mut spec = OperatorSpec::pure(p);
        spec.lower_order[0] = Profile::constant(a0);
        assemble(&spec, &g).unwrap()
    }

    #[test]
    fn dirichlet_energy_of_sine() {
        let op = slab_op(1, 0.0, 401);
        let w = DiscreteField::from_fn(op.geometry(), |x| (PI * x).sin());
        let i = quadratic_form(&op, &w).unwrap();
        assert!((i - PI * PI / 2.0).abs() < 0.01 * PI * PI / 2.0);
        let op1 = slab_op(1, 1.0, 401);
        let i1 = quadratic_form(&op1, &w).unwrap();
        assert!((i1 - (PI * PI / 2.0 + 0.5)).abs() < 0.01 * (PI * PI / 2.0 + 0.5));
        let l2 = op.l2_inner(&w, &w).unwrap();
        assert!((i1 - i - l2).abs() < 1e-12 * i1, "{i1} {i} {l2}");
        let q = quadratic_form(&op1, &w.scaled(3.0)).unwrap();
        assert!((q - 9.0 * i1).abs() < 1e-12 * q);
    }

    #[test]
    fn beam_energy_of_clamped_quartic() {
        let op = slab_op(2, 0.0, 801);
        let w = DiscreteField::from_fn(op.geometry(), |x| x * x * (1.0 - x) * (1.0 - x));
        let i = quadratic_form(&op, &w).unwrap();
        assert!((i - 0.8).abs() < 1e-3, "{i}");
        let coarse = slab_op(2, 0.0, 101);
        let w = DiscreteField::from_fn(coarse.geometry(), |x| x * x * (1.0 - x) * (1.0 - x));
        let x = coarse.restrict(&w).unwrap();
        let by_matrix = coarse.form_matrix().quadratic(&x);
        let by_quad = quadratic_form(&coarse, &w).unwrap();
        assert!((by_matrix - by_quad).abs() < 1e-10 * by_quad, "{by_matrix} {by_quad}");
    }

    #[test]
    fn spectrum_and_coercivity() {
        let op = slab_op(1, 0.0, 201);
        let e = first_eigenpair(&op).unwrap();
        assert!((e.lambda1 - PI * PI).abs() < 1e-3 * PI * PI);
        assert!(e.residual < 1e-8);
        let c = coercivity_check(&op).unwrap();
        let want = PI * PI / (1.0 + PI * PI);
        assert!(c.coercive && (c.lambda - want).abs() < 0.01 * want, "{c:?}");
        let bad = slab_op(1, -2.0 * PI * PI, 201);
        assert!(!coercivity_check(&bad).unwrap().coercive);
    }

    #[test]
    fn affine_extension() {
        let op = slab_op(1, 0.0, 101);
        let bd = BoundaryData::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        let h = harmonic_extension(&op, &bd).unwrap();
        for (x, v) in op.geometry().nodes().iter().zip(h.values()) {
            assert!((v - (2.0 * x - 1.0)).abs() < 1e-10);
        }
        let zero = harmonic_extension(&op, &BoundaryData::zeros(2, 1)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn q_curvature_examples() {
        let p = SobolevParams::new(6, 1).unwrap();
        let g = build_geometry(GeometryKind::Ball, 6, 1.0, 101).unwrap();
        let mut spec = OperatorSpec::pure(p);
        spec.lower_order[0] = Profile::Polynomial {
            coefficients: vec![0.0, 0.0, 1.0],
        };
        let op = assemble(&spec, &g).unwrap();
        let q = q_curvature(&op);
        for (r, v) in g.nodes().iter().zip(q.values()) {
            assert!((v - r * r / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn spec_validation() {
        let p = SobolevParams::new(5, 2).unwrap();
        let g = build_geometry(GeometryKind::Slab, 5, 1.0, 101).unwrap();
        let mut spec = OperatorSpec::pure(p);
        spec.lower_order.pop();
        assert!(matches!(assemble(&spec, &g), Err(Error::InvalidSpec(_))));
        let mut spec = OperatorSpec::pure(p);
        spec.weight_f = Profile::Polynomial {
            coefficients: vec![0.5, -1.0],
        };
        assert!(matches!(assemble(&spec, &g), Err(Error::InvalidSpec(_))));
        let mut spec = OperatorSpec::pure(p);
        spec.weight_f = Profile::Polynomial {
            coefficients: vec![1.0, 1.0],
        };
        assert!(assemble(&spec, &g).is_err(), "maximum only on the boundary");
    }
}
