//! One-dimensional model geometries and their difference operators.
//!
//! A ball geometry carries radial fields on `[0, R]` with the measure
//! `|S^{n−1}| r^{n−1} dr`; a slab is `[0,1] × T^{n−1}` with a unit-volume
//! torus and transverse-invariant fields, so only `dx` survives.
//!
//! Two quadratures live on every geometry:
//! * `weights`: composite Simpson times the measure, used by [`integrate`];
//! * control volumes (cells `[r_i − h/2, r_i + h/2]` clipped to the domain),
//!   which pair with the conservative Laplacian
//!   `Δu_i = −(A_{i+½}(u_{i+1}−u_i) − A_{i−½}(u_i−u_{i−1})) / (V_i h)`.
//!   The Laplacian is exact on `r²` including at the origin, where
//!   `A_{−½} = 0` replaces the even reflection.
//!
//! `Δ` is the positive Laplacian, `Δu = −u'' − (n−1)u'/r`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt17;
use crate::linalg::{dense_solve, SparseRows};
use crate::quadrature::simpson_weights;
use crate::sobolev::sphere_area;

pub const MIN_NODES: usize = 50;
/// Largest `i` accepted by [`half_laplacian_power`].
pub const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Ball,
    Slab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeometryId(u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    kind: GeometryKind,
    n: u32,
    radius: f64,
    spacing: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    omega: f64,
    id: GeometryId,
}

pub fn build_geometry(
    kind: GeometryKind,
    n: u32,
    radius: f64,
    node_count: usize,
) -> Result<Geometry> {
    if node_count < MIN_NODES {
        return Err(Error::InvalidParams(format!(
            "node_count {node_count} below minimum {MIN_NODES}"
        )));
    }
    if node_count % 2 == 0 {
        return Err(Error::InvalidParams(format!(
            "node_count {node_count} must be odd for composite Simpson"
        )));
    }
    if n < 1 {
        return Err(Error::InvalidParams("dimension must be >= 1".into()));
    }
    let radius = match kind {
        GeometryKind::Slab => {
            if radius != 1.0 {
                log::debug!("slab geometry forces length 1 (got {radius})");
            }
            1.0
        }
        GeometryKind::Ball => {
            if !(radius > 0.0) || !radius.is_finite() {
                return Err(Error::InvalidParams(format!("radius {radius} must be > 0")));
            }
            radius
        }
    };
    let spacing = radius / (node_count - 1) as f64;
    let mut nodes: Vec<f64> = (0..node_count).map(|i| i as f64 * spacing).collect();
    nodes[node_count - 1] = radius;
    let omega = match kind {
        GeometryKind::Ball => sphere_area(n),
        GeometryKind::Slab => 1.0,
    };
    let simpson = simpson_weights(node_count, spacing);
    let weights = match kind {
        GeometryKind::Ball => simpson
            .iter()
            .zip(&nodes)
            .map(|(w, r)| w * omega * r.powi(n as i32 - 1))
            .collect(),
        GeometryKind::Slab => simpson,
    };
    let mut hasher = DefaultHasher::new();
    (kind, n, radius.to_bits(), node_count).hash(&mut hasher);
    Ok(Geometry {
        kind,
        n,
        radius,
        spacing,
        nodes,
        weights,
        omega,
        id: GeometryId(hasher.finish()),
    })
}

impl Geometry {
    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn dimension(&self) -> u32 {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Simpson weights including the radial measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn id(&self) -> GeometryId {
        self.id
    }

    /// Boundary components: one for the ball (the sphere `r = R`), two for the
    /// slab (`x = 0` then `x = 1`).
    pub fn boundary_components(&self) -> usize {
        match self.kind {
            GeometryKind::Ball => 1,
            GeometryKind::Slab => 2,
        }
    }

    /// Analytic volume of the domain.
    pub fn volume(&self) -> f64 {
        match self.kind {
            GeometryKind::Ball => self.omega * self.radius.powi(self.n as i32) / self.n as f64,
            GeometryKind::Slab => 1.0,
        }
    }

    pub(crate) fn is_ball(&self) -> bool {
        self.kind == GeometryKind::Ball
    }

    pub(crate) fn coord(&self, i: isize) -> f64 {
        i as f64 * self.spacing
    }

    /// Measure density at coordinate `r` (`|S^{n−1}| |r|^{n−1}` or 1).
    pub(crate) fn density(&self, r: f64) -> f64 {
        match self.kind {
            GeometryKind::Ball => self.omega * r.abs().powi(self.n as i32 - 1),
            GeometryKind::Slab => 1.0,
        }
    }

    fn primitive(&self, r: f64) -> f64 {
        // ∫_0^r density, for r >= 0.
        self.omega * r.powi(self.n as i32) / self.n as f64
    }

    /// Full control volume around node `i` (ghosts included).
    pub(crate) fn cell_volume(&self, i: isize) -> f64 {
        let h = self.spacing;
        match self.kind {
            GeometryKind::Slab => h,
            GeometryKind::Ball => {
                let r = self.coord(i);
                if i == 0 {
                    self.primitive(h / 2.0)
                } else {
                    self.primitive(r + h / 2.0) - self.primitive(r - h / 2.0)
                }
            }
        }
    }

    /// Control volumes clipped to the domain; they sum to [`Geometry::volume`].
    pub fn control_volumes(&self) -> Vec<f64> {
        let last = self.node_count() - 1;
        let h = self.spacing;
        (0..=last)
            .map(|i| match self.kind {
                GeometryKind::Slab => {
                    if i == 0 || i == last {
                        h / 2.0
                    } else {
                        h
                    }
                }
                GeometryKind::Ball => {
                    if i == last {
                        self.primitive(self.radius) - self.primitive(self.radius - h / 2.0)
                    } else {
                        self.cell_volume(i as isize)
                    }
                }
            })
            .collect()
    }

    /// Flux area `A_{e+½}` at the midpoint between nodes `e` and `e + 1`.
    pub(crate) fn flux_area(&self, e: isize) -> f64 {
        self.density((e as f64 + 0.5) * self.spacing)
    }

    /// Midpoints of interior edges with their quadrature weights `A h`.
    pub(crate) fn edges(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.spacing;
        (0..self.node_count() - 1)
            .map(|e| ((e as f64 + 0.5) * h, self.flux_area(e as isize) * h))
            .unzip()
    }

    pub fn check(&self, u: &DiscreteField) -> Result<()> {
        if u.geometry != self.id || u.values.len() != self.node_count() {
            return Err(Error::GeometryMismatch);
        }
        Ok(())
    }
}

/// Node samples of a field on one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    values: Vec<f64>,
    geometry: GeometryId,
}

impl DiscreteField {
    pub fn new(g: &Geometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != g.node_count() {
            return Err(Error::InvalidParams(format!(
                "field has {} values, geometry has {} nodes",
                values.len(),
                g.node_count()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite field value {bad}")));
        }
        Ok(Self {
            values,
            geometry: g.id(),
        })
    }

    pub fn zeros(g: &Geometry) -> Self {
        Self {
            values: vec![0.0; g.node_count()],
            geometry: g.id(),
        }
    }

    pub fn from_fn(g: &Geometry, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: g.nodes().iter().map(|&x| f(x)).collect(),
            geometry: g.id(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn geometry_id(&self) -> GeometryId {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            geometry: self.geometry,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise `self + c·other`.
    pub fn axpy(&self, c: f64, other: &DiscreteField) -> Result<Self> {
        if self.geometry != other.geometry {
            return Err(Error::GeometryMismatch);
        }
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
            geometry: self.geometry,
        })
    }

    pub(crate) fn from_raw(values: Vec<f64>, geometry: GeometryId) -> Self {
        Self { values, geometry }
    }
}

/// `Σ wᵢ uᵢ` with the geometry's Simpson weights.
pub fn integrate(u: &DiscreteField, g: &Geometry) -> Result<f64> {
    g.check(u)?;
    Ok(g.weights.iter().zip(&u.values).map(|(w, v)| w * v).sum())
}

/// A linear map from some input vector to node values on the index range
/// `lo ..= lo + rows − 1`, where indices outside `0..N` are ghost nodes.
#[derive(Debug, Clone)]
pub(crate) struct Layer {
    lo: isize,
    rows: SparseRows,
}

impl Layer {
    fn hi(&self) -> isize {
        self.lo + self.rows.nrows() as isize - 1
    }

    fn local(&self, i: isize) -> usize {
        debug_assert!(i >= self.lo && i <= self.hi(), "node {i} outside layer");
        (i - self.lo) as usize
    }

    pub(crate) fn row(&self, i: isize) -> &[(usize, f64)] {
        self.rows.row(self.local(i))
    }

    /// Applies the conservative Laplacian, shrinking by one node on every side
    /// that has ghosts.
    fn laplacian(&self, g: &Geometry) -> Layer {
        let h = g.spacing;
        let lo = if g.is_ball() && self.lo == 0 { 0 } else { self.lo + 1 };
        let hi = self.hi() - 1;
        let rows = (lo..=hi)
            .map(|i| {
                let v = g.cell_volume(i) * h;
                let cp = g.flux_area(i) / v;
                if g.is_ball() && i == 0 {
                    self.rows
                        .combine(&[(self.local(0), cp), (self.local(1), -cp)])
                } else {
                    let cm = g.flux_area(i - 1) / v;
                    self.rows.combine(&[
                        (self.local(i - 1), -cm),
                        (self.local(i), cp + cm),
                        (self.local(i + 1), -cp),
                    ])
                }
            })
            .collect();
        Layer {
            lo,
            rows: SparseRows::new(self.rows.ncols(), rows),
        }
    }
}

/// Ghost-node extension of an input vector onto the extended node range.
#[derive(Debug, Clone)]
pub(crate) struct Extension {
    layer: Layer,
}

impl Extension {
    pub(crate) fn ncols(&self) -> usize {
        self.layer.rows.ncols()
    }

    /// Ghost values from Taylor conditions: the input is the vector of free
    /// nodes (all but the boundary nodes), the boundary value is zero and the
    /// normal derivatives of orders `1..k` vanish, each approximated by the
    /// central `(2k−1)`-point stencil at the boundary node.
    pub(crate) fn clamped(g: &Geometry, k: usize) -> Result<Extension> {
        let nn = g.node_count() as isize;
        let (dof_lo, dof_hi) = dof_bounds(g);
        let ndof = (dof_hi - dof_lo + 1) as usize;
        let ghosts = k.saturating_sub(1);
        let elim = taylor_elimination(k)?;
        let lo = if g.is_ball() { 0 } else { -(ghosts as isize) };
        let hi = nn - 1 + ghosts as isize;
        let dof = |i: isize| -> Vec<(usize, f64)> {
            if i >= dof_lo && i <= dof_hi {
                vec![((i - dof_lo) as usize, 1.0)]
            } else {
                Vec::new()
            }
        };
        let rows = (lo..=hi)
            .map(|i| {
                if i >= 0 && i < nn {
                    dof(i)
                } else {
                    // ghost j beyond boundary node b: Σ_m elim[j-1][m-1] u_{b∓m}
                    let (b, dir, j) = if i >= nn {
                        (nn - 1, -1isize, (i - (nn - 1)) as usize)
                    } else {
                        (0, 1isize, (-i) as usize)
                    };
                    let mut row = Vec::new();
                    for (m, c) in elim[j - 1].iter().enumerate() {
                        let node = b + dir * (m as isize + 1);
                        row.extend(dof(node).into_iter().map(|(col, v)| (col, v * c)));
                    }
                    row
                }
            })
            .collect();
        Ok(Extension {
            layer: Layer {
                lo,
                rows: SparseRows::new(ndof, rows),
            },
        })
    }

    /// Ghost values by degree-4 polynomial extrapolation from the nodes next
    /// to each boundary; the input is the full vector of node values. The
    /// ball needs no ghosts at the origin.
    pub(crate) fn free(g: &Geometry, ghosts: usize) -> Extension {
        let nn = g.node_count() as isize;
        let degree = 4usize;
        let lo = if g.is_ball() { 0 } else { -(ghosts as isize) };
        let hi = nn - 1 + ghosts as isize;
        let rows = (lo..=hi)
            .map(|i| {
                if i >= 0 && i < nn {
                    vec![(i as usize, 1.0)]
                } else {
                    let (b, dir, j) = if i >= nn {
                        (nn - 1, -1isize, (i - (nn - 1)) as f64)
                    } else {
                        (0, 1isize, (-i) as f64)
                    };
                    // Lagrange basis on offsets 0, −1, …, −degree evaluated at +j
                    (0..=degree)
                        .map(|m| {
                            let xm = -(m as f64);
                            let c: f64 = (0..=degree)
                                .filter(|&l| l != m)
                                .map(|l| {
                                    let xl = -(l as f64);
                                    (j - xl) / (xm - xl)
                                })
                                .product();
                            ((b + dir * m as isize) as usize, c)
                        })
                        .collect()
                }
            })
            .collect();
        Extension {
            layer: Layer {
                lo,
                rows: SparseRows::new(g.node_count(), rows),
            },
        }
    }

    /// Exact samples of an analytic field on the extended range, as a fixed
    /// affine input (a single column).
    pub(crate) fn sampled(g: &Geometry, ghosts: usize, f: impl Fn(f64) -> f64) -> Extension {
        let nn = g.node_count() as isize;
        let lo = if g.is_ball() { 0 } else { -(ghosts as isize) };
        let hi = nn - 1 + ghosts as isize;
        let rows = (lo..=hi)
            .map(|i| {
                let x = if i == nn - 1 { g.radius } else { g.coord(i) };
                vec![(0usize, f(x))]
            })
            .collect();
        Extension {
            layer: Layer {
                lo,
                rows: SparseRows::new(1, rows),
            },
        }
    }

    /// `Δ^m` of the extended field, as rows over the surviving node range.
    pub(crate) fn laplacian_power(&self, g: &Geometry, m: usize) -> Layer {
        let mut layer = self.layer.clone();
        for _ in 0..m {
            layer = layer.laplacian(g);
        }
        layer
    }

    /// Evaluation rows for `Δ^{i/2}` with their quadrature: node values with
    /// control volumes for even orders, edge differences with `A h` for odd.
    pub(crate) fn order_operator(&self, g: &Geometry, order: usize) -> OrderOperator {
        let layer = self.laplacian_power(g, order / 2);
        let nn = g.node_count() as isize;
        assert!(layer.lo <= 0 && layer.hi() >= nn - 1, "not enough ghost nodes");
        if order % 2 == 0 {
            let rows = (0..nn).map(|i| layer.row(i).to_vec()).collect();
            OrderOperator {
                rows: SparseRows::new(self.ncols(), rows),
                points: g.nodes.clone(),
                weights: g.control_volumes(),
            }
        } else {
            let inv_h = 1.0 / g.spacing;
            let rows = (0..nn - 1)
                .map(|e| {
                    let mut r: Vec<(usize, f64)> =
                        layer.row(e + 1).iter().map(|&(j, v)| (j, v * inv_h)).collect();
                    r.extend(layer.row(e).iter().map(|&(j, v)| (j, -v * inv_h)));
                    r
                })
                .collect();
            let (points, weights) = g.edges();
            OrderOperator {
                rows: SparseRows::new(self.ncols(), rows),
                points,
                weights,
            }
        }
    }
}

/// Rows evaluating `Δ^{i/2}` at quadrature points.
#[derive(Debug, Clone)]
pub(crate) struct OrderOperator {
    pub rows: SparseRows,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl OrderOperator {
    /// `Σ_p w_p c(x_p) (D x)_p (D y)_p`.
    pub(crate) fn bilinear(&self, x: &[f64], y: &[f64], coef: impl Fn(f64) -> f64) -> f64 {
        let dx = self.rows.apply(x);
        let dy = self.rows.apply(y);
        dx.iter()
            .zip(&dy)
            .zip(self.weights.iter().zip(&self.points))
            .map(|((a, b), (w, &p))| w * coef(p) * a * b)
            .sum()
    }
}

/// Index range of free nodes for clamped fields.
pub(crate) fn dof_bounds(g: &Geometry) -> (isize, isize) {
    let nn = g.node_count() as isize;
    match g.kind {
        GeometryKind::Ball => (0, nn - 2),
        GeometryKind::Slab => (1, nn - 2),
    }
}

/// Fornberg weights for the `d`-th derivative at 0 on the given offsets.
pub(crate) fn fd_weights(offsets: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let np = offsets.len();
    let mut c = vec![vec![0.0; np]; max_deriv + 1];
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    c[0][0] = 1.0;
    for i in 1..np {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Rows `E[j−1][m−1]` giving ghost `j` (outside the boundary) from interior
/// node `m` (inside), `j, m = 1..k−1`, under `u_b = 0` and vanishing
/// derivatives of orders `1..k−1` on the `2k−1` point stencil.
fn taylor_elimination(k: usize) -> Result<Vec<Vec<f64>>> {
    let g = k.saturating_sub(1);
    if g == 0 {
        return Ok(Vec::new());
    }
    let offsets: Vec<f64> = (-(g as isize)..=g as isize).map(|o| o as f64).collect();
    let w = fd_weights(&offsets, g);
    let at = |d: usize, o: isize| w[d][(o + g as isize) as usize];
    // Σ_j at(d, j) ghost_j = −Σ_m at(d, −m) inner_m for d = 1..g
    let a: Vec<Vec<f64>> = (1..=g)
        .map(|d| (1..=g).map(|j| at(d, j as isize)).collect())
        .collect();
    let mut e = vec![vec![0.0; g]; g];
    for m in 1..=g {
        let rhs: Vec<f64> = (1..=g).map(|d| -at(d, -(m as isize))).collect();
        let col = dense_solve(a.clone(), rhs)?;
        for j in 0..g {
            e[j][m - 1] = col[j];
        }
    }
    Ok(e)
}

/// `Δ^{i/2} u` at the nodes: `Δ^m u` for `i = 2m`, `|∂_r Δ^m u|` for
/// `i = 2m + 1`, with fourth-order central stencils. Two ghost values per
/// outer end come from degree-4 extrapolation before every application and
/// the ball origin uses even reflection, so `u` need not satisfy any
/// boundary condition and even polynomials of degree 4 are reproduced
/// exactly.
pub fn half_laplacian_power(u: &DiscreteField, i: usize, g: &Geometry) -> Result<DiscreteField> {
    g.check(u)?;
    if i > MAX_ORDER {
        return Err(Error::OrderOutOfRange {
            order: i,
            max: MAX_ORDER,
        });
    }
    let mut v = u.values.clone();
    for _ in 0..i / 2 {
        v = nodal_laplacian(g, &v);
    }
    if i % 2 == 1 {
        let h = g.spacing;
        let e = extended(g, &v);
        v = (0..g.node_count())
            .map(|j| {
                if g.is_ball() && j == 0 {
                    0.0
                } else {
                    let at = |o: isize| e[(j as isize + 2 + o) as usize];
                    ((at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h)).abs()
                }
            })
            .collect();
    }
    Ok(DiscreteField::from_raw(v, g.id()))
}

/// Node values padded with two ghosts per side (offset 2 in the result).
fn extended(g: &Geometry, v: &[f64]) -> Vec<f64> {
    let nn = v.len();
    // Lagrange weights on offsets 0, −1, …, −4 evaluated at +1 and +2
    let ghost = |vals: &dyn Fn(usize) -> f64, j: f64| -> f64 {
        (0..=4)
            .map(|m| {
                let xm = -(m as f64);
                let c: f64 = (0..=4)
                    .filter(|&l| l != m)
                    .map(|l| (j + l as f64) / (xm + l as f64))
                    .product();
                c * vals(m)
            })
            .sum()
    };
    let mut e = Vec::with_capacity(nn + 4);
    if g.is_ball() {
        e.extend([v[2], v[1]]);
    } else {
        e.extend([ghost(&|m| v[m], 2.0), ghost(&|m| v[m], 1.0)]);
    }
    e.extend_from_slice(v);
    e.push(ghost(&|m| v[nn - 1 - m], 1.0));
    e.push(ghost(&|m| v[nn - 1 - m], 2.0));
    e
}

fn nodal_laplacian(g: &Geometry, v: &[f64]) -> Vec<f64> {
    let h = g.spacing;
    let e = extended(g, v);
    let dim = g.dimension() as f64;
    (0..v.len())
        .map(|j| {
            let at = |o: isize| e[(j as isize + 2 + o) as usize];
            let d2 = (-at(-2) + 16.0 * at(-1) - 30.0 * at(0) + 16.0 * at(1) - at(2)) / (12.0 * h * h);
            if !g.is_ball() {
                -d2
            } else if j == 0 {
                -dim * d2
            } else {
                let d1 = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h);
                -(d2 + (dim - 1.0) * d1 / g.nodes[j])
            }
        })
        .collect()
}

/// `Σ_{i=0}^{k} ‖Δ^{i/2} u‖²₂` with control-volume and edge quadrature.
pub fn hk_norm(u: &DiscreteField, k: usize, g: &Geometry) -> Result<f64> {
    g.check(u)?;
    if k < 1 {
        return Err(Error::InvalidParams("hk_norm needs k >= 1".into()));
    }
    if k > MAX_ORDER {
        return Err(Error::OrderOutOfRange {
            order: k,
            max: MAX_ORDER,
        });
    }
    let ext = Extension::free(g, k / 2 + 2);
    Ok((0..=k)
        .map(|i| {
            let op = ext.order_operator(g, i);
            op.bilinear(&u.values, &u.values, |_| 1.0)
        })
        .sum())
}

/// Writes `coord,value` rows, 17 significant digits.
pub fn write_field_csv<W: Write>(u: &DiscreteField, g: &Geometry, mut out: W) -> Result<()> {
    g.check(u)?;
    let io = |e: std::io::Error| Error::InvalidParams(format!("write failed: {e}"));
    writeln!(out, "coord,value").map_err(io)?;
    for (x, v) in g.nodes.iter().zip(&u.values) {
        writeln!(out, "{},{}", fmt17(*x), fmt17(*v)).map_err(io)?;
    }
    Ok(())
}

/// Reads a `coord,value` file back onto `g`; coordinates must match the nodes.
pub fn read_field_csv<R: BufRead>(g: &Geometry, input: R) -> Result<DiscreteField> {
    let mut lines = input.lines();
    let bad = |m: String| Error::InvalidParams(m);
    match lines.next() {
        Some(Ok(h)) if h.trim() == "coord,value" => {}
        other => return Err(bad(format!("bad field header: {other:?}"))),
    }
    let mut values = Vec::with_capacity(g.node_count());
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (x, v) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("row {i}: expected two columns")))?;
        let x: f64 = x.trim().parse().map_err(|_| bad(format!("row {i}: bad coord")))?;
        let v: f64 = v.trim().parse().map_err(|_| bad(format!("row {i}: bad value")))?;
        match g.nodes.get(i) {
            Some(node) if (node - x).abs() <= 1e-12 * g.radius.max(1.0) => values.push(v),
            _ => return Err(Error::GeometryMismatch),
        }
    }
    DiscreteField::new(g, values).map_err(|_| Error::GeometryMismatch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn slab(n: usize) -> Geometry {
        build_geometry(GeometryKind::Slab, 5, 1.0, n).unwrap()
    }

    fn ball(dim: u32, n: usize) -> Geometry {
        build_geometry(GeometryKind::Ball, dim, 1.0, n).unwrap()
    }

    #[test]
    fn geometry_weights() {
        let b = ball(3, 2001);
        let total: f64 = b.weights().iter().sum();
        assert!((total - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!((b.volume() - 4.18879).abs() < 1e-5);
        let cv: f64 = b.control_volumes().iter().sum();
        assert!((cv - b.volume()).abs() < 1e-12);
        let s = slab(1001);
        let total: f64 = s.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(build_geometry(GeometryKind::Ball, 3, 1.0, 10).is_err());
        assert!(build_geometry(GeometryKind::Ball, 3, 1.0, 100).is_err());
        assert!(build_geometry(GeometryKind::Ball, 3, -1.0, 101).is_err());
        assert!(s.weights().iter().all(|w| *w >= 0.0));
        assert_eq!(s.nodes()[0], 0.0);
        assert_eq!(*s.nodes().last().unwrap(), 1.0);
    }

    #[test]
    fn ball_volume_for_odd_powers() {
        for n in [4u32, 5, 6, 7] {
            let b = build_geometry(GeometryKind::Ball, n, 2.0, 4001).unwrap();
            let total: f64 = b.weights().iter().sum();
            assert!(((total - b.volume()) / b.volume()).abs() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn integrate_examples() {
        let s = slab(1001);
        assert!((integrate(&DiscreteField::from_fn(&s, |_| 1.0), &s).unwrap() - 1.0).abs() < 1e-14);
        let x2 = DiscreteField::from_fn(&s, |x| x * x);
        assert!((integrate(&x2, &s).unwrap() - 1.0 / 3.0).abs() < 1e-10);
        let b = ball(3, 2001);
        let one = DiscreteField::from_fn(&b, |_| 1.0);
        assert!((integrate(&one, &b).unwrap() - 4.0 * PI / 3.0).abs() < 1e-10);
        assert!(matches!(integrate(&one, &s), Err(Error::GeometryMismatch)));
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        for dim in [1u32, 3, 5] {
            let b = ball(dim, 201);
            let u = DiscreteField::from_fn(&b, |r| r * r);
            let lap = half_laplacian_power(&u, 2, &b).unwrap();
            for v in &lap.values()[..b.node_count() - 1] {
                assert!((v + 2.0 * dim as f64).abs() < 1e-8, "dim {dim}: {v}");
            }
        }
        let s = slab(201);
        let u = DiscreteField::from_fn(&s, |x| x * x);
        let lap = half_laplacian_power(&u, 2, &s).unwrap();
        for v in lap.values() {
            assert!((v + 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn bilaplacian_of_r4() {
        // Δ²r⁴ = (4n+8)(2n) = 280 for n = 5; round-off grows like h⁻⁴
        let b = ball(5, 201);
        let u = DiscreteField::from_fn(&b, |r| r.powi(4));
        let lap2 = half_laplacian_power(&u, 4, &b).unwrap();
        for (i, v) in lap2.values().iter().enumerate() {
            assert!((v - 280.0).abs() < 1e-5, "node {i}: {v}");
        }
    }

    #[test]
    fn gradient_of_sine() {
        let mut errs = Vec::new();
        for n in [201usize, 401] {
            let s = slab(n);
            let u = DiscreteField::from_fn(&s, |x| (PI * x).sin());
            let du = half_laplacian_power(&u, 1, &s).unwrap();
            let err = s
                .nodes()
                .iter()
                .zip(du.values())
                .map(|(x, v)| (v - (PI * (PI * x).cos()).abs()).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 1e-3);
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn hk_norm_of_sine() {
        let s = slab(2001);
        let u = DiscreteField::from_fn(&s, |x| (PI * x).sin());
        let p2 = PI * PI;
        let k1 = hk_norm(&u, 1, &s).unwrap();
        assert!((k1 - (0.5 + p2 / 2.0)).abs() < 0.01 * (0.5 + p2 / 2.0));
        let k2 = hk_norm(&u, 2, &s).unwrap();
        let want = 0.5 + p2 / 2.0 + p2 * p2 / 2.0;
        assert!((k2 - want).abs() < 0.01 * want);
        assert_eq!(hk_norm(&DiscreteField::zeros(&s), 3, &s).unwrap(), 0.0);
    }

    #[test]
    fn order_out_of_range() {
        let s = slab(101);
        let u = DiscreteField::zeros(&s);
        assert!(matches!(
            half_laplacian_power(&u, MAX_ORDER + 1, &s),
            Err(Error::OrderOutOfRange { .. })
        ));
    }

    #[test]
    fn fornberg_central_weights() {
        let w = fd_weights(&[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
        let w = fd_weights(&[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let want = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w[2].iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn clamped_ghosts_reflect_for_k2() {
        let e = taylor_elimination(2).unwrap();
        assert_eq!(e, vec![vec![1.0]]);
        assert!(taylor_elimination(1).unwrap().is_empty());
        // k = 3: ghosts exact on (x − b)³ profiles
        let e = taylor_elimination(3).unwrap();
        for j in 1..=2 {
            let cubic = |o: f64| o * o * o;
            let pred: f64 = (1..=2).map(|m| e[j - 1][m - 1] * cubic(-(m as f64))).sum();
            assert!((pred - cubic(j as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn field_csv_round_trip() {
        let s = slab(51);
        let u = DiscreteField::from_fn(&s, |x| (3.0 * x).exp() - 1.0 / 3.0);
        let mut buf = Vec::new();
        write_field_csv(&u, &s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("coord,value\n"));
        assert_eq!(text.lines().count(), 52);
        let back = read_field_csv(&s, buf.as_slice()).unwrap();
        assert_eq!(back, u);
        let other = slab(53);
        assert!(read_field_csv(&other, buf.as_slice()).is_err());
    }
}
