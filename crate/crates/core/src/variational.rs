//! Constrained minimization of `I(w)` over
//! `H_q = { w clamped : ∫ f |w + h|^q = γ }`, its multiplier, and the
//! continuation `q → 2♯`.
//!
//! All integrals use the control-volume pairing of the operator, so the
//! discrete constraint gradient and the discrete Euler–Lagrange equation
//! `A w = λ M f |u|^{q−2} u` (with `u = w + h`) are consistent.

use std::io::Write;

use serde_json::{Map, Value};

use crate::discretization::DiscreteField;
use crate::error::{Error, Result};
use crate::format::{fmt17, json_f64};
use crate::linalg::{dot, norm, BandCholesky};
use crate::operator::{coercivity_check, quadratic_form, AssembledOperator, EigenPair};
use crate::sobolev::{inv_k0, SobolevParams};

#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    q: f64,
    gamma: f64,
    h: DiscreteField,
    /// `mass · f` at every node.
    mf: Vec<f64>,
    two_sharp: f64,
}

impl ConstraintSpec {
    pub fn new(op: &AssembledOperator, q: f64, gamma: f64, h: DiscreteField) -> Result<Self> {
        op.geometry().check(&h)?;
        let two_sharp = op.params().two_sharp();
        if !(q > 2.0 && q <= two_sharp) {
            return Err(Error::InvalidParams(format!(
                "q = {q} outside (2, {two_sharp}]"
            )));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma = {gamma} must be > 0")));
        }
        let mf: Vec<f64> = op
            .mass()
            .iter()
            .zip(op.f_values())
            .map(|(m, f)| m * f)
            .collect();
        let spec = Self {
            q,
            gamma,
            h,
            mf,
            two_sharp,
        };
        let base = spec.g_of(spec.h.values(), q);
        if !(gamma > base) {
            return Err(Error::InvalidParams(format!(
                "gamma = {gamma} must exceed ∫f|h|^q = {base}"
            )));
        }
        let critical = spec.g_of(spec.h.values(), two_sharp);
        if !(gamma > critical) {
            log::warn!("gamma = {gamma} does not exceed ∫f|h|^2# = {critical}");
        }
        Ok(spec)
    }

    /// Same `γ` and `h` at another exponent.
    pub fn with_q(&self, q: f64, op: &AssembledOperator) -> Result<Self> {
        ConstraintSpec::new(op, q, self.gamma, self.h.clone())
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn extension(&self) -> &DiscreteField {
        &self.h
    }

    /// `∫ f |u|^p`.
    fn g_of(&self, u: &[f64], p: f64) -> f64 {
        self.mf.iter().zip(u).map(|(m, v)| m * v.abs().powf(p)).sum()
    }

    /// `∫ f |w + h|^q` for a field `w`.
    pub fn constraint_value(&self, w: &DiscreteField) -> Result<f64> {
        Ok(self.g_of(&self.total(w)?, self.q))
    }

    /// `∫ f |h|^q`.
    pub fn base_value(&self) -> f64 {
        self.g_of(self.h.values(), self.q)
    }

    fn total(&self, w: &DiscreteField) -> Result<Vec<f64>> {
        if w.geometry_id() != self.h.geometry_id() {
            return Err(Error::GeometryMismatch);
        }
        Ok(w.values()
            .iter()
            .zip(self.h.values())
            .map(|(a, b)| a + b)
            .collect())
    }

    /// `G(s) = ∫ f |s w + h|^q` and `G'(s)`.
    fn ray(&self, w: &[f64], s: f64) -> (f64, f64) {
        let q = self.q;
        let mut g = 0.0;
        let mut dg = 0.0;
        for ((m, a), b) in self.mf.iter().zip(w).zip(self.h.values()) {
            let u = s * a + b;
            let au = u.abs();
            g += m * au.powf(q);
            dg += m * q * au.powf(q - 1.0) * u.signum() * a;
        }
        (g, dg)
    }

    /// Nodal `f |u|^{q−2} u` times the mass, the constraint gradient over `q`.
    fn gradient_nodes(&self, u: &[f64]) -> Vec<f64> {
        let q = self.q;
        self.mf
            .iter()
            .zip(u)
            .map(|(m, v)| m * v.abs().powf(q - 1.0) * v.signum())
            .collect()
    }

    /// `∫ f |u|^{q−2} u h`.
    fn cross_term(&self, u: &[f64]) -> f64 {
        dot(&self.gradient_nodes(u), self.h.values())
    }

    /// Right side of the Hölder bound, `γ^{1−1/q} (∫f|h|^q)^{1/q}`.
    fn holder_rhs(&self) -> f64 {
        self.gamma.powf(1.0 - 1.0 / self.q) * self.base_value().powf(1.0 / self.q)
    }
}

/// Root of `G(s) = γ` for `s > 0` along the ray `s ↦ s w`, bracketed by
/// doubling from `[0, 1]`. `G` is convex with `G(0) < γ`, so the root is
/// unique.
fn ray_root(spec: &ConstraintSpec, w: &[f64]) -> Result<f64> {
    let gamma = spec.gamma;
    let (g0, _) = spec.ray(w, 0.0);
    if g0 >= gamma {
        return Err(Error::NoBracket(format!(
            "G(0) = {g0} already reaches gamma = {gamma}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let (g, _) = spec.ray(w, hi);
        if !g.is_finite() {
            return Err(Error::NoBracket(format!("G overflowed at s = {hi:e}")));
        }
        if g >= gamma {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e150 {
            return Err(Error::NoBracket(format!(
                "G stays below gamma = {gamma} along the ray"
            )));
        }
    }
    let mut s = if lo == 0.0 { hi } else { 0.5 * (lo + hi) };
    for _ in 0..400 {
        let (g, dg) = spec.ray(w, s);
        let f = g - gamma;
        if f.abs() <= 1e-13 * gamma {
            return Ok(s);
        }
        if f < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - f / dg;
        s = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(s);
        }
    }
    Ok(s)
}

/// `t > 0` with `∫ f |t ψ₁ + h|^q = γ`.
pub fn seed_feasible(psi1: &EigenPair, spec: &ConstraintSpec) -> Result<f64> {
    if psi1.psi1.geometry_id() != spec.h.geometry_id() {
        return Err(Error::GeometryMismatch);
    }
    ray_root(spec, psi1.psi1.values())
}

/// `s* w` with `∫ f |s* w + h|^q = γ`.
pub fn restore_constraint(w: &DiscreteField, spec: &ConstraintSpec) -> Result<DiscreteField> {
    if w.geometry_id() != spec.h.geometry_id() {
        return Err(Error::GeometryMismatch);
    }
    let s = ray_root(spec, w.values())?;
    Ok(w.scaled(s))
}

/// `λ = I(w) / (γ − ∫ f |w+h|^{q−2}(w+h) h)`.
pub fn lagrange_multiplier(
    op: &AssembledOperator,
    w: &DiscreteField,
    spec: &ConstraintSpec,
) -> Result<f64> {
    let i = quadratic_form(op, w)?;
    multiplier_from(i, &spec.total(w)?, spec)
}

fn multiplier_from(energy: f64, u: &[f64], spec: &ConstraintSpec) -> Result<f64> {
    let cross = spec.cross_term(u);
    let bound = spec.holder_rhs();
    if cross > bound * (1.0 + 1e-10) + 1e-300 {
        log::warn!("Hölder bound violated: {cross} > {bound}");
    }
    let denom = spec.gamma - cross;
    if !(denom > 0.0) {
        return Err(Error::NonpositiveDenominator(denom));
    }
    Ok(energy / denom)
}

/// Least-squares `λ` for `A w ≈ λ b` (`b` the constraint gradient).
pub fn fitted_multiplier(
    op: &AssembledOperator,
    w: &DiscreteField,
    spec: &ConstraintSpec,
) -> Result<f64> {
    let x = op.restrict(w)?;
    let b = op.restrict_slice(&spec.gradient_nodes(&spec.total(w)?));
    let aw = op.form_matrix().matvec(&x);
    Ok(dot(&b, &aw) / dot(&b, &b))
}

/// Gradient of `I` with respect to the free-node values: `2 A x`.
pub fn energy_gradient(op: &AssembledOperator, w: &DiscreteField) -> Result<Vec<f64>> {
    let x = op.restrict(w)?;
    Ok(op.form_matrix().matvec(&x).iter().map(|v| 2.0 * v).collect())
}

/// Gradient of `∫ f |w + h|^q` with respect to the free-node values.
pub fn constraint_gradient(
    op: &AssembledOperator,
    w: &DiscreteField,
    spec: &ConstraintSpec,
) -> Result<Vec<f64>> {
    let b = op.restrict_slice(&spec.gradient_nodes(&spec.total(w)?));
    Ok(b.iter().map(|v| spec.q * v).collect())
}

/// `‖A w − λ b‖ / ‖A w‖` with `λ` from [`lagrange_multiplier`].
pub fn el_residual(op: &AssembledOperator, w: &DiscreteField, spec: &ConstraintSpec) -> Result<f64> {
    let x = op.restrict(w)?;
    let u = spec.total(w)?;
    let aw = op.form_matrix().matvec(&x);
    let lambda = multiplier_from(op.energy_dofs(&x), &u, spec)?;
    let b = op.restrict_slice(&spec.gradient_nodes(&u));
    Ok(residual(&aw, &b, lambda))
}

fn residual(aw: &[f64], b: &[f64], lambda: f64) -> f64 {
    let r: Vec<f64> = aw.iter().zip(b).map(|(a, v)| a - lambda * v).collect();
    norm(&r) / norm(aw)
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub el_tol: f64,
    pub max_iterations: usize,
    /// Starting field instead of `t ψ₁`; it is projected onto `H_q` first.
    pub initial: Option<DiscreteField>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            el_tol: 1e-6,
            max_iterations: 20000,
            initial: None,
        }
    }
}

/// Per-iterate diagnostics of an accepted point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub energy: f64,
    pub el_residual: f64,
    /// `∫ f |u|^{q−2} u h`.
    pub holder_lhs: f64,
    /// `γ^{1−1/q} (∫ f|h|^q)^{1/q}`.
    pub holder_rhs: f64,
    pub constraint_error: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub q: f64,
    pub gamma: f64,
    pub w: DiscreteField,
    pub u: DiscreteField,
    pub mu: f64,
    pub lambda: f64,
    pub el_residual: f64,
    pub iterations: usize,
    pub t_seed: f64,
    /// `I(ψ₁)` of the normalized eigenfunction.
    pub seed_energy: f64,
    pub sign_changes: usize,
    pub constraint_error: f64,
    pub converged: bool,
    pub history: Vec<IterateRecord>,
}

impl MinimizeResult {
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("q".into(), json_f64(self.q));
        m.insert("gamma".into(), json_f64(self.gamma));
        m.insert("mu".into(), json_f64(self.mu));
        m.insert("lambda".into(), json_f64(self.lambda));
        m.insert("el_residual".into(), json_f64(self.el_residual));
        m.insert("iterations".into(), Value::from(self.iterations));
        m.insert("t_seed".into(), json_f64(self.t_seed));
        m.insert("sign_changes".into(), Value::from(self.sign_changes));
        m.insert("constraint_error".into(), json_f64(self.constraint_error));
        m.insert("converged".into(), Value::Bool(self.converged));
        Value::Object(m)
    }
}

fn factor(op: &AssembledOperator) -> Result<BandCholesky> {
    match op.form_matrix().cholesky() {
        Ok(c) => Ok(c),
        Err(_) => {
            let report = coercivity_check(op)?;
            if report.coercive {
                Err(Error::SingularSolve("form matrix factorization failed".into()))
            } else {
                Err(Error::NotCoercive(report))
            }
        }
    }
}

/// Projected gradient descent on `H_q` in the energy metric.
///
/// The search direction is the component of `w` tangent to the level set
/// with respect to `⟨·,·⟩_A`, i.e. `d = w − β A⁻¹b` with `β = wᵀb / bᵀA⁻¹b`.
/// A unit step followed by the ray projection is one nonlinear inverse
/// iteration; the step halves until the projected energy satisfies Armijo.
pub fn minimize(
    op: &AssembledOperator,
    spec: &ConstraintSpec,
    psi1: &EigenPair,
    options: &MinimizeOptions,
) -> Result<MinimizeResult> {
    if !(spec.q < spec.two_sharp) {
        return Err(Error::InvalidParams(format!(
            "minimize needs q < 2# = {}, got {}",
            spec.two_sharp, spec.q
        )));
    }
    let chol = factor(op)?;
    let a = op.form_matrix();
    let t_seed = seed_feasible(psi1, spec)?;
    let seed_energy = quadratic_form(op, &psi1.psi1)?;
    let start = match &options.initial {
        Some(w0) => restore_constraint(&op.prolong(&op.restrict(w0)?), spec)?,
        None => psi1.psi1.scaled(t_seed),
    };
    let holder_rhs = spec.holder_rhs();
    let gamma = spec.gamma;

    let evaluate = |x: &[f64]| -> Result<(Vec<f64>, Vec<f64>, f64, f64, IterateRecord)> {
        let w = op.prolong(x);
        let u = spec.total(&w)?;
        let aw = a.matvec(x);
        let energy = op.energy_dofs(x);
        let lambda = multiplier_from(energy, &u, spec)?;
        let b = op.restrict_slice(&spec.gradient_nodes(&u));
        let rec = IterateRecord {
            energy,
            el_residual: residual(&aw, &b, lambda),
            holder_lhs: spec.cross_term(&u),
            holder_rhs,
            constraint_error: (spec.g_of(&u, spec.q) - gamma).abs() / gamma,
        };
        Ok((u, b, energy, lambda, rec))
    };

    let mut x = op.restrict(&start)?;
    let (mut u, mut b, mut energy, mut lambda, mut rec) = evaluate(&x)?;
    let mut history = vec![rec];
    let mut iterations = 0;
    let mut converged = rec.el_residual <= options.el_tol;
    const ARMIJO: f64 = 1e-4;
    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let z = chol.solve(&b);
        let zb = dot(&z, &b);
        if !(zb > 0.0) {
            return Err(Error::SingularSolve("degenerate constraint gradient".into()));
        }
        let beta = dot(&x, &b) / zb;
        let d: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| xi - beta * zi).collect();
        let dad = (energy - 2.0 * beta * dot(&x, &b) + beta * beta * zb).max(0.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi - step * di).collect();
            if let Ok(s) = ray_root(spec, &op.prolong(&trial).values().to_vec()) {
                let cand: Vec<f64> = trial.iter().map(|v| s * v).collect();
                let e = op.energy_dofs(&cand);
                if e <= energy - 2.0 * ARMIJO * step * dad {
                    accepted = Some(cand);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            log::debug!("line search stalled at iteration {iterations}");
            break;
        };
        x = next;
        (u, b, energy, lambda, rec) = evaluate(&x)?;
        history.push(rec);
        converged = rec.el_residual <= options.el_tol;
    }
    let w = op.prolong(&x);
    let ufield = DiscreteField::from_raw(u, w.geometry_id());
    let result = MinimizeResult {
        q: spec.q,
        gamma,
        sign_changes: count_sign_changes(&ufield),
        u: ufield,
        w,
        mu: energy,
        lambda,
        el_residual: rec.el_residual,
        iterations,
        t_seed,
        seed_energy,
        constraint_error: rec.constraint_error,
        converged,
        history,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::NoConvergence(Box::new(result)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationRecord {
    pub q: f64,
    pub mu: f64,
    pub lambda: f64,
    pub el_residual: f64,
    pub sign_changes: usize,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub records: Vec<ContinuationRecord>,
    pub mu_limit_estimate: f64,
    pub condition_holds: bool,
    /// Full results in schedule order.
    pub runs: Vec<MinimizeResult>,
}

impl ContinuationResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "q,mu,lambda,el_residual,sign_changes")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt17(r.q),
                fmt17(r.mu),
                fmt17(r.lambda),
                fmt17(r.el_residual),
                r.sign_changes
            )?;
        }
        Ok(())
    }
}

/// Minimizers along an increasing schedule of exponents, each warm-started
/// from the previous one.
pub fn continuation(
    op: &AssembledOperator,
    spec_base: &ConstraintSpec,
    psi1: &EigenPair,
    q_schedule: &[f64],
    options: &MinimizeOptions,
) -> Result<ContinuationResult> {
    let p = op.params();
    let two_sharp = p.two_sharp();
    if q_schedule.is_empty() {
        return Err(Error::InvalidParams("empty q schedule".into()));
    }
    if q_schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("q schedule must be strictly increasing".into()));
    }
    if let Some(q) = q_schedule.iter().find(|q| !(**q > 2.0 && **q < two_sharp)) {
        return Err(Error::InvalidParams(format!("q = {q} outside (2, {two_sharp})")));
    }
    let last = *q_schedule.last().expect("nonempty");
    if two_sharp - last > 1e-3 {
        log::info!("schedule stops at q = {last}, {} below 2#", two_sharp - last);
    }
    let mut runs: Vec<MinimizeResult> = Vec::new();
    for &q in q_schedule {
        let wrap = |e: Error| Error::AtExponent { q, source: Box::new(e) };
        let spec = spec_base.with_q(q, op).map_err(wrap)?;
        let mut opts = options.clone();
        if let Some(prev) = runs.last() {
            let t = seed_feasible(psi1, &spec).map_err(wrap)?;
            let seed_bound = t * t * quadratic_form(op, &psi1.psi1).map_err(wrap)?;
            if let Ok(warm) = restore_constraint(&prev.w, &spec) {
                if quadratic_form(op, &warm).map_err(wrap)? <= seed_bound {
                    opts.initial = Some(warm);
                }
            }
        }
        runs.push(minimize(op, &spec, psi1, &opts).map_err(wrap)?);
    }
    let records: Vec<ContinuationRecord> = runs
        .iter()
        .map(|r| ContinuationRecord {
            q: r.q,
            mu: r.mu,
            lambda: r.lambda,
            el_residual: r.el_residual,
            sign_changes: r.sign_changes,
        })
        .collect();
    let mu_limit_estimate = mu_limit(&records, two_sharp);
    let condition_holds = mu_limit_estimate > 0.0
        && check_condition(mu_limit_estimate, spec_base.gamma, op.f_max(), p)?;
    Ok(ContinuationResult {
        records,
        mu_limit_estimate,
        condition_holds,
        runs,
    })
}

/// Linear fit of `μ` against `2♯ − q` over the last three records,
/// evaluated at `q = 2♯`.
pub fn mu_limit(records: &[ContinuationRecord], two_sharp: f64) -> f64 {
    let tail = &records[records.len().saturating_sub(3)..];
    if tail.len() == 1 {
        return tail[0].mu;
    }
    let xs: Vec<f64> = tail.iter().map(|r| two_sharp - r.q).collect();
    let ys: Vec<f64> = tail.iter().map(|r| r.mu).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    ybar - (sxy / sxx) * xbar
}

/// Both sides of `μ / γ^{2/2♯} < 1 / (f_max^{2/2♯} K₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn condition_report(
    mu_limit: f64,
    gamma: f64,
    f_max: f64,
    p: SobolevParams,
) -> Result<ConditionReport> {
    for (name, v) in [("mu_limit", mu_limit), ("gamma", gamma), ("f_max", f_max)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParams(format!("{name} = {v} must be > 0")));
        }
    }
    let e = 2.0 / p.two_sharp();
    let lhs = mu_limit / gamma.powf(e);
    let rhs = inv_k0(p) / f_max.powf(e);
    Ok(ConditionReport {
        lhs,
        rhs,
        holds: lhs < rhs,
    })
}

pub fn check_condition(mu_limit: f64, gamma: f64, f_max: f64, p: SobolevParams) -> Result<bool> {
    Ok(condition_report(mu_limit, gamma, f_max, p)?.holds)
}

/// Sign flips between consecutive nodes whose magnitude is at least
/// `1e−12 · max|u|`.
pub fn count_sign_changes(u: &DiscreteField) -> usize {
    let cut = 1e-12 * u.max_abs();
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in u.values() {
        if v.abs() <= cut || v == 0.0 {
            continue;
        }
        if last != 0.0 && last.signum() != v.signum() {
            count += 1;
        }
        last = v;
    }
    count
}
