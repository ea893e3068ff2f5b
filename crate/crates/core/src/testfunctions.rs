//! Cut-off bubbles `u_ε = η(r) (ε/(ε²+r²))^{(n−2k)/2}` on the ball and the
//! behaviour of `Q(u_ε) = μ(u_ε) / γ(u_ε)^{2/2♯}` as `ε → 0`.

use std::io::Write;

use serde_json::{Map, Value};

use crate::discretization::{DiscreteField, Geometry};
use crate::error::{Error, Result};
use crate::format::{fmt17, json_f64};
use crate::operator::{quadratic_form, AssembledOperator};
use crate::sobolev::{inv_k0, SobolevParams};

/// Nodes required inside `r ≤ ε` for the smallest `ε` of a study.
pub const MIN_NODES_PER_EPSILON: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunctionSpec {
    pub epsilon: f64,
    /// Inner cutoff radius; `None` means `R/4`.
    pub delta: Option<f64>,
    /// Number of continuous derivatives of the cutoff; `None` means `2k+1`.
    pub cutoff_order: Option<u32>,
}

impl TestFunctionSpec {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            delta: None,
            cutoff_order: None,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..*self }
    }

    pub fn resolved_delta(&self, g: &Geometry) -> f64 {
        self.delta.unwrap_or(g.radius() / 4.0)
    }

    pub fn resolved_cutoff_order(&self, p: SobolevParams) -> u32 {
        self.cutoff_order.unwrap_or(2 * p.k() + 1)
    }

    fn validate(&self, g: &Geometry) -> Result<()> {
        if !g.is_ball() {
            return Err(Error::WrongGeometry);
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParams(format!(
                "epsilon = {} must be > 0",
                self.epsilon
            )));
        }
        let delta = self.resolved_delta(g);
        if !(delta > 0.0) || 2.0 * delta > g.radius() * (1.0 + 1e-15) {
            return Err(Error::InvalidParams(format!(
                "delta = {delta} must satisfy 0 < 2 delta <= R"
            )));
        }
        Ok(())
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Smoothstep of degree `2m+1` rising from 0 to 1 on `[0,1]` with its first
/// `m` derivatives vanishing at both ends.
pub fn smoothstep(t: f64, m: u32) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    if t > 0.5 {
        return 1.0 - smoothstep(1.0 - t, m);
    }
    let s: f64 = (0..=m)
        .map(|j| binomial(m + j, j) * binomial(2 * m + 1, m - j) * (-t).powi(j as i32))
        .sum();
    t.powi(m as i32 + 1) * s
}

/// `η(r)`: 1 on `[0, δ]`, 0 on `[2δ, ∞)`.
pub fn cutoff(r: f64, delta: f64, m: u32) -> f64 {
    smoothstep((2.0 * delta - r) / delta, m)
}

pub fn build_test_function(
    spec: &TestFunctionSpec,
    p: SobolevParams,
    g: &Geometry,
) -> Result<DiscreteField> {
    spec.validate(g)?;
    let delta = spec.resolved_delta(g);
    let m = spec.resolved_cutoff_order(p);
    let a = p.half_gap();
    let eps = spec.epsilon;
    Ok(DiscreteField::from_fn(g, |r| {
        let eta = cutoff(r, delta, m);
        if eta == 0.0 {
            0.0
        } else {
            eta * (eps / (eps * eps + r * r)).powf(a)
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quotient {
    /// `I(u_ε)` including lower-order terms.
    pub mu: f64,
    pub lower_order_part: f64,
    /// `∫ f |u_ε|^{2♯}`.
    pub gamma: f64,
    pub q: f64,
}

pub fn quotient_q(u_eps: &DiscreteField, op: &AssembledOperator, p: SobolevParams) -> Result<Quotient> {
    let mu = quadratic_form(op, u_eps)?;
    let lower_order_part = op.lower_order_part(u_eps)?;
    let ts = p.two_sharp();
    let gamma: f64 = op
        .mass()
        .iter()
        .zip(op.f_values())
        .zip(u_eps.values())
        .map(|((m, f), u)| m * f * u.abs().powf(ts))
        .sum();
    if !(gamma > 0.0) {
        return Err(Error::InvalidParams("test function vanishes".into()));
    }
    Ok(Quotient {
        mu,
        lower_order_part,
        gamma,
        q: mu / gamma.powf(2.0 / ts),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuotientRecord {
    pub epsilon: f64,
    pub mu_ueps: f64,
    pub lower_order_part: f64,
    pub gamma_ueps: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extrapolation {
    /// A single `ε`: the limit is that `Q`.
    None,
    /// Least squares `Q ≈ Q₀ + Σ_{j<terms} A_j ε^{power + 2j}`.
    Series { power: f64, terms: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitStudy {
    pub records: Vec<QuotientRecord>,
    pub limit: f64,
    /// `1 / (f(x₀)^{2/2♯} K₀)`.
    pub target: f64,
    pub extrapolation: Extrapolation,
}

impl LimitStudy {
    pub fn relative_gap(&self) -> f64 {
        (self.limit - self.target).abs() / self.target
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epsilon,mu,lower_order,gamma,Q,target,gap")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt17(r.epsilon),
                fmt17(r.mu_ueps),
                fmt17(r.lower_order_part),
                fmt17(r.gamma_ueps),
                fmt17(r.q),
                fmt17(self.target),
                fmt17(r.q - self.target)
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("limit".into(), json_f64(self.limit));
        m.insert("target".into(), json_f64(self.target));
        m.insert("relative_gap".into(), json_f64(self.relative_gap()));
        m.insert("records".into(), Value::from(self.records.len()));
        match &self.extrapolation {
            Extrapolation::None => {
                m.insert("extrapolation".into(), Value::from("no extrapolation"));
            }
            Extrapolation::Series { power, terms } => {
                m.insert("extrapolation".into(), Value::from("series"));
                m.insert("power".into(), json_f64(*power));
                m.insert("terms".into(), Value::from(*terms));
            }
        }
        Value::Object(m)
    }
}

/// Constant term of the least-squares fit `y ≈ c₀ + Σ_j c_j x^{p + 2j}`,
/// `j < terms`, with `x` rescaled to `[0, 1]` for conditioning.
fn series_limit(xs: &[f64], ys: &[f64], power: f64, terms: usize) -> Result<f64> {
    let scale = xs.iter().cloned().fold(0.0f64, f64::max);
    let a = nalgebra::DMatrix::from_fn(xs.len(), terms + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            (xs[i] / scale).powf(power + 2.0 * (j - 1) as f64)
        }
    });
    let b = nalgebra::DVector::from_column_slice(ys);
    let c = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::SingularSolve(format!("series fit: {e}")))?;
    Ok(c[0])
}

/// Largest number of `ε²`-spaced correction terms fitted for `n ≤ 4k`.
pub const MAX_SERIES_TERMS: usize = 3;

pub fn limit_study(
    eps_list: &[f64],
    template: &TestFunctionSpec,
    op: &AssembledOperator,
    p: SobolevParams,
) -> Result<LimitStudy> {
    let g = op.geometry();
    if !g.is_ball() {
        return Err(Error::WrongGeometry);
    }
    if eps_list.is_empty() {
        return Err(Error::InvalidParams("empty epsilon list".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParams("epsilon list must be strictly decreasing".into()));
    }
    let eps_min = *eps_list.last().expect("nonempty");
    let inside = g.nodes().iter().filter(|&&r| r <= eps_min).count();
    if inside < MIN_NODES_PER_EPSILON {
        return Err(Error::UnderResolved(format!(
            "{inside} nodes inside r <= {eps_min}, need {MIN_NODES_PER_EPSILON}"
        )));
    }
    let mut records = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let u = build_test_function(&template.with_epsilon(eps), p, g)?;
        let qt = quotient_q(&u, op, p)?;
        records.push(QuotientRecord {
            epsilon: eps,
            mu_ueps: qt.mu,
            lower_order_part: qt.lower_order_part,
            gamma_ueps: qt.gamma,
            q: qt.q,
        });
    }
    let f0 = op.f_values()[0];
    let target = inv_k0(p) / f0.powf(2.0 / p.two_sharp());
    let ys: Vec<f64> = records.iter().map(|r| r.q).collect();
    let eps: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
    let natural = (p.n() as f64) - 2.0 * p.k() as f64;
    let (limit, extrapolation) = if records.len() == 1 {
        (ys[0], Extrapolation::None)
    } else {
        // Q − Q₀ = ε^{n−2k} (c₀ + c₁ε² + …) up to the mass correction O(εⁿ);
        // the leading term alone suffices once it dominates (n > 4k).
        let terms = if p.n() > 4 * p.k() {
            1
        } else {
            (records.len() - 1).min(MAX_SERIES_TERMS)
        };
        (
            series_limit(&eps, &ys, natural, terms)?,
            Extrapolation::Series {
                power: natural,
                terms,
            },
        )
    };
    Ok(LimitStudy {
        records,
        limit,
        target,
        extrapolation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_geometry, GeometryKind};

    #[test]
    fn smoothstep_shape() {
        for m in 0..6 {
            assert_eq!(smoothstep(0.0, m), 0.0);
            assert!((smoothstep(1.0 - 1e-15, m) - 1.0).abs() < 1e-12);
            assert!((smoothstep(0.5, m) - 0.5).abs() < 1e-14, "m={m}");
            let mut prev = 0.0;
            for i in 1..=100 {
                let s = smoothstep(i as f64 / 100.0, m);
                assert!(s >= prev - 1e-15);
                prev = s;
            }
        }
        // m = 1 is the classic 3t² − 2t³
        let t: f64 = 0.3;
        assert!((smoothstep(t, 1) - (3.0 * t * t - 2.0 * t.powi(3))).abs() < 1e-15);
    }

    #[test]
    fn profile_values() {
        let p = SobolevParams::new(5, 2).unwrap();
        let g = build_geometry(GeometryKind::Ball, 5, 1.0, 401).unwrap();
        let eps = 0.1;
        let u = build_test_function(&TestFunctionSpec::new(eps), p, &g).unwrap();
        assert!((u.values()[0] - eps.powf(-0.5)).abs() < 1e-12);
        for (r, v) in g.nodes().iter().zip(u.values()) {
            if *r >= 0.5 {
                assert_eq!(*v, 0.0);
            }
        }
        let slab = build_geometry(GeometryKind::Slab, 5, 1.0, 401).unwrap();
        assert!(matches!(
            build_test_function(&TestFunctionSpec::new(eps), p, &slab),
            Err(Error::WrongGeometry)
        ));
        let wide = TestFunctionSpec {
            delta: Some(0.6),
            ..TestFunctionSpec::new(eps)
        };
        assert!(build_test_function(&wide, p, &g).is_err());
    }

    #[test]
    fn series_fit_recovers_constant() {
        let xs = [0.2, 0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 + 5.0 * x + 7.0 * x.powi(3)).collect();
        assert!((series_limit(&xs, &ys, 1.0, 2).unwrap() - 3.0).abs() < 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x: &f64| -1.0 + 2.0 * x.powi(5)).collect();
        assert!((series_limit(&xs, &ys, 5.0, 1).unwrap() + 1.0).abs() < 1e-12);
    }
}
