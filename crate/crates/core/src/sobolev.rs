//! Closed-form Euclidean constants for the sharp Sobolev inequality
//! `‖u‖²_{2♯} ≤ K₀ ‖Δ^{k/2} u‖²₂` on ℝⁿ and its radial extremal.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::quadrature::simpson_weights;

/// Dimension `n` and operator order `k`, with `k ≥ 1` and `n > 2k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SobolevParams {
    n: u32,
    k: u32,
}

impl SobolevParams {
    pub fn new(n: u32, k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParams(format!("k = {k}: requires k>=1")));
        }
        if n <= 2 * k {
            return Err(Error::InvalidParams(format!(
                "n = {n}, k = {k}: requires n>2k"
            )));
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// `2♯` as a float.
    pub fn two_sharp(&self) -> f64 {
        critical_exponent(*self).to_f64()
    }

    /// `(n − 2k)/2`, the decay exponent of the bubble.
    pub(crate) fn half_gap(&self) -> f64 {
        (self.n as f64 - 2.0 * self.k as f64) / 2.0
    }
}

/// Reduced positive fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: u64,
    den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// `2♯ = 2n/(n − 2k)`, exactly.
pub fn critical_exponent(p: SobolevParams) -> Rational {
    Rational::new(2 * p.n as u64, (p.n - 2 * p.k) as u64)
}

/// `∏_{l=−k}^{k−1} (n + 2l)`.
pub fn alpha_nk(p: SobolevParams) -> f64 {
    let (n, k) = (p.n as i64, p.k as i64);
    (-k..k).map(|l| (n + 2 * l) as f64).product()
}

/// Swanson's value of `1/K₀(n,k)`: `πᵏ (Γ(n/2)/Γ(n))^{2k/n} α_{n,k}`.
pub fn inv_k0(p: SobolevParams) -> f64 {
    let n = p.n as f64;
    let k = p.k as f64;
    let log_ratio = ln_gamma(n / 2.0) - ln_gamma(n);
    PI.powi(p.k as i32) * (2.0 * k / n * log_ratio).exp() * alpha_nk(p)
}

/// `K₀(n,k)` itself.
pub fn k0(p: SobolevParams) -> f64 {
    1.0 / inv_k0(p)
}

/// Area of the unit sphere `S^{n−1}`, `2π^{n/2}/Γ(n/2)`.
pub fn sphere_area(n: u32) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// The extremal `u₀(ρ) = α^{(n−2k)/(4k)} (1 + ρ²)^{−(n−2k)/2}`.
pub fn bubble_u0(rho: f64, p: SobolevParams) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidParams(format!("rho = {rho} must be >= 0")));
    }
    let amp = alpha_nk(p).powf((p.n as f64 - 2.0 * p.k as f64) / (4.0 * p.k as f64));
    Ok(amp * (1.0 + rho * rho).powf(-p.half_gap()))
}

/// Positive Laplacian of the unnormalized profile `(1+r²)^{−a}`, `a = (n−2k)/2`.
fn unit_bubble_laplacian(r: f64, n: f64, a: f64) -> f64 {
    let s = 1.0 + r * r;
    2.0 * a * s.powf(-a - 2.0) * (n * s - 2.0 * (a + 1.0) * r * r)
}

fn unit_bubble_gradient(r: f64, a: f64) -> f64 {
    -2.0 * a * r * (1.0 + r * r).powf(-a - 1.0)
}

/// Samples `Δ^{k/2} u₀` (unnormalized) on `r_j = j h`, `j = 0..count`.
///
/// `k ≤ 2` is analytic. Higher orders start from the analytic `Δu₀` and
/// apply fourth-order central stencils on an evenly reflected grid.
fn bubble_half_laplacian(p: SobolevParams, h: f64, count: usize) -> Vec<f64> {
    let n = p.n as f64;
    let a = p.half_gap();
    match p.k {
        1 => (0..count)
            .map(|j| unit_bubble_gradient(j as f64 * h, a))
            .collect(),
        2 => (0..count)
            .map(|j| unit_bubble_laplacian(j as f64 * h, n, a))
            .collect(),
        k => {
            // layers of Δ still to apply after the analytic first one
            let extra = (k / 2 - 1) as usize;
            let odd = k % 2 == 1;
            let margin = 2 * extra + if odd { 2 } else { 0 };
            let lo = -(margin as isize);
            let mut vals: Vec<f64> = (lo..(count + margin) as isize)
                .map(|j| unit_bubble_laplacian((j as f64 * h).abs(), n, a))
                .collect();
            let mut start = lo;
            for _ in 0..extra {
                let next: Vec<f64> = (2..vals.len() - 2)
                    .map(|i| {
                        let r = (start + i as isize) as f64 * h;
                        let d2 = (-vals[i + 2] + 16.0 * vals[i + 1] - 30.0 * vals[i]
                            + 16.0 * vals[i - 1]
                            - vals[i - 2])
                            / (12.0 * h * h);
                        if r == 0.0 {
                            -n * d2
                        } else {
                            let d1 = (-vals[i + 2] + 8.0 * vals[i + 1] - 8.0 * vals[i - 1]
                                + vals[i - 2])
                                / (12.0 * h);
                            -d2 - (n - 1.0) * d1 / r
                        }
                    })
                    .collect();
                vals = next;
                start += 2;
            }
            if odd {
                let next: Vec<f64> = (2..vals.len() - 2)
                    .map(|i| {
                        (-vals[i + 2] + 8.0 * vals[i + 1] - 8.0 * vals[i - 1] + vals[i - 2])
                            / (12.0 * h)
                    })
                    .collect();
                vals = next;
                start += 2;
            }
            debug_assert_eq!(start, 0);
            vals.truncate(count);
            vals
        }
    }
}

/// Integrals of the bubble over the ball of radius `R`: the energy
/// `∫(Δ^{k/2}u₀)²` and the mass `∫|u₀|^{2♯}`, both with the sphere factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleIntegrals {
    pub energy: f64,
    pub mass: f64,
}

impl BubbleIntegrals {
    pub fn quotient(&self, p: SobolevParams) -> f64 {
        self.energy / self.mass.powf(2.0 / p.two_sharp())
    }
}

/// Truncated integrals of the unnormalized profile `(1+r²)^{−(n−2k)/2}`.
///
/// An even `node_count` is bumped to the next odd count for Simpson's rule.
pub fn bubble_integrals(
    p: SobolevParams,
    truncation_radius: f64,
    node_count: usize,
) -> Result<BubbleIntegrals> {
    if !(truncation_radius > 0.0) || !truncation_radius.is_finite() {
        return Err(Error::InvalidParams(format!(
            "truncation radius {truncation_radius} must be positive"
        )));
    }
    if node_count < 100 {
        return Err(Error::InvalidParams(format!(
            "node_count {node_count} below minimum 100"
        )));
    }
    let count = node_count | 1;
    let h = truncation_radius / (count - 1) as f64;
    let weights = simpson_weights(count, h);
    let omega = sphere_area(p.n);
    let nm1 = p.n as i32 - 1;
    let two_sharp = p.two_sharp();
    let a = p.half_gap();
    let deriv = bubble_half_laplacian(p, h, count);

    let mut energy = 0.0;
    let mut mass = 0.0;
    for (j, (w, d)) in weights.iter().zip(&deriv).enumerate() {
        let r = j as f64 * h;
        let measure = omega * r.powi(nm1) * w;
        energy += measure * d * d;
        mass += measure * (1.0 + r * r).powf(-a * two_sharp);
    }
    if !energy.is_finite() || !mass.is_finite() || mass <= 0.0 {
        return Err(Error::QuadratureFailure(format!(
            "non-finite bubble integrals (energy {energy}, mass {mass})"
        )));
    }
    Ok(BubbleIntegrals { energy, mass })
}

/// Numerical Rayleigh quotient `∫(Δ^{k/2}u₀)² / (∫|u₀|^{2♯})^{2/2♯}` on the
/// truncated ball. Tends to [`inv_k0`] from below as the radius grows.
pub fn rayleigh_quotient_u0(
    p: SobolevParams,
    truncation_radius: f64,
    node_count: usize,
) -> Result<f64> {
    Ok(bubble_integrals(p, truncation_radius, node_count)?.quotient(p))
}
