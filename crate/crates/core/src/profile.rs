//! Named analytic radial profiles for coefficients and weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `Σ cⱼ rʲ`, lowest degree first.
    Polynomial {
        coefficients: Vec<f64>,
    },
    /// `base + amplitude · exp(−((r − center)/width)²)`.
    Gaussian {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    pub fn zero() -> Self {
        Profile::constant(0.0)
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * r + c)
            }
            Profile::Gaussian {
                base,
                amplitude,
                width,
                center,
            } => {
                let t = (r - center) / width;
                base + amplitude * (-t * t).exp()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Constant { value } => *value == 0.0,
            Profile::Polynomial { coefficients } => coefficients.iter().all(|c| *c == 0.0),
            Profile::Gaussian {
                base, amplitude, ..
            } => *base == 0.0 && *amplitude == 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            Profile::Constant { value } => value.is_finite(),
            Profile::Polynomial { coefficients } => {
                !coefficients.is_empty() && coefficients.iter().all(|c| c.is_finite())
            }
            Profile::Gaussian {
                base,
                amplitude,
                width,
                center,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "gaussian width {width} must be > 0"
                    )));
                }
                base.is_finite() && amplitude.is_finite() && width.is_finite() && center.is_finite()
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("profile {self:?} is not finite")))
        }
    }
}
