//! Elementwise activations and their inverses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PilError, Result};
use crate::linalg::Matrix;

/// Margin kept between clipped inverse-activation inputs and the codomain
/// boundary.
pub const INVERSE_CLIP_DELTA: f64 = 1e-12;

/// A named scalar nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Linear,
    /// `1` if `x > threshold`, else `0`.
    Step { threshold: f64 },
    /// `exp(−x² / width²)`.
    Gaussian { width: f64 },
}

/// Result of [`Activation::apply_inverse`].
#[derive(Debug, Clone)]
pub struct Inverted {
    pub matrix: Matrix,
    /// Entries moved inward to stay `INVERSE_CLIP_DELTA` away from the boundary.
    pub clipped: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn step() -> Self {
        Activation::Step { threshold: 0.0 }
    }

    pub fn gaussian() -> Self {
        Activation::Gaussian { width: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
            Activation::Step { threshold } => {
                if x > threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gaussian { width } => (-(x * x) / (width * width)).exp(),
        }
    }

    /// Applies the activation to every entry.
    pub fn apply(&self, m: &Matrix) -> Matrix {
        m.map(|x| self.eval(x))
            .expect("activations map finite input to finite output")
    }

    pub fn is_invertible(&self) -> bool {
        matches!(
            self,
            Activation::Tanh | Activation::Sigmoid | Activation::Linear
        )
    }

    /// `None` for unbounded activations, otherwise the closed hull of the
    /// codomain.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Activation::Tanh => Some((-1.0, 1.0)),
            Activation::Sigmoid | Activation::Step { .. } | Activation::Gaussian { .. } => {
                Some((0.0, 1.0))
            }
            Activation::Linear => None,
        }
    }

    /// Elementwise inverse. Entries within [`INVERSE_CLIP_DELTA`] of the
    /// codomain boundary (or on it) are clipped inward and counted; entries
    /// strictly outside the codomain are a [`PilError::Domain`].
    pub fn apply_inverse(&self, m: &Matrix) -> Result<Inverted> {
        let (lo, hi) = match self {
            Activation::Linear => {
                return Ok(Inverted {
                    matrix: m.clone(),
                    clipped: 0,
                })
            }
            Activation::Tanh => (-1.0, 1.0),
            Activation::Sigmoid => (0.0, 1.0),
            other => {
                return Err(PilError::Domain(format!(
                    "{other} activation has no inverse"
                )))
            }
        };
        if let Some(bad) = m.iter().find(|v| *v < lo || *v > hi) {
            return Err(PilError::Domain(format!(
                "target {bad} lies outside the {self} codomain ({lo}, {hi}); \
                 its inverse would be complex or infinite"
            )));
        }
        let (clip_lo, clip_hi) = (lo + INVERSE_CLIP_DELTA, hi - INVERSE_CLIP_DELTA);
        let mut clipped = 0;
        let inverse = |t: f64| match self {
            Activation::Tanh => 0.5 * ((1.0 + t) / (1.0 - t)).ln(),
            _ => (t / (1.0 - t)).ln(),
        };
        let matrix = m.map(|t| {
            let c = t.clamp(clip_lo, clip_hi);
            if c != t {
                clipped += 1;
            }
            inverse(c)
        })?;
        Ok(Inverted { matrix, clipped })
    }

    fn validate(self) -> Result<Self> {
        match self {
            Activation::Gaussian { width } if !(width > 0.0 && width.is_finite()) => Err(
                PilError::Config(format!("gaussian width must be positive, got {width}")),
            ),
            Activation::Step { threshold } if !threshold.is_finite() => Err(PilError::Config(
                format!("step threshold must be finite, got {threshold}"),
            )),
            ok => Ok(ok),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => write!(f, "tanh"),
            Activation::Sigmoid => write!(f, "sigmoid"),
            Activation::Linear => write!(f, "linear"),
            Activation::Step { threshold } => write!(f, "step:{threshold}"),
            Activation::Gaussian { width } => write!(f, "gaussian:{width}"),
        }
    }
}

/// Parses `tanh`, `sigmoid`, `linear`, `step[:threshold]`, `gaussian[:width]`.
impl FromStr for Activation {
    type Err = PilError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.trim().split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s.trim(), None),
        };
        let param = param
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| PilError::Config(format!("bad activation parameter {p:?}")))
            })
            .transpose()?;
        let act = match (name.to_ascii_lowercase().as_str(), param) {
            ("tanh", None) => Activation::Tanh,
            ("sigmoid", None) => Activation::Sigmoid,
            ("linear", None) => Activation::Linear,
            ("step", p) => Activation::Step {
                threshold: p.unwrap_or(0.0),
            },
            ("gaussian", p) => Activation::Gaussian {
                width: p.unwrap_or(1.0),
            },
            _ => {
                return Err(PilError::Config(format!(
                    "unknown activation {s:?}; expected one of tanh, sigmoid, linear, step[:t], gaussian[:w]"
                )))
            }
        };
        act.validate()
    }
}
