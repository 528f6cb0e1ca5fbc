//! The multiplicative nonlinearity `sigma(x, h)`.
//!
//! Every variant factors as `sigma(x, h) = weight(h) * g(x)`, which the solver
//! exploits when building compensator quadratures. `Linear` is the globally
//! Lipschitz class, `PowerLaw` the superlinear lower-bound class, and
//! `Truncated` is the level-N cutoff used for local-existence probes: it keeps
//! `sigma` unchanged for `x <= N` and freezes it at `sigma(N, h)` above.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SheError};
use crate::noise::WeightFn;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SigmaSpec {
    /// `sigma(x, h) = scale * weight(h) * x`.
    Linear { weight: WeightFn, scale: f64 },
    /// `sigma(x, h) = scale * weight(h) * |x|^exponent`, optionally carrying
    /// the sign of `x`.
    PowerLaw {
        weight: WeightFn,
        exponent: f64,
        scale: f64,
        signed: bool,
    },
    Truncated { inner: Box<SigmaSpec>, level: f64 },
}

impl SigmaSpec {
    pub fn eval(&self, x: f64, h: f64) -> f64 {
        self.weight().eval(h) * self.state_part(x)
    }

    /// The `g(x)` factor of `sigma(x, h) = weight(h) g(x)`.
    pub fn state_part(&self, x: f64) -> f64 {
        match self {
            SigmaSpec::Linear { scale, .. } => scale * x,
            SigmaSpec::PowerLaw {
                exponent,
                scale,
                signed,
                ..
            } => {
                let mag = scale * x.abs().powf(*exponent);
                if *signed {
                    mag * x.signum()
                } else {
                    mag
                }
            }
            SigmaSpec::Truncated { inner, level } => inner.state_part(x.min(*level)),
        }
    }

    /// The scalar prefactor `scale` of the state part.
    pub fn state_scale(&self) -> f64 {
        match self {
            SigmaSpec::Linear { scale, .. } | SigmaSpec::PowerLaw { scale, .. } => *scale,
            SigmaSpec::Truncated { inner, .. } => inner.state_scale(),
        }
    }

    pub fn weight(&self) -> &WeightFn {
        match self {
            SigmaSpec::Linear { weight, .. } | SigmaSpec::PowerLaw { weight, .. } => weight,
            SigmaSpec::Truncated { inner, .. } => inner.weight(),
        }
    }

    /// Growth exponent of the state part (1 for linear).
    pub fn exponent(&self) -> f64 {
        match self {
            SigmaSpec::Linear { .. } => 1.0,
            SigmaSpec::PowerLaw { exponent, .. } => *exponent,
            SigmaSpec::Truncated { inner, .. } => inner.exponent(),
        }
    }

    pub fn is_superlinear(&self) -> bool {
        self.exponent() > 1.0
    }

    /// Level-N cutoff: globally Lipschitz by construction.
    pub fn truncate(&self, level: f64) -> Result<SigmaSpec> {
        if level <= 0.0 {
            return Err(SheError::Domain(format!(
                "truncation level must be positive, got {level}"
            )));
        }
        Ok(SigmaSpec::Truncated {
            inner: Box::new(self.clone()),
            level,
        })
    }

    /// Bound on the Lipschitz constant of the state part after truncation at
    /// `level`: for `|x|^b` this is `b * level^{b-1} * scale`.
    pub fn truncated_lipschitz_bound(&self, level: f64) -> f64 {
        match self {
            SigmaSpec::Linear { scale, .. } => scale.abs(),
            SigmaSpec::PowerLaw {
                exponent, scale, ..
            } => scale.abs() * exponent * level.powf(exponent - 1.0),
            SigmaSpec::Truncated { inner, level: n } => {
                inner.truncated_lipschitz_bound(level.min(*n))
            }
        }
    }
}
