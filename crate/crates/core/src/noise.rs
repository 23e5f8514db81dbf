//! Fiscal shock ε and audit noise η.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width, in standard deviations, of the window used for density checks.
pub const TRUNCATION_SDS: f64 = 8.0;

/// A mean-zero scalar noise law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shock {
    /// Degenerate at zero. Allowed for the fiscal shock only.
    None,
    Normal { sd: f64 },
    Logistic { scale: f64 },
}

impl Shock {
    pub fn sd(&self) -> f64 {
        match self {
            Shock::None => 0.0,
            Shock::Normal { sd } => *sd,
            Shock::Logistic { scale } => scale * std::f64::consts::PI / 3f64.sqrt(),
        }
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, Shock::None)
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            Shock::None => 0.0,
            Shock::Normal { sd } => {
                let z = x / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            Shock::Logistic { scale } => {
                let e = (-(x.abs()) / scale).exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Shock::None => 0.0,
            Shock::Normal { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            Shock::Logistic { scale } => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                scale * (u / (1.0 - u)).ln()
            }
        }
    }

    fn check(&self, name: &str, allow_none: bool) -> Result<()> {
        let ok = match self {
            Shock::None => allow_none,
            Shock::Normal { sd } => sd.is_finite() && *sd > 0.0,
            Shock::Logistic { scale } => scale.is_finite() && *scale > 0.0,
        };
        if ok {
            Ok(())
        } else if matches!(self, Shock::None) {
            Err(Error::InvalidNoise(format!("{name} needs a continuous density")))
        } else {
            Err(Error::InvalidNoise(format!("{name} scale must be finite and > 0")))
        }
    }
}

/// Shock and audit-noise laws. η must have a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default = "default_epsilon")]
    pub epsilon: Shock,
    #[serde(default = "default_eta")]
    pub eta: Shock,
}

fn default_epsilon() -> Shock {
    Shock::Normal { sd: 0.1 }
}

fn default_eta() -> Shock {
    Shock::Normal { sd: 0.5 }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            eta: default_eta(),
        }
    }
}

impl NoiseModel {
    pub fn new(epsilon: Shock, eta: Shock) -> Result<Self> {
        let m = Self { epsilon, eta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.epsilon.check("epsilon", true)?;
        self.eta.check("eta", false)
    }

    /// f_η.
    pub fn eta_density(&self, x: f64) -> f64 {
        self.eta.density(x)
    }

    /// Integral of f_η over ±8 sd by composite Simpson with `panels` panels.
    pub fn eta_mass_on_window(&self, panels: usize) -> f64 {
        let w = TRUNCATION_SDS * self.eta.sd();
        let n = panels + panels % 2;
        let h = 2.0 * w / n as f64;
        let mut s = self.eta_density(-w) + self.eta_density(w);
        for i in 1..n {
            let x = -w + h * i as f64;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * self.eta_density(x);
        }
        s * h / 3.0
    }
}
