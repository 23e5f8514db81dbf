//! Own-source revenue technology R(e, θ) and the reduced cost C0(θ).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `intercept + slope * θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    pub intercept: f64,
    #[serde(default)]
    pub slope: f64,
}

impl Affine {
    pub const fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    pub fn at(&self, theta: f64) -> f64 {
        self.intercept + self.slope * theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevenueKind {
    /// a(θ)·√e
    Sqrt,
    /// a(θ)·ln(1+e)
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffortTechnology {
    #[serde(default = "default_kind")]
    pub revenue: RevenueKind,
    /// Revenue scale a(θ) > 0.
    #[serde(default = "default_scale")]
    pub scale: Affine,
    /// Pre-bailout resource block C0(θ) left after service, capital and
    /// debt choices are optimized out.
    #[serde(default = "default_base_cost")]
    pub base_cost: Affine,
}

fn default_kind() -> RevenueKind {
    RevenueKind::Sqrt
}

fn default_scale() -> Affine {
    Affine::new(1.0, 0.0)
}

fn default_base_cost() -> Affine {
    Affine::new(10.0, 1.0)
}

impl Default for EffortTechnology {
    fn default() -> Self {
        Self {
            revenue: default_kind(),
            scale: default_scale(),
            base_cost: default_base_cost(),
        }
    }
}

impl EffortTechnology {
    pub fn sqrt(scale: f64, base_cost: Affine) -> Self {
        Self {
            revenue: RevenueKind::Sqrt,
            scale: Affine::new(scale, 0.0),
            base_cost,
        }
    }

    /// Checks a(θ) > 0 at the given points.
    pub fn validate_on(&self, thetas: &[f64]) -> Result<()> {
        if !(self.scale.intercept.is_finite()
            && self.scale.slope.is_finite()
            && self.base_cost.intercept.is_finite()
            && self.base_cost.slope.is_finite())
        {
            return Err(Error::InvalidTechnology("coefficients must be finite".into()));
        }
        for &t in thetas {
            if !(self.scale.at(t) > 0.0) {
                return Err(Error::InvalidTechnology(format!("revenue scale must be > 0, got {} at theta={t}", self.scale.at(t))));
            }
        }
        Ok(())
    }

    pub fn revenue(&self, effort: f64, theta: f64) -> f64 {
        let a = self.scale.at(theta);
        let e = effort.max(0.0);
        match self.revenue {
            RevenueKind::Sqrt => a * e.sqrt(),
            RevenueKind::Log => a * e.ln_1p(),
        }
    }

    /// R'_e(e, θ); `+∞` at e = 0 for the square-root family.
    pub fn marginal_revenue(&self, effort: f64, theta: f64) -> f64 {
        let a = self.scale.at(theta);
        let e = effort.max(0.0);
        match self.revenue {
            RevenueKind::Sqrt => a / (2.0 * e.sqrt()),
            RevenueKind::Log => a / (1.0 + e),
        }
    }

    pub fn base_cost(&self, theta: f64) -> f64 {
        self.base_cost.at(theta)
    }
}
