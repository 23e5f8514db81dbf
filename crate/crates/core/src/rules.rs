//! The t=2 signal-based payout rule β(Ĝ) and the realized-payout convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalRule {
    /// β(Ĝ) = level·1{Ĝ ≥ location}, with level ≤ location.
    Threshold { location: f64, level: f64 },
    /// β(Ĝ) = clamp(slope·(Ĝ − kink), 0, ceiling).
    LinearBranch { kink: f64, slope: f64, ceiling: f64 },
}

impl SignalRule {
    pub fn threshold(location: f64, level: f64) -> Result<Self> {
        let r = SignalRule::Threshold { location, level };
        r.validate()?;
        Ok(r)
    }

    pub fn linear(kink: f64, slope: f64, ceiling: f64) -> Result<Self> {
        let r = SignalRule::LinearBranch { kink, slope, ceiling };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidRule(m.to_string()));
        match *self {
            SignalRule::Threshold { location, level } => {
                if !(location.is_finite() && level.is_finite()) {
                    return bad("threshold location and level must be finite");
                }
                if location < 0.0 {
                    return bad("threshold location must be >= 0");
                }
                if level < 0.0 {
                    return bad("threshold level must be >= 0");
                }
                if level > location {
                    return bad("threshold level must not exceed location (beta(G) <= G)");
                }
            }
            SignalRule::LinearBranch { kink, slope, ceiling } => {
                if !(kink.is_finite() && slope.is_finite() && ceiling.is_finite()) {
                    return bad("linear-branch coefficients must be finite");
                }
                if kink < 0.0 {
                    return bad("linear-branch kink must be >= 0");
                }
                if !(slope > 0.0 && slope < 1.0) {
                    return bad("linear-branch slope must lie in (0,1)");
                }
                if ceiling < 0.0 {
                    return bad("linear-branch ceiling must be >= 0");
                }
            }
        }
        Ok(())
    }

    /// β(Ĝ).
    pub fn payout(&self, g_hat: f64) -> f64 {
        match *self {
            SignalRule::Threshold { location, level } => {
                if g_hat >= location {
                    level
                } else {
                    0.0
                }
            }
            SignalRule::LinearBranch { kink, slope, ceiling } => (slope * (g_hat - kink)).clamp(0.0, ceiling),
        }
    }

    /// β'(Ĝ); zero on flat pieces and at kinks.
    pub fn slope(&self, g_hat: f64) -> f64 {
        if self.in_linear_range(g_hat) {
            match *self {
                SignalRule::LinearBranch { slope, .. } => slope,
                SignalRule::Threshold { .. } => 0.0,
            }
        } else {
            0.0
        }
    }

    /// Whether Ĝ lies strictly inside the rising branch.
    pub fn in_linear_range(&self, g_hat: f64) -> bool {
        match *self {
            SignalRule::Threshold { .. } => false,
            SignalRule::LinearBranch { kink, slope, ceiling } => {
                let x = slope * (g_hat - kink);
                x > 0.0 && x < ceiling
            }
        }
    }

    /// Largest value β can take.
    pub fn sup(&self) -> f64 {
        match *self {
            SignalRule::Threshold { level, .. } => level,
            SignalRule::LinearBranch { ceiling, .. } => ceiling,
        }
    }

    pub fn is_threshold(&self) -> bool {
        matches!(self, SignalRule::Threshold { .. })
    }
}

/// p = 1{Ĝ>0}·min{β(Ĝ), cap, Ĝ}.
pub fn realized_payout(rule: &SignalRule, cap: f64, g_hat: f64) -> f64 {
    if g_hat > 0.0 {
        rule.payout(g_hat).min(cap).min(g_hat).max(0.0)
    } else {
        0.0
    }
}

/// Payout rule chosen at t=2 without commitment, under the quadratic
/// residual-gap loss with curvature χ:
/// β(Ĝ) = clamp((χĜ − α)/(κ+χ), 0, b̄).
pub fn discretionary_rule(p: &ParamSet) -> SignalRule {
    SignalRule::LinearBranch {
        kink: p.alpha / p.chi,
        slope: p.chi / (p.kappa + p.chi),
        ceiling: p.b_bar,
    }
}
