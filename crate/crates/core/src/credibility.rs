//! Grim-trigger sustainability of the hard-budget path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Relative slack on the sustainability comparison; keeps ρ = ρ* itself
/// on the sustainable side despite rounding in ρ/(1−ρ).
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibilityReport {
    pub rho: f64,
    pub rho_star: f64,
    pub sustainable: bool,
    /// ω_T − ω_b, in index units per marginal type.
    pub deviation_gain_bound: f64,
    /// κ + γ.
    pub punishment_loss_bound: f64,
    /// α + κ + γ.
    pub conservative_bound_with_alpha: f64,
    /// Threshold implied by the α-inclusive punishment bound.
    pub rho_star_with_alpha: f64,
    /// ρ/(1−ρ)·(κ+γ) − (ω_T − ω_b).
    pub slack: f64,
}

fn threshold(gain: f64, loss: f64) -> f64 {
    if gain <= 0.0 {
        0.0
    } else {
        gain / (loss + gain)
    }
}

/// ρ* = (ω_T−ω_b)/(κ+γ+ω_T−ω_b), or 0 when ω_T ≤ ω_b.
pub fn rho_star(p: &ParamSet) -> f64 {
    threshold(p.omega_t - p.omega_b, p.kappa + p.gamma)
}

/// Same threshold with α+κ+γ as the punishment loss.
pub fn rho_star_with_alpha(p: &ParamSet) -> f64 {
    threshold(p.omega_t - p.omega_b, p.alpha + p.kappa + p.gamma)
}

/// Evaluates ω_T − ω_b ≤ ρ/(1−ρ)·(κ+γ); equality counts as sustainable.
pub fn grim_trigger_sustainable(p: &ParamSet, rho: f64) -> Result<CredibilityReport> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0,1), got {rho}")));
    }
    let gain = p.omega_t - p.omega_b;
    let loss = p.kappa + p.gamma;
    let slack = rho / (1.0 - rho) * loss - gain;
    let scale = gain.abs().max(loss).max(1.0);
    Ok(CredibilityReport {
        rho,
        rho_star: rho_star(p),
        sustainable: slack >= -BOUNDARY_TOL * scale,
        deviation_gain_bound: gain,
        punishment_loss_bound: loss,
        conservative_bound_with_alpha: p.alpha + loss,
        rho_star_with_alpha: rho_star_with_alpha(p),
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(wt: f64, wb: f64, kappa: f64, gamma: f64) -> ParamSet {
        ParamSet {
            omega_t: wt,
            omega_b: wb,
            kappa,
            gamma,
            ..ParamSet::default()
        }
    }

    #[test]
    fn rho_star_examples() {
        assert_eq!(rho_star(&p(2.0, 1.0, 1.0, 1.0)), 1.0 / 3.0);
        assert_eq!(rho_star(&p(1.0, 1.0, 1.0, 1.0)), 0.0);
        assert_eq!(rho_star(&p(0.5, 1.0, 1.0, 1.0)), 0.0);
        assert!(rho_star(&p(2.0, 1.0, 1e-12, 1e-12)) > 1.0 - 1e-11);
    }

    #[test]
    fn sustainability_examples() {
        let q = p(2.0, 1.0, 1.0, 1.0);
        let r = grim_trigger_sustainable(&q, 0.5).unwrap();
        assert!(r.sustainable);
        assert!((r.slack - 1.0).abs() < 1e-15);
        let r = grim_trigger_sustainable(&q, 1.0 / 3.0).unwrap();
        assert!(r.sustainable);
        assert!(r.slack.abs() < 1e-12);
        let r = grim_trigger_sustainable(&q, 0.2).unwrap();
        assert!(!r.sustainable);
        assert!((r.slack + 0.5).abs() < 1e-15);
        assert!(grim_trigger_sustainable(&q, 1.0).is_err());
        assert!(grim_trigger_sustainable(&q, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn iff_rho_star(wt in 0.1..5.0f64, wb in 0.1..5.0f64, kappa in 0.01..5.0f64, gamma in 0.01..5.0f64, rho in 0.001..0.999f64) {
            let q = p(wt, wb, kappa, gamma);
            let r = grim_trigger_sustainable(&q, rho).unwrap();
            prop_assert_eq!(r.sustainable, rho >= rho_star(&q));
        }

        #[test]
        fn conservative_threshold_is_lower(wt in 0.1..5.0f64, wb in 0.1..5.0f64, alpha in 0.01..5.0f64, kappa in 0.01..5.0f64, gamma in 0.01..5.0f64) {
            let q = ParamSet { alpha, ..p(wt, wb, kappa, gamma) };
            prop_assert!(rho_star_with_alpha(&q) <= rho_star(&q));
        }

        #[test]
        fn comparative_signs(wt in 1.1..5.0f64, wb in 0.1..1.0f64, kappa in 0.1..5.0f64, gamma in 0.1..5.0f64) {
            let h = 1e-6;
            let q = p(wt, wb, kappa, gamma);
            let r = rho_star(&q);
            prop_assert!(rho_star(&p(wt + h, wb, kappa, gamma)) > r);
            prop_assert!(rho_star(&p(wt, wb + h, kappa, gamma)) < r);
            prop_assert!(rho_star(&p(wt, wb, kappa + h, gamma)) < r);
            prop_assert!(rho_star(&p(wt, wb, kappa, gamma + h)) < r);
        }
    }
}
