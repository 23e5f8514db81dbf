//! Distributions of the fiscal-need type θ.
//!
//! Every family exposes density, CDF, survivor and hazard. Families with a
//! finite upper support point have a hazard that diverges there, so their
//! supremum hazard is reported as `+∞`; the unbounded families are what make
//! the no-bailout regime attainable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points on the monotonicity validation grid.
pub const VALIDATION_GRID: usize = 512;
/// Slack allowed when checking that the hazard is nondecreasing.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Quantile used as the right end of computational grids on unbounded support.
pub const UNBOUNDED_GRID_QUANTILE: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    Uniform {
        lo: f64,
        hi: f64,
    },
    TruncatedExponential {
        rate: f64,
        lo: f64,
        hi: f64,
    },
    ExponentialUnbounded {
        rate: f64,
        #[serde(default)]
        lo: f64,
    },
    /// Support `[0, ∞)`. Hazard rises then falls when `shape > 1`.
    LogLogistic {
        scale: f64,
        shape: f64,
    },
    /// Piecewise-linear density through the given nodes, normalized by the
    /// trapezoid rule.
    Tabulated {
        thetas: Vec<f64>,
        densities: Vec<f64>,
    },
    /// Piecewise-linear hazard through the given nodes, constant beyond the
    /// last node. Support `[thetas[0], ∞)`.
    TabulatedHazard {
        thetas: Vec<f64>,
        hazards: Vec<f64>,
    },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Uniform { .. } => "uniform",
            Family::TruncatedExponential { .. } => "truncated-exponential",
            Family::ExponentialUnbounded { .. } => "exponential-unbounded",
            Family::LogLogistic { .. } => "log-logistic",
            Family::Tabulated { .. } => "tabulated",
            Family::TabulatedHazard { .. } => "tabulated-hazard",
        }
    }
}

/// A validated type distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    family: Family,
    ifr_claimed: bool,
    /// Cumulative integral at each node: probability mass for `Tabulated`,
    /// cumulative hazard for `TabulatedHazard`. Empty otherwise.
    cumulative: Vec<f64>,
}

impl TypeDistribution {
    pub fn new(family: Family, ifr_claimed: bool) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        let mut family = family;
        let mut cumulative = Vec::new();
        match &mut family {
            Family::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("uniform needs finite lo < hi, got [{lo}, {hi}]"));
                }
            }
            Family::TruncatedExponential { rate, lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("truncated-exponential needs lo < hi, got [{lo}, {hi}]"));
                }
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("rate must be > 0, got {rate}"));
                }
            }
            Family::ExponentialUnbounded { rate, lo } => {
                if !(rate.is_finite() && *rate > 0.0 && lo.is_finite()) {
                    return bad(format!("exponential needs rate > 0 and finite lo, got {rate}, {lo}"));
                }
            }
            Family::LogLogistic { scale, shape } => {
                if !(scale.is_finite() && *scale > 0.0 && shape.is_finite() && *shape > 0.0) {
                    return bad(format!("log-logistic needs scale, shape > 0, got {scale}, {shape}"));
                }
            }
            Family::Tabulated { thetas, densities } => {
                check_nodes(thetas, densities.len())?;
                let n = densities.len();
                if densities.iter().any(|d| !d.is_finite() || *d < 0.0) {
                    return bad("densities must be finite and >= 0".into());
                }
                if densities[1..n - 1].iter().any(|d| *d <= 0.0) {
                    return bad("density must be > 0 at interior nodes".into());
                }
                let mut acc = vec![0.0; n];
                for j in 1..n {
                    acc[j] = acc[j - 1] + 0.5 * (densities[j - 1] + densities[j]) * (thetas[j] - thetas[j - 1]);
                }
                let total = acc[n - 1];
                if !(total > 0.0) {
                    return bad("density integrates to zero".into());
                }
                for d in densities.iter_mut() {
                    *d /= total;
                }
                for a in acc.iter_mut() {
                    *a /= total;
                }
                acc[n - 1] = 1.0;
                cumulative = acc;
            }
            Family::TabulatedHazard { thetas, hazards } => {
                check_nodes(thetas, hazards.len())?;
                if hazards.iter().any(|h| !h.is_finite() || *h <= 0.0) {
                    return bad("hazards must be finite and > 0".into());
                }
                let n = hazards.len();
                let mut acc = vec![0.0; n];
                for j in 1..n {
                    acc[j] = acc[j - 1] + 0.5 * (hazards[j - 1] + hazards[j]) * (thetas[j] - thetas[j - 1]);
                }
                cumulative = acc;
            }
        }
        let d = Self {
            family,
            ifr_claimed,
            cumulative,
        };
        if ifr_claimed {
            if let Some(theta) = d.first_hazard_drop() {
                return Err(Error::InvalidDistribution(format!(
                    "IFR claimed but hazard decreases near theta={theta}"
                )));
            }
        }
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Family::Uniform { lo, hi }, true)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Family::ExponentialUnbounded { rate, lo: 0.0 }, true)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn ifr_claimed(&self) -> bool {
        self.ifr_claimed
    }

    /// `(theta_lo, theta_hi)`; `theta_hi` is `+∞` for unbounded families.
    pub fn support(&self) -> (f64, f64) {
        match &self.family {
            Family::Uniform { lo, hi } | Family::TruncatedExponential { lo, hi, .. } => (*lo, *hi),
            Family::ExponentialUnbounded { lo, .. } => (*lo, f64::INFINITY),
            Family::LogLogistic { .. } => (0.0, f64::INFINITY),
            Family::Tabulated { thetas, .. } => (thetas[0], thetas[thetas.len() - 1]),
            Family::TabulatedHazard { thetas, .. } => (thetas[0], f64::INFINITY),
        }
    }

    /// Right end of computational grids: the upper support point when
    /// finite, otherwise a high quantile (or the last node of a tabulated
    /// hazard).
    pub fn grid_upper(&self) -> f64 {
        match &self.family {
            Family::TabulatedHazard { thetas, .. } => thetas[thetas.len() - 1],
            _ => {
                let (_, hi) = self.support();
                if hi.is_finite() {
                    hi
                } else {
                    self.quantile(UNBOUNDED_GRID_QUANTILE)
                }
            }
        }
    }

    pub fn density(&self, theta: f64) -> f64 {
        let (lo, hi) = self.support();
        if theta < lo || theta > hi {
            return 0.0;
        }
        match &self.family {
            Family::Uniform { lo, hi } => 1.0 / (hi - lo),
            Family::TruncatedExponential { rate, lo, hi } => {
                rate * (-rate * (theta - lo)).exp() / (1.0 - (-rate * (hi - lo)).exp())
            }
            Family::ExponentialUnbounded { rate, lo } => rate * (-rate * (theta - lo)).exp(),
            Family::LogLogistic { scale, shape } => {
                if theta == 0.0 {
                    return if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    };
                }
                let u = theta / scale;
                let uk = u.powf(*shape);
                (shape / scale) * u.powf(shape - 1.0) / ((1.0 + uk) * (1.0 + uk))
            }
            Family::Tabulated { thetas, densities } => {
                let (j, t) = locate(thetas, theta);
                let w = t / (thetas[j + 1] - thetas[j]);
                densities[j] + w * (densities[j + 1] - densities[j])
            }
            Family::TabulatedHazard { .. } => self.tab_hazard(theta) * self.survivor(theta),
        }
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        let (lo, hi) = self.support();
        if theta <= lo {
            return 0.0;
        }
        if theta >= hi {
            return 1.0;
        }
        match &self.family {
            Family::Uniform { lo, hi } => (theta - lo) / (hi - lo),
            Family::Tabulated { thetas, densities } => {
                let (j, t) = locate(thetas, theta);
                let dx = thetas[j + 1] - thetas[j];
                let v = self.cumulative[j] + densities[j] * t + (densities[j + 1] - densities[j]) * t * t / (2.0 * dx);
                v.clamp(0.0, 1.0)
            }
            _ => 1.0 - self.survivor(theta),
        }
    }

    /// F̄(θ) = 1 − F(θ).
    pub fn survivor(&self, theta: f64) -> f64 {
        let (lo, hi) = self.support();
        if theta <= lo {
            return 1.0;
        }
        if theta >= hi {
            return 0.0;
        }
        match &self.family {
            Family::TruncatedExponential { rate, lo, hi } => {
                let num = (-rate * (theta - lo)).exp() - (-rate * (hi - lo)).exp();
                (num / (1.0 - (-rate * (hi - lo)).exp())).max(0.0)
            }
            Family::ExponentialUnbounded { rate, lo } => (-rate * (theta - lo)).exp(),
            Family::LogLogistic { scale, shape } => 1.0 / (1.0 + (theta / scale).powf(*shape)),
            Family::TabulatedHazard { .. } => (-self.cumulative_hazard(theta)).exp(),
            Family::Uniform { .. } | Family::Tabulated { .. } => 1.0 - self.cdf(theta),
        }
    }

    /// h(θ) = f(θ)/F̄(θ). Errors outside the support or where F̄(θ) = 0.
    pub fn hazard(&self, theta: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !theta.is_finite() || theta < lo || theta > hi {
            return Err(Error::HazardDomain {
                theta,
                reason: "outside the support",
            });
        }
        let h = match &self.family {
            Family::Uniform { hi, .. } => {
                if theta >= *hi {
                    f64::NAN
                } else {
                    1.0 / (hi - theta)
                }
            }
            Family::TruncatedExponential { rate, hi, .. } => {
                if theta >= *hi {
                    f64::NAN
                } else {
                    rate / (1.0 - (-rate * (hi - theta)).exp())
                }
            }
            Family::ExponentialUnbounded { rate, .. } => *rate,
            Family::LogLogistic { scale, shape } => {
                if theta == 0.0 {
                    self.density(0.0)
                } else {
                    let u = theta / scale;
                    (shape / scale) * u.powf(shape - 1.0) / (1.0 + u.powf(*shape))
                }
            }
            Family::Tabulated { .. } => {
                let s = self.survivor(theta);
                if s > 0.0 {
                    self.density(theta) / s
                } else {
                    f64::NAN
                }
            }
            Family::TabulatedHazard { .. } => self.tab_hazard(theta),
        };
        if h.is_nan() {
            return Err(Error::HazardDomain {
                theta,
                reason: "survivor function is zero",
            });
        }
        Ok(h)
    }

    /// Hazard with `+∞` where the survivor vanishes (the top of a compact support).
    pub fn hazard_or_inf(&self, theta: f64) -> f64 {
        match self.hazard(theta) {
            Ok(h) => h,
            Err(Error::HazardDomain {
                reason: "survivor function is zero",
                ..
            }) => f64::INFINITY,
            Err(_) => f64::NAN,
        }
    }

    /// dh/dθ; analytic where the family allows it, central differences otherwise.
    pub fn hazard_derivative(&self, theta: f64) -> Result<f64> {
        self.hazard(theta)?;
        Ok(match &self.family {
            Family::Uniform { hi, .. } => 1.0 / ((hi - theta) * (hi - theta)),
            Family::TruncatedExponential { rate, hi, .. } => {
                let e = (-rate * (hi - theta)).exp();
                rate * rate * e / ((1.0 - e) * (1.0 - e))
            }
            Family::ExponentialUnbounded { .. } => 0.0,
            Family::LogLogistic { scale, shape } => {
                let u = theta / scale;
                let uk = u.powf(*shape);
                (shape / (scale * scale)) * u.powf(shape - 2.0) * ((shape - 1.0) - uk) / ((1.0 + uk) * (1.0 + uk))
            }
            Family::Tabulated { .. } | Family::TabulatedHazard { .. } => {
                let (lo, hi) = self.support();
                let step = 1e-6 * (self.grid_upper() - lo).max(1e-300);
                let a = (theta - step).max(lo);
                let b = if hi.is_finite() { (theta + step).min(hi - step * 1e-3) } else { theta + step };
                (self.hazard(b)? - self.hazard(a)?) / (b - a)
            }
        })
    }

    /// Supremum of the hazard over the support; `+∞` when it diverges.
    pub fn sup_hazard(&self) -> f64 {
        match &self.family {
            // Any density on a compact support has F̄ → 0 at the top, so h is unbounded.
            Family::Uniform { .. } | Family::TruncatedExponential { .. } | Family::Tabulated { .. } => f64::INFINITY,
            Family::ExponentialUnbounded { rate, .. } => *rate,
            Family::LogLogistic { scale, shape } => {
                if *shape < 1.0 {
                    f64::INFINITY
                } else if *shape == 1.0 {
                    1.0 / scale
                } else {
                    (shape - 1.0).powf(1.0 - 1.0 / shape) / scale
                }
            }
            Family::TabulatedHazard { hazards, .. } => hazards.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let (lo, hi) = self.support();
        match &self.family {
            Family::Uniform { lo, hi } => lo + p * (hi - lo),
            Family::TruncatedExponential { rate, lo, hi } => {
                lo - (1.0 - p * (1.0 - (-rate * (hi - lo)).exp())).ln() / rate
            }
            Family::ExponentialUnbounded { rate, lo } => lo - (1.0 - p).ln() / rate,
            Family::LogLogistic { scale, shape } => scale * (p / (1.0 - p)).powf(1.0 / shape),
            Family::Tabulated { .. } => bisect_monotone(|x| self.cdf(x) - p, lo, hi),
            Family::TabulatedHazard { thetas, hazards } => {
                let target = -(1.0 - p).ln();
                let n = thetas.len();
                if target >= self.cumulative[n - 1] {
                    thetas[n - 1] + (target - self.cumulative[n - 1]) / hazards[n - 1]
                } else {
                    bisect_monotone(|x| self.cumulative_hazard(x) - target, thetas[0], thetas[n - 1])
                }
            }
        }
    }

    /// `n` equally spaced points from the lower support point to [`grid_upper`](Self::grid_upper).
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let (lo, _) = self.support();
        linspace(lo, self.grid_upper(), n)
    }

    /// Hazard on the validation grid, which stops one step short of the upper end.
    pub fn validation_grid(&self) -> Vec<f64> {
        let (lo, _) = self.support();
        let hi = self.grid_upper();
        (0..VALIDATION_GRID)
            .map(|k| lo + (hi - lo) * k as f64 / VALIDATION_GRID as f64)
            .collect()
    }

    /// First validation-grid point where the hazard drops by more than the slack.
    pub fn first_hazard_drop(&self) -> Option<f64> {
        let grid = self.validation_grid();
        let h: Vec<f64> = grid.iter().map(|&t| self.hazard_or_inf(t)).collect();
        h.windows(2)
            .position(|w| w[1] < w[0] - MONOTONE_SLACK)
            .map(|k| grid[k + 1])
    }

    pub fn is_ifr(&self) -> bool {
        self.first_hazard_drop().is_none()
    }

    fn tab_hazard(&self, theta: f64) -> f64 {
        let Family::TabulatedHazard { thetas, hazards } = &self.family else {
            unreachable!()
        };
        let n = thetas.len();
        if theta >= thetas[n - 1] {
            return hazards[n - 1];
        }
        let (j, t) = locate(thetas, theta);
        hazards[j] + t / (thetas[j + 1] - thetas[j]) * (hazards[j + 1] - hazards[j])
    }

    fn cumulative_hazard(&self, theta: f64) -> f64 {
        let Family::TabulatedHazard { thetas, hazards } = &self.family else {
            unreachable!()
        };
        let n = thetas.len();
        if theta >= thetas[n - 1] {
            return self.cumulative[n - 1] + hazards[n - 1] * (theta - thetas[n - 1]);
        }
        let (j, t) = locate(thetas, theta);
        let dx = thetas[j + 1] - thetas[j];
        self.cumulative[j] + hazards[j] * t + (hazards[j + 1] - hazards[j]) * t * t / (2.0 * dx)
    }
}

fn check_nodes(thetas: &[f64], values: usize) -> Result<()> {
    if thetas.len() < 2 || thetas.len() != values {
        return Err(Error::InvalidDistribution(format!(
            "tabulated family needs >= 2 nodes with matching values ({} thetas, {} values)",
            thetas.len(),
            values
        )));
    }
    if thetas.iter().any(|t| !t.is_finite()) || thetas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidDistribution("thetas must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Segment index `j` with `thetas[j] <= theta < thetas[j+1]` (last segment at the top) and the offset into it.
fn locate(thetas: &[f64], theta: f64) -> (usize, f64) {
    let n = thetas.len();
    let j = thetas.partition_point(|&x| x <= theta).clamp(1, n - 1) - 1;
    (j, theta - thetas[j])
}

fn bisect_monotone(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * (i as f64) / last })
                .collect()
        }
    }
}
