//! Independent checks of the solver: a brute-force leader program, the
//! incentive/participation/monotonicity audit, the envelope condition and
//! the cap–min derivative identities.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::linspace;
use crate::draws::{means_of, rng_for, stream_id, Estimate, Purpose, ShockDraws};
use crate::error::{Error, Result};
use crate::game::{effort_for_type, rule_payout_samples};
use crate::mechanism::MechanismSolution;
use crate::model::Model;
use crate::rules::SignalRule;

/// Multiple of the pooled standard error allowed in the incentive and envelope checks.
pub const SE_MULTIPLE: f64 = 5.0;
/// Absolute slack added to every tolerance.
pub const ABS_TOL: f64 = 1e-9;
/// Step of the default cap grid for the brute-force leader.
pub const CAP_STEP: f64 = 0.01;

/// Cap grid 0, 0.01, …, b̄.
pub fn default_cap_grid(b_bar: f64) -> Vec<f64> {
    let n = (b_bar / CAP_STEP).round() as usize + 1;
    linspace(0.0, b_bar, n.max(2))
}

/// E[min{Y,b}] and E[min{Y,b}²] from sorted samples with prefix sums.
struct SortedPayouts {
    y: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl SortedPayouts {
    fn new(mut y: Vec<f64>) -> Self {
        y.sort_by(f64::total_cmp);
        let mut s1 = Vec::with_capacity(y.len() + 1);
        let mut s2 = Vec::with_capacity(y.len() + 1);
        s1.push(0.0);
        s2.push(0.0);
        for &v in &y {
            s1.push(s1.last().unwrap() + v);
            s2.push(s2.last().unwrap() + v * v);
        }
        Self { y, s1, s2 }
    }

    fn moments(&self, b: f64) -> (f64, f64) {
        let n = self.y.len() as f64;
        let k = self.y.partition_point(|&v| v < b);
        let above = n - k as f64;
        ((self.s1[k] + b * above) / n, (self.s2[k] + b * b * above) / n)
    }
}

/// Pointwise minimizer of the virtual objective
/// Φ_θ(b) = E[α·m + (κ/2)·m²] − (γω_b/ω_T)·h(θ)·E[m], m = min{β(Ĝ), b},
/// over `cap_grid`, ties to the smaller cap. Effort is solved at the
/// largest cap on the grid.
pub fn brute_force_leader(model: &Model, thetas: &[f64], cap_grid: &[f64], draws: usize, seed: u64) -> Result<Vec<f64>> {
    if thetas.is_empty() || cap_grid.is_empty() {
        return Err(Error::InvalidArgument("theta and cap grids must be nonempty".into()));
    }
    let p = &model.params;
    let top = cap_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let benefit = p.gamma * p.omega_b / p.omega_t;
    Ok(thetas
        .par_iter()
        .enumerate()
        .map(|(k, &theta)| {
            let v = if benefit == 0.0 { 0.0 } else { benefit * model.distribution.hazard_or_inf(theta) };
            if v.is_infinite() {
                return top;
            }
            let e = effort_for_type(model, theta, top, draws.min(20_000), seed, k as u64).effort;
            let d = ShockDraws::generate(&model.noise, draws, seed, stream_id(Purpose::Leader, k as u64));
            let y = SortedPayouts::new(rule_payout_samples(model, theta, e, &d));
            let mut best = (f64::INFINITY, 0.0);
            for &b in cap_grid {
                let (m1, m2) = y.moments(b);
                let phi = p.alpha * m1 + 0.5 * p.kappa * m2 - v * m1;
                if phi < best.0 {
                    best = (phi, b);
                }
            }
            best.1
        })
        .collect())
}

/// A direct mechanism tabulated on a type grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismTable {
    pub thetas: Vec<f64>,
    pub caps: Vec<f64>,
    pub transfers: Vec<f64>,
    /// Monte Carlo standard error of each transfer.
    pub transfer_se: Vec<f64>,
}

impl MechanismTable {
    /// Takes `points` evenly spaced rows of a solved mechanism. With
    /// `clamped` the limited-liability transfers are used, otherwise the
    /// unclamped grant formula.
    pub fn from_solution(sol: &MechanismSolution, points: usize, omega_ratio: f64, clamped: bool) -> Result<Self> {
        let n = sol.cap_grid.len();
        if sol.grant_grid.len() != n {
            return Err(Error::InvalidArgument("mechanism has no grant schedule".into()));
        }
        if points < 2 || points > n {
            return Err(Error::InvalidArgument(format!("cannot take {points} rows from a grid of {n}")));
        }
        let idx: Vec<usize> = (0..points)
            .map(|i| ((i as f64) * (n - 1) as f64 / (points - 1) as f64).round() as usize)
            .collect();
        Ok(Self {
            thetas: idx.iter().map(|&i| sol.cap_grid[i].theta).collect(),
            caps: idx.iter().map(|&i| sol.cap_grid[i].b_star).collect(),
            transfers: idx
                .iter()
                .map(|&i| {
                    let g = &sol.grant_grid[i];
                    if clamped {
                        g.t_star
                    } else {
                        g.t_unclamped
                    }
                })
                .collect(),
            transfer_se: idx.iter().map(|&i| omega_ratio * sol.grant_grid[i].b_tilde_se).collect(),
        })
    }

    /// T ≡ c, b ≡ c′.
    pub fn constant(thetas: Vec<f64>, cap: f64, transfer: f64) -> Self {
        let n = thetas.len();
        Self {
            thetas,
            caps: vec![cap; n],
            transfers: vec![transfer; n],
            transfer_se: vec![0.0; n],
        }
    }

    /// Adds `slope·θ` to every transfer.
    pub fn with_grant_tilt(&self, slope: f64) -> Self {
        let mut m = self.clone();
        m.transfers.iter_mut().zip(&self.thetas).for_each(|(t, th)| *t += slope * th);
        m
    }

    /// Shifts the cap at row `i` by `delta`, leaving the transfer alone.
    pub fn with_cap_shift(&self, i: usize, delta: f64) -> Self {
        let mut m = self.clone();
        m.caps[i] = (m.caps[i] + delta).max(0.0);
        m
    }

    fn validate(&self) -> Result<()> {
        let n = self.thetas.len();
        if n == 0 || self.caps.len() != n || self.transfers.len() != n || self.transfer_se.len() != n {
            return Err(Error::InvalidArgument("mechanism table columns must be nonempty and equally long".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub draws: usize,
    pub effort_draws: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            draws: 50_000,
            effort_draws: 20_000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcCell {
    pub theta: f64,
    pub report: f64,
    /// U_L(θ̂, θ) − U_L(θ, θ).
    pub gain: f64,
    pub gain_se: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcRow {
    pub theta: f64,
    pub best_report: f64,
    pub max_gain: f64,
    pub tolerance: f64,
    /// Truthful utility V(θ).
    pub utility: f64,
    /// Allocation index x(θ) = ω_T·T(θ) + ω_b·b̃(θ;θ).
    pub allocation_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub rows: Vec<IcRow>,
    pub cells: Vec<IcCell>,
    pub max_gain: f64,
    /// Largest gain in excess of its cell tolerance (≤ 0 on a pass).
    pub max_excess: f64,
    pub ic_pass: bool,
    pub ir_pass: bool,
    pub min_ir_slack: f64,
    pub monotone_pass: bool,
    pub pass: bool,
}

/// Payout samples for each distinct cap a type can face, all on the same draws.
fn samples_by_cap(model: &Model, theta: f64, caps: &[f64], d: &ShockDraws, opts: &VerifyOptions, index: u64) -> Vec<Vec<f64>> {
    let mut cache: Vec<(f64, f64, usize)> = Vec::new();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut res = Vec::with_capacity(caps.len());
    for &b in caps {
        let e = effort_for_type(model, theta, b, opts.effort_draws, opts.seed, index).effort;
        let slot = match cache.iter().find(|c| c.1 == e) {
            Some(c) => c.2,
            None => {
                out.push(rule_payout_samples(model, theta, e, d));
                cache.push((b, e, out.len() - 1));
                out.len() - 1
            }
        };
        res.push(slot);
    }
    res.into_iter().map(|s| out[s].clone()).collect()
}

/// Incentive, participation and allocation-monotonicity audit on the
/// product grid of true types × reports. Each true type uses one stream
/// shared by all its reports.
pub fn check_ic_ir(model: &Model, mech: &MechanismTable, opts: &VerifyOptions) -> Result<IcReport> {
    mech.validate()?;
    if opts.draws < 2 {
        return Err(Error::InvalidArgument("need at least 2 draws".into()));
    }
    let p = &model.params;
    let n = mech.thetas.len();
    let per_type: Vec<(IcRow, Vec<IcCell>, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let theta = mech.thetas[j];
            let d = ShockDraws::generate(&model.noise, opts.draws, opts.seed, stream_id(Purpose::Incentive, j as u64));
            let ys = samples_by_cap(model, theta, &mech.caps, &d, opts, j as u64);
            let own = &ys[j];
            let b_own = mech.caps[j];
            let [bt] = means_of(opts.draws, |i| [own[i].min(b_own)]);
            let bt = bt.estimate();
            let k = p.type_shift.value(theta);
            let utility = p.omega_t * mech.transfers[j] + p.omega_b * bt.value + k;
            let allocation_index = p.omega_t * mech.transfers[j] + p.omega_b * bt.value;
            let x_se = (p.omega_b * bt.se).hypot(p.omega_t * mech.transfer_se[j]);
            let mut cells = Vec::with_capacity(n);
            for r in 0..n {
                let yr = &ys[r];
                let br = mech.caps[r];
                let [diff] = means_of(opts.draws, |i| [yr[i].min(br) - own[i].min(b_own)]);
                let diff = diff.estimate();
                let gain = p.omega_t * (mech.transfers[r] - mech.transfers[j]) + p.omega_b * diff.value;
                let se = (p.omega_b * diff.se)
                    .hypot(p.omega_t * mech.transfer_se[r])
                    .hypot(p.omega_t * mech.transfer_se[j]);
                cells.push(IcCell {
                    theta,
                    report: mech.thetas[r],
                    gain,
                    gain_se: se,
                    tolerance: SE_MULTIPLE * se + ABS_TOL,
                });
            }
            let best = cells
                .iter()
                .fold(None::<&IcCell>, |acc, c| match acc {
                    Some(a) if a.gain >= c.gain => Some(a),
                    _ => Some(c),
                })
                .expect("nonempty");
            let row = IcRow {
                theta,
                best_report: best.report,
                max_gain: best.gain,
                tolerance: best.tolerance,
                utility,
                allocation_index,
            };
            (row, cells, x_se)
        })
        .collect();

    let mut rows = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n * n);
    let mut x_se = Vec::with_capacity(n);
    for (r, c, s) in per_type {
        rows.push(r);
        cells.extend(c);
        x_se.push(s);
    }
    let max_gain = cells.iter().map(|c| c.gain).fold(f64::NEG_INFINITY, f64::max);
    let max_excess = cells.iter().map(|c| c.gain - c.tolerance).fold(f64::NEG_INFINITY, f64::max);
    let ic_pass = max_excess <= 0.0;
    let min_ir_slack = rows
        .iter()
        .zip(&x_se)
        .map(|(r, s)| r.utility - p.reservation_utility + SE_MULTIPLE * s + ABS_TOL)
        .fold(f64::INFINITY, f64::min);
    let ir_pass = min_ir_slack >= 0.0;
    let monotone_pass = rows.windows(2).zip(x_se.windows(2)).all(|(w, s)| {
        let tol = SE_MULTIPLE * s[0].hypot(s[1]) + ABS_TOL;
        w[1].allocation_index >= w[0].allocation_index - tol
    });
    Ok(IcReport {
        rows,
        cells,
        max_gain,
        max_excess,
        ic_pass,
        ir_pass,
        min_ir_slack,
        monotone_pass,
        pass: ic_pass && ir_pass && monotone_pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub theta: f64,
    /// Central difference of V along the truthful diagonal.
    pub v_prime: f64,
    /// ω_b·∂_θ b̃(θ̂;θ) at θ̂ = θ, plus K'(θ).
    pub rhs: f64,
    pub residual: f64,
    pub residual_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub points: Vec<EnvelopePoint>,
    pub max_abs_residual: f64,
    /// Largest |residual| in excess of its tolerance.
    pub max_excess: f64,
    pub pass: bool,
}

/// Envelope check V'(θ) = ω_b·∂_θ b̃(θ̂;θ)|θ̂=θ + K'(θ) at interior grid
/// points, with every type on one common stream.
pub fn check_envelope(model: &Model, mech: &MechanismTable, opts: &VerifyOptions) -> Result<EnvelopeReport> {
    mech.validate()?;
    let n = mech.thetas.len();
    if n < 3 {
        return Err(Error::InvalidArgument("envelope check needs at least 3 grid points".into()));
    }
    let p = &model.params;
    let d = ShockDraws::generate(&model.noise, opts.draws, opts.seed, stream_id(Purpose::Envelope, 0));
    let own: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let e = effort_for_type(model, mech.thetas[j], mech.caps[j], opts.effort_draws, opts.seed, j as u64).effort;
            rule_payout_samples(model, mech.thetas[j], e, &d)
        })
        .collect();
    let points: Vec<EnvelopePoint> = (1..n - 1)
        .into_par_iter()
        .map(|i| {
            let (tl, t, tr) = (mech.thetas[i - 1], mech.thetas[i], mech.thetas[i + 1]);
            let bi = mech.caps[i];
            let fixed = |theta: f64, idx: usize| {
                let e = effort_for_type(model, theta, bi, opts.effort_draws, opts.seed, idx as u64).effort;
                rule_payout_samples(model, theta, e, &d)
            };
            let yl_fixed = fixed(tl, i - 1);
            let yr_fixed = fixed(tr, i + 1);
            let (yl, yr) = (&own[i - 1], &own[i + 1]);
            let (bl, br) = (mech.caps[i - 1], mech.caps[i + 1]);
            let w = tr - tl;
            let [lhs, rhs, diff] = means_of(opts.draws, |k| {
                let l = (yr[k].min(br) - yl[k].min(bl)) / w;
                let r = (yr_fixed[k].min(bi) - yl_fixed[k].min(bi)) / w;
                [l, r, l - r]
            });
            let k_prime = p.type_shift.derivative(t);
            let v_prime = p.omega_t * (mech.transfers[i + 1] - mech.transfers[i - 1]) / w
                + p.omega_b * lhs.mean()
                + (p.type_shift.value(tr) - p.type_shift.value(tl)) / w;
            let rhs = p.omega_b * rhs.mean() + k_prime;
            let se = (p.omega_b * diff.estimate().se)
                .hypot(p.omega_t * mech.transfer_se[i + 1] / w)
                .hypot(p.omega_t * mech.transfer_se[i - 1] / w);
            EnvelopePoint {
                theta: t,
                v_prime,
                rhs,
                residual: v_prime - rhs,
                residual_se: se,
            }
        })
        .collect();
    let max_abs_residual = points.iter().map(|q| q.residual.abs()).fold(0.0, f64::max);
    let max_excess = points
        .iter()
        .map(|q| q.residual.abs() - (SE_MULTIPLE * q.residual_se + ABS_TOL))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EnvelopeReport {
        points,
        max_abs_residual,
        max_excess,
        pass: max_excess <= 0.0,
    })
}

/// Distribution of Y = β(Ĝ) used by [`capmin_derivative_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoutSource {
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    /// Y = β(Ĝ) with Ĝ ~ N(mean, sd).
    RuleInduced { rule: SignalRule, mean: f64, sd: f64 },
}

impl PayoutSource {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PayoutSource::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            PayoutSource::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            PayoutSource::RuleInduced { rule, mean, sd } => rule.validate().is_ok() && mean.is_finite() && sd > 0.0 && sd.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid payout source {self:?}")))
        }
    }

    pub fn samples(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_for(seed, stream_id(Purpose::CapMin, 0));
        match *self {
            PayoutSource::Uniform { lo, hi } => (0..n).map(|_| rng.random_range(lo..hi)).collect(),
            PayoutSource::Exponential { rate } => {
                let e = Exp::new(rate).expect("validated");
                (0..n).map(|_| e.sample(&mut rng)).collect()
            }
            PayoutSource::RuleInduced { rule, mean, sd } => {
                let g = Normal::new(mean, sd).expect("validated");
                (0..n).map(|_| rule.payout(g.sample(&mut rng))).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapMinRow {
    pub b: f64,
    pub e_min: Estimate,
    pub e_min_sq: Estimate,
    /// Finite difference of E[min{Y,b}] in b.
    pub lhs: Estimate,
    /// P[Y ≥ b].
    pub rhs: Estimate,
    /// Finite difference of E[min{Y,b}²] in b.
    pub lhs_sq: Estimate,
    /// 2b·P[Y ≥ b].
    pub rhs_sq: Estimate,
    pub pass: bool,
}

/// Step of the cap finite differences.
pub const CAPMIN_STEP: f64 = 1e-3;
/// Multiple of the pooled standard error allowed by the cap–min check.
pub const CAPMIN_SE_MULTIPLE: f64 = 3.0;

/// Checks ∂_b E[min{Y,b}] = P[Y ≥ b] and ∂_b E[min{Y,b}²] = 2b·P[Y ≥ b]
/// by finite differences on common draws.
pub fn capmin_derivative_check(source: &PayoutSource, caps: &[f64], draws: usize, seed: u64) -> Result<Vec<CapMinRow>> {
    source.validate()?;
    if draws < 2 {
        return Err(Error::InvalidArgument("need at least 2 draws".into()));
    }
    let y = source.samples(draws, seed);
    let h = CAPMIN_STEP;
    Ok(caps
        .iter()
        .map(|&b| {
            // Central difference, or the second-order one-sided stencil
            // (−3f(b) + 4f(b+h) − f(b+2h))/(2h) at the lower boundary.
            let m = means_of(draws, |i| {
                let v = y[i];
                let m0 = v.min(b);
                let ind = f64::from(v >= b);
                let (d1, d2) = if b < h {
                    let (m1, m2) = (v.min(b + h), v.min(b + 2.0 * h));
                    (
                        (-3.0 * m0 + 4.0 * m1 - m2) / (2.0 * h),
                        (-3.0 * m0 * m0 + 4.0 * m1 * m1 - m2 * m2) / (2.0 * h),
                    )
                } else {
                    let (a, c) = (v.min(b - h), v.min(b + h));
                    ((c - a) / (2.0 * h), (c * c - a * a) / (2.0 * h))
                };
                [m0, m0 * m0, d1, ind, d2, 2.0 * b * ind]
            });
            let [e_min, e_min_sq, lhs, rhs, lhs_sq, rhs_sq] = m.map(|x| x.estimate());
            // Both stencils are second order; 2h² covers their truncation error
            // for induced densities of order one.
            let ok = |l: Estimate, r: Estimate| (l.value - r.value).abs() <= CAPMIN_SE_MULTIPLE * l.se.hypot(r.se) + 2.0 * h * h;
            CapMinRow {
                b,
                e_min,
                e_min_sq,
                lhs,
                rhs,
                lhs_sq,
                rhs_sq,
                pass: ok(lhs, rhs) && ok(lhs_sq, rhs_sq),
            }
        })
        .collect())
}

/// Empirical quantiles of a sample.
pub fn sample_quantiles(samples: &[f64], probs: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    probs
        .iter()
        .map(|&q| {
            let k = ((q.clamp(0.0, 1.0) * (s.len() - 1) as f64).round()) as usize;
            s[k]
        })
        .collect()
}
