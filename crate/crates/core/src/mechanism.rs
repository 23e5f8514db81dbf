//! Closed-form optimal mechanism: cap schedule, grant schedule, cutoffs,
//! the knife-edge regime test, ironing and comparative statics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::TypeDistribution;
use crate::draws::{stream_id, Estimate, Purpose, ShockDraws};
use crate::error::{Error, Result};
use crate::game::{btilde_on, effort_for_type, simulate_with};
use crate::model::Model;
use crate::params::{validate_params, ParamSet};
use crate::rules::SignalRule;

/// Absolute tolerance on the knife-edge comparison α·ω_T ≥ γ·ω_b·sup h.
pub const KNIFE_EDGE_TOL: f64 = 1e-12;
/// Bracket width at which cutoff bisection stops.
pub const CUTOFF_TOL: f64 = 1e-15;
/// Fixed-point iterations allowed when λ_T is estimated.
pub const MAX_LAMBDA_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "no-transfer")]
    NoTransfer,
    #[serde(rename = "rising-cap")]
    RisingCap,
    #[serde(rename = "flat-cap")]
    FlatCap,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::NoTransfer => "no-transfer",
            Region::RisingCap => "rising-cap",
            Region::FlatCap => "flat-cap",
        }
    }

    fn of(b: f64, b_bar: f64) -> Self {
        if b <= 0.0 {
            Region::NoTransfer
        } else if b >= b_bar {
            Region::FlatCap
        } else {
            Region::RisingCap
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// λ_T ≡ ω_T.
    #[default]
    Baseline,
    /// λ_T(θ) = ω_T − ω_b·m·P_θ[cap slack, linear range], by fixed-point
    /// iteration on the cap. Only meaningful for linear-branch rules.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub grid_size: usize,
    /// Draws per grid point for b̃.
    pub draws: usize,
    /// Draws for the effort FOC expectations, when it has any.
    pub effort_draws: usize,
    pub seed: u64,
    pub iron: bool,
    pub lambda_mode: LambdaMode,
    /// Skip the Monte Carlo grant schedule (cutoffs and caps only).
    pub grants: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grid_size: 101,
            draws: 200_000,
            effort_draws: 20_000,
            seed: 42,
            iron: false,
            lambda_mode: LambdaMode::Baseline,
            grants: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapPoint {
    pub theta: f64,
    pub b_star: f64,
    /// Virtual weight used at this point (ironed when ironing applied).
    pub weight: f64,
    pub lambda_t: f64,
    pub region: Region,
    /// Inside an ironing pooling interval.
    pub pooled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrantPoint {
    pub theta: f64,
    #[serde(rename = "T_star")]
    pub t_star: f64,
    /// Before the limited-liability clamp.
    #[serde(rename = "T_unclamped")]
    pub t_unclamped: f64,
    pub b_tilde: f64,
    pub b_tilde_se: f64,
    pub effort: f64,
    pub ll_binding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSolution {
    pub theta_min: f64,
    pub theta_dagger: f64,
    /// (γω_b/λ_T − α)/κ, unclamped.
    pub b_max: f64,
    /// Largest cap on the grid.
    pub cap_peak: f64,
    pub no_bailout: bool,
    pub ironed: bool,
    pub cap_grid: Vec<CapPoint>,
    /// Empty when grants were not requested.
    pub grant_grid: Vec<GrantPoint>,
    pub pooling_intervals: Vec<(f64, f64)>,
    pub lambda_converged: bool,
}

impl MechanismSolution {
    pub fn thetas(&self) -> Vec<f64> {
        self.cap_grid.iter().map(|c| c.theta).collect()
    }

    pub fn caps(&self) -> Vec<f64> {
        self.cap_grid.iter().map(|c| c.b_star).collect()
    }
}

/// b* = clamp((v − α)/κ, 0, b̄) for virtual weight v.
pub fn cap_from_weight(p: &ParamSet, v: f64) -> f64 {
    ((v - p.alpha) / p.kappa).clamp(0.0, p.b_bar)
}

/// Knife-edge: the no-bailout regime obtains iff α·λ_T ≥ γ·ω_b·sup h.
pub fn no_bailout(p: &ParamSet, d: &TypeDistribution, lambda_t: f64) -> bool {
    let benefit = p.gamma * p.omega_b;
    if benefit == 0.0 {
        return true;
    }
    let sup = d.sup_hazard();
    if sup.is_infinite() {
        return false;
    }
    p.alpha * lambda_t >= benefit * sup - KNIFE_EDGE_TOL
}

/// (γω_b/λ_T − α)/κ.
pub fn b_max(p: &ParamSet, lambda_t: f64) -> f64 {
    (p.gamma * p.omega_b / lambda_t - p.alpha) / p.kappa
}

/// Smallest θ in `[lo, hi]` where the nondecreasing predicate flips to
/// true, given that it is false at `lo` and true at `hi`.
fn bisect_flip(pred: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > CUTOFF_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Infimum of `{θ : pred(θ)}` bracketed on `grid` and refined by bisection;
/// the upper grid end when the predicate never holds.
fn locate_cutoff(grid: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    match grid.iter().position(|&t| pred(t)) {
        Some(0) => grid[0],
        Some(k) => bisect_flip(pred, grid[k - 1], grid[k]),
        None => grid[grid.len() - 1],
    }
}

/// Piecewise-linear interpolation of grid values; the right node wins
/// on segments ending in `+∞`.
fn interp(grid: &[f64], w: &[f64], theta: f64) -> f64 {
    let n = grid.len();
    if theta <= grid[0] {
        return w[0];
    }
    if theta >= grid[n - 1] {
        return w[n - 1];
    }
    let k = grid.partition_point(|&g| g <= theta) - 1;
    let t = (theta - grid[k]) / (grid[k + 1] - grid[k]);
    if t == 0.0 {
        w[k]
    } else if w[k + 1].is_infinite() {
        w[k + 1]
    } else {
        w[k] + (w[k + 1] - w[k]) * t
    }
}

/// Output of [`iron_virtual_weight`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IronedWeights {
    pub thetas: Vec<f64>,
    pub raw: Vec<f64>,
    pub ironed: Vec<f64>,
    pub pooled: Vec<bool>,
    /// Closed θ intervals over which the ironed weight is constant by pooling.
    pub intervals: Vec<(f64, f64)>,
}

impl IronedWeights {
    pub fn changed(&self) -> bool {
        !self.intervals.is_empty()
    }
}

/// Ironing of a sequence of equally weighted cell values: the slope of the
/// greatest convex minorant of the cumulative sums. Returns the ironed
/// values and the index ranges of pooled blocks. Blocks are merged only on
/// a strict slope violation, so already monotone input is returned as is.
/// Infinite values are left untouched and must form a suffix.
pub fn iron_sequence(v: &[f64]) -> (Vec<f64>, Vec<(usize, usize)>) {
    let finite = v.iter().position(|x| !x.is_finite()).unwrap_or(v.len());
    // Hull vertices as blocks: (first index, sum, count).
    let mut hull: Vec<(usize, f64, usize)> = Vec::with_capacity(finite);
    for (i, &x) in v[..finite].iter().enumerate() {
        let mut cur = (i, x, 1usize);
        while let Some(&(start, sum, count)) = hull.last() {
            // Previous slope sum/count versus current slope cur.1/cur.2.
            if sum * cur.2 as f64 > cur.1 * count as f64 {
                hull.pop();
                cur = (start, sum + cur.1, count + cur.2);
            } else {
                break;
            }
        }
        hull.push(cur);
    }
    let mut out = v.to_vec();
    let mut pools = Vec::new();
    for &(start, sum, count) in &hull {
        if count > 1 {
            let slope = sum / count as f64;
            out[start..start + count].iter_mut().for_each(|o| *o = slope);
            pools.push((start, start + count - 1));
        }
    }
    (out, pools)
}

/// v(θ) = (γω_b/ω_T)·h(θ) on the θ grid, ironed.
pub fn iron_virtual_weight(d: &TypeDistribution, p: &ParamSet, grid_size: usize) -> IronedWeights {
    let thetas = d.grid(grid_size.max(2));
    let scale = p.virtual_scale();
    let raw: Vec<f64> = thetas
        .iter()
        .map(|&t| {
            let h = d.hazard_or_inf(t);
            if scale == 0.0 {
                0.0
            } else {
                scale * h
            }
        })
        .collect();
    let (ironed, pools) = iron_sequence(&raw);
    let mut pooled = vec![false; thetas.len()];
    let mut intervals = Vec::new();
    for (a, b) in pools {
        pooled[a..=b].iter_mut().for_each(|x| *x = true);
        intervals.push((thetas[a], thetas[b]));
    }
    IronedWeights {
        thetas,
        raw,
        ironed,
        pooled,
        intervals,
    }
}

/// Cap schedule on its own: no Monte Carlo, λ_T ≡ ω_T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSchedule {
    pub theta_min: f64,
    pub theta_dagger: f64,
    pub no_bailout: bool,
    pub ironed: bool,
    pub points: Vec<CapPoint>,
    pub pooling_intervals: Vec<(f64, f64)>,
}

fn check_grid(grid_size: usize) -> Result<()> {
    if grid_size < 3 {
        return Err(Error::InvalidArgument(format!("grid_size must be >= 3, got {grid_size}")));
    }
    Ok(())
}

/// Cutoffs and cap grid. With `iron` false, a hazard that is not
/// nondecreasing is an error; with `iron` true the ironed grid weight
/// replaces the hazard and cutoffs are located on its interpolant.
pub fn cap_schedule(p: &ParamSet, d: &TypeDistribution, grid_size: usize, iron: bool) -> Result<CapSchedule> {
    let v = validate_params(p);
    if !v.is_empty() {
        return Err(Error::InvalidParams(v));
    }
    check_grid(grid_size)?;
    if !iron {
        if let Some(theta) = d.first_hazard_drop() {
            return Err(Error::NonMonotoneHazard { theta });
        }
    }
    let lambda = vec![p.omega_t; grid_size];
    schedule_with_lambda(p, d, grid_size, iron, &lambda)
}

fn schedule_with_lambda(
    p: &ParamSet,
    d: &TypeDistribution,
    grid_size: usize,
    iron: bool,
    lambda: &[f64],
) -> Result<CapSchedule> {
    let thetas = d.grid(grid_size);
    let baseline = lambda.iter().all(|&l| l == p.omega_t);
    let benefit = p.gamma * p.omega_b;
    let weight_at = |t: f64, l: f64| if benefit == 0.0 { 0.0 } else { benefit / l * d.hazard_or_inf(t) };

    let (weights, pooled, intervals, ironed) = if iron {
        let raw: Vec<f64> = thetas.iter().zip(lambda).map(|(&t, &l)| weight_at(t, l)).collect();
        let (w, pools) = iron_sequence(&raw);
        let mut pooled = vec![false; thetas.len()];
        let mut intervals = Vec::new();
        for &(a, b) in &pools {
            pooled[a..=b].iter_mut().for_each(|x| *x = true);
            intervals.push((thetas[a], thetas[b]));
        }
        let changed = !pools.is_empty();
        (w, pooled, intervals, changed)
    } else {
        let w: Vec<f64> = thetas.iter().zip(lambda).map(|(&t, &l)| weight_at(t, l)).collect();
        (w, vec![false; thetas.len()], Vec::new(), false)
    };

    let lambda_ref = if baseline { p.omega_t } else { lambda.iter().cloned().fold(f64::INFINITY, f64::min) };
    let nb = no_bailout(p, d, lambda_ref);
    let top = p.alpha + p.kappa * p.b_bar;
    let (theta_min, theta_dagger) = if nb {
        let hi = thetas[thetas.len() - 1];
        (hi, hi)
    } else if iron || !baseline {
        let tm = locate_cutoff(&thetas, |t| interp(&thetas, &weights, t) > p.alpha);
        let td = locate_cutoff(&thetas, |t| interp(&thetas, &weights, t) >= top);
        (tm, td.max(tm))
    } else {
        let v = |t: f64| weight_at(t, p.omega_t);
        let tm = locate_cutoff(&thetas, |t| v(t) > p.alpha);
        let td = locate_cutoff(&thetas, |t| v(t) >= top);
        (tm, td.max(tm))
    };

    let points = thetas
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let b = if nb { 0.0 } else { cap_from_weight(p, weights[i]) };
            CapPoint {
                theta,
                b_star: b,
                weight: weights[i],
                lambda_t: lambda[i],
                region: Region::of(b, p.b_bar),
                pooled: pooled[i],
            }
        })
        .collect();
    Ok(CapSchedule {
        theta_min,
        theta_dagger,
        no_bailout: nb,
        ironed,
        points,
        pooling_intervals: intervals,
    })
}

/// T*(θ) = −(ω_b/ω_T)·[b̃(θ) − b̃(θ_min)], with T*(θ_min) = 0, clamped at 0.
/// `btilde[i]` is the expected capped payout at `cap_grid[i]`.
pub fn grant_schedule(p: &ParamSet, cap_grid: &[CapPoint], btilde: &[Estimate], btilde_at_min: f64) -> Vec<GrantPoint> {
    let ratio = p.omega_b / p.omega_t;
    cap_grid
        .iter()
        .zip(btilde)
        .map(|(c, b)| {
            let t = if p.omega_b == 0.0 { 0.0 } else { -ratio * (b.value - btilde_at_min) };
            GrantPoint {
                theta: c.theta,
                t_star: t.max(0.0),
                t_unclamped: t,
                b_tilde: b.value,
                b_tilde_se: b.se,
                effort: f64::NAN,
                ll_binding: t < 0.0,
            }
        })
        .collect()
}

/// Expected capped payout for each grid type at its own cap, with effort
/// solved at that cap. Grid point `k` draws from its own stream.
pub fn btilde_grid(model: &Model, points: &[CapPoint], opts: &SolveOptions) -> Vec<(Estimate, f64)> {
    points
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            if c.b_star <= 0.0 {
                return (Estimate::exact(0.0), f64::NAN);
            }
            let e = effort_for_type(model, c.theta, c.b_star, opts.effort_draws, opts.seed, k as u64).effort;
            let d = ShockDraws::generate(&model.noise, opts.draws, opts.seed, stream_id(Purpose::Grant, k as u64));
            (btilde_on(model, c.theta, c.b_star, e, &d), e)
        })
        .collect()
}

fn estimate_lambda(model: &Model, grid_size: usize, opts: &SolveOptions) -> Result<(Vec<f64>, bool)> {
    let p = &model.params;
    let SignalRule::LinearBranch { slope, .. } = model.rule else {
        return Ok((vec![p.omega_t; grid_size], true));
    };
    let thetas = model.distribution.grid(grid_size);
    let benefit = p.gamma * p.omega_b;
    let results: Vec<Result<(f64, bool)>> = thetas
        .par_iter()
        .enumerate()
        .map(|(k, &theta)| {
            let d = ShockDraws::generate(&model.noise, opts.draws, opts.seed, stream_id(Purpose::Lambda, k as u64));
            let h = model.distribution.hazard_or_inf(theta);
            let mut lambda = p.omega_t;
            for _ in 0..MAX_LAMBDA_ITER {
                let v = if benefit == 0.0 { 0.0 } else { benefit / lambda * h };
                let cap = cap_from_weight(p, v);
                let e = effort_for_type(model, theta, cap, opts.effort_draws, opts.seed, k as u64).effort;
                let q = simulate_with(model, theta, cap, e, None, &d, opts.seed).linear_range_prob;
                let next = p.omega_t - p.omega_b * slope * q;
                if !(next > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "estimated lambda_T is not positive ({next}) at theta={theta}"
                    )));
                }
                if (next - lambda).abs() <= 1e-12 * p.omega_t {
                    return Ok((next, true));
                }
                lambda = next;
            }
            Ok((lambda, false))
        })
        .collect();
    let mut lambda = Vec::with_capacity(grid_size);
    let mut converged = true;
    for r in results {
        let (l, c) = r?;
        lambda.push(l);
        converged &= c;
    }
    Ok((lambda, converged))
}

/// Full mechanism for a scenario.
pub fn solve(model: &Model, opts: &SolveOptions) -> Result<MechanismSolution> {
    let p = &model.params;
    let d = &model.distribution;
    check_grid(opts.grid_size)?;
    if opts.grants && opts.draws < crate::game::MIN_DRAWS {
        return Err(Error::InvalidArgument(format!("draws must be >= {}", crate::game::MIN_DRAWS)));
    }
    let base = cap_schedule(p, d, opts.grid_size, opts.iron)?;
    let (sched, converged) = match (opts.lambda_mode, model.rule) {
        (LambdaMode::Estimated, SignalRule::LinearBranch { .. }) => {
            let (lambda, converged) = estimate_lambda(model, opts.grid_size, opts)?;
            (schedule_with_lambda(p, d, opts.grid_size, opts.iron, &lambda)?, converged)
        }
        _ => (base, true),
    };
    let grant_grid = if opts.grants {
        let bt = btilde_grid(model, &sched.points, opts);
        let est: Vec<Estimate> = bt.iter().map(|x| x.0).collect();
        let mut g = grant_schedule(p, &sched.points, &est, 0.0);
        for (gp, (_, e)) in g.iter_mut().zip(&bt) {
            gp.effort = *e;
        }
        g
    } else {
        Vec::new()
    };
    let cap_peak = sched.points.iter().map(|c| c.b_star).fold(0.0, f64::max);
    Ok(MechanismSolution {
        theta_min: sched.theta_min,
        theta_dagger: sched.theta_dagger,
        b_max: b_max(p, p.omega_t),
        cap_peak,
        no_bailout: sched.no_bailout,
        ironed: sched.ironed,
        cap_grid: sched.points,
        grant_grid,
        pooling_intervals: sched.pooling_intervals,
        lambda_converged: converged,
    })
}

/// Analytic comparative statics of θ_min and b_max in the baseline λ_T ≡ ω_T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparativeStatics {
    pub theta_min: f64,
    pub hazard_slope: f64,
    pub b_max: f64,
    pub dtheta_min_dalpha: f64,
    pub dtheta_min_domega_b: f64,
    #[serde(rename = "dtheta_min_dlambda_T")]
    pub dtheta_min_dlambda_t: f64,
    pub dtheta_min_dgamma: f64,
    pub db_max_dkappa: f64,
    #[serde(rename = "db_max_dlambda_T")]
    pub db_max_dlambda_t: f64,
    pub db_max_dgamma: f64,
}

/// θ_min in the baseline, refined on the continuous hazard.
pub fn theta_min(p: &ParamSet, d: &TypeDistribution, grid_size: usize) -> Result<f64> {
    Ok(cap_schedule(p, d, grid_size, false)?.theta_min)
}

/// Derivatives of the interior zero h(θ_min) = αλ_T/(γω_b) and of b_max.
pub fn comparative_statics(p: &ParamSet, d: &TypeDistribution) -> Result<ComparativeStatics> {
    let s = cap_schedule(p, d, 101, false)?;
    let (lo, _) = d.support();
    let hi = d.grid_upper();
    if s.no_bailout {
        return Err(Error::DerivativeUndefined("no interior cutoff in the no-bailout regime".into()));
    }
    let tm = s.theta_min;
    if tm <= lo || tm >= hi {
        return Err(Error::DerivativeUndefined(format!("theta_min={tm} is at a support boundary")));
    }
    let hp = d.hazard_derivative(tm)?;
    if !(hp > 0.0) || !hp.is_finite() {
        return Err(Error::DerivativeUndefined(format!("hazard slope {hp} at theta_min is not positive")));
    }
    let (a, g, wb, l, k) = (p.alpha, p.gamma, p.omega_b, p.omega_t, p.kappa);
    Ok(ComparativeStatics {
        theta_min: tm,
        hazard_slope: hp,
        b_max: b_max(p, l),
        dtheta_min_dalpha: l / (hp * g * wb),
        dtheta_min_domega_b: -a * l / (g * wb * wb * hp),
        dtheta_min_dlambda_t: a / (g * wb * hp),
        dtheta_min_dgamma: -a * l / (g * g * wb * hp),
        db_max_dkappa: -(g * wb / l - a) / (k * k),
        db_max_dlambda_t: -g * wb / (k * l * l),
        db_max_dgamma: wb / (k * l),
    })
}

/// Cap with a type-varying marginal utility of bailouts:
/// b*(θ) = clamp((ω_b(θ) − α)/κ, 0, b̄).
pub fn variable_omega_cap(omega_b: impl Fn(f64) -> f64, p: &ParamSet, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&t| {
            let w = omega_b(t);
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("omega_b({t}) = {w} must be positive and finite")));
            }
            Ok((t, ((w - p.alpha) / p.kappa).clamp(0.0, p.b_bar)))
        })
        .collect()
}
