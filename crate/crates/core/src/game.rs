//! The t=1 local problem and the Monte Carlo estimators built on it.
//!
//! Every estimator consumes an explicit [`ShockDraws`] so that quantities
//! compared against each other (finite differences in T or e, reports in
//! the incentive check) are evaluated on common random numbers.

use serde::{Deserialize, Serialize};

use crate::draws::{mean_of, means_of, stream_id, Estimate, Purpose, ShockDraws};
use crate::error::{Error, Result};
use crate::model::{LocalChoice, Model};
use crate::params::ParamSet;
use crate::rules::{realized_payout, SignalRule};
use crate::technology::EffortTechnology;

/// Step in T for the crowd-out finite difference.
pub const GRANT_STEP: f64 = 0.01;
/// Step in e for the marginal default finite difference.
pub const EFFORT_STEP: f64 = 0.02;
/// Smallest draw count accepted by [`simulate`] and [`expected_payout_under_cap`].
pub const MIN_DRAWS: usize = 1000;

/// G = [C0(θ) + (1−s)I + rD] − [R(e,θ) + τ + g + sI + D] + ε.
pub fn fiscal_gap(choice: &LocalChoice, p: &ParamSet, tech: &EffortTechnology, theta: f64, epsilon: f64) -> f64 {
    pre_shock_gap(choice, p, tech, theta, choice.effort) + epsilon
}

fn pre_shock_gap(choice: &LocalChoice, p: &ParamSet, tech: &EffortTechnology, theta: f64, effort: f64) -> f64 {
    let i = choice.investment;
    let d = choice.debt;
    (tech.base_cost(theta) + (1.0 - p.s) * i + p.r * d) - (tech.revenue(effort, theta) + p.tau + p.g + p.s * i + d)
}

/// Deterministic part of the gap for a type at a given effort, with an
/// optional extra grant `t_shift` (a grant dollar lowers G one for one).
#[derive(Debug, Clone, Copy)]
struct TypeState<'a> {
    model: &'a Model,
    base: f64,
}

impl<'a> TypeState<'a> {
    fn new(model: &'a Model, theta: f64, effort: f64) -> Self {
        Self {
            model,
            base: pre_shock_gap(&model.choice, &model.params, &model.tech, theta, effort),
        }
    }

    /// (G, Ĝ) for draw `i`.
    #[inline]
    fn gaps(&self, draws: &ShockDraws, i: usize, t_shift: f64) -> (f64, f64) {
        let g = self.base - t_shift + draws.eps[i];
        (g, g + draws.eta[i])
    }

    #[inline]
    fn rule(&self) -> &SignalRule {
        &self.model.rule
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffortBoundary {
    /// The FOC residual is already nonpositive at e = 0.
    Lower,
    /// The FOC residual is still positive at the upper search bound.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortSettings {
    pub e_hi: f64,
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl Default for EffortSettings {
    fn default() -> Self {
        Self {
            e_hi: 100.0,
            residual_tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortSolution {
    pub effort: f64,
    pub residual: f64,
    pub iterations: usize,
    pub boundary: Option<EffortBoundary>,
}

/// Whether the effort FOC has any term that needs simulation.
pub fn effort_needs_draws(model: &Model) -> bool {
    model.params.phi_default != 0.0 || !model.rule.is_threshold()
}

/// Left side minus right side of the effort FOC at `effort`:
/// R'_e·{1 + ϕ·E[f_η(Ĝ−β(Ĝ))(1−β'(Ĝ))] − ω_b·E[β'(Ĝ)·1{β(Ĝ)<b}]} − φ.
/// Expectations are sample means over `draws`; for threshold rules the
/// β' terms are identically zero and are skipped.
pub fn effort_residual(model: &Model, theta: f64, cap: f64, draws: &ShockDraws, effort: f64) -> f64 {
    let p = &model.params;
    let state = TypeState::new(model, theta, effort);
    let rule = state.rule();
    let need_default = p.phi_default != 0.0;
    let need_rescue = !rule.is_threshold() && p.omega_b != 0.0;
    let bracket = if need_default || need_rescue {
        let [dflt, rescue] = means_of(draws.len(), |i| {
            let (_, gh) = state.gaps(draws, i, 0.0);
            let b = rule.payout(gh);
            let slope = rule.slope(gh);
            let a = if need_default {
                model.noise.eta_density(gh - b) * (1.0 - slope)
            } else {
                0.0
            };
            let r = if need_rescue && b < cap { slope } else { 0.0 };
            [a, r]
        });
        1.0 + p.phi_default * dflt.mean() - p.omega_b * rescue.mean()
    } else {
        1.0
    };
    model.tech.marginal_revenue(effort, theta) * bracket - p.phi_effort
}

/// Effort solving the interior FOC by bisection on `[0, e_hi]`.
pub fn solve_effort(
    model: &Model,
    theta: f64,
    cap: f64,
    draws: &ShockDraws,
    settings: &EffortSettings,
) -> EffortSolution {
    let f = |e: f64| effort_residual(model, theta, cap, draws, e);
    let mut lo = 0.0;
    let mut hi = settings.e_hi;
    let r_lo = f(lo);
    if !(r_lo > 0.0) {
        return EffortSolution {
            effort: 0.0,
            residual: r_lo,
            iterations: 0,
            boundary: Some(EffortBoundary::Lower),
        };
    }
    let r_hi = f(hi);
    if r_hi >= 0.0 {
        return EffortSolution {
            effort: hi,
            residual: r_hi,
            iterations: 0,
            boundary: Some(EffortBoundary::Upper),
        };
    }
    let mut mid = 0.5 * (lo + hi);
    let mut r_mid = f(mid);
    let mut iterations = 1;
    // Stop on an exact zero or once the bracket cannot shrink further; the
    // residual at that point is far below the configured tolerance.
    while iterations < settings.max_iter && r_mid != 0.0 && hi - lo > 1e-13 * hi.max(1.0) {
        if r_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        r_mid = f(mid);
        iterations += 1;
    }
    EffortSolution {
        effort: mid,
        residual: r_mid,
        iterations,
        boundary: None,
    }
}

/// Effort for a type, drawing its own common random numbers when the FOC needs them.
pub fn effort_for_type(model: &Model, theta: f64, cap: f64, draws: usize, seed: u64, index: u64) -> EffortSolution {
    let d = if effort_needs_draws(model) {
        ShockDraws::generate(&model.noise, draws, seed, stream_id(Purpose::Effort, index))
    } else {
        ShockDraws { eps: Vec::new(), eta: Vec::new() }
    };
    solve_effort(model, theta, cap, &d, &EffortSettings::default())
}

/// Optional overrides for [`simulate`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOverrides {
    pub effort: Option<f64>,
    pub investment: Option<f64>,
    pub debt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub theta: f64,
    pub cap: f64,
    pub effort: f64,
    pub effort_boundary: Option<EffortBoundary>,
    /// E[min{β(Ĝ), b} | θ].
    pub btilde: f64,
    pub btilde_se: f64,
    /// E[p]: the realized payout, which also caps at Ĝ and pays nothing on Ĝ ≤ 0.
    pub expected_payout: f64,
    pub expected_payout_se: f64,
    /// P[p < G].
    pub delta: f64,
    pub delta_se: f64,
    /// P[p ≥ G].
    pub pi: f64,
    pub pi_se: f64,
    /// ω_T + ω_b·∂E[p]/∂T, where a grant dollar lowers G one for one.
    #[serde(rename = "lambda_T_hat")]
    pub lambda_t_hat: f64,
    #[serde(rename = "lambda_T_hat_se")]
    pub lambda_t_hat_se: f64,
    /// E[f_η(Ĝ − β(Ĝ))].
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "Lambda_se")]
    pub lambda_se: f64,
    /// P[β(Ĝ) ≥ b].
    pub cap_bind_prob: f64,
    pub cap_bind_prob_se: f64,
    /// P[β(Ĝ) < b and Ĝ on the rising branch of β].
    pub linear_range_prob: f64,
    pub linear_range_prob_se: f64,
    /// Set when `cap_bind_prob` exceeds `eps_cap`.
    pub cap_slack_violation: bool,
    pub draws: usize,
    pub seed: u64,
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < MIN_DRAWS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_DRAWS} draws, got {draws}")));
    }
    Ok(())
}

fn apply_overrides(model: &Model, o: &ChoiceOverrides) -> Result<Model> {
    let mut m = model.clone();
    if let Some(i) = o.investment {
        m.choice.investment = i;
    }
    if let Some(d) = o.debt {
        m.choice.debt = d;
    }
    m.choice.validate()?;
    Ok(m)
}

/// Monte Carlo over (ε, η) for one type at a given cap.
pub fn simulate(
    model: &Model,
    theta: f64,
    cap: f64,
    overrides: &ChoiceOverrides,
    draws: usize,
    seed: u64,
) -> Result<SimulationReport> {
    check_draws(draws)?;
    let model = apply_overrides(model, overrides)?;
    let d = ShockDraws::generate(&model.noise, draws, seed, stream_id(Purpose::Simulate, 0));
    let (effort, boundary) = match overrides.effort {
        Some(e) => (e, None),
        None => {
            let s = solve_effort(&model, theta, cap, &d, &EffortSettings::default());
            (s.effort, s.boundary)
        }
    };
    Ok(simulate_with(&model, theta, cap, effort, boundary, &d, seed))
}

/// [`simulate`] on caller-supplied draws and effort.
pub fn simulate_with(
    model: &Model,
    theta: f64,
    cap: f64,
    effort: f64,
    effort_boundary: Option<EffortBoundary>,
    d: &ShockDraws,
    seed: u64,
) -> SimulationReport {
    let p = &model.params;
    let state = TypeState::new(model, theta, effort);
    let rule = state.rule();
    let h = GRANT_STEP;
    let m = means_of(d.len(), |i| {
        let (g, gh) = state.gaps(d, i, 0.0);
        let b = rule.payout(gh);
        let pay = realized_payout(rule, cap, gh);
        let up = realized_payout(rule, cap, state.gaps(d, i, h).1);
        let down = realized_payout(rule, cap, state.gaps(d, i, -h).1);
        [
            b.min(cap),
            pay,
            f64::from(pay < g),
            f64::from(pay >= g),
            (up - down) / (2.0 * h),
            model.noise.eta_density(gh - b),
            f64::from(b >= cap),
            f64::from(b < cap && rule.in_linear_range(gh)),
        ]
    });
    let [bt, ep, dl, pi, dp, lam, bind, lin] = m.map(|x| x.estimate());
    SimulationReport {
        theta,
        cap,
        effort,
        effort_boundary,
        btilde: bt.value,
        btilde_se: bt.se,
        expected_payout: ep.value,
        expected_payout_se: ep.se,
        delta: dl.value,
        delta_se: dl.se,
        pi: pi.value,
        pi_se: pi.se,
        lambda_t_hat: p.omega_t + p.omega_b * dp.value,
        lambda_t_hat_se: p.omega_b * dp.se,
        lambda: lam.value,
        lambda_se: lam.se,
        cap_bind_prob: bind.value,
        cap_bind_prob_se: bind.se,
        linear_range_prob: lin.value,
        linear_range_prob_se: lin.se,
        cap_slack_violation: bind.value > p.eps_cap,
        draws: d.len(),
        seed,
    }
}

/// b̃ = E[min{β(Ĝ), cap} | θ] with effort solved at this cap unless given.
pub fn expected_payout_under_cap(
    model: &Model,
    theta: f64,
    cap: f64,
    effort: Option<f64>,
    draws: usize,
    seed: u64,
) -> Result<Estimate> {
    check_draws(draws)?;
    let d = ShockDraws::generate(&model.noise, draws, seed, stream_id(Purpose::Simulate, 0));
    let e = match effort {
        Some(e) => e,
        None => solve_effort(model, theta, cap, &d, &EffortSettings::default()).effort,
    };
    Ok(btilde_on(model, theta, cap, e, &d))
}

/// b̃ on caller-supplied draws.
pub fn btilde_on(model: &Model, theta: f64, cap: f64, effort: f64, d: &ShockDraws) -> Estimate {
    if cap <= 0.0 {
        return Estimate::exact(0.0);
    }
    let state = TypeState::new(model, theta, effort);
    mean_of(d.len(), |i| state.rule().payout(state.gaps(d, i, 0.0).1).min(cap)).estimate()
}

/// Samples of Y = β(Ĝ) for one type on caller-supplied draws.
pub fn rule_payout_samples(model: &Model, theta: f64, effort: f64, d: &ShockDraws) -> Vec<f64> {
    let state = TypeState::new(model, theta, effort);
    (0..d.len()).map(|i| state.rule().payout(state.gaps(d, i, 0.0).1)).collect()
}

/// Finite-difference ∂δ/∂e next to the signal-branch formula −R'_e·E[f_η(Ĝ−β)(1−β')].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalDefault {
    pub finite_difference: Estimate,
    pub formula: Estimate,
    /// Draw-by-draw difference of the two; its standard error is the pooled one.
    pub difference: Estimate,
}

pub fn marginal_default(model: &Model, theta: f64, cap: f64, effort: f64, d: &ShockDraws) -> MarginalDefault {
    let h = EFFORT_STEP;
    let up = TypeState::new(model, theta, effort + h);
    let down = TypeState::new(model, theta, (effort - h).max(0.0));
    let here = TypeState::new(model, theta, effort);
    let width = effort + h - (effort - h).max(0.0);
    let rule = &model.rule;
    let r1 = model.tech.marginal_revenue(effort, theta);
    let default_at = |s: &TypeState, i: usize| {
        let (g, gh) = s.gaps(d, i, 0.0);
        f64::from(realized_payout(rule, cap, gh) < g)
    };
    let [fd, fm, diff] = means_of(d.len(), |i| {
        let fd = (default_at(&up, i) - default_at(&down, i)) / width;
        let gh = here.gaps(d, i, 0.0).1;
        let fm = -r1 * model.noise.eta_density(gh - rule.payout(gh)) * (1.0 - rule.slope(gh));
        [fd, fm, fd - fm]
    });
    MarginalDefault {
        finite_difference: fd.estimate(),
        formula: fm.estimate(),
        difference: diff.estimate(),
    }
}

/// Aggregate softness: per-type π integrated against f(θ) with trapezoid
/// weights on the grid, normalized by the grid's probability mass.
pub fn aggregate_softness(model: &Model, thetas: &[f64], caps: &[f64], draws: usize, seed: u64) -> Result<f64> {
    if thetas.len() != caps.len() || thetas.len() < 2 {
        return Err(Error::InvalidArgument("need matching theta and cap grids with >= 2 points".into()));
    }
    check_draws(draws)?;
    let n = thetas.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n {
        let left = if k > 0 { thetas[k] - thetas[k - 1] } else { 0.0 };
        let right = if k + 1 < n { thetas[k + 1] - thetas[k] } else { 0.0 };
        let w = 0.5 * (left + right) * model.distribution.density(thetas[k]);
        let d = ShockDraws::generate(&model.noise, draws, seed, stream_id(Purpose::Simulate, k as u64 + 1));
        let e = solve_effort(model, thetas[k], caps[k], &d, &EffortSettings::default()).effort;
        let r = simulate_with(model, thetas[k], caps[k], e, None, &d, seed);
        num += w * r.pi;
        den += w;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::TypeDistribution;
    use crate::noise::{NoiseModel, Shock};
    use crate::technology::Affine;

    fn model_with(rule: SignalRule, base: f64, eps: Shock, eta: Shock) -> Model {
        Model::new(
            ParamSet::default(),
            TypeDistribution::uniform(0.0, 1.0).unwrap(),
            NoiseModel::new(eps, eta).unwrap(),
            EffortTechnology::sqrt(2.0, Affine::new(base, 0.0)),
            rule,
            LocalChoice::default(),
        )
        .unwrap()
    }

    #[test]
    fn gap_examples() {
        let p = ParamSet {
            tau: 0.2,
            g: 0.1,
            ..ParamSet::default()
        };
        // R = 1·√0.25 = 0.5
        let tech = EffortTechnology::sqrt(1.0, Affine::new(1.0, 0.0));
        let c = LocalChoice {
            effort: 0.25,
            ..LocalChoice::default()
        };
        assert!((fiscal_gap(&c, &p, &tech, 0.3, 0.0) - 0.2).abs() < 1e-15);

        let zero_tech = EffortTechnology::sqrt(1.0, Affine::new(0.0, 0.0));
        assert_eq!(fiscal_gap(&LocalChoice::default(), &ParamSet { tau: 0.0, g: 0.0, ..p.clone() }, &zero_tech, 0.3, 0.0), 0.0);

        let p2 = ParamSet { s: 0.5, r: 0.1, ..p };
        let c2 = LocalChoice {
            investment: 2.0,
            debt: 1.0,
            ..c
        };
        // (1−s)I + rD − sI − D = 1 + 0.1 − 1 − 1 = −0.9
        assert!((fiscal_gap(&c2, &p2, &tech, 0.3, 0.0) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn trivial_effort_inverts_marginal_revenue() {
        for (a, want) in [(2.0, 1.0), (3.0, 2.25)] {
            let mut m = model_with(SignalRule::threshold(0.5, 0.4).unwrap(), 1.0, Shock::None, Shock::Normal { sd: 0.5 });
            m.tech.scale = Affine::new(a, 0.0);
            assert!(!effort_needs_draws(&m));
            let s = effort_for_type(&m, 0.2, 1.0, 5000, 1, 0);
            assert!(s.boundary.is_none());
            assert!((s.effort - want).abs() < 1e-10, "a={a}: {}", s.effort);
        }
    }

    #[test]
    fn effort_boundary_flagged() {
        let mut m = model_with(SignalRule::threshold(0.5, 0.4).unwrap(), 1.0, Shock::None, Shock::Normal { sd: 0.5 });
        m.tech.revenue = crate::technology::RevenueKind::Log;
        m.tech.scale = Affine::new(0.5, 0.0);
        // R'(0) = 0.5 < φ = 1: no interior solution.
        let s = effort_for_type(&m, 0.2, 1.0, 5000, 1, 0);
        assert_eq!(s.boundary, Some(EffortBoundary::Lower));
        assert_eq!(s.effort, 0.0);
    }

    #[test]
    fn zero_cap_gives_zero_payout() {
        let m = model_with(SignalRule::threshold(0.5, 0.4).unwrap(), 3.0, Shock::Normal { sd: 0.1 }, Shock::Normal { sd: 0.2 });
        let r = simulate(&m, 0.5, 0.0, &ChoiceOverrides::default(), 20_000, 9).unwrap();
        assert_eq!(r.btilde, 0.0);
        assert_eq!(r.expected_payout, 0.0);
        // G = 3 − 2 + ε is positive on every draw: hard budget.
        assert_eq!(r.pi, 0.0);
        assert_eq!(r.delta, 1.0);
        assert_eq!(r.cap_bind_prob, 1.0);
        assert!(r.cap_slack_violation);
    }

    #[test]
    fn threshold_half_firing_probability() {
        // Effort fixed at 1 gives R = 2, so Ĝ = 2.5 − 2 + η with η symmetric:
        // P[Ĝ ≥ 0.5] = 1/2 by construction.
        let m = model_with(SignalRule::threshold(0.5, 0.4).unwrap(), 2.5, Shock::None, Shock::Normal { sd: 0.3 });
        let b = expected_payout_under_cap(&m, 0.5, 1.0, Some(1.0), 200_000, 5).unwrap();
        assert!((b.value - 0.2).abs() < 3.0 * b.se, "{b:?}");
        let b = expected_payout_under_cap(&m, 0.5, 0.1, Some(1.0), 200_000, 5).unwrap();
        assert!((b.value - 0.05).abs() < 3.0 * b.se, "{b:?}");
        let b = expected_payout_under_cap(&m, 0.5, 0.0, Some(1.0), 200_000, 5).unwrap();
        assert_eq!(b, Estimate::exact(0.0));
    }

    #[test]
    fn too_few_draws_rejected() {
        let m = Model::benchmark();
        assert!(simulate(&m, 0.5, 1.0, &ChoiceOverrides::default(), 999, 1).is_err());
    }

    #[test]
    fn probabilities_are_consistent() {
        let m = model_with(SignalRule::linear(0.2, 0.5, 1.0).unwrap(), 2.0, Shock::Normal { sd: 0.4 }, Shock::Normal { sd: 0.3 });
        let r = simulate(&m, 0.5, 0.7, &ChoiceOverrides::default(), 50_000, 3).unwrap();
        for v in [r.delta, r.pi, r.cap_bind_prob, r.linear_range_prob] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!((r.pi + r.delta - 1.0).abs() < 1e-12);
        assert!(r.btilde >= 0.0 && r.btilde <= 0.7);
        assert!(r.expected_payout <= r.btilde + 1e-12);
    }

    #[test]
    fn simulate_is_deterministic() {
        let m = model_with(SignalRule::linear(0.2, 0.5, 1.0).unwrap(), 2.0, Shock::Normal { sd: 0.4 }, Shock::Normal { sd: 0.3 });
        let a = simulate(&m, 0.5, 0.7, &ChoiceOverrides::default(), 30_000, 11).unwrap();
        let b = simulate(&m, 0.5, 0.7, &ChoiceOverrides::default(), 30_000, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_softness_is_a_probability() {
        let m = model_with(SignalRule::threshold(0.5, 0.4).unwrap(), 2.5, Shock::Normal { sd: 0.2 }, Shock::Normal { sd: 0.3 });
        let grid = m.distribution.grid(5);
        let caps = vec![1.0; 5];
        let a = aggregate_softness(&m, &grid, &caps, 5000, 2).unwrap();
        assert!((0.0..=1.0).contains(&a));
    }
}
