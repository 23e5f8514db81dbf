use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbc_core::mechanism::{
    cap_schedule, comparative_statics, solve, theta_min, b_max, ComparativeStatics, Region, SolveOptions,
};
use sbc_core::verify::{brute_force_leader, default_cap_grid, CAP_STEP};
use sbc_core::{Family, Model, ParamSet, TypeDistribution};

fn random_ifr(rng: &mut ChaCha8Rng) -> TypeDistribution {
    match rng.random_range(0..3) {
        0 => {
            let lo = rng.random_range(0.0..1.0);
            TypeDistribution::uniform(lo, lo + rng.random_range(0.5..2.0)).unwrap()
        }
        1 => TypeDistribution::new(
            Family::TruncatedExponential {
                rate: rng.random_range(0.2..3.0),
                lo: 0.0,
                hi: rng.random_range(0.5..3.0),
            },
            true,
        )
        .unwrap(),
        _ => TypeDistribution::exponential(rng.random_range(0.5..3.0)).unwrap(),
    }
}

fn random_params(rng: &mut ChaCha8Rng) -> ParamSet {
    ParamSet {
        alpha: rng.random_range(0.2..3.0),
        kappa: rng.random_range(0.3..2.0),
        gamma: rng.random_range(0.3..2.0),
        omega_t: rng.random_range(0.5..2.0),
        omega_b: rng.random_range(0.3..2.0),
        b_bar: rng.random_range(0.5..3.0),
        ..ParamSet::default()
    }
}

#[test]
fn solver_matches_brute_force_on_random_ifr_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..10 {
        let p = random_params(&mut rng);
        let d = random_ifr(&mut rng);
        let rule = Model::default_rule(&p);
        let bench = Model::benchmark();
        let m = Model::new(p.clone(), d, bench.noise, bench.tech, rule, bench.choice).unwrap();
        let s = cap_schedule(&p, &m.distribution, 41, false).unwrap();
        let thetas: Vec<f64> = s.points.iter().map(|c| c.theta).collect();
        let bf = brute_force_leader(&m, &thetas, &default_cap_grid(p.b_bar), 2000, k).unwrap();
        for (c, b) in s.points.iter().zip(&bf) {
            assert!(
                (c.b_star - b).abs() <= CAP_STEP + 1e-9,
                "config {k} theta={}: closed form {} brute force {b}",
                c.theta,
                c.b_star
            );
        }
    }
}

#[test]
fn benchmark_solution() {
    let m = Model::benchmark();
    let sol = solve(
        &m,
        &SolveOptions {
            draws: 5000,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    assert!((sol.theta_min - 0.5).abs() < 1e-6);
    assert!((sol.theta_dagger - 0.75).abs() < 1e-6);
    assert!((sol.cap_grid[60].b_star - 0.5).abs() < 1e-6);
    assert_eq!(sol.cap_grid[60].region, Region::RisingCap);
    assert!(!sol.no_bailout);
    assert_eq!(sol.b_max, -1.0);
    assert_eq!(sol.cap_peak, 2.0);
    // The rule fires on every draw, so b̃ equals the cap.
    for (c, g) in sol.cap_grid.iter().zip(&sol.grant_grid) {
        assert_eq!(g.b_tilde, c.b_star);
        assert!(g.t_star >= 0.0);
        assert_eq!(g.ll_binding, c.b_star > 0.0);
    }
    assert!(sol.grant_grid.windows(2).all(|w| w[1].t_unclamped <= w[0].t_unclamped));
}

#[test]
fn solve_is_deterministic() {
    let m = Model::benchmark();
    let o = SolveOptions {
        draws: 3000,
        grid_size: 31,
        ..SolveOptions::default()
    };
    // Effort is NaN below θ_min, so compare serialized output.
    let a = serde_json::to_string(&solve(&m, &o).unwrap()).unwrap();
    let b = serde_json::to_string(&solve(&m, &o).unwrap()).unwrap();
    assert_eq!(a, b);
}

fn finite_differences(p: &ParamSet, d: &TypeDistribution, h: f64) -> ComparativeStatics {
    let tm = |q: ParamSet| theta_min(&q, d, 101).unwrap();
    let cd = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let bm = |q: &ParamSet| b_max(q, q.omega_t);
    ComparativeStatics {
        theta_min: tm(p.clone()),
        hazard_slope: f64::NAN,
        b_max: bm(p),
        dtheta_min_dalpha: cd(&|x| tm(ParamSet { alpha: x, ..p.clone() }), p.alpha),
        dtheta_min_domega_b: cd(&|x| tm(ParamSet { omega_b: x, ..p.clone() }), p.omega_b),
        dtheta_min_dlambda_t: cd(&|x| tm(ParamSet { omega_t: x, ..p.clone() }), p.omega_t),
        dtheta_min_dgamma: cd(&|x| tm(ParamSet { gamma: x, ..p.clone() }), p.gamma),
        db_max_dkappa: cd(&|x| bm(&ParamSet { kappa: x, ..p.clone() }), p.kappa),
        db_max_dlambda_t: cd(&|x| bm(&ParamSet { omega_t: x, ..p.clone() }), p.omega_t),
        db_max_dgamma: cd(&|x| bm(&ParamSet { gamma: x, ..p.clone() }), p.gamma),
    }
}

fn assert_close(a: f64, b: f64, rel: f64, what: &str) {
    assert!((a - b).abs() <= rel * b.abs().max(1e-12), "{what}: analytic {a} vs finite difference {b}");
}

#[test]
fn comparative_statics_match_finite_differences() {
    let trunc = TypeDistribution::new(Family::TruncatedExponential { rate: 1.5, lo: 0.0, hi: 2.0 }, true).unwrap();
    let cases = [
        (ParamSet::benchmark(), TypeDistribution::uniform(0.0, 1.0).unwrap()),
        (
            ParamSet {
                alpha: 1.2,
                gamma: 0.8,
                omega_t: 1.3,
                ..ParamSet::benchmark()
            },
            trunc,
        ),
    ];
    for (p, d) in cases {
        let a = comparative_statics(&p, &d).unwrap();
        let f = finite_differences(&p, &d, 1e-4);
        assert_close(a.dtheta_min_dalpha, f.dtheta_min_dalpha, 1e-3, "dθ/dα");
        assert_close(a.dtheta_min_domega_b, f.dtheta_min_domega_b, 1e-3, "dθ/dω_b");
        assert_close(a.dtheta_min_dlambda_t, f.dtheta_min_dlambda_t, 1e-3, "dθ/dλ_T");
        assert_close(a.dtheta_min_dgamma, f.dtheta_min_dgamma, 1e-3, "dθ/dγ");
        assert_close(a.db_max_dkappa, f.db_max_dkappa, 1e-3, "db/dκ");
        assert_close(a.db_max_dlambda_t, f.db_max_dlambda_t, 1e-3, "db/dλ_T");
        assert_close(a.db_max_dgamma, f.db_max_dgamma, 1e-3, "db/dγ");
    }
}

#[test]
fn alpha_step_matches_slope() {
    let d = TypeDistribution::uniform(0.0, 1.0).unwrap();
    let p = ParamSet::benchmark();
    let t0 = theta_min(&p, &d, 101).unwrap();
    let t1 = theta_min(&ParamSet { alpha: 2.01, ..p }, &d, 101).unwrap();
    // 1 − 1/2.01
    assert!((t1 - (1.0 - 1.0 / 2.01)).abs() < 1e-9);
    assert!(((t1 - t0) / 0.01 - 0.25).abs() < 0.05 * 0.25);
}
