//! The five subcommands. Each writes its files into the output directory
//! and returns their paths.

use std::path::{Path, PathBuf};

use sbc_core::credibility::grim_trigger_sustainable;
use sbc_core::game::{simulate, ChoiceOverrides, SimulationReport};
use sbc_core::mechanism::{cap_schedule, solve, SolveOptions};
use sbc_core::verify::{
    capmin_derivative_check, check_envelope, check_ic_ir, sample_quantiles, CapMinRow, EnvelopeReport, IcReport,
    MechanismTable,
};
use sbc_core::ParamSet;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::output::{self, Summary, SweepRow};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Sweep {
    /// `steps` evenly spaced values from `from` to `to`, both included.
    pub fn values(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.from];
        }
        let h = (self.to - self.from) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| if k + 1 == self.steps { self.to } else { self.from + h * k as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Solve,
    Simulate,
    Verify,
    Credibility { rho: Option<f64> },
    Sweep(Sweep),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// False only when `verify` found a failing check.
    pub passed: bool,
}

pub fn execute(cmd: &Command, cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    output::ensure_dir(out)?;
    match cmd {
        Command::Solve => run_solve(cfg, out),
        Command::Simulate => run_simulate(cfg, out),
        Command::Verify => run_verify(cfg, out),
        Command::Credibility { rho } => run_credibility(cfg, *rho, out),
        Command::Sweep(s) => run_sweep(cfg, s, out),
    }
}

fn done(files: Vec<PathBuf>) -> Result<Outcome, CliError> {
    Ok(Outcome { files, passed: true })
}

fn run_solve(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let sol = solve(&cfg.model, &cfg.solve_options())?;
    done(vec![
        output::write_schedule_csv(&out.join("schedule.csv"), &sol)?,
        output::write_json(&out.join("summary.json"), &Summary::from(&sol))?,
    ])
}

fn run_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let m = &cfg.model;
    let sched = cap_schedule(&m.params, &m.distribution, cfg.grid_size, cfg.iron)?;
    let thetas = cfg.simulate.thetas.clone().unwrap_or_else(|| {
        let n = sched.points.len();
        (0..5).map(|k| sched.points[k * (n - 1) / 4].theta).collect()
    });
    let cap_at = |theta: f64| -> f64 {
        if let Some(c) = cfg.simulate.cap {
            return c;
        }
        // Nearest grid point; the schedule is tabulated, not interpolated.
        sched
            .points
            .iter()
            .min_by(|a, b| (a.theta - theta).abs().total_cmp(&(b.theta - theta).abs()))
            .map_or(0.0, |c| c.b_star)
    };
    let reports = thetas
        .iter()
        .map(|&t| simulate(m, t, cap_at(t), &ChoiceOverrides::default(), cfg.draws, cfg.seed))
        .collect::<sbc_core::Result<Vec<SimulationReport>>>()?;
    done(vec![output::write_json(&out.join("simulate.json"), &reports)?])
}

#[derive(Debug, Serialize)]
struct VerifyFile<'a> {
    pass: bool,
    ic: &'a IcReport,
    envelope: &'a EnvelopeReport,
    capmin: &'a [CapMinRow],
}

fn run_verify(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let m = &cfg.model;
    let sol = solve(m, &cfg.solve_options())?;
    let points = cfg.verify.points.min(sol.cap_grid.len());
    let table = MechanismTable::from_solution(&sol, points, m.params.omega_b / m.params.omega_t, cfg.verify.clamped)?;
    let opts = cfg.verify_options();
    let ic = check_ic_ir(m, &table, &opts)?;
    let env = check_envelope(m, &table, &opts)?;
    let cm = &cfg.verify.capmin;
    let caps = sample_quantiles(&cm.source.samples(cm.draws, cfg.seed), &cm.quantiles);
    let capmin = capmin_derivative_check(&cm.source, &caps, cm.draws, cfg.seed)?;
    let pass = ic.pass && env.pass && capmin.iter().all(|r| r.pass);
    let files = vec![
        output::write_json(
            &out.join("verify.json"),
            &VerifyFile {
                pass,
                ic: &ic,
                envelope: &env,
                capmin: &capmin,
            },
        )?,
        output::write_ic_grid_csv(&out.join("ic_grid.csv"), &ic)?,
    ];
    Ok(Outcome { files, passed: pass })
}

fn run_credibility(cfg: &ScenarioConfig, rho: Option<f64>, out: &Path) -> Result<Outcome, CliError> {
    let p = &cfg.model.params;
    let r = grim_trigger_sustainable(p, rho.unwrap_or(p.rho))?;
    done(vec![output::write_json(&out.join("credibility.json"), &r)?])
}

fn run_sweep(cfg: &ScenarioConfig, s: &Sweep, out: &Path) -> Result<Outcome, CliError> {
    let base = &cfg.model.params;
    if base.scalar(&s.key).is_none() {
        return Err(CliError::UnknownSweepKey(s.key.clone()));
    }
    let opts = SolveOptions {
        grants: false,
        ..cfg.solve_options()
    };
    let mut rows = Vec::with_capacity(s.steps);
    for v in s.values() {
        let p: ParamSet = base.with_scalar(&s.key, v).expect("key checked above");
        let model = cfg.with_params(p)?;
        let sol = solve(&model, &opts)?;
        rows.push(SweepRow {
            value: v,
            theta_min: sol.theta_min,
            theta_dagger: sol.theta_dagger,
            b_max: sol.b_max,
            no_bailout: sol.no_bailout,
        });
    }
    let name = format!("sweep_{}.csv", s.key);
    done(vec![output::write_sweep_csv(&out.join(name), &rows)?])
}
