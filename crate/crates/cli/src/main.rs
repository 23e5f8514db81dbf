use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sbc_mech::{execute, load_config, CliError, Command, Sweep};

#[derive(Parser, Debug)]
#[command(name = "sbc-mech", version, about = "Bailout caps and grants under soft budget constraints")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the scenario's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Cap and grant schedule: schedule.csv and summary.json.
    Solve,
    /// Stage-game Monte Carlo at selected types: simulate.json.
    Simulate,
    /// IC/IR, envelope and cap-min checks: verify.json and ic_grid.csv.
    Verify,
    /// Grim-trigger sustainability: credibility.json.
    Credibility {
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Re-solve over a range of one scalar parameter: sweep_<key>.csv.
    Sweep {
        #[arg(long = "sweep")]
        key: String,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let Some(path) = cli.config else {
        return Err(CliError::Config(vec![sbc_mech::ConfigError {
            file: PathBuf::new(),
            key: "--config".into(),
            reason: "a scenario file is required".into(),
        }]));
    };
    let mut cfg = load_config(&path).map_err(CliError::Config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.unwrap_or_else(|| cfg.output_dir.clone());
    let cmd = match cli.command {
        Cmd::Solve => Command::Solve,
        Cmd::Simulate => Command::Simulate,
        Cmd::Verify => Command::Verify,
        Cmd::Credibility { rho } => Command::Credibility { rho },
        Cmd::Sweep { key, from, to, steps } => Command::Sweep(Sweep { key, from, to, steps }),
    };
    let outcome = execute(&cmd, &cfg, &out)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
