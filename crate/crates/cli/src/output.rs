//! CSV and JSON writers. Numbers in CSV carry 12 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use sbc_core::mechanism::MechanismSolution;
use sbc_core::verify::IcReport;
use serde::Serialize;

use crate::CliError;

/// `x` rounded to 12 significant digits, printed in the shortest form that
/// reads back to the rounded value.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub theta_min: f64,
    pub theta_dagger: f64,
    pub b_max: f64,
    pub no_bailout: bool,
    pub ironed: bool,
}

impl From<&MechanismSolution> for Summary {
    fn from(s: &MechanismSolution) -> Self {
        Self {
            theta_min: s.theta_min,
            theta_dagger: s.theta_dagger,
            b_max: s.b_max,
            no_bailout: s.no_bailout,
            ironed: s.ironed,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

/// theta,b_star,T_star,b_tilde,region,ll_binding
pub fn write_schedule_csv(path: &Path, sol: &MechanismSolution) -> Result<PathBuf, CliError> {
    let rows = sol.cap_grid.iter().enumerate().map(|(i, c)| {
        let g = sol.grant_grid.get(i);
        vec![
            sig12(c.theta),
            sig12(c.b_star),
            g.map_or_else(String::new, |g| sig12(g.t_star)),
            g.map_or_else(String::new, |g| sig12(g.b_tilde)),
            c.region.as_str().to_string(),
            g.map_or_else(String::new, |g| g.ll_binding.to_string()),
        ]
    });
    write_rows(path, &["theta", "b_star", "T_star", "b_tilde", "region", "ll_binding"], rows)
}

/// One row per sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub theta_min: f64,
    pub theta_dagger: f64,
    pub b_max: f64,
    pub no_bailout: bool,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<PathBuf, CliError> {
    let rows = rows.iter().map(|r| {
        vec![
            sig12(r.value),
            sig12(r.theta_min),
            sig12(r.theta_dagger),
            sig12(r.b_max),
            r.no_bailout.to_string(),
        ]
    });
    write_rows(path, &["parameter", "theta_min", "theta_dagger", "b_max", "no_bailout"], rows)
}

/// The IC product grid, one row per (true type, report).
pub fn write_ic_grid_csv(path: &Path, ic: &IcReport) -> Result<PathBuf, CliError> {
    let rows = ic.cells.iter().map(|c| {
        vec![
            sig12(c.theta),
            sig12(c.report),
            sig12(c.gain),
            sig12(c.gain_se),
            sig12(c.tolerance),
        ]
    });
    write_rows(path, &["theta", "report", "gain", "gain_se", "tolerance"], rows)
}
