//! Scenario files: one JSON document per scenario.

use std::fmt;
use std::path::{Path, PathBuf};

use sbc_core::mechanism::{LambdaMode, SolveOptions};
use sbc_core::rules::discretionary_rule;
use sbc_core::verify::{PayoutSource, VerifyOptions};
use sbc_core::{
    validate_params, EffortTechnology, Family, LocalChoice, Model, NoiseModel, ParamSet, SignalRule, TypeDistribution,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// One problem found while loading a scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub file: PathBuf,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.file.display(), self.key, self.reason)
    }
}

/// Rule block as written in the file. `level: null` means the statutory cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleConfig {
    Threshold {
        location: f64,
        #[serde(default)]
        level: Option<f64>,
    },
    LinearBranch {
        kink: f64,
        slope: f64,
        ceiling: f64,
    },
    /// The rule the province would pick at t=2 without commitment.
    Discretionary,
}

impl RuleConfig {
    pub fn resolve(&self, p: &ParamSet) -> SignalRule {
        match *self {
            RuleConfig::Threshold { location, level } => SignalRule::Threshold {
                location,
                level: level.unwrap_or(p.b_bar),
            },
            RuleConfig::LinearBranch { kink, slope, ceiling } => SignalRule::LinearBranch { kink, slope, ceiling },
            RuleConfig::Discretionary => discretionary_rule(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Types to simulate. Defaults to five evenly spaced points of the type grid.
    #[serde(default)]
    pub thetas: Option<Vec<f64>>,
    /// Fixed cap for every type; by default each type gets its solved b*(θ).
    #[serde(default)]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapMinConfig {
    #[serde(default = "default_capmin_source")]
    pub source: PayoutSource,
    /// Caps are taken at these sample quantiles of Y.
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default = "default_capmin_draws")]
    pub draws: usize,
}

fn default_capmin_source() -> PayoutSource {
    PayoutSource::Uniform { lo: 0.0, hi: 1.0 }
}

fn default_quantiles() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}

fn default_capmin_draws() -> usize {
    1_000_000
}

impl Default for CapMinConfig {
    fn default() -> Self {
        Self {
            source: default_capmin_source(),
            quantiles: default_quantiles(),
            draws: default_capmin_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Rows of the solved schedule used for the IC product grid.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_verify_draws")]
    pub draws: usize,
    /// Audit the limited-liability transfers instead of the unclamped ones.
    #[serde(default)]
    pub clamped: bool,
    #[serde(default)]
    pub capmin: CapMinConfig,
}

fn default_points() -> usize {
    21
}

fn default_verify_draws() -> usize {
    VerifyOptions::default().draws
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            points: default_points(),
            draws: default_verify_draws(),
            clamped: false,
            capmin: CapMinConfig::default(),
        }
    }
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub path: PathBuf,
    pub model: Model,
    pub rule: Option<RuleConfig>,
    pub grid_size: usize,
    pub draws: usize,
    pub effort_draws: usize,
    pub seed: u64,
    pub iron: bool,
    pub lambda_mode: LambdaMode,
    pub output_dir: PathBuf,
    pub simulate: SimulateConfig,
    pub verify: VerifyConfig,
}

const TOP_KEYS: [&str; 15] = [
    "params",
    "distribution",
    "noise",
    "technology",
    "rule",
    "choice",
    "grid_size",
    "draws",
    "effort_draws",
    "seed",
    "iron",
    "lambda_mode",
    "output_dir",
    "simulate",
    "verify",
];

impl ScenarioConfig {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            grid_size: self.grid_size,
            draws: self.draws,
            effort_draws: self.effort_draws,
            seed: self.seed,
            iron: self.iron,
            lambda_mode: self.lambda_mode,
            grants: true,
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            draws: self.verify.draws,
            effort_draws: self.effort_draws,
            seed: self.seed,
        }
    }

    /// Same scenario with different scalar parameters; the rule is
    /// re-resolved so that `level: null` and `discretionary` follow b̄.
    pub fn with_params(&self, params: ParamSet) -> sbc_core::Result<Model> {
        let rule = match &self.rule {
            Some(r) => r.resolve(&params),
            None => Model::default_rule(&params),
        };
        let m = &self.model;
        Model::new(params, m.distribution.clone(), m.noise, m.tech, rule, m.choice)
    }
}

struct Loader<'a> {
    file: &'a Path,
    errors: Vec<ConfigError>,
}

impl Loader<'_> {
    fn push(&mut self, key: impl Into<String>, reason: impl Into<String>) {
        self.errors.push(ConfigError {
            file: self.file.to_path_buf(),
            key: key.into(),
            reason: reason.into(),
        });
    }

    fn take<T: DeserializeOwned>(&mut self, obj: &Map<String, Value>, key: &str) -> Option<T> {
        let v = obj.get(key)?;
        match serde_json::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(key, e.to_string());
                None
            }
        }
    }

    fn required<T: DeserializeOwned>(&mut self, obj: &Map<String, Value>, key: &str) -> Option<T> {
        if !obj.contains_key(key) {
            self.push(key, "missing required key");
            return None;
        }
        self.take(obj, key)
    }

    fn distribution(&mut self, obj: &Map<String, Value>) -> Option<TypeDistribution> {
        let Some(v) = obj.get("distribution") else {
            self.push("distribution", "missing required key");
            return None;
        };
        let Some(block) = v.as_object() else {
            self.push("distribution", "expected an object");
            return None;
        };
        let mut block = block.clone();
        let ifr = match block.remove("ifr_claimed") {
            None => false,
            Some(Value::Bool(b)) => b,
            Some(other) => {
                self.push("distribution.ifr_claimed", format!("expected a boolean, got {other}"));
                return None;
            }
        };
        if let Some(csv_path) = block.remove("csv") {
            let Some(rel) = csv_path.as_str() else {
                self.push("distribution.csv", "expected a file path");
                return None;
            };
            let path = self.file.parent().unwrap_or(Path::new(".")).join(rel);
            match read_two_columns(&path) {
                Ok((thetas, densities)) => {
                    block.insert("thetas".into(), thetas.into());
                    block.insert("densities".into(), densities.into());
                }
                Err(reason) => {
                    self.push("distribution.csv", format!("{}: {reason}", path.display()));
                    return None;
                }
            }
        }
        let family: Family = match serde_json::from_value(Value::Object(block)) {
            Ok(f) => f,
            Err(e) => {
                self.push("distribution", e.to_string());
                return None;
            }
        };
        match TypeDistribution::new(family, ifr) {
            Ok(d) => Some(d),
            Err(e) => {
                self.push("distribution", e.to_string());
                None
            }
        }
    }
}

/// Reads a two-column (theta, density) CSV. A non-numeric first row is
/// taken as a header.
fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| e.to_string())?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 2 {
            return Err(format!("row {} has {} columns, expected 2", i + 1, rec.len()));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ if i == 0 => continue,
            _ => return Err(format!("row {} is not numeric", i + 1)),
        }
    }
    Ok((xs, ys))
}

/// Reads, parses and validates a scenario file. All problems are
/// reported together.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, Vec<ConfigError>> {
    let one = |key: &str, reason: String| {
        vec![ConfigError {
            file: path.to_path_buf(),
            key: key.to_string(),
            reason,
        }]
    };
    let text = std::fs::read_to_string(path).map_err(|e| one("<file>", e.to_string()))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| one("<root>", format!("parse error: {e}")))?;
    let Value::Object(obj) = root else {
        return Err(one("<root>", "expected a JSON object".into()));
    };
    let mut l = Loader {
        file: path,
        errors: Vec::new(),
    };
    for k in obj.keys() {
        if !TOP_KEYS.contains(&k.as_str()) {
            l.push(k.clone(), format!("unknown key; expected one of {}", TOP_KEYS.join(", ")));
        }
    }

    let params: Option<ParamSet> = l.required(&obj, "params");
    if let Some(p) = &params {
        for v in validate_params(p) {
            l.push(format!("params.{}", v.field), format!("must {}", v.rule));
        }
    }
    let distribution = l.distribution(&obj);
    let noise: NoiseModel = l.take(&obj, "noise").unwrap_or_default();
    if let Err(e) = noise.validate() {
        l.push("noise", e.to_string());
    }
    let tech: EffortTechnology = l.take(&obj, "technology").unwrap_or_default();
    let rule: Option<RuleConfig> = l.take(&obj, "rule");
    let choice: LocalChoice = l.take(&obj, "choice").unwrap_or_default();
    if let Err(e) = choice.validate() {
        l.push("choice", e.to_string());
    }
    let grid_size: usize = l.take(&obj, "grid_size").unwrap_or(101);
    if grid_size < 3 {
        l.push("grid_size", "must be >= 3");
    }
    let draws: usize = l.take(&obj, "draws").unwrap_or(200_000);
    if draws < sbc_core::game::MIN_DRAWS {
        l.push("draws", format!("must be >= {}", sbc_core::game::MIN_DRAWS));
    }
    let effort_draws: usize = l.take(&obj, "effort_draws").unwrap_or(20_000);
    if effort_draws == 0 {
        l.push("effort_draws", "must be > 0");
    }
    let seed: u64 = l.take(&obj, "seed").unwrap_or(42);
    let iron: bool = l.take(&obj, "iron").unwrap_or(false);
    let lambda_mode: LambdaMode = l.take(&obj, "lambda_mode").unwrap_or_default();
    let output_dir: PathBuf = l.take(&obj, "output_dir").unwrap_or_else(|| PathBuf::from("out"));
    let simulate: SimulateConfig = l.take(&obj, "simulate").unwrap_or(SimulateConfig { thetas: None, cap: None });
    let verify: VerifyConfig = l.take(&obj, "verify").unwrap_or_default();
    if verify.points < 3 {
        l.push("verify.points", "must be >= 3");
    }

    let (Some(params), Some(distribution)) = (params, distribution) else {
        return Err(l.errors);
    };
    let signal = match &rule {
        Some(r) => r.resolve(&params),
        None => Model::default_rule(&params),
    };
    if let Err(e) = signal.validate() {
        l.push("rule", e.to_string());
    }
    if let Err(e) = tech.validate_on(&distribution.grid(65)) {
        l.push("technology", e.to_string());
    }
    if !l.errors.is_empty() {
        return Err(l.errors);
    }
    let model = Model::new(params, distribution, noise, tech, signal, choice).map_err(|e| one("<model>", e.to_string()))?;
    Ok(ScenarioConfig {
        path: path.to_path_buf(),
        model,
        rule,
        grid_size,
        draws,
        effort_draws,
        seed,
        iron,
        lambda_mode,
        output_dir,
        simulate,
        verify,
    })
}
