//! Scalar model parameters and their validity rules.

use std::fmt;

use serde::{Deserialize, Serialize};

/// All scalar parameters of the province–municipality model.
///
/// `phi_effort` is the marginal disutility of local effort, `phi_default` the
/// welfare loss the municipality suffers on default. `reservation_utility`
/// and `type_shift` are normalizations of the reduced-form utility; both
/// default to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSet {
    pub alpha: f64,
    pub kappa: f64,
    pub gamma: f64,
    #[serde(rename = "omega_T", alias = "omega_t")]
    pub omega_t: f64,
    pub omega_b: f64,
    pub b_bar: f64,
    #[serde(default = "one")]
    pub phi_effort: f64,
    #[serde(default)]
    pub phi_default: f64,
    #[serde(default = "one")]
    pub chi: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub g: f64,
    #[serde(default = "half")]
    pub rho: f64,
    #[serde(default = "default_eps_cap")]
    pub eps_cap: f64,
    #[serde(default)]
    pub reservation_utility: f64,
    #[serde(default)]
    pub type_shift: TypeShift,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_eps_cap() -> f64 {
    0.05
}

impl Default for ParamSet {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            kappa: 1.0,
            gamma: 1.0,
            omega_t: 1.0,
            omega_b: 1.0,
            b_bar: 1.0,
            phi_effort: 1.0,
            phi_default: 0.0,
            chi: 1.0,
            s: 0.0,
            r: 0.0,
            tau: 0.0,
            g: 0.0,
            rho: 0.5,
            eps_cap: default_eps_cap(),
            reservation_utility: 0.0,
            type_shift: TypeShift::default(),
        }
    }
}

impl ParamSet {
    /// Benchmark used throughout the docs and tests:
    /// α=2, κ=1, γ=ω_T=ω_b=1, b̄=2.
    pub fn benchmark() -> Self {
        Self {
            alpha: 2.0,
            kappa: 1.0,
            gamma: 1.0,
            omega_t: 1.0,
            omega_b: 1.0,
            b_bar: 2.0,
            ..Self::default()
        }
    }

    /// Ratio γω_b/ω_T multiplying the hazard in the virtual weight.
    pub fn virtual_scale(&self) -> f64 {
        self.gamma * self.omega_b / self.omega_t
    }

    /// Returns a copy with one named scalar replaced.
    pub fn with_scalar(&self, key: &str, value: f64) -> Option<Self> {
        let mut p = self.clone();
        *p.scalar_mut(key)? = value;
        Some(p)
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        let mut p = self.clone();
        p.scalar_mut(key).map(|v| *v)
    }

    fn scalar_mut(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "alpha" => &mut self.alpha,
            "kappa" => &mut self.kappa,
            "gamma" => &mut self.gamma,
            "omega_T" | "omega_t" => &mut self.omega_t,
            "omega_b" => &mut self.omega_b,
            "b_bar" => &mut self.b_bar,
            "phi_effort" => &mut self.phi_effort,
            "phi_default" => &mut self.phi_default,
            "chi" => &mut self.chi,
            "s" => &mut self.s,
            "r" => &mut self.r,
            "tau" => &mut self.tau,
            "g" => &mut self.g,
            "rho" => &mut self.rho,
            "eps_cap" => &mut self.eps_cap,
            "reservation_utility" => &mut self.reservation_utility,
            _ => return None,
        })
    }

    /// Names accepted by [`ParamSet::with_scalar`].
    pub const SCALAR_KEYS: [&'static str; 16] = [
        "alpha",
        "kappa",
        "gamma",
        "omega_T",
        "omega_b",
        "b_bar",
        "phi_effort",
        "phi_default",
        "chi",
        "s",
        "r",
        "tau",
        "g",
        "rho",
        "eps_cap",
        "reservation_utility",
    ];
}

/// One broken invariant: the field and the rule it violates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: &str) -> Self {
        Self {
            field: field.to_string(),
            rule: rule.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} must {}", self.field, self.rule)
    }
}

/// Checks every invariant of [`ParamSet`]. An empty list means the set is valid.
///
/// `omega_T >= omega_b` is deliberately not enforced.
pub fn validate_params(p: &ParamSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let scalars = [
        ("alpha", p.alpha),
        ("kappa", p.kappa),
        ("gamma", p.gamma),
        ("omega_T", p.omega_t),
        ("omega_b", p.omega_b),
        ("b_bar", p.b_bar),
        ("phi_effort", p.phi_effort),
        ("phi_default", p.phi_default),
        ("chi", p.chi),
        ("s", p.s),
        ("r", p.r),
        ("tau", p.tau),
        ("g", p.g),
        ("rho", p.rho),
        ("eps_cap", p.eps_cap),
        ("reservation_utility", p.reservation_utility),
    ];
    for (name, v) in scalars {
        if !v.is_finite() {
            out.push(Violation::new(name, "be finite"));
        }
    }
    let mut need = |ok: bool, field: &str, rule: &str| {
        if !ok {
            out.push(Violation::new(field, rule));
        }
    };
    need(p.alpha >= 0.0, "alpha", "be >= 0");
    need(p.kappa > 0.0, "kappa", "be > 0");
    need(p.gamma > 0.0, "gamma", "be > 0");
    need(p.omega_t > 0.0, "omega_T", "be > 0");
    need(p.omega_b > 0.0, "omega_b", "be > 0");
    need(p.b_bar >= 0.0, "b_bar", "be >= 0");
    need(p.chi > 0.0, "chi", "be > 0");
    need(p.phi_effort > 0.0, "phi_effort", "be > 0");
    need(p.phi_default >= 0.0, "phi_default", "be >= 0");
    need((0.0..1.0).contains(&p.s), "s", "lie in [0,1)");
    need(p.r >= 0.0, "r", "be >= 0");
    need(p.rho > 0.0 && p.rho < 1.0, "rho", "lie in (0,1)");
    need(p.eps_cap > 0.0 && p.eps_cap < 1.0, "eps_cap", "lie in (0,1)");
    if let Err(rule) = p.type_shift.check() {
        out.push(Violation::new("type_shift", &rule));
    }
    out
}

/// The report-independent utility term K(θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TypeShift {
    Affine { intercept: f64, slope: f64 },
    /// Coefficients in increasing degree. Differentiated numerically.
    Polynomial { coefficients: Vec<f64> },
}

impl Default for TypeShift {
    fn default() -> Self {
        TypeShift::Affine {
            intercept: 0.0,
            slope: 0.0,
        }
    }
}

impl TypeShift {
    pub fn value(&self, theta: f64) -> f64 {
        match self {
            TypeShift::Affine { intercept, slope } => intercept + slope * theta,
            TypeShift::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * theta + c)
            }
        }
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        match self {
            TypeShift::Affine { slope, .. } => *slope,
            TypeShift::Polynomial { .. } => {
                let h = 1e-5 * theta.abs().max(1.0);
                (self.value(theta + h) - self.value(theta - h)) / (2.0 * h)
            }
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        let finite = match self {
            TypeShift::Affine { intercept, slope } => intercept.is_finite() && slope.is_finite(),
            TypeShift::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err("have finite coefficients".into())
        }
    }
}
