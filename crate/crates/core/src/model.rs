use serde::{Deserialize, Serialize};

use crate::distribution::TypeDistribution;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::params::{validate_params, ParamSet};
use crate::rules::SignalRule;
use crate::technology::EffortTechnology;

/// Local choices at t=1. Service q is absorbed in the reduced cost C0(θ);
/// it is carried for reporting only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalChoice {
    #[serde(default)]
    pub effort: f64,
    #[serde(default)]
    pub service: f64,
    #[serde(default)]
    pub investment: f64,
    #[serde(default)]
    pub debt: f64,
    #[serde(default = "unlimited")]
    pub debt_limit: f64,
}

fn unlimited() -> f64 {
    f64::MAX
}

impl Default for LocalChoice {
    fn default() -> Self {
        Self {
            effort: 0.0,
            service: 0.0,
            investment: 0.0,
            debt: 0.0,
            debt_limit: unlimited(),
        }
    }
}

impl LocalChoice {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.effort, self.service, self.investment, self.debt];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("local choices must be finite and >= 0".into()));
        }
        if self.debt > self.debt_limit {
            return Err(Error::InvalidArgument(format!(
                "debt {} exceeds the debt limit {}",
                self.debt, self.debt_limit
            )));
        }
        Ok(())
    }
}

/// Everything the stage game and the mechanism solver need about one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ParamSet,
    pub distribution: TypeDistribution,
    pub noise: NoiseModel,
    pub tech: EffortTechnology,
    pub rule: SignalRule,
    pub choice: LocalChoice,
}

impl Model {
    pub fn new(
        params: ParamSet,
        distribution: TypeDistribution,
        noise: NoiseModel,
        tech: EffortTechnology,
        rule: SignalRule,
        choice: LocalChoice,
    ) -> Result<Self> {
        let v = validate_params(&params);
        if !v.is_empty() {
            return Err(Error::InvalidParams(v));
        }
        noise.validate()?;
        rule.validate()?;
        choice.validate()?;
        tech.validate_on(&distribution.grid(65))?;
        Ok(Self {
            params,
            distribution,
            noise,
            tech,
            rule,
            choice,
        })
    }

    /// Default rule: fire at the statutory cap and pay up to it.
    pub fn default_rule(params: &ParamSet) -> SignalRule {
        SignalRule::Threshold {
            location: params.b_bar,
            level: params.b_bar,
        }
    }

    /// Uniform[0,1] types with α=2, κ=1, γ=ω_T=ω_b=1, b̄=2 and the default
    /// environment, in which the gap sits far above the rule's threshold so
    /// the rule fires on every draw.
    pub fn benchmark() -> Self {
        let params = ParamSet::benchmark();
        let rule = Self::default_rule(&params);
        Self::new(
            params,
            TypeDistribution::uniform(0.0, 1.0).expect("valid"),
            NoiseModel::default(),
            EffortTechnology::default(),
            rule,
            LocalChoice::default(),
        )
        .expect("benchmark is valid")
    }

    pub fn with_params(&self, params: ParamSet) -> Result<Self> {
        Self::new(params, self.distribution.clone(), self.noise, self.tech, self.rule, self.choice)
    }
}
