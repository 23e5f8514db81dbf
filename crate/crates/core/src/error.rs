use thiserror::Error;

use crate::params::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("hazard undefined at theta={theta}: {reason}")]
    HazardDomain { theta: f64, reason: &'static str },

    #[error("invalid signal rule: {0}")]
    InvalidRule(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("invalid technology: {0}")]
    InvalidTechnology(String),

    #[error(
        "hazard is not nondecreasing (first drop near theta={theta}); \
         request ironing (iron_virtual_weight) to obtain a monotone cap schedule"
    )]
    NonMonotoneHazard { theta: f64 },

    #[error("derivative undefined: {0}")]
    DerivativeUndefined(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
