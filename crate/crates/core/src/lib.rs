//! Optimal threshold–cap transfer mechanisms for a province screening
//! municipalities with private fiscal need, plus the Monte Carlo stage game
//! and the independent oracles used to check the closed forms.

pub mod credibility;
pub mod distribution;
pub mod draws;
pub mod error;
pub mod game;
pub mod mechanism;
pub mod model;
pub mod noise;
pub mod params;
pub mod rules;
pub mod technology;
pub mod verify;

pub use distribution::{Family, TypeDistribution};
pub use draws::Estimate;
pub use error::{Error, Result};
pub use model::{LocalChoice, Model};
pub use noise::{NoiseModel, Shock};
pub use params::{validate_params, ParamSet, Violation};
pub use rules::SignalRule;
pub use technology::EffortTechnology;
