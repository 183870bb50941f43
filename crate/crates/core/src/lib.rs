//! Invariant linear coefficients from multiple environments with partially
//! missing outcomes.

pub mod data;
pub mod error;
pub mod estimators;
pub mod imputation;
pub mod io;
pub mod objectives;
pub mod optimizer;
pub mod rng;
pub mod simulation;

pub use data::{
    missing_ratio, EnvironmentData, GroundTruth, Imputations, MultiEnvDataset, Support,
};
pub use error::{Error, Result};
pub use objectives::{ObjectiveMode, ObjectiveValue, PenaltyVariant};
