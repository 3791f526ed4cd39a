//! Policy search and evaluation: ARS training, evaluation statistics and
//! the wind-robustness sweep.

mod ars;
mod eval;

pub use ars::*;
pub use eval::*;

use thiserror::Error;

use crate::env::{ConfigError, EnvError};
use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid ARS config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}
