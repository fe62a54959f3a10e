use thiserror::Error;

use crate::engine::ResultSet;
use crate::stats::SettingPair;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A setting pair collected too few coincidences to estimate a
    /// correlation. `results` carries the partial tallies when they exist.
    #[error("insufficient statistics for setting pair {pair}: {coincidences} coincidences (need {required})")]
    InsufficientStatistics {
        pair: SettingPair,
        coincidences: u64,
        required: u64,
        results: Option<Box<ResultSet>>,
    },

    #[error("trial index {index} out of range for {trials} trials")]
    IndexOutOfRange { index: u64, trials: u64 },
}
