//! Simulation laboratory for long-distance Bell experiments with moving
//! devices.
//!
//! The crate is split along the physics:
//!
//! - [`qstate`]: two-qubit pure states, Born-rule statistics and collapse.
//! - [`bell`]: the CHSH functional, its per-trial identity and a setting
//!   optimizer.
//! - [`lhv`]: local-hidden-variable strategies, including one that exploits
//!   the detection loophole under coincidence post-selection.
//! - [`spacetime`]: Lorentz boosts, chronology, the before-before predicate
//!   and lower bounds on the speed of quantum information.
//! - [`models`]: collapse-frame hypotheses as per-trial correlation rules.
//! - [`engine`]: the seeded, reproducible Monte Carlo trial runner.
//!
//! [`rng`] and [`stats`] hold the counter-based random streams and the
//! coincidence estimators shared by `lhv` and `engine`.

pub mod bell;
pub mod engine;
mod error;
pub mod lhv;
pub mod models;
pub mod qstate;
pub mod rng;
pub mod spacetime;
pub mod stats;

pub use error::{Error, Result};
