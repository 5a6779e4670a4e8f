//! Command-line experiments for gated linear attention: invariant checks, risk
//! landscapes, training runs and sweeps written as CSV.

pub mod checkpoint;
pub mod config;
pub mod output;
pub mod prompt_dump;
pub mod sweep;
pub mod verify;
