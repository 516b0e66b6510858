//! Command-line driver for the congestion-identification pipeline.
//!
//! The binary wires four commands around the `congid` library: simulate
//! a market over a network case, identify congestion statuses from an
//! LMP panel, evaluate the result against ground truth, and emit
//! plot-ready grids. Commands live here as library functions so tests
//! can drive them without spawning processes.

pub mod artifacts;
pub mod commands;
pub mod config;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The simulated market could not be cleared.
    #[error("simulation infeasible: {0}")]
    Infeasible(String),
    /// The two searches together explain less than the data's rank.
    #[error("{0}")]
    RankDeficit(String),
    /// Every interval sits below the congestion filter tolerance.
    #[error("no congestion observed: every interval is below the filter tolerance")]
    NoCongestion,
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::RankDeficit(_) => 3,
            CliError::NoCongestion => 4,
            CliError::Other(_) => 1,
        }
    }
}
