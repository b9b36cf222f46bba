//! Command-line harness around `okl-core`: single runs, grid sweeps with
//! hindsight epsilon selection, mistake-bound checks, the kernel-alignment
//! identity and a synthetic data generator.

pub mod cli;
pub mod grid;
pub mod source;
pub mod suite;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("bound violated: {0}")]
    BoundViolation(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            BenchError::Run(_) => 2,
            BenchError::BoundViolation(_) => 3,
        }
    }
}
