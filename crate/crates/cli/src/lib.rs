//! Benchmark harness behind the `ncadmm` binary: problem construction from
//! generators or files, policy × τ₀ sweeps, policy comparison tables, and
//! export of records, traces and recovered signals.

pub mod config;
pub mod export;
pub mod harness;
pub mod problems;
pub mod records;

pub use config::{CellConfig, OrderChoice, SweepConfig, TableConfig};
pub use harness::{run_cell, run_sweep, run_table, solve_cell, CellOutcome, CellReport};
pub use problems::{build_problem, BuiltProblem, ProblemKind, ProblemSpec};
pub use records::{BenchRecord, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code: 2 for validation errors, 3 for IO errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Io(_) => 3,
        }
    }

    pub fn context(self, cell: &str) -> Self {
        match self {
            HarnessError::Validation(m) => HarnessError::Validation(format!("{cell}: {m}")),
            HarnessError::Io(m) => HarnessError::Io(format!("{cell}: {m}")),
        }
    }
}
