//! Orchestration layer around the `echelon` core: run configuration,
//! on-disk formats and the command implementations shared by the CLI
//! binary and the test suites.

pub mod config;
pub mod formats;
pub mod pipeline;

/// Process exit codes; a stable contract.
pub mod exit {
    /// Success.
    pub const OK: i32 = 0;
    /// Configuration, validation or I/O failure.
    pub const CONFIG: i32 = 2;
    /// The network design problem is infeasible.
    pub const INFEASIBLE: i32 = 3;
    /// Time limit without any incumbent.
    pub const TIMEOUT: i32 = 4;
    /// Ensemble degenerate (too few replicates for the statistics).
    pub const DEGENERATE: i32 = 5;
}
