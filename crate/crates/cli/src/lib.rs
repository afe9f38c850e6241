//! Certification pipeline behind the `nscert` binary.
//!
//! The flow is config -> datum -> approximant -> estimators -> constants ->
//! control bounds -> report.  Every stage lives in [`nscert`]; this crate
//! only orchestrates, so each number in the emitted report traces back to
//! exactly one library call.
//!
//! Outputs per run: `report.json` (summary, deterministic for a fixed config
//! and seed), `bounds.csv` (certified bound curves), `estimators.csv`
//! (defect/growth samples), and `timings.json` (wall-clock breakdown; kept
//! out of the report so its bytes stay reproducible).

use std::process::ExitCode;

use thiserror::Error;

pub mod config;
pub mod datum;
pub mod pipeline;
pub mod report;
pub mod validate;

/// Pipeline failure, carrying the contractual exit code:
///
/// * 2 — the config failed validation,
/// * 3 — constants unavailable (cache miss with computation disabled),
/// * 4 — an integrator gave up (a partial report is still written),
/// * 1 — anything else (I/O and serialization).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("constants: {0}")]
    Constants(String),
    #[error("integrator: {0}")]
    Integrator(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            CliError::Config(_) => 2,
            CliError::Constants(_) => 3,
            CliError::Integrator(_) => 4,
            CliError::Io(_) | CliError::Json(_) => 1,
        };
        ExitCode::from(code)
    }
}
