//! Library side of the `apnet` command-line tool. Each subcommand is a plain
//! function taking the loaded [`Config`] and its arguments.

pub mod annotations;
pub mod commands;
pub mod config;
pub mod error;
mod io;

pub use commands::{
    cmd_evaluate, cmd_labels, cmd_match, cmd_refine, cmd_simulate, EvaluateArgs, LabelsArgs, MatchArgs, MatrixFormat,
    RefineArgs, SimulateArgs,
};
pub use config::Config;
pub use error::{CliError, CliResult, ExitKind};

/// Runs `f` on a dedicated pool when a thread count is given.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::parse("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::internal(format!("thread pool: {e}"))),
    }
}
