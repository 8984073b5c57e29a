//! `sofup` — gain updates for static output feedback under known
//! perturbations, with stability certificates, region analysis, grid scans,
//! and trajectory simulation.
//!
//! Exit codes: 0 success; 2 validation failure (rejected input); 3 numerical
//! failure (a computation broke down); 1 filesystem problems; 64 usage
//! errors.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod args;
mod commands;
mod emit;

use sofup_core::Error;

fn main() -> ExitCode {
    // Keep dense linear algebra single-threaded unless the user asks
    // otherwise: per-call results stay deterministic and grid-level
    // parallelism is not oversubscribed. Must happen before the first
    // BLAS/LAPACK call.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    apply_thread_cap();

    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            // clap routes help to stdout and errors to stderr by itself.
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Honors `SOFUP_THREADS` as a cap on internal parallelism. Results are
/// schedule-invariant, so this only trades wall time for cores.
fn apply_thread_cap() {
    let Ok(raw) = std::env::var("SOFUP_THREADS") else { return };
    match raw.trim().parse::<usize>() {
        Ok(threads) if threads > 0 => {
            // Errors only if a global pool already exists, which is fine.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
        _ => eprintln!("warning: ignoring SOFUP_THREADS={raw:?} (expected a positive integer)"),
    }
}

/// Validation failures (rejected input, including schema problems in input
/// files) exit 2; filesystem problems exit 1; numerical breakdowns exit 3.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 1,
        Error::Parse(_) => 2,
        e if e.is_validation() => 2,
        _ => 3,
    }
}
