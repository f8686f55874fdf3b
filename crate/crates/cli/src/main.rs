//! `nanoscope`: command-line front end.
//!
//! Exit status: 0 success, 1 usage error, 2 data or format error,
//! 3 numerical failure (fit or bootstrap), 4 internal error.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;

use commands::Cli;

/// Error raised by the CLI itself rather than the core library.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use nanoscope_core::ErrorKind;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<nanoscope_core::Error>() {
            return match e.kind() {
                ErrorKind::Usage | ErrorKind::NotFound => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Conflict | ErrorKind::Internal => 4,
            };
        }
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => 1,
                Failure::Data(_) => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    4
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("NANOSCOPE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("NANOSCOPE_THREADS must be a non-negative integer, got {raw:?}")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("configuring {threads} worker threads: {e}"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(cli.log_level()))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let result = configure_threads().and_then(|()| commands::run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
