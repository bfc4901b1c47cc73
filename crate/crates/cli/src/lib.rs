//! Library side of the `atopt` command-line tool: configuration loading,
//! the subcommands and exit-code mapping.

pub mod commands;
pub mod config;

use commands::NumericalFailure;
use config::ConfigError;

/// Environment variable consulted for the worker count when `--threads` is
/// absent.
pub const THREADS_ENV: &str = "ATOPT_THREADS";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if cause.downcast_ref::<NumericalFailure>().is_some() {
            return EXIT_NUMERICAL;
        }
        if let Some(e) = cause.downcast_ref::<acoustic_topopt::Error>() {
            return if e.is_numerical() {
                EXIT_NUMERICAL
            } else if e.is_io() {
                EXIT_IO
            } else {
                EXIT_CONFIG
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_NUMERICAL
}

/// Worker count: the flag wins, then the environment, then the config.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>, config: Option<usize>) -> anyhow::Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Some(v) = env {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| ConfigError(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        return Ok(Some(n));
    }
    Ok(config)
}
