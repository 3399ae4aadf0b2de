//! Config parsing, run orchestration and result files for the `nlbreak`
//! command-line tool.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use anyhow::Result;

pub use commands::{cmd_mc, cmd_solve, cmd_sweep, cmd_validate, Outcome};
pub use config::{parse_config, ConfigError, Mode, RunConfig};

/// Exit status for a passing run.
pub const EXIT_PASS: i32 = 0;
/// At least one enabled check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// The config was rejected or asks for something the tool refuses to do.
pub const EXIT_CONFIG: i32 = 2;
/// The run itself failed (I/O, numerical breakdown).
pub const EXIT_RUNTIME: i32 = 3;

pub fn run_mode(mode: Mode, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    match mode {
        Mode::Solve => cmd_solve(cfg, out),
        Mode::Mc => cmd_mc(cfg, out),
        Mode::Validate => cmd_validate(cfg, out),
        Mode::Sweep => cmd_sweep(cfg, out),
    }
}

/// Reads and parses `config`, applies the seed override and runs `mode`.
pub fn run_file(mode: Mode, config: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", config.display()))?;
    let mut cfg = parse_config(&text, mode)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    run_mode(mode, &cfg, out)
}

pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.passed => EXIT_PASS,
        Ok(_) => EXIT_CHECK_FAILED,
        Err(e) => {
            if e.downcast_ref::<ConfigError>().is_some() {
                return EXIT_CONFIG;
            }
            match e.downcast_ref::<nlbreak_core::Error>() {
                Some(
                    nlbreak_core::Error::Unsupported(_)
                    | nlbreak_core::Error::InvalidParameter { .. }
                    | nlbreak_core::Error::Inconsistent(_),
                ) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            }
        }
    }
}
