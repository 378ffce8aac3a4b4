//! Experiment drivers, configuration and report emission.
//!
//! Each experiment reads an [`ExperimentConfig`], runs in memory to produce
//! [`Artifacts`] (named checks, tables, plots), and [`execute`] writes them
//! together with a manifest.

pub mod commands;
pub mod config;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use commands::run_experiment;
pub use config::{ExperimentConfig, ExperimentKind};
pub use report::{emit_report, Artifacts, Check, Status};

use crate::error::Result;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "STABLAB_THREADS";

/// Configure the global worker pool from [`THREADS_ENV`]; returns the pool size.
pub fn init_threads() -> usize {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool may already exist (tests, repeated calls); keep it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    rayon::current_num_threads()
}

/// Outcome of [`execute`].
#[derive(Debug)]
pub struct Execution {
    pub status: Status,
    pub manifest: PathBuf,
    pub artifacts: Option<Artifacts>,
    pub error: Option<crate::Error>,
}

/// Run `cfg` and write its report under `out`. The manifest is written
/// whether or not the experiment succeeds.
pub fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<Execution> {
    let threads = init_threads();
    let config = serde_json::to_value(cfg)?;
    let start = Instant::now();
    let result = run_experiment(cfg);
    let wall = start.elapsed().as_secs_f64();
    let name = cfg.experiment.name();
    let manifest = emit_report(out, name, &config, cfg.init.seed, result.as_ref(), wall, threads)?;
    Ok(match result {
        Ok(art) => Execution {
            status: art.status(),
            manifest,
            artifacts: Some(art),
            error: None,
        },
        Err(e) => Execution {
            status: Status::of_error(&e),
            manifest,
            artifacts: None,
            error: Some(e),
        },
    })
}
