//! Runner: pool, dispatch, manifest, exit status.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::LabResult;
use crate::experiments::{execute, Outcome, RunContext};
use crate::io::{self, Artifacts};
use crate::pool::{build_pool, resolve_workers};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CLAIM_FAILED: i32 = 2;

#[derive(Debug, Serialize)]
struct Versions {
    width_sde: &'static str,
    width_sde_core: &'static str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    subcommand: &'static str,
    config: &'a ExperimentConfig,
    seed: u64,
    workers: usize,
    versions: Versions,
    started_unix_s: f64,
    wall_time_s: f64,
    claim_passed: Option<bool>,
    artifacts: &'a [String],
}

#[derive(Debug)]
pub struct RunReport {
    pub exit_code: i32,
    pub outcome: Outcome,
    pub workers: usize,
}

impl RunReport {
    pub fn summary(&self) -> &Value {
        &self.outcome.summary
    }
}

/// Executes a validated configuration, writing artifacts and `manifest.json`
/// under its output directory.
pub fn run(cfg: &ExperimentConfig, workers_flag: Option<usize>) -> LabResult<RunReport> {
    cfg.validate()?;
    let workers = resolve_workers(workers_flag, cfg.workers)?;
    let pool = build_pool(workers)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let mut ctx = RunContext { cfg, pool: &pool, artifacts: Artifacts::new(&cfg.output_dir)? };
    let outcome = execute(&mut ctx)?;
    let manifest = Manifest {
        subcommand: cfg.subcommand.name(),
        config: cfg,
        seed: cfg.seed,
        workers,
        versions: Versions { width_sde: env!("CARGO_PKG_VERSION"), width_sde_core: width_sde_core::VERSION },
        started_unix_s: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
        claim_passed: outcome.claim_passed,
        artifacts: &ctx.artifacts.files,
    };
    io::write_json(&cfg.output_dir.join("manifest.json"), &manifest)?;
    let exit_code = if outcome.claim_passed == Some(false) { EXIT_CLAIM_FAILED } else { EXIT_OK };
    Ok(RunReport { exit_code, outcome, workers })
}
