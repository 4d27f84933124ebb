//! Batches of independent trials over one world, optionally in parallel.
//! Trial `k` uses seed `base + k`; results come back in trial order.

use crate::config::{ConfigError, ScenarioConfig};
use crate::engine::{RunOptions, Simulation};
use crate::trace::{create_trace_file, Discard, Stats, Summary, TraceSink, TraceWriter};
use crate::world::World;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: u64,
    pub collisions: u64,
    pub backup_faults: u64,
    pub precedence_faults: u64,
    pub trials_with_deadlock: u64,
    pub check_failures: u64,
    pub spawned: u64,
    pub completed: u64,
    pub mean_completion_pct: f64,
    pub max_tokens: u32,
    pub max_progress_age: u32,
}

/// A pure fold over per-trial summaries.
pub fn aggregate(results: &[TrialResult]) -> Aggregate {
    let mut a = Aggregate { trials: results.len() as u64, ..Aggregate::default() };
    let mut pct = 0.0;
    for r in results {
        let s: &Stats = &r.summary.stats;
        match &r.summary.fault {
            Some(crate::engine::Fault::Collision { .. }) => a.collisions += 1,
            Some(crate::engine::Fault::BackupSafety { .. }) => a.backup_faults += 1,
            Some(crate::engine::Fault::PrecedenceCycle { .. }) => a.precedence_faults += 1,
            None => {}
        }
        a.trials_with_deadlock += u64::from(s.deadlock_steps > 0);
        a.check_failures += s.check_failures;
        a.spawned += s.spawned;
        a.completed += s.completed;
        pct += s.completion_pct;
        a.max_tokens = a.max_tokens.max(s.max_tokens);
        a.max_progress_age = a.max_progress_age.max(s.max_progress_age);
    }
    if !results.is_empty() {
        a.mean_completion_pct = pct / results.len() as f64;
    }
    a
}

pub fn run_trial(
    world: &World,
    config: &ScenarioConfig,
    map_csv: &str,
    seed: u64,
    options: RunOptions,
    sink: &mut dyn TraceSink,
) -> Result<Summary, ConfigError> {
    let cfg = ScenarioConfig { seed, ..config.clone() };
    let mut sim = Simulation::new(world, cfg, options)?;
    sim.run(map_csv, sink).map_err(|source| ConfigError::Io { path: PathBuf::from("<trace>"), source })
}

/// Runs `trials` seeds on `threads` workers (1 runs in the caller's thread);
/// writes `trial-<seed>.ndjson` into `out` when given.
pub fn run_campaign(
    world: &World,
    config: &ScenarioConfig,
    map_csv: &str,
    trials: u64,
    threads: usize,
    options: RunOptions,
    out: Option<&Path>,
) -> Result<Vec<TrialResult>, ConfigError> {
    let one = |k: u64| -> Result<TrialResult, ConfigError> {
        let seed = config.seed + k;
        match out {
            Some(dir) => {
                let path = dir.join(format!("trial-{seed}.ndjson"));
                let io = |source| ConfigError::Io { path: path.clone(), source };
                let mut w: TraceWriter<_> = create_trace_file(&path).map_err(io)?;
                let summary = run_trial(world, config, map_csv, seed, options, &mut w)?;
                w.into_inner().flush().map_err(io)?;
                Ok(TrialResult { seed, summary, trace_file: Some(path) })
            }
            None => {
                let summary = run_trial(world, config, map_csv, seed, options, &mut Discard)?;
                log::info!("trial seed {seed}: {} steps, fault {:?}", summary.stats.steps, summary.fault);
                Ok(TrialResult { seed, summary, trace_file: None })
            }
        }
    };
    if threads <= 1 {
        return (0..trials).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| (0..trials).into_par_iter().map(one).collect())
}
