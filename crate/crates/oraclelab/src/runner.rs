//! Runs job lists on a fixed-size worker pool and collects their rows in
//! job order, so output does not depend on `--jobs` or on scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Result};
use oraclelab_core::rng::derive_seed;
use oraclelab_core::TOLERANCE;
use serde::Serialize;
use serde_json::Value;

use crate::config::{BackendKind, Experiment, ExperimentConfig};
use crate::experiments::{jobs, Job, JobOutput};
use crate::fixtures::Store;
use oraclelab_core::bounds::BoundReport;

pub const DEFAULT_SEED: u64 = 20_240_611;

/// Run label, run seed, bound scale and the run's jobs.
pub type PlannedRun = (String, u64, f64, Vec<Job>);
type Slot = Mutex<Option<(Result<JobOutput>, f64)>>;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub jobs: usize,
    /// Fill in `runtime_ms`. Off by default so outputs are reproducible.
    pub timing: bool,
}

/// One line of `results.jsonl`.
#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub run: String,
    pub job: String,
    pub backend: &'static str,
    pub seed: u64,
    pub asserted: bool,
    #[serde(flatten)]
    pub report: BoundReport,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub records: Vec<Record>,
    pub traces: Vec<Value>,
}

impl Outcome {
    pub fn violations(&self) -> impl Iterator<Item = &Record> {
        self.records
            .iter()
            .filter(|r| r.asserted && !r.report.satisfied)
    }
}

/// Experiments whose domains only fit the sparse backend.
pub fn sparse_only(e: Experiment) -> bool {
    matches!(e, Experiment::Grover | Experiment::Sigma)
}

/// Seed and backend for run `index` of `runs` after applying the
/// command-line overrides.
pub fn resolve(
    config: &ExperimentConfig,
    index: usize,
    runs: usize,
    opts: &RunOptions,
) -> (u64, BackendKind) {
    let base = opts.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    let seed = if runs > 1 {
        derive_seed(base, index as u64)
    } else {
        base
    };
    let backend = opts.backend.or(config.backend).unwrap_or_default();
    (seed, backend)
}

/// Builds every run's jobs first, so that a bad config or a missing
/// fixture is reported before anything is computed.
pub fn plan(
    configs: &[ExperimentConfig],
    store: &Store,
    opts: &RunOptions,
) -> Result<Vec<PlannedRun>> {
    configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.validate()?;
            let (seed, backend) = resolve(c, i, configs.len(), opts);
            let list =
                jobs(c, store, seed, backend).map_err(|e| anyhow!("run `{}`: {e:#}", c.label()))?;
            Ok((c.label(), seed, c.bound_scale, list))
        })
        .collect()
}

fn run_pool(list: &[Job], workers: usize) -> Vec<(Result<JobOutput>, f64)> {
    let slots: Vec<Slot> = list.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, list.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = list.get(i) else { break };
                let start = Instant::now();
                let out = (job.run)();
                let ms = start.elapsed().as_secs_f64() * 1e3;
                *slots[i].lock().expect("result slot") = Some((out, ms));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}

pub fn execute(planned: Vec<PlannedRun>, opts: &RunOptions) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    for (run, seed, scale, list) in planned {
        let results = run_pool(&list, opts.jobs);
        for (job, (result, ms)) in list.iter().zip(results) {
            let out = result.map_err(|e| anyhow!("run `{run}`, job `{}`: {e:#}", job.label))?;
            for row in out.rows {
                let mut report = row.report;
                if row.asserted && scale != 1.0 {
                    report.bound *= scale;
                    report.satisfied = report.measured <= report.bound + TOLERANCE;
                }
                if opts.timing {
                    report.runtime_ms = Some(ms);
                }
                outcome.records.push(Record {
                    run: run.clone(),
                    job: job.label.clone(),
                    backend: row.backend,
                    seed,
                    asserted: row.asserted,
                    report,
                });
            }
            outcome.traces.extend(out.traces);
        }
    }
    Ok(outcome)
}
