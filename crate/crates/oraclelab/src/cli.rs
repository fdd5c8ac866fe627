//! Argument parsing and the top-level command dispatch.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{self, BackendKind, Experiment, ExperimentConfig};
use crate::fixtures::{bundled_dir, Fixture, Store};
use crate::output;
use crate::runner::{self, sparse_only, RunOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "oraclelab",
    version,
    about = "Compressed-oracle extraction experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Config file, or the name of a bundled config fixture.
    #[arg(long)]
    pub config: Option<String>,
    /// Master seed; overrides the config's.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Output directory.
    #[arg(long, default_value = "oraclelab-out")]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Record wall-clock time per job in the results.
    #[arg(long)]
    pub timing: bool,
    /// Fixture directory (default: the bundled one).
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    VerifyCommutator(RunArgs),
    VerifyTheorem2(RunArgs),
    Grover(RunArgs),
    Collision(RunArgs),
    Interfaces(RunArgs),
    Sigma(RunArgs),
    Fo(RunArgs),
    /// Runs every entry of a config (single or `{"runs": [...]}`).
    Sweep(RunArgs),
    ListFixtures {
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Only fixtures of this module (bound-lab, sigma-extract, fo-kem, cli-runner).
        #[arg(long)]
        module: Option<String>,
    },
}

/// Parses the arguments, runs the command and returns the exit code.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::ListFixtures { fixtures, module } => {
            match list_fixtures(fixtures.as_deref(), module.as_deref()) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_CONFIG
                }
            }
        }
        Command::Sweep(a) => run(None, &a),
        Command::VerifyCommutator(a) => run(Some(Experiment::VerifyCommutator), &a),
        Command::VerifyTheorem2(a) => run(Some(Experiment::VerifyTheorem2), &a),
        Command::Grover(a) => run(Some(Experiment::Grover), &a),
        Command::Collision(a) => run(Some(Experiment::Collision), &a),
        Command::Interfaces(a) => run(Some(Experiment::Interfaces), &a),
        Command::Sigma(a) => run(Some(Experiment::Sigma), &a),
        Command::Fo(a) => run(Some(Experiment::Fo), &a),
    }
}

fn list_fixtures(dir: Option<&Path>, module: Option<&str>) -> Result<()> {
    let store = Store::load(&dir.map_or_else(bundled_dir, Path::to_path_buf))?;
    let listed: Vec<_> = store
        .entries()
        .filter(|e| module.is_none_or(|m| e.fixture.module() == m))
        .map(|e| json!({"id": e.id, "kind": e.fixture.kind(), "module": e.fixture.module()}))
        .collect();
    println!("{}", serde_json::to_string_pretty(&listed)?);
    Ok(())
}

/// A path on disk, or else a bundled `config/<name>` fixture.
fn load_configs(spec: &str, store: &Store) -> Result<Vec<ExperimentConfig>> {
    let path = Path::new(spec);
    if path.exists() {
        return config::load(path);
    }
    let id = format!("config/{}", spec.trim_end_matches(".json"));
    match store.get(&id) {
        Ok(entry) => match &entry.fixture {
            Fixture::Config { config } => {
                config.validate()?;
                Ok(vec![config.clone()])
            }
            _ => bail!("`{id}` is not a config"),
        },
        Err(_) => bail!("config `{spec}` is neither a file nor a bundled config"),
    }
}

fn configs_for(
    experiment: Option<Experiment>,
    args: &RunArgs,
    store: &Store,
) -> Result<Vec<ExperimentConfig>> {
    let configs = match (&args.config, experiment) {
        (Some(spec), _) => load_configs(spec, store)?,
        (None, Some(e)) => vec![ExperimentConfig::new(e)],
        (None, None) => bail!("sweep needs --config"),
    };
    if let Some(e) = experiment {
        if let Some(c) = configs.iter().find(|c| c.experiment != e) {
            bail!(
                "config run `{}` is a {} experiment, not {}",
                c.label(),
                c.experiment.name(),
                e.name()
            );
        }
    }
    Ok(configs)
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn run(experiment: Option<Experiment>, args: &RunArgs) -> i32 {
    let prepared = (|| -> Result<_> {
        let store = Store::load(&args.fixtures.clone().unwrap_or_else(bundled_dir))?;
        let configs = configs_for(experiment, args, &store)?;
        let jobs = args
            .jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        let opts = RunOptions {
            seed: args.seed,
            backend: args.backend,
            jobs,
            timing: args.timing,
        };
        for c in &configs {
            if sparse_only(c.experiment) && opts.backend.or(c.backend) == Some(BackendKind::Dense) {
                eprintln!(
                    "note: {} runs on the sparse backend only",
                    c.experiment.name()
                );
            }
        }
        let planned = runner::plan(&configs, &store, &opts)?;
        Ok((configs, opts, planned))
    })();
    let (configs, opts, planned) = match prepared {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_CONFIG;
        }
    };
    let started = unix_seconds();
    let outcome = match runner::execute(planned, &opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_CONFIG;
        }
    };
    let finished = unix_seconds();
    let runs: Vec<_> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (seed, backend) = runner::resolve(c, i, configs.len(), &opts);
            json!({"run": c.label(), "experiment": c.experiment.name(), "seed": seed, "backend": backend.name()})
        })
        .collect();
    let metadata = json!({
        "started_unix": started,
        "finished_unix": finished,
        "version": env!("CARGO_PKG_VERSION"),
        "jobs": opts.jobs,
        "runs": runs,
        "rows": outcome.records.len(),
    });
    if let Err(e) = output::write_outcome(&args.out, &outcome)
        .and_then(|()| output::write_metadata(&args.out, &metadata))
    {
        eprintln!("error: {e:#}");
        return EXIT_CONFIG;
    }
    let asserted = outcome.records.iter().filter(|r| r.asserted).count();
    let violations: Vec<_> = outcome.violations().collect();
    for v in &violations {
        eprintln!(
            "VIOLATION {} [{}] {}: measured {:.6e} > bound {:.6e}",
            v.report.experiment, v.run, v.report.label, v.report.measured, v.report.bound
        );
    }
    eprintln!(
        "{} rows ({asserted} asserted, {} violated) written to {}",
        outcome.records.len(),
        violations.len(),
        args.out.display()
    );
    if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}
