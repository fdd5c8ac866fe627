//! Result files. Everything except `metadata.json` is a pure function of
//! the configuration and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::runner::Outcome;

pub const RESULTS: &str = "results.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const TRACES: &str = "traces.jsonl";
pub const METADATA: &str = "metadata.json";

#[derive(Serialize)]
struct SummaryRow<'a> {
    experiment: &'a str,
    n: u32,
    #[serde(rename = "M")]
    m: u64,
    gamma: u64,
    q: usize,
    measured: f64,
    bound: f64,
    satisfied: bool,
    runtime_ms: Option<f64>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_lines<T: Serialize>(dir: &Path, name: &str, items: &[T]) -> Result<()> {
    let mut w = create(dir, name)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes results, summary and (when there are any) traces into `dir`.
pub fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_lines(dir, RESULTS, &outcome.records)?;
    let mut csv = csv::Writer::from_writer(create(dir, SUMMARY)?);
    for r in &outcome.records {
        let p = &r.report;
        csv.serialize(SummaryRow {
            experiment: &p.experiment,
            n: p.n,
            m: p.m,
            gamma: p.gamma,
            q: p.q,
            measured: p.measured,
            bound: p.bound,
            satisfied: p.satisfied,
            runtime_ms: p.runtime_ms,
        })?;
    }
    csv.flush()?;
    let traces = dir.join(TRACES);
    if outcome.traces.is_empty() {
        if traces.exists() {
            std::fs::remove_file(traces)?;
        }
    } else {
        write_lines(dir, TRACES, &outcome.traces)?;
    }
    Ok(())
}

pub fn write_metadata(dir: &Path, metadata: &Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = create(dir, METADATA)?;
    serde_json::to_writer_pretty(&mut w, metadata)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
