//! Turns an [`ExperimentConfig`] into independent jobs, one per grid point
//! (and per relation, function or adversary where the work splits
//! naturally). Each job gets its own seed derived from the master seed, so
//! results do not depend on scheduling.

use std::sync::Arc;

use anyhow::{bail, Result};

use oraclelab_core::bounds::commutator::{
    cross_check, f_projector_anchor, verify_commutator_bound, verify_local_bounds,
};
use oraclelab_core::bounds::interfaces::{
    bundled_functions, bundled_strategies, early_extraction_experiment, hard_collision_experiment,
    hard_property_experiment, GameSetup, Strategy,
};
use oraclelab_core::bounds::queries::{
    blind_guess_circuit, collision_adversaries, collision_experiment, grover_experiment,
    kickback_search_circuit, odd_parity_relation, single_query_circuit, two_query_search_circuit,
};
use oraclelab_core::bounds::theorem::{indistinguishability, property_reports};
use oraclelab_core::bounds::{BoundReport, Params};
use oraclelab_core::coins::{exhaustive_or_sampled, SampledCoins, MAX_EXHAUSTIVE_LEAVES};
use oraclelab_core::fo::{
    decaps_agreement, delta_exact, fo_advantage_report, gamma_spread, indcca_distribution,
    indcca_game, ow_cpa_game, CcaAdversary, CcaSetup, DecapsBackend, DecapsQuery, FoKem,
    OwAdversary, PkeSpec, SpreadMode,
};
use oraclelab_core::oracle::{OracleConfig, OracleState};
use oraclelab_core::relation::{CommitFunction, Relation, RelationView};
use oraclelab_core::rng::{derive_seed, SimRng};
use oraclelab_core::sigma::{
    p_trivial, run_sigma_experiment, AccessStructure, Prover, SigmaSpec, Verifier, XorShareProtocol,
};
use oraclelab_core::sparse::SparseState;
use serde_json::Value;

use crate::config::{BackendKind, Experiment, ExperimentConfig, GridPoint};
use crate::fixtures::Store;

/// Default Monte-Carlo trials for the Σ-protocol runs.
pub const SIGMA_TRIALS: usize = 10_000;
/// Default random relations per domain at `n = 2`.
pub const RANDOM_RELATIONS: usize = 100;
/// Relations per full-matrix cross-check job.
pub const CROSS_CHECK_CHUNK: usize = 8;
/// Monte-Carlo runs for FO games whose tree is too large.
pub const FO_TRIALS: usize = 10_000;

/// One report row with the facts the runner needs about it.
#[derive(Clone, Debug)]
pub struct Row {
    pub report: BoundReport,
    /// False for informational rows (estimates, vacuous-by-design bounds).
    pub asserted: bool,
    pub backend: &'static str,
}

impl Row {
    fn asserted(report: BoundReport, backend: &'static str) -> Self {
        Self {
            report,
            asserted: true,
            backend,
        }
    }

    fn info(report: BoundReport, backend: &'static str) -> Self {
        Self {
            report,
            asserted: false,
            backend,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct JobOutput {
    pub rows: Vec<Row>,
    /// Game trace lines (FO only).
    pub traces: Vec<Value>,
}

type JobFn = dyn Fn() -> Result<JobOutput> + Send + Sync;

pub struct Job {
    pub label: String,
    pub run: Arc<JobFn>,
}

fn job(label: impl Into<String>, f: impl Fn() -> Result<JobOutput> + Send + Sync + 'static) -> Job {
    Job {
        label: label.into(),
        run: Arc::new(f),
    }
}

fn rows(reports: Vec<BoundReport>, backend: &'static str) -> JobOutput {
    JobOutput {
        rows: reports
            .into_iter()
            .map(|r| Row::asserted(r, backend))
            .collect(),
        traces: Vec::new(),
    }
}

macro_rules! with_backend {
    ($kind:expr, $b:ident => $body:expr) => {
        match $kind {
            BackendKind::Dense => {
                type $b = OracleState;
                $body
            }
            BackendKind::Sparse => {
                type $b = SparseState;
                $body
            }
        }
    };
}

fn points(config: &ExperimentConfig, defaults: &[(u32, u64)]) -> Vec<(u32, u64, GridPoint)> {
    if config.grid.is_empty() {
        return defaults
            .iter()
            .map(|&(n, m)| (n, m, GridPoint::default()))
            .collect();
    }
    config
        .grid
        .iter()
        .map(|p| {
            (
                p.n.unwrap_or(defaults[0].0),
                p.m.unwrap_or(defaults[0].1),
                p.clone(),
            )
        })
        .collect()
}

fn fixtures_of<'a>(
    config: &'a ExperimentConfig,
    kind: &'a str,
) -> impl Iterator<Item = &'a String> + 'a {
    config
        .fixtures
        .iter()
        .filter(move |id| id.starts_with(&format!("{kind}/")))
}

/// Builds the job list for `config` with master seed `seed`.
pub fn jobs(
    config: &ExperimentConfig,
    store: &Store,
    seed: u64,
    backend: BackendKind,
) -> Result<Vec<Job>> {
    store.check_references(config)?;
    match config.experiment {
        Experiment::VerifyCommutator => commutator_jobs(config, store, seed),
        Experiment::VerifyTheorem2 => theorem2_jobs(config, store, seed, backend),
        Experiment::Grover => grover_jobs(config, store),
        Experiment::Collision => collision_jobs(config, store, seed, backend),
        Experiment::Interfaces => interface_jobs(config, store, seed, backend),
        Experiment::Sigma => sigma_jobs(config, store, seed),
        Experiment::Fo => fo_jobs(config, store, seed, backend),
    }
}

fn commutator_jobs(config: &ExperimentConfig, store: &Store, seed: u64) -> Result<Vec<Job>> {
    let per_domain = config.random_relations.unwrap_or(RANDOM_RELATIONS);
    let mut relations: Vec<(OracleConfig, String, Relation)> = Vec::new();
    for (i, (n, m, _)) in points(config, &[(1, 2), (1, 3), (2, 2), (2, 3)])
        .into_iter()
        .enumerate()
    {
        let cfg = OracleConfig::new(n, m)?;
        let bits = m.checked_shl(n).unwrap_or(u64::MAX);
        if bits <= 6 {
            for mask in 0..1u64 << bits {
                relations.push((
                    cfg,
                    format!("n={n} M={m} mask={mask}"),
                    Relation::from_mask(n, m, mask)?,
                ));
            }
        } else {
            let master = SimRng::new(derive_seed(seed, i as u64));
            for k in 0..per_domain {
                let mut rng = master.split(k as u64);
                let density = rng.unit();
                relations.push((
                    cfg,
                    format!("n={n} M={m} random#{k}"),
                    Relation::random(n, m, density, &mut rng)?,
                ));
            }
        }
    }
    for id in fixtures_of(config, "relation") {
        let rel = store.relation(id)?;
        relations.push((OracleConfig::new(rel.n(), rel.domain())?, id.clone(), rel));
    }
    let mut out = vec![job("anchor", || {
        Ok(rows(vec![f_projector_anchor()?], "dense"))
    })];
    // The full-matrix cross-check is the slowest part; chunks keep the pool busy.
    let small: Vec<_> = relations
        .iter()
        .filter(|(c, _, _)| c.n == 1)
        .cloned()
        .collect();
    for (k, chunk) in small.chunks(CROSS_CHECK_CHUNK).enumerate() {
        let chunk = chunk.to_vec();
        out.push(job(format!("cross-check #{k}"), move || {
            Ok(rows(vec![cross_check(&chunk)?], "dense"))
        }));
    }
    for (cfg, label, rel) in relations {
        out.push(job(label.clone(), move || {
            let mut r = verify_commutator_bound(cfg, &rel, &label)?;
            r.extend(verify_local_bounds(cfg, &rel, &label)?);
            Ok(rows(r, "dense"))
        }));
    }
    Ok(out)
}

fn commit_fixtures(config: &ExperimentConfig, store: &Store) -> Result<Vec<CommitFunction>> {
    fixtures_of(config, "commit-function")
        .map(|id| store.commit_function(id))
        .collect()
}

fn theorem2_jobs(
    config: &ExperimentConfig,
    store: &Store,
    seed: u64,
    backend: BackendKind,
) -> Result<Vec<Job>> {
    let extra = commit_fixtures(config, store)?;
    let mut out = Vec::new();
    for (i, (n, m, _)) in points(config, &[(1, 2), (1, 3), (2, 2), (2, 3)])
        .into_iter()
        .enumerate()
    {
        let point_seed = derive_seed(seed, i as u64);
        let mut fs = bundled_functions(n, m, point_seed)?;
        fs.extend(
            extra
                .iter()
                .filter(|f| f.n() == n && f.domain() == m)
                .cloned(),
        );
        out.push(job(format!("n={n} M={m}"), move || {
            with_backend!(backend, B => {
                let p1 = indistinguishability::<B>(n, m)?;
                let mut r = Vec::new();
                for f in &fs {
                    r.extend(property_reports::<B>(f, p1, point_seed)?);
                }
                Ok(rows(r, backend.name()))
            })
        }));
    }
    Ok(out)
}

/// Grover-type runs are sparse-only: the dense database at `n = 6` does not fit.
fn grover_jobs(config: &ExperimentConfig, store: &Store) -> Result<Vec<Job>> {
    let mut out = Vec::new();
    for (n, m, _) in points(config, &[(6, 8)]) {
        let zero = Relation::from_predicate(n, m, |_, y| y == 0)?;
        let odd = odd_parity_relation(n, m)?;
        let cases = [
            (kickback_search_circuit(n, m), odd),
            (two_query_search_circuit(n, m), zero.clone()),
            (blind_guess_circuit(n, m), zero),
        ];
        for (c, rel) in cases {
            out.push(job(format!("{} n={n} M={m}", c.name), move || {
                Ok(rows(
                    vec![grover_experiment::<SparseState>(&c, &rel)?],
                    "sparse",
                ))
            }));
        }
    }
    if config.grid.is_empty() {
        let c = single_query_circuit(3, 4);
        let rel = Relation::from_predicate(3, 4, |_, y| y == 0)?;
        out.push(job("single-query anchor", move || {
            let r = grover_experiment::<SparseState>(&c, &rel)?
                .with_note("vacuous bound; measured value kept as a regression anchor");
            Ok(rows(vec![r], "sparse"))
        }));
    }
    for id in fixtures_of(config, "circuit") {
        let (c, target) = store.circuit(id)?;
        let Some(target) = target else {
            bail!("circuit fixture `{id}` has no target relation")
        };
        let rel = store.relation(&target)?;
        out.push(job(id.clone(), move || {
            Ok(rows(
                vec![grover_experiment::<SparseState>(&c, &rel)?],
                "sparse",
            ))
        }));
    }
    Ok(out)
}

fn collision_jobs(
    config: &ExperimentConfig,
    store: &Store,
    seed: u64,
    backend: BackendKind,
) -> Result<Vec<Job>> {
    let extra = commit_fixtures(config, store)?;
    let mut out = Vec::new();
    for (i, (n, m, _)) in points(config, &[(3, 3)]).into_iter().enumerate() {
        let mut fs = vec![
            CommitFunction::identity(n, m)?,
            CommitFunction::toy_encryption(n, m, derive_seed(seed, i as u64))?,
        ];
        fs.extend(
            extra
                .iter()
                .filter(|f| f.n() == n && f.domain() == m)
                .cloned(),
        );
        for f in fs {
            out.push(job(format!("n={n} M={m} f={}", f.name()), move || {
                with_backend!(backend, B => {
                    let r = collision_adversaries(n, m)
                        .iter()
                        .map(|c| collision_experiment::<B>(c, &f))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(rows(r, backend.name()))
                })
            }));
        }
    }
    Ok(out)
}

fn interface_jobs(
    config: &ExperimentConfig,
    store: &Store,
    seed: u64,
    backend: BackendKind,
) -> Result<Vec<Job>> {
    let extra = commit_fixtures(config, store)?;
    let mut out = Vec::new();
    for (i, (n, m, point)) in points(config, &[(1, 2), (1, 3), (2, 2), (2, 3)])
        .into_iter()
        .enumerate()
    {
        let point_seed = derive_seed(seed, i as u64);
        let mut fs = bundled_functions(n, m, point_seed)?;
        fs.extend(
            extra
                .iter()
                .filter(|f| f.n() == n && f.domain() == m)
                .cloned(),
        );
        for f in fs {
            let ell = point.ell;
            out.push(job(format!("n={n} M={m} f={}", f.name()), move || {
                with_backend!(backend, B => {
                    let mut r = Vec::new();
                    let zero_t = |_: u64, t: u64| t == 0;
                    for s in bundled_strategies(m) {
                        let one = GameSetup::new(f.clone(), s.clone(), ell.unwrap_or(1))?;
                        r.push(hard_property_experiment::<B>(&one, &zero_t, "t=0", point_seed)?);
                        r.push(hard_collision_experiment::<B>(&one, false, point_seed)?);
                        r.push(hard_collision_experiment::<B>(&one, true, point_seed)?);
                        r.extend(early_extraction_experiment::<B>(&one)?);
                        let three_round = matches!(s, Strategy::Honest { .. } | Strategy::Swap { .. } | Strategy::QuantumWitness);
                        if ell.is_none() && n == 1 && three_round {
                            r.extend(early_extraction_experiment::<B>(&GameSetup::new(f.clone(), s, 3)?)?);
                        }
                    }
                    Ok(rows(r, backend.name()))
                })
            }));
        }
    }
    Ok(out)
}

/// The toy protocol a spec describes, if it uses the built-in verifier.
fn toy_of(spec: &SigmaSpec) -> Option<XorShareProtocol> {
    match spec.verifier {
        Verifier::XorShares { share_bits } => {
            let toy = XorShareProtocol::new(share_bits, spec.randomness_bits);
            (toy.spec() == *spec).then_some(toy)
        }
        Verifier::Table { .. } => None,
    }
}

fn p_triv_row(label: &str, spec: &SigmaSpec) -> Result<Row> {
    let p = p_trivial(spec, &AccessStructure::Threshold { k: 2 })?;
    let value = *p.numer() as f64 / *p.denom() as f64;
    let params = Params {
        ell: spec.ell,
        ..Default::default()
    };
    let r = BoundReport::new("sigma-p-trivial", label, params, value, 1.0).with_note(format!(
        "p_triv = {}/{} for the 2-threshold structure",
        p.numer(),
        p.denom()
    ));
    Ok(Row::info(r, "none"))
}

/// Σ-protocol runs are sparse-only: the domain has `2^{message + randomness bits}` points.
fn sigma_jobs(config: &ExperimentConfig, store: &Store, seed: u64) -> Result<Vec<Job>> {
    let trials = config.trials.unwrap_or(SIGMA_TRIALS);
    let mut protocols = vec![(
        "xor-shares(b=4,r=4)".to_string(),
        XorShareProtocol::new(4, 4),
    )];
    let mut out = Vec::new();
    for id in fixtures_of(config, "sigma-spec") {
        let spec = store.sigma_spec(id)?;
        let row = p_triv_row(id, &spec)?;
        out.push(job(format!("{id} p_triv"), move || {
            Ok(JobOutput {
                rows: vec![row.clone()],
                traces: Vec::new(),
            })
        }));
        if let Some(toy) = toy_of(&spec) {
            protocols.push((id.clone(), toy));
        }
    }
    let defaults: Vec<(u32, u64)> = vec![(16, 0)];
    for (i, (n, _, _)) in points(config, &defaults).into_iter().enumerate() {
        for (name, toy) in &protocols {
            let point_seed = derive_seed(seed, i as u64);
            let witness = SimRng::new(point_seed).below(1 << toy.share_bits);
            let provers = [
                Prover::Honest { witness },
                Prover::TrivialAttack { target: 0 },
                Prover::Garbage,
                Prover::CollisionPlanting { budget: 64 },
            ];
            for (k, prover) in provers.into_iter().enumerate() {
                let toy = *toy;
                let prover_seed = derive_seed(point_seed, k as u64);
                let label = format!("{name} n={n} {}", prover.name());
                out.push(job(label.clone(), move || {
                    let r = run_sigma_experiment::<SparseState>(
                        &prover,
                        &toy,
                        n,
                        Some(trials),
                        prover_seed,
                    )?;
                    let mut report = r.to_bound_report();
                    report.label = label.clone();
                    Ok(rows(vec![report], "sparse"))
                }));
            }
        }
    }
    Ok(out)
}

fn adversaries() -> Vec<CcaAdversary> {
    let sets = [
        vec![DecapsQuery::Honest { m: 1 }],
        vec![DecapsQuery::WrongRandomness { m: 0 }],
        vec![DecapsQuery::Honest { m: 0 }, DecapsQuery::Garbage],
        vec![DecapsQuery::Honest { m: 0 }, DecapsQuery::Honest { m: 1 }],
    ];
    sets.into_iter()
        .map(|decaps| CcaAdversary::ReEncryption {
            decaps,
            hash_after: false,
        })
        .collect()
}

fn pke_rows(name: &str, pke: &PkeSpec, seed: u64, trials: usize) -> Result<JobOutput> {
    let p = Params {
        n: pke.randomness_bits,
        m: pke.message_space,
        ..Default::default()
    };
    let delta = delta_exact(pke)?;
    let d = *delta.numer() as f64 / *delta.denom() as f64;
    let mut out = vec![Row::info(
        BoundReport::new("fo-delta", name, p.clone(), d, 1.0).with_note(format!(
            "delta = {}/{}",
            delta.numer(),
            delta.denom()
        )),
        "none",
    )];
    for (mode, tag) in [(SpreadMode::Strict, "strict"), (SpreadMode::Weak, "weak")] {
        let g = gamma_spread(pke, mode)?;
        out.push(Row::info(
            BoundReport::new(
                format!("fo-gamma-{tag}"),
                name,
                p.clone(),
                g,
                pke.randomness_bits as f64,
            )
            .with_note("min-entropy in bits; the bound column is n"),
            "none",
        ));
    }
    let ow = exhaustive_or_sampled(MAX_EXHAUSTIVE_LEAVES, trials, seed, |c| {
        ow_cpa_game(pke, OwAdversary::Guess, c)
    })?;
    out.push(Row::info(
        BoundReport::new(
            "fo-ow-cpa-guess",
            name,
            p.clone(),
            ow.probability_of(|w| *w),
            1.0 / pke.message_space as f64,
        )
        .with_note("guessing adversary; bound column is 1/|M|"),
        "none",
    ));
    let inv = exhaustive_or_sampled(MAX_EXHAUSTIVE_LEAVES, trials, seed, |c| {
        ow_cpa_game(pke, OwAdversary::TableInversion, c)
    })?;
    let ow_adv = inv.probability_of(|w| *w);
    let kem = FoKem::new(pke.clone(), 1);
    let adv = CcaAdversary::ReEncryption {
        decaps: vec![DecapsQuery::Garbage],
        hash_after: false,
    };
    let setup = CcaSetup {
        kem: kem.clone(),
        adversary: adv.clone(),
        backend: DecapsBackend::Real,
    };
    let game = indcca_distribution::<SparseState>(&setup, MAX_EXHAUSTIVE_LEAVES, trials, seed)?;
    let advantage = (game.probability_of(|o| o.won) - 0.5).abs();
    let mut report = fo_advantage_report(&kem, &adv, advantage, ow_adv)?;
    report.label = format!("{name} {}", report.label);
    out.push(Row::info(report, "sparse"));
    Ok(JobOutput {
        rows: out,
        traces: Vec::new(),
    })
}

fn trace_lines(
    setup: &CcaSetup,
    label: &str,
    seed: u64,
    backend: BackendKind,
) -> Result<Vec<Value>> {
    let mut coins = SampledCoins::new(seed);
    let (_, trace) = with_backend!(backend, B => indcca_game::<B>(setup, false, &mut coins)?);
    Ok(trace
        .into_iter()
        .map(|event| {
            let mut v = serde_json::to_value(&event).unwrap_or(Value::Null);
            if let Value::Object(map) = &mut v {
                map.insert("run".into(), Value::String(label.to_string()));
                map.insert("backend".into(), Value::String(setup.backend.name().into()));
                map.insert(
                    "oracle_backend".into(),
                    Value::String(backend.name().into()),
                );
            }
            v
        })
        .collect())
}

fn fo_jobs(
    config: &ExperimentConfig,
    store: &Store,
    seed: u64,
    backend: BackendKind,
) -> Result<Vec<Job>> {
    let trials = config.trials.unwrap_or(FO_TRIALS);
    let mut pkes: Vec<(String, PkeSpec)> = points(config, &[(3, 2), (2, 4)])
        .into_iter()
        .enumerate()
        .map(|(i, (n, m, _))| {
            (
                format!("toy M={m} n={n}"),
                PkeSpec::toy(m, n, 2, derive_seed(seed, i as u64)),
            )
        })
        .collect();
    for id in fixtures_of(config, "pke") {
        pkes.push((id.clone(), store.pke(id)?));
    }
    let mut out = Vec::new();
    for (i, (name, pke)) in pkes.into_iter().enumerate() {
        let pke_seed = derive_seed(seed, 1000 + i as u64);
        {
            let (name, pke) = (name.clone(), pke.clone());
            out.push(job(format!("{name} estimators"), move || {
                pke_rows(&name, &pke, pke_seed, trials)
            }));
        }
        let kem = FoKem::new(pke, 1);
        for adversary in adversaries()
            .into_iter()
            .filter(|a| a.query_counts(kem.pke.message_space).2 > 0)
        {
            let fits = match &adversary {
                CcaAdversary::ReEncryption { decaps, .. } => decaps.iter().all(|q| match q {
                    DecapsQuery::Honest { m } | DecapsQuery::WrongRandomness { m } => {
                        *m < kem.pke.message_space
                    }
                    DecapsQuery::Garbage => true,
                }),
                _ => true,
            };
            if !fits {
                continue;
            }
            for simulated in [DecapsBackend::ExtractKeepQuery, DecapsBackend::Extract] {
                let (kem, adversary, name) = (kem.clone(), adversary.clone(), name.clone());
                out.push(job(format!("{name} {} {}", adversary.name(), simulated.name()), move || {
                    let report = with_backend!(backend, B => decaps_agreement::<B>(&kem, &adversary, simulated, MAX_EXHAUSTIVE_LEAVES, trials, pke_seed)?);
                    let mut row = report.to_bound_report();
                    row.label = format!("{name} {}", row.label);
                    if !report.exact {
                        row = row.sampled(0.0);
                    }
                    let mut traces = Vec::new();
                    for b in [DecapsBackend::Real, simulated] {
                        let setup = CcaSetup { kem: kem.clone(), adversary: adversary.clone(), backend: b };
                        traces.extend(trace_lines(&setup, &row.label, pke_seed, backend)?);
                    }
                    Ok(JobOutput { rows: vec![Row::asserted(row, backend.name())], traces })
                }));
            }
        }
    }
    Ok(out)
}
