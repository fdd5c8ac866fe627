//! The extractable random-oracle simulator `S` with its two interfaces
//! `S.RO` (compressed-oracle queries) and `S.E` (classical extraction
//! queries for `R_t = {(x, y) : f(x, y) = t}`).
//!
//! Every interface call is logged. Sampled calls draw from a generator
//! split off the simulator seed by call index, so the log alone pins the
//! randomness of a run.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::OracleBackend;
use crate::coins::Coins;
use crate::error::{Error, Result};
use crate::extraction::ExtractionOutcome;
use crate::linalg::{Matrix, RegisterLayout};
use crate::oracle::{OracleConfig, OracleState};
use crate::relation::{CommitFunction, RelationView};
use crate::rng::SimRng;
use crate::sparse::SparseState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum CallKind {
    RoClassical {
        x: u64,
        h: u64,
    },
    RoQuantum {
        x_register: usize,
        y_register: usize,
    },
    Extract {
        t: u64,
        outcome: ExtractionOutcome,
    },
    /// Extraction for an explicit relation rather than some `R_t`.
    ExtractRelation {
        outcome: ExtractionOutcome,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub index: u64,
    /// Seed of the generator the outcome was drawn with; `None` for
    /// forced or enumerated outcomes.
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub kind: CallKind,
    /// Born probability of the recorded outcome.
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct SimulatorS<B: OracleBackend> {
    backend: B,
    commit: CommitFunction,
    rng: SimRng,
    log: Vec<CallRecord>,
}

impl<B: OracleBackend> SimulatorS<B> {
    /// Wraps a backend. `commit` must live on the same `(n, M)` as the
    /// backend's oracle.
    pub fn new(backend: B, commit: CommitFunction, seed: u64) -> Result<Self> {
        let cfg = backend.config();
        if commit.n() != cfg.n || commit.domain() != cfg.domain {
            return Err(Error::InvalidSpec(
                "commit function does not match the oracle configuration".into(),
            ));
        }
        Ok(Self {
            backend,
            commit,
            rng: SimRng::new(seed),
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> OracleConfig {
        self.backend.config()
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn into_backend(self) -> B {
        self.backend
    }

    pub fn commit(&self) -> &CommitFunction {
        &self.commit
    }

    pub fn log(&self) -> &[CallRecord] {
        &self.log
    }

    fn call_rng(&self) -> SimRng {
        self.rng.split(self.log.len() as u64)
    }

    fn record(&mut self, seed: Option<u64>, kind: CallKind, probability: f64) {
        let index = self.log.len() as u64;
        self.log.push(CallRecord {
            index,
            seed,
            kind,
            probability,
        });
    }

    /// Applies an adversary unitary; not logged (it is not an interface call).
    pub fn apply_adversary(&mut self, op: &Matrix, positions: &[usize]) -> Result<()> {
        self.backend.apply_adversary(op, positions)
    }

    /// Measures adversary registers, drawing the outcome from `coins`.
    pub fn measure_with(
        &mut self,
        positions: &[usize],
        coins: &mut dyn Coins,
    ) -> Result<Vec<usize>> {
        let dist = self.backend.measure_distribution(positions)?;
        let weights: Vec<f64> = dist.iter().map(|d| d.1).collect();
        let (values, _) = dist[coins.choose(&weights)].clone();
        self.backend.measure_collapse(positions, &values)?;
        Ok(values)
    }

    // S.RO

    /// Classical `S.RO(x)` with a Born-sampled response.
    pub fn s_ro(&mut self, x: u64) -> Result<u64> {
        let mut rng = self.call_rng();
        let seed = rng.seed();
        let dist = self.backend.ro_distribution(x)?;
        let weights: Vec<f64> = dist.iter().map(|d| d.1).collect();
        let (h, p) = dist[rng.weighted_index(&weights)];
        self.backend.ro_collapse(x, h)?;
        self.record(Some(seed), CallKind::RoClassical { x, h }, p);
        Ok(h)
    }

    /// Response distribution of `S.RO(x)` without performing it.
    pub fn s_ro_outcomes(&self, x: u64) -> Result<Vec<(u64, f64)>> {
        self.backend.ro_distribution(x)
    }

    /// Performs `S.RO(x)` conditioned on response `h`; returns its probability.
    pub fn s_ro_force(&mut self, x: u64, h: u64) -> Result<f64> {
        let p = self.backend.ro_collapse(x, h)?;
        self.record(None, CallKind::RoClassical { x, h }, p);
        Ok(p)
    }

    /// `S.RO(x)` with the response chosen by `coins`: sampled from the
    /// simulator's own generator in sampling mode, enumerated otherwise.
    pub fn s_ro_with(&mut self, x: u64, coins: &mut dyn Coins) -> Result<u64> {
        if coins.is_sampling() {
            return self.s_ro(x);
        }
        let dist = self.backend.ro_distribution(x)?;
        let weights: Vec<f64> = dist.iter().map(|d| d.1).collect();
        let h = dist[coins.choose(&weights)].0;
        self.s_ro_force(x, h)?;
        Ok(h)
    }

    /// Quantum `S.RO` on the adversary registers at `x_register`, `y_register`.
    pub fn s_ro_quantum(&mut self, x_register: usize, y_register: usize) -> Result<()> {
        self.backend.quantum_query(x_register, y_register)?;
        self.record(
            None,
            CallKind::RoQuantum {
                x_register,
                y_register,
            },
            1.0,
        );
        Ok(())
    }

    // S.E

    /// Classical `S.E(t)` with a Born-sampled outcome.
    pub fn s_e(&mut self, t: u64) -> Result<ExtractionOutcome> {
        self.commit.check_t(t)?;
        let mut rng = self.call_rng();
        let seed = rng.seed();
        let rel = self.commit.relation_for(t);
        let dist = self.backend.extract_distribution(&rel)?;
        let weights: Vec<f64> = dist.iter().map(|d| d.1).collect();
        let (outcome, p) = dist[rng.weighted_index(&weights)];
        self.backend.extract_collapse(&rel, outcome)?;
        self.record(Some(seed), CallKind::Extract { t, outcome }, p);
        Ok(outcome)
    }

    pub fn s_e_outcomes(&self, t: u64) -> Result<Vec<(ExtractionOutcome, f64)>> {
        self.commit.check_t(t)?;
        self.backend
            .extract_distribution(&self.commit.relation_for(t))
    }

    pub fn s_e_force(&mut self, t: u64, outcome: ExtractionOutcome) -> Result<f64> {
        self.commit.check_t(t)?;
        let p = self
            .backend
            .extract_collapse(&self.commit.relation_for(t), outcome)?;
        self.record(None, CallKind::Extract { t, outcome }, p);
        Ok(p)
    }

    pub fn s_e_with(&mut self, t: u64, coins: &mut dyn Coins) -> Result<ExtractionOutcome> {
        if coins.is_sampling() {
            return self.s_e(t);
        }
        let dist = self.s_e_outcomes(t)?;
        let weights: Vec<f64> = dist.iter().map(|d| d.1).collect();
        let outcome = dist[coins.choose(&weights)].0;
        self.s_e_force(t, outcome)?;
        Ok(outcome)
    }

    /// The measurement `{Σ^x}` for an arbitrary relation, used by the
    /// search experiments.
    pub fn extract_relation_with(
        &mut self,
        rel: &dyn RelationView,
        coins: &mut dyn Coins,
    ) -> Result<ExtractionOutcome> {
        let dist = self.backend.extract_distribution(rel)?;
        let weights: Vec<f64> = dist.iter().map(|d| d.1).collect();
        let (outcome, p) = dist[coins.choose(&weights)];
        self.backend.extract_collapse(rel, outcome)?;
        self.record(None, CallKind::ExtractRelation { outcome }, p);
        Ok(outcome)
    }
}

/// Simulator on the dense backend with the given adversary registers.
pub fn dense_simulator(
    commit: CommitFunction,
    adversary: RegisterLayout,
    seed: u64,
) -> Result<SimulatorS<OracleState>> {
    let cfg = OracleConfig::new(commit.n(), commit.domain())?;
    SimulatorS::new(OracleState::with_adversary(cfg, adversary)?, commit, seed)
}

/// Simulator on the sparse backend; `q_cap` bounds the number of `S.RO`
/// queries.
pub fn sparse_simulator(
    commit: CommitFunction,
    adversary: RegisterLayout,
    q_cap: usize,
    seed: u64,
) -> Result<SimulatorS<SparseState>> {
    let cfg = OracleConfig::new(commit.n(), commit.domain())?;
    SimulatorS::new(SparseState::new(cfg, adversary, q_cap), commit, seed)
}

/// Coherent `S.E`: applies `Σ_t |t⟩⟨t|_T ⊗ M^{R_t}_{DP}` to adversary
/// registers `T` (dimension at most `|T|`) and `P` (dimension `M + 1`) of a
/// dense state.
#[cfg(feature = "experimental-coherent-extract")]
pub fn coherent_extract(
    state: &mut OracleState,
    f: &CommitFunction,
    t_pos: usize,
    p_pos: usize,
) -> Result<()> {
    use crate::extraction::classify_digits;
    let cfg = state.config();
    let regs = state.adversary().registers();
    if t_pos >= regs.len() || p_pos >= regs.len() || t_pos == p_pos {
        return Err(Error::MalformedCircuit(
            "extraction registers are missing or coincide".into(),
        ));
    }
    let m1 = cfg.domain as usize + 1;
    if regs[p_pos].dim != m1 || regs[t_pos].dim as u64 > f.codomain() {
        return Err(Error::MalformedCircuit(
            "extraction register dimensions do not match".into(),
        ));
    }
    let adv = state.adversary().clone();
    let strides = adv.strides();
    let db_dim = state.database_dim();
    let src = state.state().amplitudes().to_vec();
    let dst = state.state_mut().amplitudes_mut();
    dst.iter_mut().for_each(|a| *a = crate::linalg::ZERO);
    for (i, a) in src.iter().enumerate() {
        let (a_idx, d) = (i / db_dim, i % db_dim);
        let digits = adv.digits(a_idx);
        let t = digits[t_pos] as u64;
        let p = digits[p_pos];
        let db = {
            let mut out = alloc::vec![0usize; cfg.domain as usize];
            let mut rest = d;
            for slot in out.iter_mut().rev() {
                *slot = rest % cfg.cell_dim();
                rest /= cfg.cell_dim();
            }
            out
        };
        let shift = classify_digits(cfg, &f.relation_for(t), &db).encode() as usize;
        let np = (p + shift) % m1;
        let target = (a_idx - p * strides[p_pos] + np * strides[p_pos]) * db_dim + d;
        dst[target] += a;
    }
    Ok(())
}
