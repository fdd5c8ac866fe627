//! Commit-and-open games against the simulator: the hard-property and
//! hard-collision experiments, and early extraction in two or more rounds.
//!
//! An adversary commits to `t_1, …, t_ℓ` one round at a time and later
//! opens `x_1, …, x_ℓ` (each possibly `⊥`). All adversaries are classical
//! programs over a small quantum memory `[X, Y]`; randomness comes from
//! [`Coins`], so every game can be enumerated exhaustively.
//!
//! In the real game the oracle is the compressed oracle without any
//! extraction; it is perfectly indistinguishable from a random oracle, so
//! the comparison with the simulated game measures exactly the effect of
//! the early `S.E` calls.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{
    hard_collision_bound, hard_property_bound, multi_round_distance_bound,
    multi_round_mismatch_bound, two_round_distance_bound, two_round_mismatch_bound, BoundReport,
    Params,
};
use crate::backend::OracleBackend;
use crate::coins::{
    enumerate, exhaustive_or_sampled, Coins, MAX_EXHAUSTIVE_LEAVES, MONTE_CARLO_RUNS,
};
use crate::error::{Error, Result};
use crate::extraction::ExtractionOutcome;
use crate::linalg::{fourier, trace_norm_hermitian, Matrix, RegisterLayout, ONE};
use crate::oracle::OracleConfig;
use crate::relation::{CommitFunction, Relation};
use crate::simulator::{CallKind, SimulatorS};

const X_POS: usize = 0;
const Y_POS: usize = 1;

/// What the adversary committed to in one round, and the opening it
/// intends together with the oracle value it saw for it during the run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Commitment {
    pub t: u64,
    pub x: Option<u64>,
    pub h: Option<u64>,
}

/// An opening `x_i` (`None` is `⊥`) and the value `RO(x_i)` if the
/// adversary queried it during its run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Opening {
    pub x: Option<u64>,
    pub h: Option<u64>,
}

/// The bundled adversaries. Inputs are reduced modulo `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    /// Announces a fixed `t` without querying and opens `⊥`.
    Garbage { t: u64 },
    /// Round `i` queries `x = xs[i mod |xs|]`, commits `f(x, RO(x))`, opens `x`.
    Honest { xs: Vec<u64> },
    /// Queries `x0` and `x1`, commits `f(x0, RO(x0))`, opens `x1`.
    Swap { x0: u64, x1: u64 },
    /// Queries a uniform superposition of inputs, measures the answer and
    /// then the input, commits `f(x, y)` and opens the measured `x`.
    Superposition,
    /// Honest, plus one more query on `extra` between commit and open.
    HonestWithExtra { xs: Vec<u64>, extra: u64 },
    /// Commits `f(x, 0)` blind, queries `x` only when opening.
    LateQuery { xs: Vec<u64> },
    /// First round: queries a superposition, measures only the answer `y`,
    /// commits `f(0, y)`. Before opening it queries again to uncompute `Y`
    /// and undoes the superposition on `X`, which it keeps as a quantum
    /// witness; opens `⊥`. Later rounds are honest on `x = i mod M`.
    QuantumWitness,
}

fn pick(xs: &[u64], round: usize, domain: u64) -> u64 {
    xs[round % xs.len()] % domain
}

/// Permutation swapping `|v⟩` and `|0⟩`, used to return a measured register to `|0⟩`.
fn reset_matrix(d: usize, v: usize) -> Matrix {
    let mut m = Matrix::identity(d, d);
    if v != 0 {
        m[(0, 0)] = crate::linalg::ZERO;
        m[(v, v)] = crate::linalg::ZERO;
        m[(0, v)] = ONE;
        m[(v, 0)] = ONE;
    }
    m
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Garbage { t } => format!("garbage(t={t})"),
            Strategy::Honest { xs } => format!("honest{xs:?}"),
            Strategy::Swap { x0, x1 } => format!("swap({x0}->{x1})"),
            Strategy::Superposition => "superposition".into(),
            Strategy::HonestWithExtra { xs, extra } => format!("honest{xs:?}+extra({extra})"),
            Strategy::LateQuery { xs } => format!("late-query{xs:?}"),
            Strategy::QuantumWitness => "quantum-witness".into(),
        }
    }

    /// Total number of `S.RO` queries over `ell` rounds.
    pub fn queries(&self, ell: usize) -> usize {
        match self {
            Strategy::Garbage { .. } => 0,
            Strategy::Swap { .. } => 2 * ell,
            Strategy::HonestWithExtra { .. } | Strategy::QuantumWitness => ell + 1,
            _ => ell,
        }
    }

    /// Queries made after the last commitment.
    pub fn open_queries(&self, ell: usize) -> usize {
        match self {
            Strategy::HonestWithExtra { .. } | Strategy::QuantumWitness => 1,
            Strategy::LateQuery { .. } => ell,
            _ => 0,
        }
    }

    /// Registers forming the adversary's quantum output `W`.
    pub fn witness(&self) -> Vec<usize> {
        match self {
            Strategy::QuantumWitness => vec![X_POS],
            _ => vec![],
        }
    }

    fn quantum_round<B: OracleBackend>(
        sim: &mut SimulatorS<B>,
        coins: &mut dyn Coins,
        keep_x: bool,
    ) -> Result<Commitment> {
        let cfg = sim.config();
        let m = cfg.domain as usize;
        sim.apply_adversary(&fourier(m), &[X_POS])?;
        sim.s_ro_quantum(X_POS, Y_POS)?;
        let y = sim.measure_with(&[Y_POS], coins)?[0];
        if keep_x {
            return Ok(Commitment {
                t: sim.commit().eval(0, y as u64),
                x: None,
                h: None,
            });
        }
        sim.apply_adversary(&reset_matrix(cfg.y_dim(), y), &[Y_POS])?;
        let x = sim.measure_with(&[X_POS], coins)?[0];
        let t = sim.commit().eval(x as u64, y as u64);
        sim.apply_adversary(&reset_matrix(m, x), &[X_POS])?;
        Ok(Commitment {
            t,
            x: Some(x as u64),
            h: Some(y as u64),
        })
    }

    /// Round `round` of the commit phase.
    pub fn commit<B: OracleBackend>(
        &self,
        sim: &mut SimulatorS<B>,
        coins: &mut dyn Coins,
        round: usize,
    ) -> Result<Commitment> {
        let m = sim.config().domain;
        let honest =
            |sim: &mut SimulatorS<B>, coins: &mut dyn Coins, x: u64| -> Result<Commitment> {
                let h = sim.s_ro_with(x, coins)?;
                Ok(Commitment {
                    t: sim.commit().eval(x, h),
                    x: Some(x),
                    h: Some(h),
                })
            };
        match self {
            Strategy::Garbage { t } => Ok(Commitment {
                t: t % sim.commit().codomain(),
                x: None,
                h: None,
            }),
            Strategy::Honest { xs } | Strategy::HonestWithExtra { xs, .. } => {
                honest(sim, coins, pick(xs, round, m))
            }
            Strategy::Swap { x0, x1 } => {
                let (x0, x1) = (x0 % m, x1 % m);
                let h0 = sim.s_ro_with(x0, coins)?;
                let h1 = sim.s_ro_with(x1, coins)?;
                Ok(Commitment {
                    t: sim.commit().eval(x0, h0),
                    x: Some(x1),
                    h: Some(h1),
                })
            }
            Strategy::LateQuery { xs } => {
                let x = pick(xs, round, m);
                Ok(Commitment {
                    t: sim.commit().eval(x, 0),
                    x: Some(x),
                    h: None,
                })
            }
            Strategy::Superposition => Self::quantum_round(sim, coins, false),
            Strategy::QuantumWitness if round == 0 => Self::quantum_round(sim, coins, true),
            Strategy::QuantumWitness => honest(sim, coins, round as u64 % m),
        }
    }

    /// The open phase: any remaining queries, then the openings.
    pub fn open<B: OracleBackend>(
        &self,
        sim: &mut SimulatorS<B>,
        coins: &mut dyn Coins,
        commitments: &[Commitment],
    ) -> Result<Vec<Opening>> {
        let m = sim.config().domain;
        match self {
            Strategy::HonestWithExtra { extra, .. } => {
                sim.s_ro_with(extra % m, coins)?;
            }
            Strategy::QuantumWitness => {
                sim.s_ro_quantum(X_POS, Y_POS)?;
                sim.apply_adversary(&fourier(m as usize).adjoint(), &[X_POS])?;
            }
            _ => {}
        }
        commitments
            .iter()
            .map(|c| match (self, c.x) {
                (Strategy::LateQuery { .. }, Some(x)) => Ok(Opening {
                    x: Some(x),
                    h: Some(sim.s_ro_with(x, coins)?),
                }),
                _ => Ok(Opening { x: c.x, h: c.h }),
            })
            .collect()
    }
}

/// One game configuration.
#[derive(Clone, Debug)]
pub struct GameSetup {
    pub f: CommitFunction,
    pub strategy: Strategy,
    pub ell: usize,
}

impl GameSetup {
    pub fn new(f: CommitFunction, strategy: Strategy, ell: usize) -> Result<Self> {
        if ell == 0 {
            return Err(Error::RoundStructure(
                "at least one commitment is required".into(),
            ));
        }
        Ok(Self { f, strategy, ell })
    }

    pub fn config(&self) -> Result<OracleConfig> {
        OracleConfig::new(self.f.n(), self.f.domain())
    }

    fn label(&self) -> String {
        format!(
            "{} f={} l={}",
            self.strategy.name(),
            self.f.name(),
            self.ell
        )
    }

    fn params(&self, gamma: u64, q: usize) -> Params {
        Params {
            n: self.f.n(),
            m: self.f.domain(),
            gamma,
            q,
            ell: self.ell,
        }
    }

    fn simulator<B: OracleBackend>(
        &self,
        coins: &mut dyn Coins,
        extra_queries: usize,
    ) -> Result<SimulatorS<B>> {
        let cfg = self.config()?;
        let layout = RegisterLayout::new([("X", cfg.domain as usize), ("Y", cfg.y_dim())])?;
        let cap = self.strategy.queries(self.ell) + extra_queries;
        let seed = coins.rng().map_or(0, |r| r.next_u64());
        SimulatorS::new(B::initial(cfg, layout, cap)?, self.f.clone(), seed)
    }
}

/// Fails when the adversary's part of the log contains an extraction query.
pub fn check_no_extraction<B: OracleBackend>(sim: &SimulatorS<B>) -> Result<()> {
    if sim.log().iter().any(|r| {
        matches!(
            r.kind,
            CallKind::Extract { .. } | CallKind::ExtractRelation { .. }
        )
    }) {
        return Err(Error::ForbiddenExtraction);
    }
    Ok(())
}

/// Classical part `[t_i, x_i, h_i]` of a game's output, one entry per round.
pub type OutputKey = Vec<(u64, Option<u64>, Option<u64>)>;

struct EarlyLeaf {
    key: OutputKey,
    mismatch: bool,
    witness: Matrix,
}

fn play_early<B: OracleBackend>(
    setup: &GameSetup,
    simulate: bool,
    coins: &mut dyn Coins,
) -> Result<EarlyLeaf> {
    let mut sim = setup.simulator::<B>(coins, setup.ell)?;
    let mut commitments = Vec::with_capacity(setup.ell);
    let mut extracted = Vec::with_capacity(setup.ell);
    for round in 0..setup.ell {
        let c = setup.strategy.commit(&mut sim, coins, round)?;
        if simulate {
            extracted.push(sim.s_e_with(c.t, coins)?);
        }
        commitments.push(c);
    }
    let openings = setup.strategy.open(&mut sim, coins, &commitments)?;
    let mut key = Vec::with_capacity(setup.ell);
    let mut mismatch = false;
    for (i, (c, o)) in commitments.iter().zip(&openings).enumerate() {
        // RO(⊥) = ⊥, and f(⊥, ·) never equals t.
        let h = match o.x {
            Some(x) => Some(sim.s_ro_with(x, coins)?),
            None => None,
        };
        if let (true, Some(x), Some(h)) = (simulate, o.x, h) {
            mismatch |= extracted[i].found() != Some(x) && setup.f.eval(x, h) == c.t;
        }
        key.push((c.t, o.x, h));
    }
    let witness = sim
        .backend()
        .to_dense()?
        .state()
        .reduced_density(&setup.strategy.witness());
    Ok(EarlyLeaf {
        key,
        mismatch,
        witness,
    })
}

/// The sub-normalized witness state of every classical output, exactly,
/// for the real game (`simulate = false`) or the simulated one.
pub fn output_states<B: OracleBackend>(
    setup: &GameSetup,
    simulate: bool,
) -> Result<BTreeMap<OutputKey, Matrix>> {
    Ok(early_leaves::<B>(setup, simulate)?.0)
}

fn early_leaves<B: OracleBackend>(
    setup: &GameSetup,
    simulate: bool,
) -> Result<(BTreeMap<OutputKey, Matrix>, f64)> {
    let leaves = enumerate(MAX_EXHAUSTIVE_LEAVES, |c| {
        play_early::<B>(setup, simulate, c)
    })?;
    let mut states: BTreeMap<OutputKey, Matrix> = BTreeMap::new();
    let mut mismatch = 0.0;
    for (p, leaf) in leaves {
        if leaf.mismatch {
            mismatch += p;
        }
        let weighted = leaf.witness * crate::C64::new(p, 0.0);
        match states.get_mut(&leaf.key) {
            Some(m) => *m += weighted,
            None => {
                states.insert(leaf.key, weighted);
            }
        }
    }
    Ok((states, mismatch))
}

/// `½ Σ_k ‖ρ_k − σ_k‖₁` over classical outputs `k`.
pub fn cq_trace_distance(
    a: &BTreeMap<OutputKey, Matrix>,
    b: &BTreeMap<OutputKey, Matrix>,
) -> Result<f64> {
    let mut total = 0.0;
    for (k, ra) in a {
        total += match b.get(k) {
            Some(rb) => trace_norm_hermitian(&(ra - rb))?,
            None => trace_norm_hermitian(ra)?,
        };
    }
    for (k, rb) in b {
        if !a.contains_key(k) {
            total += trace_norm_hermitian(rb)?;
        }
    }
    Ok(0.5 * total)
}

/// Early extraction: the trace distance between the real and simulated
/// outputs `[t, x, RO(x), W]`, and the probability that an opening differs
/// from the extracted value yet matches its commitment. Two-round bounds
/// for `ℓ = 1`, multi-round bounds otherwise.
pub fn early_extraction_experiment<B: OracleBackend>(
    setup: &GameSetup,
) -> Result<[BoundReport; 2]> {
    let cfg = setup.config()?;
    let (real, _) = early_leaves::<B>(setup, false)?;
    let (sim, mismatch) = early_leaves::<B>(setup, true)?;
    let distance = cq_trace_distance(&real, &sim)?;
    let q = setup.strategy.queries(setup.ell);
    let q2 = setup.strategy.open_queries(setup.ell);
    let (g, gp) = (setup.f.gamma(), setup.f.gamma_prime());
    let (name, d_bound, m_bound) = if setup.ell == 1 {
        (
            "two-round",
            two_round_distance_bound(cfg.n, q2, g),
            two_round_mismatch_bound(cfg.n, q, q2, g, gp),
        )
    } else {
        (
            "multi-round",
            multi_round_distance_bound(cfg.n, q, setup.ell, g),
            multi_round_mismatch_bound(cfg.n, q, setup.ell, g, gp),
        )
    };
    let label = setup.label();
    Ok([
        BoundReport::new(
            format!("early-extraction-{name}-distance"),
            label.clone(),
            setup.params(g, q),
            distance,
            d_bound,
        ),
        BoundReport::new(
            format!("early-extraction-{name}-mismatch"),
            label,
            setup.params(g, q),
            mismatch,
            m_bound,
        ),
    ])
}

fn probability_report(
    experiment: &str,
    label: String,
    params: Params,
    bound: f64,
    dist: crate::coins::Distribution<bool>,
) -> BoundReport {
    let p = dist.probability_of(|b| *b);
    let r = BoundReport::new(experiment, label, params, p, bound);
    if dist.exact {
        r
    } else {
        r.sampled(dist.standard_error(p))
    }
}

/// Hard-property experiment: after an adversary that only uses `S.RO`,
/// `x̂_i = S.E(t_i)`; success when some `(x̂_i, t_i) ∈ R'`. The bound uses
/// `Γ_R` of `R = {(x, y) : (x, f(x, y)) ∈ R'}`.
pub fn hard_property_experiment<B: OracleBackend>(
    setup: &GameSetup,
    r_prime: &dyn Fn(u64, u64) -> bool,
    r_prime_name: &str,
    seed: u64,
) -> Result<BoundReport> {
    let cfg = setup.config()?;
    let rel = Relation::from_predicate(cfg.n, cfg.domain, |x, y| r_prime(x, setup.f.eval(x, y)))?;
    let dist = exhaustive_or_sampled(MAX_EXHAUSTIVE_LEAVES, MONTE_CARLO_RUNS, seed, |coins| {
        let mut sim = setup.simulator::<B>(coins, 0)?;
        let ts = (0..setup.ell)
            .map(|i| setup.strategy.commit(&mut sim, coins, i).map(|c| c.t))
            .collect::<Result<Vec<_>>>()?;
        check_no_extraction(&sim)?;
        let mut hit = false;
        for t in ts {
            if let ExtractionOutcome::Found(x) = sim.s_e_with(t, coins)? {
                hit |= r_prime(x, t);
            }
        }
        Ok(hit)
    })?;
    let q = setup.strategy.queries(setup.ell) - setup.strategy.open_queries(setup.ell);
    let gamma = rel.gamma() as u64;
    let label = format!("{} R'={r_prime_name}", setup.label());
    Ok(probability_report(
        "hard-property",
        label,
        setup.params(gamma, q),
        hard_property_bound(cfg.n, q, gamma),
        dist,
    ))
}

/// Hard-collision experiment: the adversary commits and opens using only
/// `S.RO`; then `x̂_i = S.E(t_i)` for every `i`, then `h_i = S.RO(x_i)`.
/// Success when some `x̂_i ≠ x_i` with `f(x_i, h_i) = t_i`. With `in_run`,
/// `h_i` is the value the adversary itself obtained for `x_i` during its
/// run and the bound uses `(q+1)³`.
pub fn hard_collision_experiment<B: OracleBackend>(
    setup: &GameSetup,
    in_run: bool,
    seed: u64,
) -> Result<BoundReport> {
    let cfg = setup.config()?;
    let dist = exhaustive_or_sampled(MAX_EXHAUSTIVE_LEAVES, MONTE_CARLO_RUNS, seed, |coins| {
        let mut sim = setup.simulator::<B>(coins, setup.ell)?;
        let mut commitments = Vec::with_capacity(setup.ell);
        for round in 0..setup.ell {
            commitments.push(setup.strategy.commit(&mut sim, coins, round)?);
        }
        let openings = setup.strategy.open(&mut sim, coins, &commitments)?;
        check_no_extraction(&sim)?;
        let extracted = commitments
            .iter()
            .map(|c| sim.s_e_with(c.t, coins))
            .collect::<Result<Vec<_>>>()?;
        let mut hit = false;
        for ((c, o), e) in commitments.iter().zip(&openings).zip(&extracted) {
            let Some(x) = o.x else { continue };
            let h = match (in_run, o.h) {
                (true, Some(h)) => h,
                (true, None) => {
                    return Err(Error::RoundStructure(
                        "opening was not queried during the run".into(),
                    ))
                }
                (false, _) => sim.s_ro_with(x, coins)?,
            };
            hit |= e.found() != Some(x) && setup.f.eval(x, h) == c.t;
        }
        Ok(hit)
    })?;
    let q = setup.strategy.queries(setup.ell);
    let gp = setup.f.gamma_prime();
    let (experiment, label) = if in_run {
        ("hard-collision-in-run", setup.label())
    } else {
        ("hard-collision", setup.label())
    };
    let bound = hard_collision_bound(cfg.n, q, setup.ell, gp, in_run);
    Ok(probability_report(
        experiment,
        label,
        setup.params(gp, q),
        bound,
        dist,
    ))
}

/// The bundled adversaries at a given `M`.
pub fn bundled_strategies(domain: u64) -> Vec<Strategy> {
    let last = domain - 1;
    vec![
        Strategy::Garbage { t: 0 },
        Strategy::Honest { xs: vec![0, last] },
        Strategy::Swap { x0: 0, x1: last },
        Strategy::Superposition,
        Strategy::HonestWithExtra {
            xs: vec![0],
            extra: last,
        },
        Strategy::LateQuery { xs: vec![last] },
        Strategy::QuantumWitness,
    ]
}

/// The three bundled commit functions at `(n, M)`.
pub fn bundled_functions(n: u32, domain: u64, seed: u64) -> Result<Vec<CommitFunction>> {
    Ok(vec![
        CommitFunction::identity(n, domain)?,
        CommitFunction::toy_encryption(n, domain, seed)?,
        CommitFunction::constant(n, domain)?,
    ])
}

/// Every interface experiment on the grid `n ∈ {1, 2}`, `M ∈ {2, 3}`,
/// the bundled functions and strategies: hard-property (with
/// `R' = {(x, t) : t = 0}`), hard-collision with and without in-run
/// openings, two-round early extraction for all strategies, and
/// three-round early extraction at `n = 1`.
pub fn interface_suite<B: OracleBackend>(seed: u64) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    let zero_t = |_: u64, t: u64| t == 0;
    for n in [1u32, 2] {
        for m in [2u64, 3] {
            for f in bundled_functions(n, m, seed)? {
                for s in bundled_strategies(m) {
                    let one = GameSetup::new(f.clone(), s.clone(), 1)?;
                    out.push(hard_property_experiment::<B>(&one, &zero_t, "t=0", seed)?);
                    out.push(hard_collision_experiment::<B>(&one, false, seed)?);
                    out.push(hard_collision_experiment::<B>(&one, true, seed)?);
                    out.extend(early_extraction_experiment::<B>(&one)?);
                    if n == 1
                        && matches!(
                            s,
                            Strategy::Honest { .. }
                                | Strategy::Swap { .. }
                                | Strategy::QuantumWitness
                        )
                    {
                        let three = GameSetup::new(f.clone(), s, 3)?;
                        out.extend(early_extraction_experiment::<B>(&three)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FunctionTable, OracleState};
    use crate::sparse::SparseState;
    use crate::TOLERANCE;

    fn identity(n: u32, m: u64) -> CommitFunction {
        CommitFunction::identity(n, m).unwrap()
    }

    #[test]
    fn garbage_is_never_extracted_and_never_wins() {
        let setup = GameSetup::new(identity(2, 3), Strategy::Garbage { t: 1 }, 1).unwrap();
        let r = hard_collision_experiment::<OracleState>(&setup, false, 0).unwrap();
        assert_eq!(r.measured, 0.0);
        let r = hard_property_experiment::<OracleState>(&setup, &|_, _| true, "all", 0).unwrap();
        assert_eq!(r.measured, 0.0);
        let [d, mm] = early_extraction_experiment::<OracleState>(&setup).unwrap();
        assert!(d.measured.abs() < TOLERANCE);
        assert_eq!(mm.measured, 0.0);
    }

    #[test]
    fn honest_committer_mismatch_within_bound() {
        let setup = GameSetup::new(identity(2, 2), Strategy::Honest { xs: vec![1] }, 1).unwrap();
        let [d, mm] = early_extraction_experiment::<OracleState>(&setup).unwrap();
        assert!(d.satisfied && mm.satisfied, "{d:?} {mm:?}");
        // Only x was queried, so S.E(t) is x or ∅, and a mismatch needs ∅.
        // The cell holds F|t⟩, whose weight on t is (1 − 2^{-n})².
        let p_empty = 1.0 - (0.75f64 * 0.75);
        assert!(mm.measured <= p_empty + TOLERANCE);
    }

    #[test]
    fn collision_free_function_reduces_to_two_over_two_to_n() {
        let f = CommitFunction::toy_encryption(2, 3, 9).unwrap();
        assert_eq!(f.gamma_prime(), 0);
        for s in bundled_strategies(3) {
            let setup = GameSetup::new(f.clone(), s, 1).unwrap();
            let r = hard_collision_experiment::<OracleState>(&setup, false, 0).unwrap();
            assert!((r.bound - 0.5).abs() < 1e-15);
            assert!(r.satisfied, "{r:?}");
        }
    }

    #[test]
    fn real_side_matches_random_function_average() {
        // Real side of the quantum-witness adversary at n = 1, M = 2,
        // computed independently by averaging over all four functions:
        // measuring Y = y leaves X uniform over the preimages of y, the
        // second query clears Y, and W is that state after the inverse
        // Fourier transform.
        let setup = GameSetup::new(identity(1, 2), Strategy::QuantumWitness, 1).unwrap();
        let ours = output_states::<OracleState>(&setup, false).unwrap();
        let cfg = OracleConfig::new(1, 2).unwrap();
        let mut reference: BTreeMap<OutputKey, Matrix> = BTreeMap::new();
        for i in 0..4 {
            let h = FunctionTable::nth(cfg, i);
            for y in 0..2u64 {
                let pre: Vec<usize> = (0..2).filter(|&x| h.eval(x as u64) == y).collect();
                if pre.is_empty() {
                    continue;
                }
                let p = pre.len() as f64 / 2.0 / 4.0;
                let mut rho = Matrix::zeros(2, 2);
                for &a in &pre {
                    for &b in &pre {
                        rho[(a, b)] = crate::C64::new(p / pre.len() as f64, 0.0);
                    }
                }
                let u = fourier(2);
                let rho = u.adjoint() * rho * &u;
                *reference
                    .entry(vec![(y, None, None)])
                    .or_insert_with(|| Matrix::zeros(2, 2)) += rho;
            }
        }
        assert!(cq_trace_distance(&ours, &reference).unwrap() < TOLERANCE);
    }

    #[test]
    fn quantum_witness_is_disturbed_but_within_bound() {
        let setup = GameSetup::new(identity(1, 2), Strategy::QuantumWitness, 1).unwrap();
        let [d, _] = early_extraction_experiment::<OracleState>(&setup).unwrap();
        assert!(d.measured > 1e-3, "{}", d.measured);
        assert!(d.satisfied);
    }

    #[test]
    fn backends_agree_on_games() {
        for s in bundled_strategies(2) {
            let setup = GameSetup::new(identity(1, 2), s, 2).unwrap();
            let a = early_extraction_experiment::<OracleState>(&setup).unwrap();
            let b = early_extraction_experiment::<SparseState>(&setup).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x.measured - y.measured).abs() < TOLERANCE, "{}", x.label);
            }
        }
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(matches!(
            GameSetup::new(identity(1, 2), Strategy::Superposition, 0),
            Err(Error::RoundStructure(_))
        ));
    }

    #[test]
    fn extraction_during_run_is_rejected() {
        let mut coins = crate::coins::SampledCoins::new(1);
        let setup = GameSetup::new(identity(1, 2), Strategy::Superposition, 1).unwrap();
        let mut sim = setup.simulator::<OracleState>(&mut coins, 0).unwrap();
        sim.s_e(0).unwrap();
        assert_eq!(check_no_extraction(&sim), Err(Error::ForbiddenExtraction));
    }

    #[test]
    fn suite_is_satisfied_on_dense() {
        let reports = interface_suite::<OracleState>(3).unwrap();
        let bad: Vec<_> = reports.iter().filter(|r| !r.satisfied).collect();
        assert!(bad.is_empty(), "{bad:?}");
        assert!(reports.iter().all(|r| r.exact));
    }
}
