//! Commit-and-open Σ-protocols with `𝔖`-soundness, the trivial-attack
//! probability, and the online extractor that reads the commitments
//! `a_i = H(x_i)` through the simulator's extraction interface.
//!
//! The bundled protocol proves knowledge of `w` with `L(w) = I` for the
//! linear bijection `L(v) = v ⊕ (v ≪ 1)` on `b` bits. The prover splits
//! `w = s_1 ⊕ s_2 ⊕ s_3`; slot `i` holds `(s_i, c_i)` where `c_i` is a
//! claimed copy of `L(s_{i+1})`. Challenge `{i, i+1}` checks
//! `c_i = L(s_{i+1})` and `L(s_i) ⊕ L(s_{i+1}) ⊕ c_{i+1} = I`. One challenge
//! can be answered without `w`; any two pin down `L(s_1 ⊕ s_2 ⊕ s_3) = I`,
//! so the protocol is `𝔗_2`-sound*.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::backend::OracleBackend;
use crate::bounds::{BoundReport, Params, COLLISION_CONSTANT};
use crate::coins::{exhaustive_or_sampled, Coins, MAX_EXHAUSTIVE_LEAVES};
use crate::error::{Error, Result};
use crate::extraction::ExtractionOutcome;
use crate::linalg::RegisterLayout;
use crate::oracle::OracleConfig;
use crate::relation::CommitFunction;
use crate::rng::SimRng;
use crate::simulator::{CallKind, CallRecord, SimulatorS};

/// Largest challenge set searched exhaustively for `p_triv` without
/// minimal sets.
pub const EXHAUSTIVE_CHALLENGE_LIMIT: usize = 20;

/// Verification predicate of a spec.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verifier {
    /// The bundled 2-of-3 share protocol with `share_bits`-bit shares.
    XorShares { share_bits: u32 },
    /// Accepting openings listed explicitly: `(challenge index, opened
    /// messages in slot order)`.
    Table { accept: Vec<(usize, Vec<u64>)> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaSpec {
    pub ell: usize,
    /// Each challenge is a set of slot indices in `0..ell`.
    pub challenges: Vec<Vec<usize>>,
    pub message_bits: u32,
    pub randomness_bits: u32,
    pub verifier: Verifier,
}

impl SigmaSpec {
    /// Checks that `C` is non-empty, every challenge is a sorted subset of
    /// `0..ell`, and the challenges cover every slot.
    pub fn validate(&self) -> Result<()> {
        if self.challenges.is_empty() {
            return Err(Error::InvalidSpec("challenge set is empty".into()));
        }
        let mut covered = BTreeSet::new();
        for c in &self.challenges {
            if c.is_empty()
                || c.windows(2).any(|w| w[0] >= w[1])
                || c.iter().any(|&i| i >= self.ell)
            {
                return Err(Error::InvalidSpec(format!(
                    "challenge {c:?} is not a sorted subset of the slots"
                )));
            }
            covered.extend(c.iter().copied());
        }
        if covered.len() != self.ell {
            return Err(Error::InvalidSpec(
                "challenges do not cover every slot".into(),
            ));
        }
        if self.slot_bits() > 62 {
            return Err(Error::InvalidSpec("slots wider than 62 bits".into()));
        }
        Ok(())
    }

    pub fn slot_bits(&self) -> u32 {
        self.message_bits + self.randomness_bits
    }

    /// Size of the oracle's input domain, `2^{message + randomness bits}`.
    pub fn domain(&self) -> u64 {
        1 << self.slot_bits()
    }

    pub fn encode(&self, message: u64, randomness: u64) -> u64 {
        (message << self.randomness_bits) | (randomness & ((1 << self.randomness_bits) - 1))
    }

    pub fn message_of(&self, slot: u64) -> u64 {
        slot >> self.randomness_bits
    }

    /// `V(c, (m_i)_{i ∈ c})` for challenge index `c` and the messages of its slots.
    pub fn verify(&self, instance: u64, challenge: usize, opened: &[u64]) -> bool {
        match &self.verifier {
            Verifier::XorShares { share_bits } => {
                let toy = XorShareProtocol::new(*share_bits, self.randomness_bits);
                toy.verify(instance, &self.challenges[challenge], opened)
            }
            Verifier::Table { accept } => {
                accept.iter().any(|(c, m)| *c == challenge && m == opened)
            }
        }
    }

    /// `Ŝ = {c : V(c, (m_i)_{i ∈ c})}`, counting only challenges whose slots
    /// all have a value.
    pub fn satisfied(&self, instance: u64, messages: &[Option<u64>]) -> Vec<usize> {
        (0..self.challenges.len())
            .filter(|&c| {
                let opened: Option<Vec<u64>> =
                    self.challenges[c].iter().map(|&i| messages[i]).collect();
                opened.is_some_and(|o| self.verify(instance, c, &o))
            })
            .collect()
    }
}

/// A monotone increasing family `𝔖` of sets of challenge indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AccessStructure {
    /// `𝔗_k`: every set with at least `k` challenges.
    Threshold { k: usize },
    /// Supersets of the listed minimal sets.
    MinSets { min_sets: Vec<Vec<usize>> },
}

impl AccessStructure {
    /// Membership of a set of challenge indices (any order, no repeats).
    pub fn contains(&self, set: &[usize]) -> bool {
        match self {
            AccessStructure::Threshold { k } => set.len() >= *k,
            AccessStructure::MinSets { min_sets } => {
                min_sets.iter().any(|m| m.iter().all(|c| set.contains(c)))
            }
        }
    }

    /// Every minimal set is a member and none of its proper subsets is.
    pub fn check_min_sets(&self) -> Result<()> {
        if let AccessStructure::MinSets { min_sets } = self {
            for m in min_sets {
                for skip in 0..m.len() {
                    let sub: Vec<usize> = m
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != skip)
                        .map(|(_, &c)| c)
                        .collect();
                    if self.contains(&sub) {
                        return Err(Error::InvalidSpec(format!("{m:?} is not minimal")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Monotonicity along `chains` random chains of growing sets in
    /// `0..size`.
    pub fn check_monotone(&self, size: usize, chains: usize, rng: &mut SimRng) -> bool {
        for _ in 0..chains {
            let mut order: Vec<usize> = (0..size).collect();
            for i in (1..size).rev() {
                order.swap(i, rng.below(i as u64 + 1) as usize);
            }
            let mut was = false;
            for k in 0..=size {
                let now = self.contains(&order[..k]);
                if was && !now {
                    return false;
                }
                was = now;
            }
        }
        true
    }
}

fn subset_members(c: usize, mask: u64) -> Vec<usize> {
    (0..c).filter(|i| mask >> i & 1 == 1).collect()
}

/// `max_{Ŝ ∉ 𝔖} |Ŝ|` over subsets of `0..c`, searching sizes downward.
fn largest_non_member(access: &AccessStructure, c: usize) -> Result<usize> {
    if let AccessStructure::Threshold { k } = access {
        return Ok(k.saturating_sub(1).min(c));
    }
    if c > EXHAUSTIVE_CHALLENGE_LIMIT {
        return Err(Error::SearchTooLarge);
    }
    let mut best = 0;
    for mask in 0u64..(1 << c) {
        let size = mask.count_ones() as usize;
        if size > best && !access.contains(&subset_members(c, mask)) {
            best = size;
        }
    }
    Ok(best)
}

/// `p_triv = max_{Ŝ ∉ 𝔖} |Ŝ| / |C|`, exactly.
pub fn p_trivial(spec: &SigmaSpec, access: &AccessStructure) -> Result<Ratio<u64>> {
    let c = spec.challenges.len();
    Ok(Ratio::new(largest_non_member(access, c)? as u64, c as u64))
}

/// Membership in `𝔖^{∨r}`: some coordinate projection of the set of
/// challenge tuples is in `𝔖`. Tuples are encoded base `|C|`.
pub fn parallel_contains(access: &AccessStructure, c: usize, r: u32, tuples: &[u64]) -> bool {
    (0..r).any(|pos| {
        let div = (c as u64).pow(pos);
        let proj: BTreeSet<usize> = tuples
            .iter()
            .map(|t| ((t / div) % c as u64) as usize)
            .collect();
        access.contains(&proj.into_iter().collect::<Vec<_>>())
    })
}

/// `p_triv` of the `r`-fold parallel repetition, from the definition of
/// `𝔖^{∨r}`. Exhaustive over subsets of `C^r` when `|C|^r ≤ 16`;
/// otherwise the search runs over product sets of non-members, which
/// contain every non-member of `𝔖^{∨r}` (a set lies inside the product of
/// its projections).
pub fn p_trivial_parallel(
    spec: &SigmaSpec,
    access: &AccessStructure,
    r: u32,
) -> Result<Ratio<u64>> {
    let c = spec.challenges.len();
    let total = (c as u64).checked_pow(r).ok_or(Error::RationalOverflow)?;
    if total <= 16 {
        let mut best = 0u64;
        for mask in 0u64..(1 << total) {
            let size = u64::from(mask.count_ones());
            if size > best {
                let tuples: Vec<u64> = (0..total).filter(|i| mask >> i & 1 == 1).collect();
                if !parallel_contains(access, c, r, &tuples) {
                    best = size;
                }
            }
        }
        return Ok(Ratio::new(best, total));
    }
    let m = largest_non_member(access, c)? as u64;
    let best = m.checked_pow(r).ok_or(Error::RationalOverflow)?;
    Ok(Ratio::new(best, total))
}

/// `(p/q)^r` with overflow checks.
pub fn ratio_pow(p: Ratio<u64>, r: u32) -> Result<Ratio<u64>> {
    let n = p.numer().checked_pow(r).ok_or(Error::RationalOverflow)?;
    let d = p.denom().checked_pow(r).ok_or(Error::RationalOverflow)?;
    Ok(Ratio::new(n, d))
}

/// The bundled protocol's parameters and helpers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct XorShareProtocol {
    pub share_bits: u32,
    pub randomness_bits: u32,
}

impl XorShareProtocol {
    pub const ELL: usize = 3;

    pub fn new(share_bits: u32, randomness_bits: u32) -> Self {
        Self {
            share_bits,
            randomness_bits,
        }
    }

    fn mask(&self) -> u64 {
        (1 << self.share_bits) - 1
    }

    /// `L(v) = v ⊕ (v ≪ 1)` truncated to `b` bits; invertible.
    pub fn l_map(&self, v: u64) -> u64 {
        (v ^ (v << 1)) & self.mask()
    }

    pub fn l_inverse(&self, y: u64) -> u64 {
        let mut v = 0u64;
        for bit in 0..self.share_bits {
            let prev = if bit == 0 { 0 } else { v >> (bit - 1) & 1 };
            v |= ((y >> bit & 1) ^ prev) << bit;
        }
        v
    }

    pub fn instance_for(&self, w: u64) -> u64 {
        self.l_map(w & self.mask())
    }

    pub fn spec(&self) -> SigmaSpec {
        SigmaSpec {
            ell: Self::ELL,
            challenges: vec![vec![0, 1], vec![1, 2], vec![0, 2]],
            message_bits: 2 * self.share_bits,
            randomness_bits: self.randomness_bits,
            verifier: Verifier::XorShares {
                share_bits: self.share_bits,
            },
        }
    }

    pub fn message(&self, share: u64, claim: u64) -> u64 {
        (share << self.share_bits) | claim
    }

    fn split(&self, m: u64) -> (u64, u64) {
        (m >> self.share_bits & self.mask(), m & self.mask())
    }

    /// Checks challenge `{i, i+1}` (cyclically); `opened` follows `slots`.
    pub fn verify(&self, instance: u64, slots: &[usize], opened: &[u64]) -> bool {
        if slots.len() != 2 || opened.len() != 2 {
            return false;
        }
        // Orient the pair as (i, i+1 mod 3).
        let (i, a, b) = if (slots[0] + 1) % 3 == slots[1] {
            (slots[0], opened[0], opened[1])
        } else if (slots[1] + 1) % 3 == slots[0] {
            (slots[1], opened[1], opened[0])
        } else {
            return false;
        };
        let _ = i;
        let (s_i, c_i) = self.split(a);
        let (s_j, c_j) = self.split(b);
        c_i == self.l_map(s_j) && (self.l_map(s_i) ^ self.l_map(s_j) ^ c_j) == instance
    }

    /// Honest slot messages for witness `w` with random shares.
    pub fn honest_messages(&self, w: u64, rng: &mut SimRng) -> [u64; 3] {
        let s1 = rng.below(1 << self.share_bits);
        let s2 = rng.below(1 << self.share_bits);
        let s = [s1, s2, (w ^ s1 ^ s2) & self.mask()];
        core::array::from_fn(|i| self.message(s[i], self.l_map(s[(i + 1) % 3])))
    }

    /// Messages answering only challenge `{t, t+1}` for any instance.
    pub fn trivial_messages(&self, instance: u64, target: usize, rng: &mut SimRng) -> [u64; 3] {
        let mut m = [0u64; 3];
        let (i, j, k) = (target, (target + 1) % 3, (target + 2) % 3);
        let (si, sj) = (
            rng.below(1 << self.share_bits),
            rng.below(1 << self.share_bits),
        );
        m[i] = self.message(si, self.l_map(sj));
        m[j] = self.message(sj, instance ^ self.l_map(si) ^ self.l_map(sj));
        m[k] = rng.below(1 << (2 * self.share_bits));
        m
    }

    /// `E*`: a witness from slot messages whenever `Ŝ ∈ 𝔗_2`.
    pub fn hook(&self, instance: u64, messages: &[Option<u64>]) -> Option<u64> {
        let satisfied = self.spec().satisfied(instance, messages);
        if satisfied.len() < 2 {
            return None;
        }
        let w = messages
            .iter()
            .map(|m| m.map(|v| self.split(v).0))
            .try_fold(0u64, |acc, s| s.map(|s| acc ^ s))?;
        (self.instance_for(w) == instance).then_some(w)
    }

    pub fn is_witness(&self, instance: u64, w: u64) -> bool {
        self.instance_for(w) == instance
    }
}

/// The bundled provers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Prover {
    /// Knows `w`; commits to honest slots, and before opening re-queries
    /// its first opened slot once (`q = ℓ + 1`).
    Honest { witness: u64 },
    /// Prepares slots answering only challenge index `target`.
    TrivialAttack { target: usize },
    /// Announces random commitments without querying and opens random slots.
    Garbage,
    /// Brute-forces a hash collision on slot 3 so that it can answer two
    /// challenges without a witness; up to `budget` queries for the search.
    CollisionPlanting { budget: usize },
}

impl Prover {
    pub fn name(&self) -> String {
        match self {
            Prover::Honest { .. } => "honest".into(),
            Prover::TrivialAttack { target } => format!("trivial-attack(c={target})"),
            Prover::Garbage => "garbage".into(),
            Prover::CollisionPlanting { budget } => format!("collision-planting(budget={budget})"),
        }
    }

    /// Largest number of `S.RO` queries the prover makes.
    pub fn max_queries(&self) -> usize {
        match self {
            Prover::Honest { .. } => XorShareProtocol::ELL + 1,
            Prover::TrivialAttack { .. } => XorShareProtocol::ELL,
            Prover::Garbage => 0,
            Prover::CollisionPlanting { budget } => XorShareProtocol::ELL - 1 + budget,
        }
    }
}

/// Everything that happened in one run, for audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub commitments: Vec<u64>,
    /// Extracted slots `x̂_i` (`None` for `∅`).
    pub extracted: Vec<Option<u64>>,
    pub challenge: usize,
    /// Opened `(slot index, x_i)`.
    pub openings: Vec<(usize, u64)>,
    pub prover_accepted: bool,
    /// `Ŝ` computed from the extracted messages.
    pub satisfied: Vec<usize>,
    pub witness: Option<u64>,
    /// Number of log entries before the challenge was sampled.
    pub calls_before_challenge: usize,
    pub calls: Vec<CallRecord>,
}

impl Transcript {
    /// Every extraction call precedes the challenge.
    pub fn is_online(&self) -> bool {
        self.calls.iter().all(|c| {
            !matches!(c.kind, CallKind::Extract { .. })
                || (c.index as usize) < self.calls_before_challenge
        })
    }
}

struct ProverState {
    slots: [u64; 3],
    /// Alternative slot 3 with the same hash (collision planting).
    alt_slot: Option<u64>,
}

fn prover_commit<B: OracleBackend>(
    prover: &Prover,
    toy: &XorShareProtocol,
    spec: &SigmaSpec,
    instance: u64,
    sim: &mut SimulatorS<B>,
    coins: &mut dyn Coins,
    rng: &mut SimRng,
) -> Result<(Vec<u64>, ProverState)> {
    let r = |rng: &mut SimRng| rng.below(1 << spec.randomness_bits);
    match prover {
        Prover::Honest { witness } => {
            let m = toy.honest_messages(*witness, rng);
            let slots = m.map(|m| spec.encode(m, r(rng)));
            let a = slots
                .iter()
                .map(|&x| sim.s_ro_with(x, coins))
                .collect::<Result<Vec<_>>>()?;
            Ok((
                a,
                ProverState {
                    slots,
                    alt_slot: None,
                },
            ))
        }
        Prover::TrivialAttack { target } => {
            let m = toy.trivial_messages(instance, *target % 3, rng);
            let slots = m.map(|m| spec.encode(m, r(rng)));
            let a = slots
                .iter()
                .map(|&x| sim.s_ro_with(x, coins))
                .collect::<Result<Vec<_>>>()?;
            Ok((
                a,
                ProverState {
                    slots,
                    alt_slot: None,
                },
            ))
        }
        Prover::Garbage => {
            let n = sim.config().n;
            let a = (0..3).map(|_| rng.below(1 << n)).collect();
            let slots = core::array::from_fn(|_| rng.below(spec.domain()));
            Ok((
                a,
                ProverState {
                    slots,
                    alt_slot: None,
                },
            ))
        }
        Prover::CollisionPlanting { budget } => {
            // Slot 3 must satisfy {2,3} as (s3, c3) and {3,1} as (s3', c3').
            let mask = (1u64 << toy.share_bits) - 1;
            let (s1, s2, s3) = (
                rng.below(mask + 1),
                rng.below(mask + 1),
                rng.below(mask + 1),
            );
            let s3_alt = rng.below(mask + 1);
            let m1 = toy.message(s1, instance ^ toy.l_map(s3_alt) ^ toy.l_map(s1));
            let m2 = toy.message(s2, toy.l_map(s3));
            let m3 = toy.message(s3, instance ^ toy.l_map(s2) ^ toy.l_map(s3));
            let m3_alt = toy.message(s3_alt, toy.l_map(s1));
            let x1 = spec.encode(m1, r(rng));
            let x2 = spec.encode(m2, r(rng));
            let a1 = sim.s_ro_with(x1, coins)?;
            let a2 = sim.s_ro_with(x2, coins)?;
            // Alternate between the two candidate families until their
            // hashes meet.
            let mut seen_main = alloc::collections::BTreeMap::new();
            let mut seen_alt = alloc::collections::BTreeMap::new();
            let mut found = None;
            let width = 1u64 << spec.randomness_bits;
            for k in 0..*budget {
                let rand = (k / 2) as u64 % width;
                if k % 2 == 0 {
                    let x = spec.encode(m3, rand);
                    let h = sim.s_ro_with(x, coins)?;
                    if let Some(&y) = seen_alt.get(&h) {
                        found = Some((x, y, h));
                        break;
                    }
                    seen_main.entry(h).or_insert(x);
                } else {
                    let y = spec.encode(m3_alt, rand);
                    let h = sim.s_ro_with(y, coins)?;
                    if let Some(&x) = seen_main.get(&h) {
                        found = Some((x, y, h));
                        break;
                    }
                    seen_alt.entry(h).or_insert(y);
                }
            }
            let (x3, alt, a3) = match found {
                Some(v) => (v.0, Some(v.1), v.2),
                None => {
                    let x3 = spec.encode(m3, 0);
                    (x3, None, sim.s_ro_with(x3, coins)?)
                }
            };
            Ok((
                vec![a1, a2, a3],
                ProverState {
                    slots: [x1, x2, x3],
                    alt_slot: alt,
                },
            ))
        }
    }
}

fn prover_open<B: OracleBackend>(
    prover: &Prover,
    spec: &SigmaSpec,
    state: &ProverState,
    challenge: usize,
    sim: &mut SimulatorS<B>,
    coins: &mut dyn Coins,
) -> Result<Vec<(usize, u64)>> {
    let slots = &spec.challenges[challenge];
    if let Prover::Honest { .. } = prover {
        sim.s_ro_with(state.slots[slots[0]], coins)?;
    }
    Ok(slots
        .iter()
        .map(|&i| {
            // Challenge {3,1} (index 2) is the one the planted slot answers.
            let x = match (i, state.alt_slot) {
                (2, Some(alt)) if challenge == 2 => alt,
                _ => state.slots[i],
            };
            (i, x)
        })
        .collect())
}

/// One run of the protocol against the online extractor: the prover
/// commits through `S.RO`, the extractor calls `S.E(a_i)` for every
/// commitment, the harness samples the challenge, the prover opens and
/// the verifier checks both the openings and `V`. The extractor applies
/// the hook when the extracted slots satisfy a set in `𝔗_2`.
pub fn online_extract<B: OracleBackend>(
    prover: &Prover,
    toy: &XorShareProtocol,
    instance: u64,
    sim: &mut SimulatorS<B>,
    coins: &mut dyn Coins,
    prover_rng: &mut SimRng,
) -> Result<Transcript> {
    let spec = toy.spec();
    let (commitments, state) = prover_commit(prover, toy, &spec, instance, sim, coins, prover_rng)?;
    if commitments.len() != spec.ell {
        return Err(Error::RoundStructure("wrong number of commitments".into()));
    }
    let extracted: Vec<Option<u64>> = commitments
        .iter()
        .map(|&a| sim.s_e_with(a, coins).map(ExtractionOutcome::found))
        .collect::<Result<_>>()?;
    let calls_before_challenge = sim.log().len();
    let uniform = vec![1.0; spec.challenges.len()];
    let challenge = coins.choose(&uniform);
    let openings = prover_open(prover, &spec, &state, challenge, sim, coins)?;
    let mut accepted = openings.len() == spec.challenges[challenge].len();
    for &(i, x) in &openings {
        accepted &= sim.s_ro_with(x, coins)? == commitments[i];
    }
    let opened: Vec<u64> = openings.iter().map(|&(_, x)| spec.message_of(x)).collect();
    accepted &= spec.verify(instance, challenge, &opened);
    let messages: Vec<Option<u64>> = extracted
        .iter()
        .map(|x| x.map(|v| spec.message_of(v)))
        .collect();
    let satisfied = spec.satisfied(instance, &messages);
    let witness = toy.hook(instance, &messages);
    Ok(Transcript {
        commitments,
        extracted,
        challenge,
        openings,
        prover_accepted: accepted,
        satisfied,
        witness,
        calls_before_challenge,
        calls: sim.log().to_vec(),
    })
}

/// `ε = 34ℓq/√2^n + 2365q³/2^n` (valid for `q ≥ ℓ + 1`).
pub fn epsilon_simplified(n: u32, ell: usize, q: usize) -> f64 {
    let (l, q) = (ell as f64, q as f64);
    34.0 * l * q / libm::exp2(n as f64 / 2.0) + 2365.0 * q * q * q / libm::exp2(n as f64)
}

/// `ε = 8√2·ℓ(2q+ℓ+1)/√2^n + (40e²(q+ℓ+1)³Γ'+2)/2^n`.
pub fn epsilon_full(n: u32, ell: usize, q: usize, gamma_prime: u64) -> f64 {
    let k = (q + ell + 1) as f64;
    8.0 * libm::sqrt(2.0) * (ell * (2 * q + ell + 1)) as f64 / libm::exp2(n as f64 / 2.0)
        + (COLLISION_CONSTANT * k * k * k * gamma_prime as f64 + 2.0) / libm::exp2(n as f64)
}

/// Outcome of a Σ-protocol experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaReport {
    pub prover: String,
    pub n: u32,
    pub ell: usize,
    pub q: usize,
    pub runs: usize,
    pub exact: bool,
    pub p_prover: f64,
    pub p_extractor: f64,
    pub p_triv: f64,
    pub epsilon: f64,
    /// `(Pr[P] − p_triv − ε)/(1 − p_triv)`.
    pub lower_bound: f64,
    pub satisfied: bool,
    /// `ε ≥ 1`: the inequality carries no information.
    pub vacuous: bool,
    /// Every run's extraction calls preceded its challenge.
    pub online: bool,
    pub std_error_extractor: f64,
}

impl SigmaReport {
    /// As a [`BoundReport`] in the form `Pr[P] ≤ Pr[E](1 − p_triv) + p_triv + ε`.
    pub fn to_bound_report(&self) -> BoundReport {
        let bound = self.p_extractor * (1.0 - self.p_triv) + self.p_triv + self.epsilon;
        let p = Params {
            n: self.n,
            m: 0,
            gamma: 1,
            q: self.q,
            ell: self.ell,
        };
        let mut r = BoundReport::new(
            "sigma-online-extraction",
            self.prover.clone(),
            p,
            self.p_prover,
            bound,
        )
        .with_note(format!(
            "Pr[E]={:.6} p_triv={:.6} eps={:.6}{}",
            self.p_extractor,
            self.p_triv,
            self.epsilon,
            if self.vacuous { " (vacuous)" } else { "" }
        ));
        if !self.exact {
            r = r.sampled(self.std_error_extractor);
        }
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct RunOutcome {
    prover: bool,
    extractor: bool,
    online: bool,
}

/// Runs the protocol with `prover` at output length `n` on backend `B`:
/// exhaustively over oracle answers and challenges when the game tree has
/// at most `10^6` leaves and `trials` is `None`, otherwise `trials` seeded
/// runs. The prover's private coins come from `seed`.
pub fn run_sigma_experiment<B: OracleBackend>(
    prover: &Prover,
    toy: &XorShareProtocol,
    n: u32,
    trials: Option<usize>,
    seed: u64,
) -> Result<SigmaReport> {
    let spec = toy.spec();
    spec.validate()?;
    let access = AccessStructure::Threshold { k: 2 };
    let p_triv = p_trivial(&spec, &access)?;
    let f = CommitFunction::identity(n, spec.domain())?;
    let cfg = OracleConfig::new(n, spec.domain())?;
    let master = SimRng::new(seed);
    let w = match prover {
        Prover::Honest { witness } => *witness & ((1 << toy.share_bits) - 1),
        _ => master.split(u64::MAX).below(1 << toy.share_bits),
    };
    let instance = toy.instance_for(w);
    let cap = prover.max_queries() + spec.ell + 1;
    let game = |coins: &mut dyn Coins| -> Result<RunOutcome> {
        // Sampled runs draw fresh prover coins from the run's generator;
        // an enumerated tree fixes them so that the tree is well defined.
        let run_seed = match coins.rng() {
            Some(rng) => rng.below(u64::MAX),
            None => master.split(u64::MAX - 1).seed(),
        };
        let mut prover_rng = SimRng::new(run_seed);
        let backend = B::initial(cfg, RegisterLayout::empty(), cap)?;
        let mut sim = SimulatorS::new(backend, f.clone(), run_seed)?;
        let t = online_extract(prover, toy, instance, &mut sim, coins, &mut prover_rng)?;
        Ok(RunOutcome {
            prover: t.prover_accepted,
            extractor: t.witness.is_some_and(|w| toy.is_witness(instance, w)),
            online: t.is_online(),
        })
    };
    let (max_leaves, runs) = match trials {
        Some(t) => (0, t),
        None => (MAX_EXHAUSTIVE_LEAVES, crate::coins::MONTE_CARLO_RUNS),
    };
    let dist = exhaustive_or_sampled(max_leaves, runs, seed, |c| game(c))?;
    let p_prover = dist.probability_of(|o| o.prover);
    let p_extractor = dist.probability_of(|o| o.extractor);
    let online = dist.probabilities.keys().all(|o| o.online);
    let q = prover.max_queries();
    let epsilon = epsilon_simplified(n, spec.ell, q);
    let pt = *p_triv.numer() as f64 / *p_triv.denom() as f64;
    let lower_bound = (p_prover - pt - epsilon) / (1.0 - pt);
    Ok(SigmaReport {
        prover: prover.name(),
        n,
        ell: spec.ell,
        q,
        runs: dist.runs,
        exact: dist.exact,
        p_prover,
        p_extractor,
        p_triv: pt,
        epsilon,
        lower_bound,
        satisfied: p_extractor + crate::TOLERANCE >= lower_bound,
        vacuous: epsilon >= 1.0,
        online,
        std_error_extractor: dist.standard_error(p_extractor),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleState;
    use crate::sparse::SparseState;

    fn special_sound(c: usize) -> SigmaSpec {
        SigmaSpec {
            ell: c,
            challenges: (0..c).map(|i| vec![i]).collect(),
            message_bits: 1,
            randomness_bits: 0,
            verifier: Verifier::Table { accept: vec![] },
        }
    }

    #[test]
    fn p_triv_reference_values() {
        let t2 = AccessStructure::Threshold { k: 2 };
        assert_eq!(p_trivial(&special_sound(3), &t2).unwrap(), Ratio::new(1, 3));
        for k in 1..=10 {
            let tk = AccessStructure::Threshold { k };
            assert_eq!(
                p_trivial(&special_sound(10), &tk).unwrap(),
                Ratio::new(k as u64 - 1, 10)
            );
        }
        let nonempty = AccessStructure::MinSets {
            min_sets: (0..3).map(|i| vec![i]).collect(),
        };
        assert_eq!(
            p_trivial(&special_sound(3), &nonempty).unwrap(),
            Ratio::new(0, 1)
        );
    }

    #[test]
    fn min_sets_search_agrees_with_threshold() {
        let explicit = AccessStructure::MinSets {
            min_sets: vec![vec![0, 1], vec![1, 2], vec![0, 2]],
        };
        explicit.check_min_sets().unwrap();
        assert_eq!(
            p_trivial(&special_sound(3), &explicit).unwrap(),
            Ratio::new(1, 3)
        );
        assert!(AccessStructure::MinSets {
            min_sets: vec![vec![0], vec![0, 1]]
        }
        .check_min_sets()
        .is_err());
    }

    #[test]
    fn parallel_repetition_is_multiplicative() {
        let spec = special_sound(3);
        let t2 = AccessStructure::Threshold { k: 2 };
        assert_eq!(p_trivial_parallel(&spec, &t2, 2).unwrap(), Ratio::new(1, 9));
        assert_eq!(
            p_trivial_parallel(&spec, &t2, 1).unwrap(),
            p_trivial(&spec, &t2).unwrap()
        );
        let t1 = AccessStructure::Threshold { k: 1 };
        assert_eq!(p_trivial_parallel(&spec, &t1, 3).unwrap(), Ratio::new(0, 1));
        for r in 1..=4 {
            for k in 1..=3 {
                let a = AccessStructure::Threshold { k };
                assert_eq!(
                    p_trivial_parallel(&spec, &a, r).unwrap(),
                    ratio_pow(p_trivial(&spec, &a).unwrap(), r).unwrap()
                );
            }
        }
        let two = special_sound(2);
        let explicit = AccessStructure::MinSets {
            min_sets: vec![vec![0, 1]],
        };
        assert_eq!(
            p_trivial_parallel(&two, &explicit, 2).unwrap(),
            Ratio::new(1, 4)
        );
    }

    #[test]
    fn overflow_is_reported() {
        let spec = special_sound(10);
        let t2 = AccessStructure::Threshold { k: 2 };
        assert_eq!(
            p_trivial_parallel(&spec, &t2, 40),
            Err(Error::RationalOverflow)
        );
    }

    #[test]
    fn threshold_is_monotone() {
        let mut rng = SimRng::new(3);
        assert!(AccessStructure::Threshold { k: 2 }.check_monotone(6, 50, &mut rng));
        let odd = AccessStructure::MinSets {
            min_sets: vec![vec![1]],
        };
        assert!(odd.check_monotone(6, 50, &mut rng));
    }

    #[test]
    fn l_map_inverts() {
        let toy = XorShareProtocol::new(5, 0);
        for v in 0..32 {
            assert_eq!(toy.l_inverse(toy.l_map(v)), v);
        }
    }

    #[test]
    fn protocol_is_t2_sound_star_by_exhaustive_scan() {
        // Every triple of slot messages at b = 2: whenever two challenges
        // pass, the hook returns a witness; and one challenge alone can pass
        // for slots that encode no witness.
        let toy = XorShareProtocol::new(2, 0);
        let spec = toy.spec();
        let size = 1u64 << (2 * toy.share_bits);
        for instance in 0..4 {
            let mut single_without_witness = false;
            for a in 0..size {
                for b in 0..size {
                    for c in 0..size {
                        let m = [Some(a), Some(b), Some(c)];
                        let sat = spec.satisfied(instance, &m);
                        let w = toy.hook(instance, &m);
                        if sat.len() >= 2 {
                            assert!(w.is_some_and(|w| toy.is_witness(instance, w)));
                        }
                        let xor = toy.split(a).0 ^ toy.split(b).0 ^ toy.split(c).0;
                        if sat.len() == 1 && !toy.is_witness(instance, xor) {
                            single_without_witness = true;
                        }
                    }
                }
            }
            assert!(single_without_witness);
        }
    }

    #[test]
    fn honest_messages_pass_every_challenge() {
        let toy = XorShareProtocol::new(4, 2);
        let mut rng = SimRng::new(9);
        for w in 0..16 {
            let m = toy.honest_messages(w, &mut rng);
            let i = toy.instance_for(w);
            assert_eq!(toy.spec().satisfied(i, &m.map(Some)), vec![0, 1, 2]);
            assert_eq!(toy.hook(i, &m.map(Some)), Some(w));
        }
    }

    #[test]
    fn honest_prover_exhaustive_at_small_n() {
        // At n = 2 the extraction disturbance is large, so only the
        // structural facts and the (vacuous) inequality are checked.
        let toy = XorShareProtocol::new(2, 1);
        let r =
            run_sigma_experiment::<SparseState>(&Prover::Honest { witness: 2 }, &toy, 2, None, 5)
                .unwrap();
        assert!(r.exact, "{r:?}");
        assert!(r.online);
        assert!(
            r.p_extractor > 0.0 && r.p_extractor <= r.p_prover + 1e-9,
            "{r:?}"
        );
        assert!(r.satisfied);
        assert!(r.vacuous);
    }

    #[test]
    fn honest_prover_is_extracted_at_moderate_n() {
        let toy = XorShareProtocol::new(2, 1);
        let r = run_sigma_experiment::<SparseState>(
            &Prover::Honest { witness: 2 },
            &toy,
            12,
            Some(1000),
            5,
        )
        .unwrap();
        assert!(r.p_prover >= 0.99 && r.p_extractor >= 0.99, "{r:?}");
    }

    /// Exact `(Pr[accept], Pr[two challenges pass])` of the trivial attack
    /// against challenge 0, enumerating the attacker's classical choices.
    fn trivial_attack_reference(toy: &XorShareProtocol, instance: u64) -> (f64, f64) {
        let spec = toy.spec();
        let b = 1u64 << toy.share_bits;
        let (mut accept, mut extract, mut total) = (0.0, 0.0, 0.0);
        for si in 0..b {
            for sj in 0..b {
                for mk in 0..b * b {
                    let m = [
                        toy.message(si, toy.l_map(sj)),
                        toy.message(sj, instance ^ toy.l_map(si) ^ toy.l_map(sj)),
                        mk,
                    ];
                    let sat = spec.satisfied(instance, &m.map(Some));
                    accept += sat.len() as f64 / 3.0;
                    extract += f64::from(u8::from(sat.len() >= 2));
                    total += 1.0;
                }
            }
        }
        (accept / total, extract / total)
    }

    #[test]
    fn trivial_attack_matches_classical_enumeration() {
        let toy = XorShareProtocol::new(2, 1);
        let trials = 4000;
        let r = run_sigma_experiment::<SparseState>(
            &Prover::TrivialAttack { target: 0 },
            &toy,
            16,
            Some(trials),
            5,
        )
        .unwrap();
        let w = SimRng::new(5).split(u64::MAX).below(4);
        let (p, e) = trivial_attack_reference(&toy, toy.instance_for(w));
        let se = |v: f64| (v * (1.0 - v) / trials as f64).sqrt();
        assert!((r.p_prover - p).abs() < 4.0 * se(p) + 1e-3, "{r:?} vs {p}");
        assert!(
            (r.p_extractor - e).abs() < 4.0 * se(e) + 1e-3,
            "{r:?} vs {e}"
        );
        assert!(p > 1.0 / 3.0 && e < 0.25);
        assert!(r.satisfied);
    }

    #[test]
    fn garbage_prover_extracts_nothing() {
        let toy = XorShareProtocol::new(2, 1);
        let r =
            run_sigma_experiment::<SparseState>(&Prover::Garbage, &toy, 4, Some(500), 5).unwrap();
        assert_eq!(r.p_extractor, 0.0);
        assert!(r.p_prover < 0.05, "{r:?}");
    }

    #[test]
    fn collision_planting_needs_the_epsilon_term() {
        // With a hash collision on slot 3 the prover answers two challenges
        // without a witness, so Pr[P] exceeds Pr[E](1 − p_triv) + p_triv
        // and only ε keeps the inequality true.
        let toy = XorShareProtocol::new(2, 6);
        let r = run_sigma_experiment::<SparseState>(
            &Prover::CollisionPlanting { budget: 64 },
            &toy,
            6,
            Some(1000),
            5,
        )
        .unwrap();
        assert!(r.p_prover > 0.5, "{r:?}");
        assert!(r.p_extractor < 0.15, "{r:?}");
        assert!(r.p_prover > r.p_extractor * (1.0 - r.p_triv) + r.p_triv);
        assert!(r.satisfied && r.vacuous);
    }

    #[test]
    fn transcript_records_online_extraction() {
        let toy = XorShareProtocol::new(2, 1);
        let f = CommitFunction::identity(4, toy.spec().domain()).unwrap();
        let cfg = OracleConfig::new(4, toy.spec().domain()).unwrap();
        let mut sim = SimulatorS::new(
            OracleBackend::initial(cfg, RegisterLayout::empty(), 8).unwrap(),
            f,
            1,
        )
        .unwrap();
        let _: &SimulatorS<SparseState> = &sim;
        let mut coins = crate::coins::SampledCoins::new(2);
        let t = online_extract(
            &Prover::Honest { witness: 1 },
            &toy,
            toy.instance_for(1),
            &mut sim,
            &mut coins,
            &mut SimRng::new(3),
        )
        .unwrap();
        assert!(t.is_online());
        assert_eq!(
            t.calls
                .iter()
                .filter(|c| matches!(c.kind, CallKind::Extract { .. }))
                .count(),
            3
        );
        assert!(t.calls_before_challenge >= 6);
    }

    #[test]
    fn dense_and_sparse_agree_on_tiny_protocol() {
        let toy = XorShareProtocol::new(1, 0);
        let a =
            run_sigma_experiment::<OracleState>(&Prover::Honest { witness: 1 }, &toy, 1, None, 2)
                .unwrap();
        let b =
            run_sigma_experiment::<SparseState>(&Prover::Honest { witness: 1 }, &toy, 1, None, 2)
                .unwrap();
        assert!((a.p_extractor - b.p_extractor).abs() < 1e-9);
        assert!((a.p_prover - b.p_prover).abs() < 1e-9);
    }
}
