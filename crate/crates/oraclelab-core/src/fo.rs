//! The Fujisaki-Okamoto KEM over table-based toy PKEs, with real and
//! extraction-based decapsulation, the correctness and spreadness
//! estimators, and IND-CCA / OW-CPA game runners.
//!
//! `H` is the simulator `S` with commit function `f(m, r) = Enc_pk(m; r)`;
//! `G` is an independent lazily sampled classical oracle. Real
//! decapsulation queries `S.RO` classically, which is distributed exactly
//! like a lazily sampled random oracle as long as nothing is extracted.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::backend::OracleBackend;
use crate::bounds::{
    almost_commute_bound, extract_then_query_bound, query_then_extract_bound, BoundReport, Params,
};
use crate::coins::{exhaustive_or_sampled, total_variation, Coins, Distribution};
use crate::error::{Error, Result};
use crate::linalg::RegisterLayout;
use crate::oracle::OracleConfig;
use crate::relation::CommitFunction;
use crate::rng::{derive_seed, SimRng};
use crate::simulator::SimulatorS;

/// Largest `|M|·2^n` a toy PKE may have.
pub const MAX_PKE_CELLS: u64 = 1 << 20;

/// A deliberate defect planted into the generated key tables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fault {
    /// `Dec` maps `Enc(m; r)` of key `key` to `m + 1 mod |M|`.
    DecryptionError { key: usize, m: u64, r: u64 },
    /// `Enc(a)` is overwritten with `Enc(b)` (pairs are `(m, r)`).
    Collision {
        key: usize,
        a: (u64, u64),
        b: (u64, u64),
    },
    /// `Enc(m; r) = Enc(m; 0)` for every `r` under key `key`.
    ConstantRow { key: usize, m: u64 },
    /// `Enc(m; r) = Enc(m; 0)` for every key, message and `r`.
    DeterministicEnc,
    /// `Dec` always returns `⊥`.
    RejectAll,
}

/// A table-based toy PKE. Key `k` is the random injective table
/// `T_k[m][r]` into `{0..ciphertext_space}` generated from
/// `derive_seed(seed, k)`, with faults applied; `Gen` picks `k`
/// uniformly among `keys`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PkeSpec {
    pub message_space: u64,
    pub randomness_bits: u32,
    pub ciphertext_space: u64,
    pub keys: usize,
    pub seed: u64,
    #[serde(default)]
    pub faults: Vec<Fault>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub message_space: u64,
    pub randomness_bits: u32,
    pub ciphertext_space: u64,
    /// Entry `m·2^n + r` holds `Enc(m; r)`.
    pub table: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    inverse: BTreeMap<u64, u64>,
    reject_all: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub pk: PublicKey,
    pub sk: SecretKey,
}

impl PkeSpec {
    /// The default toy scheme: injective tables, half of the ciphertext
    /// space outside the image.
    pub fn toy(message_space: u64, randomness_bits: u32, keys: usize, seed: u64) -> Self {
        Self {
            message_space,
            randomness_bits,
            ciphertext_space: 2 * (message_space << randomness_bits),
            keys,
            seed,
            faults: Vec::new(),
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.faults.push(fault);
        self
    }

    fn cells(&self) -> u64 {
        self.message_space << self.randomness_bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.message_space == 0 || self.keys == 0 {
            return Err(Error::InvalidSpec("empty message or key space".into()));
        }
        if self.randomness_bits == 0 || self.randomness_bits > 20 || self.cells() > MAX_PKE_CELLS {
            return Err(Error::InvalidSpec("table larger than 2^20 cells".into()));
        }
        if self.ciphertext_space < self.cells() || self.ciphertext_space > 4 * MAX_PKE_CELLS {
            return Err(Error::InvalidSpec(
                "ciphertext space must hold an injective table and stay below 2^22".into(),
            ));
        }
        let r_max = 1u64 << self.randomness_bits;
        let cell_ok = |(m, r): (u64, u64)| m < self.message_space && r < r_max;
        for fault in &self.faults {
            let ok = match *fault {
                Fault::DecryptionError { key, m, r } => key < self.keys && cell_ok((m, r)),
                Fault::Collision { key, a, b } => key < self.keys && cell_ok(a) && cell_ok(b),
                Fault::ConstantRow { key, m } => key < self.keys && m < self.message_space,
                Fault::DeterministicEnc | Fault::RejectAll => true,
            };
            if !ok {
                return Err(Error::InvalidSpec(format!("fault {fault:?} out of range")));
            }
        }
        Ok(())
    }

    /// Key pair number `key`.
    pub fn keypair(&self, key: usize) -> Result<KeyPair> {
        self.validate()?;
        if key >= self.keys {
            return Err(Error::InvalidSpec(format!("key index {key} out of range")));
        }
        let cells = self.cells() as usize;
        let width = self.randomness_bits;
        let mut pool: Vec<u64> = (0..self.ciphertext_space).collect();
        let mut rng = SimRng::new(derive_seed(self.seed, key as u64));
        for i in 0..cells {
            let j = i + rng.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(cells);
        let mut table = pool;
        let idx = |m: u64, r: u64| ((m << width) | r) as usize;
        let mut reject_all = false;
        let mut errors = Vec::new();
        for fault in &self.faults {
            match *fault {
                Fault::Collision { key: k, a, b } if k == key => {
                    table[idx(a.0, a.1)] = table[idx(b.0, b.1)]
                }
                Fault::ConstantRow { key: k, m } if k == key => {
                    let c = table[idx(m, 0)];
                    for r in 0..1 << width {
                        table[idx(m, r)] = c;
                    }
                }
                Fault::DeterministicEnc => {
                    for m in 0..self.message_space {
                        let c = table[idx(m, 0)];
                        for r in 0..1 << width {
                            table[idx(m, r)] = c;
                        }
                    }
                }
                Fault::DecryptionError { key: k, m, r } if k == key => errors.push((m, r)),
                Fault::RejectAll => reject_all = true,
                _ => {}
            }
        }
        // Dec inverts the first coordinate; on a collision the earliest
        // (m, r) wins.
        let mut inverse = BTreeMap::new();
        for (i, &c) in table.iter().enumerate() {
            inverse.entry(c).or_insert(i as u64 >> width);
        }
        for (m, r) in errors {
            inverse.insert(table[idx(m, r)], (m + 1) % self.message_space);
        }
        let pk = PublicKey {
            message_space: self.message_space,
            randomness_bits: width,
            ciphertext_space: self.ciphertext_space,
            table,
        };
        Ok(KeyPair {
            pk,
            sk: SecretKey {
                inverse,
                reject_all,
            },
        })
    }
}

impl PublicKey {
    pub fn enc(&self, m: u64, r: u64) -> u64 {
        self.table[((m << self.randomness_bits) | r) as usize]
    }

    /// `f(m, r) = Enc_pk(m; r)` as a commit function on `(n, |M|)`.
    pub fn commit_function(&self) -> Result<CommitFunction> {
        CommitFunction::from_table(
            "enc-pk",
            self.randomness_bits,
            self.message_space,
            self.ciphertext_space,
            self.table.clone(),
        )
    }

    /// The smallest ciphertext outside the image of `Enc`, if any.
    pub fn garbage_ciphertext(&self) -> Option<u64> {
        let mut image = self.table.clone();
        image.sort_unstable();
        image.dedup();
        (0..self.ciphertext_space).find(|c| image.binary_search(c).is_err())
    }
}

impl SecretKey {
    pub fn dec(&self, c: u64) -> Option<u64> {
        if self.reject_all {
            return None;
        }
        self.inverse.get(&c).copied()
    }
}

/// `δ = E_k max_m Pr_r[Dec(Enc(m; r)) ≠ m]`, exactly, over all keys.
pub fn delta_exact(pke: &PkeSpec) -> Result<Ratio<u64>> {
    let r_count = 1u64 << pke.randomness_bits;
    let mut worst_sum = 0u64;
    for k in 0..pke.keys {
        let kp = pke.keypair(k)?;
        let worst = (0..pke.message_space)
            .map(|m| {
                (0..r_count)
                    .filter(|&r| kp.sk.dec(kp.pk.enc(m, r)) != Some(m))
                    .count() as u64
            })
            .max()
            .unwrap_or(0);
        worst_sum += worst;
    }
    Ok(Ratio::new(worst_sum, pke.keys as u64 * r_count))
}

/// Monte-Carlo estimate of `δ`: each trial draws a key and, for every
/// message, `samples_per_message` encryption coins.
pub fn delta_sampled(
    pke: &PkeSpec,
    trials: usize,
    samples_per_message: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = SimRng::new(seed);
    let mut total = 0.0;
    for _ in 0..trials {
        let kp = pke.keypair(rng.below(pke.keys as u64) as usize)?;
        let mut worst = 0.0f64;
        for m in 0..pke.message_space {
            let fails = (0..samples_per_message)
                .filter(|_| {
                    let r = rng.below(1 << pke.randomness_bits);
                    kp.sk.dec(kp.pk.enc(m, r)) != Some(m)
                })
                .count();
            worst = worst.max(fails as f64 / samples_per_message as f64);
        }
        total += worst;
    }
    Ok(total / trials as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpreadMode {
    Strict,
    Weak,
}

/// `max_{m,c} Pr_r[Enc_k(m; r) = c]` for each key, as exact ratios.
pub fn max_ciphertext_probabilities(pke: &PkeSpec) -> Result<Vec<Ratio<u64>>> {
    let r_count = 1u64 << pke.randomness_bits;
    (0..pke.keys)
        .map(|k| {
            let kp = pke.keypair(k)?;
            let mut worst = 0u64;
            for m in 0..pke.message_space {
                let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
                for r in 0..r_count {
                    *counts.entry(kp.pk.enc(m, r)).or_insert(0) += 1;
                }
                worst = worst.max(counts.values().copied().max().unwrap_or(0));
            }
            Ok(Ratio::new(worst, r_count))
        })
        .collect()
}

/// The probability inside the logarithm: the worst key (strict) or the
/// key average (weak).
pub fn spread_probability(pke: &PkeSpec, mode: SpreadMode) -> Result<Ratio<u64>> {
    let per_key = max_ciphertext_probabilities(pke)?;
    Ok(match mode {
        SpreadMode::Strict => per_key
            .into_iter()
            .max()
            .unwrap_or_else(|| Ratio::new(1, 1)),
        SpreadMode::Weak => {
            let r_count = 1u64 << pke.randomness_bits;
            let sum: u64 = per_key.iter().map(|p| (p * r_count).to_integer()).sum();
            Ratio::new(sum, r_count * pke.keys as u64)
        }
    })
}

/// `γ` in bits: `−log₂` of [`spread_probability`].
pub fn gamma_spread(pke: &PkeSpec, mode: SpreadMode) -> Result<f64> {
    let p = spread_probability(pke, mode)?;
    Ok(-libm::log2(*p.numer() as f64 / *p.denom() as f64))
}

/// A classical random oracle with range `{0..range}`, sampled lazily
/// through the game's coins.
#[derive(Clone, Debug, Default)]
pub struct LazyOracle {
    range: u64,
    table: BTreeMap<u64, u64>,
}

impl LazyOracle {
    pub fn new(range: u64) -> Self {
        Self {
            range,
            table: BTreeMap::new(),
        }
    }

    pub fn query(&mut self, x: u64, coins: &mut dyn Coins) -> u64 {
        let range = self.range;
        *self
            .table
            .entry(x)
            .or_insert_with(|| coins.choose(&vec![1.0; range as usize]) as u64)
    }
}

/// The KEM `FO[PKE, H, G]` with keys in `{0..2^key_bits}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoKem {
    pub pke: PkeSpec,
    pub key_bits: u32,
}

/// The random oracles of one run.
pub struct Oracles<B: OracleBackend> {
    pub h: SimulatorS<B>,
    pub g: LazyOracle,
}

impl FoKem {
    pub fn new(pke: PkeSpec, key_bits: u32) -> Self {
        Self { pke, key_bits }
    }

    /// Fresh oracles for `pk`: `S` on `(n, |M|)` with `f = Enc_pk`, and `G`.
    pub fn oracles<B: OracleBackend>(
        &self,
        pk: &PublicKey,
        query_cap: usize,
        seed: u64,
    ) -> Result<Oracles<B>> {
        let cfg = OracleConfig::new(pk.randomness_bits, pk.message_space)?;
        let backend = B::initial(cfg, RegisterLayout::empty(), query_cap)?;
        Ok(Oracles {
            h: SimulatorS::new(backend, pk.commit_function()?, seed)?,
            g: LazyOracle::new(1 << self.key_bits),
        })
    }
}

/// `Encaps` with a given message: `c = Enc_pk(m; H(m))`, `K = G(m)`.
pub fn fo_encaps_with<B: OracleBackend>(
    pk: &PublicKey,
    oracles: &mut Oracles<B>,
    m: u64,
    coins: &mut dyn Coins,
) -> Result<(u64, u64)> {
    let r = oracles.h.s_ro_with(m, coins)?;
    let c = pk.enc(m, r);
    Ok((oracles.g.query(m, coins), c))
}

/// `Encaps`: uniform `m`, then [`fo_encaps_with`].
pub fn fo_encaps<B: OracleBackend>(
    pk: &PublicKey,
    oracles: &mut Oracles<B>,
    coins: &mut dyn Coins,
) -> Result<(u64, u64)> {
    let m = coins.choose(&vec![1.0; pk.message_space as usize]) as u64;
    fo_encaps_with(pk, oracles, m, coins)
}

/// `Decaps` with the secret key and the re-encryption check.
pub fn fo_decaps<B: OracleBackend>(
    pk: &PublicKey,
    sk: &SecretKey,
    oracles: &mut Oracles<B>,
    c: u64,
    coins: &mut dyn Coins,
) -> Result<Option<u64>> {
    let Some(m) = sk.dec(c) else { return Ok(None) };
    let r = oracles.h.s_ro_with(m, coins)?;
    if pk.enc(m, r) != c {
        return Ok(None);
    }
    Ok(Some(oracles.g.query(m, coins)))
}

/// `Decaps` without the secret key: `m̂ = S.E(c)`, `⊥` for `∅`, else `G(m̂)`.
/// The oracles' commit function must be `Enc_pk`.
pub fn simulated_decaps<B: OracleBackend>(
    oracles: &mut Oracles<B>,
    c: u64,
    coins: &mut dyn Coins,
) -> Result<Option<u64>> {
    match oracles.h.s_e_with(c, coins)?.found() {
        None => Ok(None),
        Some(m) => Ok(Some(oracles.g.query(m, coins))),
    }
}

/// Which decapsulation the game's `Decaps` oracle runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecapsBackend {
    /// Secret key and re-encryption check.
    Real,
    /// Decrypt, keep the re-encryption query `S.RO(m)`, then answer from
    /// `S.E(c)`.
    ExtractKeepQuery,
    /// `S.E(c)` only; the secret key is never touched.
    Extract,
}

impl DecapsBackend {
    pub fn name(self) -> &'static str {
        match self {
            DecapsBackend::Real => "real-decaps",
            DecapsBackend::ExtractKeepQuery => "simulated-decaps-keep-query",
            DecapsBackend::Extract => "simulated-decaps",
        }
    }
}

/// One ciphertext the CCA adversary submits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecapsQuery {
    /// `Enc(m; H(m))`.
    Honest { m: u64 },
    /// `Enc(m; H(m) ⊕ 1)`.
    WrongRandomness { m: u64 },
    /// A ciphertext outside the image of `Enc`.
    Garbage,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CcaAdversary {
    /// Outputs a uniform bit and makes no queries.
    CoinGuess,
    /// Hashes every message, recovers `m*` by re-encrypting, compares
    /// `G(m*)` with the challenge key and submits `decaps`. With
    /// `hash_after` the decapsulation queries come first.
    ReEncryption {
        decaps: Vec<DecapsQuery>,
        hash_after: bool,
    },
    /// Submits the challenge ciphertext, which the game forbids.
    ChallengeQuerier,
}

impl CcaAdversary {
    pub fn name(&self) -> String {
        match self {
            CcaAdversary::CoinGuess => "coin-guess".into(),
            CcaAdversary::ReEncryption { decaps, hash_after } => {
                format!(
                    "re-encryption(q_D={}{})",
                    decaps.len(),
                    if *hash_after { ", hash-after" } else { "" }
                )
            }
            CcaAdversary::ChallengeQuerier => "challenge-querier".into(),
        }
    }

    /// `(q_H, q_G, q_D)` of the adversary at message space size `m`.
    pub fn query_counts(&self, m: u64) -> (usize, usize, usize) {
        match self {
            CcaAdversary::CoinGuess => (0, 0, 0),
            CcaAdversary::ReEncryption { decaps, .. } => (m as usize, 1, decaps.len()),
            CcaAdversary::ChallengeQuerier => (0, 0, 1),
        }
    }
}

/// One oracle or `Decaps` call of a game, for trace logs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "kebab-case")]
pub enum TraceEvent {
    Hash {
        m: u64,
        r: u64,
    },
    G {
        m: u64,
        k: u64,
    },
    Decaps {
        c: u64,
        answer: Option<u64>,
        backend: DecapsBackend,
    },
    Challenge {
        c: u64,
    },
    Guess {
        bit: u8,
    },
}

/// The observable result of one IND-CCA run.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CcaOutcome {
    /// Answers in query order; `None` is `⊥`. Queries the adversary skipped
    /// because they equal `c*` are absent.
    pub answers: Vec<Option<u64>>,
    pub guess: u8,
    pub won: bool,
    /// Position of each `S.RO` query relative to the `S.E` calls: the number
    /// of `S.RO` queries made after some extraction.
    pub queries_after_extraction: usize,
}

fn withheld(sk: Option<&SecretKey>) -> Result<&SecretKey> {
    sk.ok_or_else(|| Error::InvalidSpec("secret key withheld".into()))
}

struct CcaWorld<'a, B: OracleBackend> {
    pk: &'a PublicKey,
    sk: Option<&'a SecretKey>,
    oracles: Oracles<B>,
    backend: DecapsBackend,
    c_star: u64,
    extracted: bool,
    queries_after_extraction: usize,
    trace: Vec<TraceEvent>,
}

impl<B: OracleBackend> CcaWorld<'_, B> {
    fn hash(&mut self, m: u64, coins: &mut dyn Coins) -> Result<u64> {
        let r = self.oracles.h.s_ro_with(m, coins)?;
        self.queries_after_extraction += usize::from(self.extracted);
        self.trace.push(TraceEvent::Hash { m, r });
        Ok(r)
    }

    fn g(&mut self, m: u64, coins: &mut dyn Coins) -> u64 {
        let k = self.oracles.g.query(m, coins);
        self.trace.push(TraceEvent::G { m, k });
        k
    }

    fn decaps(&mut self, c: u64, coins: &mut dyn Coins) -> Result<Option<u64>> {
        if c == self.c_star {
            return Err(Error::ChallengeQueried);
        }
        let answer = match self.backend {
            DecapsBackend::Real => {
                let sk = withheld(self.sk)?;
                let before = self.oracles.h.log().len();
                let a = fo_decaps(self.pk, sk, &mut self.oracles, c, coins)?;
                if self.extracted && self.oracles.h.log().len() > before {
                    self.queries_after_extraction += 1;
                }
                a
            }
            DecapsBackend::ExtractKeepQuery => {
                if let Some(m) = withheld(self.sk)?.dec(c) {
                    self.oracles.h.s_ro_with(m, coins)?;
                    self.queries_after_extraction += usize::from(self.extracted);
                }
                self.extracted = true;
                simulated_decaps(&mut self.oracles, c, coins)?
            }
            DecapsBackend::Extract => {
                self.extracted = true;
                simulated_decaps(&mut self.oracles, c, coins)?
            }
        };
        self.trace.push(TraceEvent::Decaps {
            c,
            answer,
            backend: self.backend,
        });
        Ok(answer)
    }
}

/// Everything fixed for a batch of IND-CCA runs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcaSetup {
    pub kem: FoKem,
    pub adversary: CcaAdversary,
    pub backend: DecapsBackend,
}

impl CcaSetup {
    fn query_cap(&self) -> usize {
        let (q_h, _, q_d) = self.adversary.query_counts(self.kem.pke.message_space);
        q_h + q_d + 2
    }
}

/// One IND-CCA-KEM run: `Gen`, challenge `(c*, K_b)` with
/// `c* = Enc(m*; H(m*))`, the adversary, and the check `b' = b`. With
/// `sk_withheld` the secret key is never derived into the game, so only
/// [`DecapsBackend::Extract`] can run.
pub fn indcca_game<B: OracleBackend>(
    setup: &CcaSetup,
    sk_withheld: bool,
    coins: &mut dyn Coins,
) -> Result<(CcaOutcome, Vec<TraceEvent>)> {
    let pke = &setup.kem.pke;
    let key = coins.choose(&vec![1.0; pke.keys]);
    let kp = pke.keypair(key)?;
    let sk = if sk_withheld { None } else { Some(&kp.sk) };
    let sim_seed = coins.rng().map_or(0, |r| r.below(u64::MAX));
    let oracles = setup
        .kem
        .oracles::<B>(&kp.pk, setup.query_cap(), sim_seed)?;
    let mut world = CcaWorld {
        pk: &kp.pk,
        sk,
        oracles,
        backend: setup.backend,
        c_star: 0,
        extracted: false,
        queries_after_extraction: 0,
        trace: Vec::new(),
    };
    let m_star = coins.choose(&vec![1.0; pke.message_space as usize]) as u64;
    let (k0, c_star) = fo_encaps_with(&kp.pk, &mut world.oracles, m_star, coins)?;
    world.c_star = c_star;
    world.trace.push(TraceEvent::Challenge { c: c_star });
    let b = coins.choose(&[1.0, 1.0]) as u8;
    let k1 = coins.choose(&vec![1.0; 1 << setup.kem.key_bits]) as u64;
    let k_b = if b == 0 { k0 } else { k1 };
    let mut answers = Vec::new();
    let guess = match &setup.adversary {
        CcaAdversary::CoinGuess => coins.choose(&[1.0, 1.0]) as u8,
        CcaAdversary::ChallengeQuerier => {
            world.decaps(c_star, coins)?;
            0
        }
        CcaAdversary::ReEncryption { decaps, hash_after } => {
            let mut hashes = BTreeMap::new();
            let mut hash_all = |world: &mut CcaWorld<'_, B>, coins: &mut dyn Coins| -> Result<()> {
                for m in 0..pke.message_space {
                    let r = world.hash(m, coins)?;
                    hashes.insert(m, r);
                }
                Ok(())
            };
            let ciphertext = |q: &DecapsQuery,
                              hashes: &BTreeMap<u64, u64>,
                              world: &CcaWorld<'_, B>|
             -> Option<u64> {
                let r_max = (1u64 << pke.randomness_bits) - 1;
                match *q {
                    DecapsQuery::Honest { m } => Some(world.pk.enc(m, hashes[&m])),
                    DecapsQuery::WrongRandomness { m } => {
                        Some(world.pk.enc(m, (hashes[&m] ^ 1) & r_max))
                    }
                    DecapsQuery::Garbage => world.pk.garbage_ciphertext(),
                }
            };
            if *hash_after {
                // Without hashes the adversary can only send garbage and
                // re-encryptions under r = 0.
                for q in decaps {
                    let c = match *q {
                        DecapsQuery::Garbage => world.pk.garbage_ciphertext(),
                        DecapsQuery::Honest { m } | DecapsQuery::WrongRandomness { m } => {
                            Some(world.pk.enc(m, 0))
                        }
                    };
                    if let Some(c) = c.filter(|&c| c != c_star) {
                        answers.push(world.decaps(c, coins)?);
                    }
                }
                hash_all(&mut world, coins)?;
            } else {
                hash_all(&mut world, coins)?;
                for q in decaps {
                    if let Some(c) = ciphertext(q, &hashes, &world).filter(|&c| c != c_star) {
                        answers.push(world.decaps(c, coins)?);
                    }
                }
            }
            let candidate = (0..pke.message_space).find(|m| world.pk.enc(*m, hashes[m]) == c_star);
            match candidate {
                Some(m) => u8::from(world.g(m, coins) != k_b),
                None => 1,
            }
        }
    };
    world.trace.push(TraceEvent::Guess { bit: guess });
    let outcome = CcaOutcome {
        answers,
        guess,
        won: guess == b,
        queries_after_extraction: world.queries_after_extraction,
    };
    Ok((outcome, world.trace))
}

/// Exact (or sampled) outcome distribution of the IND-CCA game.
pub fn indcca_distribution<B: OracleBackend>(
    setup: &CcaSetup,
    max_leaves: usize,
    runs: usize,
    seed: u64,
) -> Result<Distribution<CcaOutcome>> {
    exhaustive_or_sampled(max_leaves, runs, seed, |c| {
        Ok(indcca_game::<B>(setup, false, c)?.0)
    })
}

/// The per-run budget for real-vs-simulated decapsulation:
/// `q_D·(2Γ + 2)/2^n` for the extract-after-query and extract-then-query
/// events, plus `8√(2Γ/2^n)` for every `S.RO` query made after an
/// extraction and, when the re-encryption query is dropped, for each
/// dropped query.
pub fn decaps_budget(
    n: u32,
    gamma: u64,
    q_d: usize,
    queries_after_extraction: usize,
    dropped: usize,
) -> f64 {
    q_d as f64 * (extract_then_query_bound(n, gamma) + query_then_extract_bound(n))
        + (queries_after_extraction + dropped) as f64 * almost_commute_bound(n, gamma)
}

/// Result of comparing real against simulated decapsulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub adversary: String,
    pub simulated: DecapsBackend,
    pub n: u32,
    pub message_space: u64,
    pub q_d: usize,
    pub gamma: u64,
    /// TV between the `(answers, guess)` distributions.
    pub tv: f64,
    pub budget: f64,
    pub win_real: f64,
    pub win_simulated: f64,
    pub exact: bool,
}

impl AgreementReport {
    pub fn satisfied(&self) -> bool {
        self.tv <= self.budget + crate::TOLERANCE
    }

    pub fn to_bound_report(&self) -> BoundReport {
        let p = Params {
            n: self.n,
            m: self.message_space,
            gamma: self.gamma,
            q: self.q_d,
            ell: 0,
        };
        BoundReport::new(
            "fo-decaps-agreement",
            format!("{} vs {}", self.adversary, self.simulated.name()),
            p,
            self.tv,
            self.budget,
        )
        .with_note(format!(
            "win real={:.6} simulated={:.6}",
            self.win_real, self.win_simulated
        ))
    }
}

fn project(d: &Distribution<CcaOutcome>) -> BTreeMap<(Vec<Option<u64>>, u8), f64> {
    let mut out = BTreeMap::new();
    for (o, p) in &d.probabilities {
        *out.entry((o.answers.clone(), o.guess)).or_insert(0.0) += p;
    }
    out
}

/// Runs `adversary` against real and simulated decapsulation and compares
/// the joint distributions of decapsulation answers and guess. The budget
/// takes the worst case over the simulated runs of the number of queries
/// after an extraction.
pub fn decaps_agreement<B: OracleBackend>(
    kem: &FoKem,
    adversary: &CcaAdversary,
    simulated: DecapsBackend,
    max_leaves: usize,
    runs: usize,
    seed: u64,
) -> Result<AgreementReport> {
    let real_setup = CcaSetup {
        kem: kem.clone(),
        adversary: adversary.clone(),
        backend: DecapsBackend::Real,
    };
    let sim_setup = CcaSetup {
        backend: simulated,
        ..real_setup.clone()
    };
    let real = indcca_distribution::<B>(&real_setup, max_leaves, runs, seed)?;
    let sim = indcca_distribution::<B>(&sim_setup, max_leaves, runs, seed)?;
    let gamma = (0..kem.pke.keys)
        .map(|k| Ok(kem.pke.keypair(k)?.pk.commit_function()?.gamma()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(1);
    let (_, _, q_d) = adversary.query_counts(kem.pke.message_space);
    let after = sim
        .probabilities
        .keys()
        .map(|o| o.queries_after_extraction)
        .max()
        .unwrap_or(0);
    let dropped = if simulated == DecapsBackend::Extract {
        q_d
    } else {
        0
    };
    let n = kem.pke.randomness_bits;
    Ok(AgreementReport {
        adversary: adversary.name(),
        simulated,
        n,
        message_space: kem.pke.message_space,
        q_d,
        gamma,
        tv: total_variation(&project(&real), &project(&sim)),
        budget: decaps_budget(n, gamma, q_d, after, dropped),
        win_real: real.probability_of(|o| o.won),
        win_simulated: sim.probability_of(|o| o.won),
        exact: real.exact && sim.exact,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OwAdversary {
    /// A uniform message.
    Guess,
    /// Searches the public table for `c*`.
    TableInversion,
}

/// One OW-CPA run: `c* = Enc(m*; r)` with uniform `m*` and `r`; wins when
/// the adversary returns `m*`.
pub fn ow_cpa_game(pke: &PkeSpec, adversary: OwAdversary, coins: &mut dyn Coins) -> Result<bool> {
    let kp = pke.keypair(coins.choose(&vec![1.0; pke.keys]))?;
    let m_star = coins.choose(&vec![1.0; pke.message_space as usize]) as u64;
    let r = coins.choose(&vec![1.0; 1 << pke.randomness_bits]) as u64;
    let c_star = kp.pk.enc(m_star, r);
    let guess = match adversary {
        OwAdversary::Guess => coins.choose(&vec![1.0; pke.message_space as usize]) as u64,
        OwAdversary::TableInversion => kp
            .pk
            .table
            .iter()
            .position(|&c| c == c_star)
            .map_or(0, |i| i as u64 >> pke.randomness_bits),
    };
    Ok(guess == m_star)
}

/// The FO advantage bound `2q√ADV_OW + 24q²√δ + 24q√(q·q_D)·2^{-γ/4}` with
/// `q = q_H + q_G + 2q_D`, against a measured IND-CCA advantage
/// `|Pr[b' = b] − 1/2|`. Reported, never asserted: at desk scale the last
/// term alone exceeds 1.
pub fn fo_advantage_report(
    kem: &FoKem,
    adversary: &CcaAdversary,
    measured_advantage: f64,
    ow_advantage: f64,
) -> Result<BoundReport> {
    let (q_h, q_g, q_d) = adversary.query_counts(kem.pke.message_space);
    let q = (q_h + q_g + 2 * q_d) as f64;
    let delta = delta_exact(&kem.pke)?;
    let delta = *delta.numer() as f64 / *delta.denom() as f64;
    let gamma = gamma_spread(&kem.pke, SpreadMode::Weak)?;
    let bound = 2.0 * q * libm::sqrt(ow_advantage)
        + 24.0 * q * q * libm::sqrt(delta)
        + 24.0 * q * libm::sqrt(q * q_d as f64) * libm::exp2(-gamma / 4.0);
    let p = Params {
        n: kem.pke.randomness_bits,
        m: kem.pke.message_space,
        gamma: 1,
        q: q as usize,
        ell: 0,
    };
    let report = BoundReport::new(
        "fo-advantage",
        adversary.name(),
        p,
        measured_advantage,
        bound,
    );
    let note = if report.vacuous() {
        "vacuous at desk scale; not asserted"
    } else {
        "not asserted"
    };
    Ok(report.with_note(note))
}
