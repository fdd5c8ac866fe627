//! Sparse database representation.
//!
//! The state is stored as a map from canonical databases (sorted
//! `(x, cell)` lists, absent `x` meaning `⊥`) to amplitudes, jointly with
//! the adversary registers. Cells are stored in the computational basis
//! at rest.
//!
//! A literal keyed map cannot hold `F|h⟩` for large `n`: that vector has
//! `2^n + 1` nonzero amplitudes in every fixed basis. Database registers
//! that are touched only by classical queries and extractions stay in a
//! product with everything else, so each of them is kept as a separate
//! [`CellVector`] written in the frame `{|⊥⟩, |φ_0⟩, |y⟩}`, which needs
//! only `O(1)` entries for `F|h⟩`. The represented state is the joint map
//! tensored with every factor. A factor is absorbed into the joint map as
//! soon as an operation entangles it (a superposition query whose `X`
//! support contains its index), or when a canonical view is requested.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{nonzero, OracleBackend};
use crate::coins::PROBABILITY_FLOOR;
use crate::error::{Error, Result};
use crate::extraction::ExtractionOutcome;
use crate::linalg::{
    walsh_hadamard, Matrix, RegisterLayout, StateVector, C64, DEFAULT_DIM_CAP, ZERO,
};
use crate::oracle::{apply_f_cell, OracleConfig, OracleState};
use crate::relation::{CommitFunction, RelationView};
use crate::rng::SimRng;

/// Amplitudes below this magnitude are dropped after every operation.
pub const PRUNE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Computational,
    Hadamard,
}

/// A joint basis state: adversary basis index plus the non-`⊥` cells.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SparseKey {
    pub adv: u64,
    pub db: Vec<(u64, u32)>,
}

impl SparseKey {
    pub fn cell(&self, x: u64) -> Option<u32> {
        self.db
            .binary_search_by_key(&x, |e| e.0)
            .ok()
            .map(|i| self.db[i].1)
    }

    fn without(&self, x: u64) -> SparseKey {
        SparseKey {
            adv: self.adv,
            db: self.db.iter().copied().filter(|e| e.0 != x).collect(),
        }
    }

    fn with(&self, x: u64, cell: Option<u32>) -> SparseKey {
        let mut k = self.without(x);
        if let Some(c) = cell {
            let pos = k.db.partition_point(|e| e.0 < x);
            k.db.insert(pos, (x, c));
        }
        k
    }
}

/// One unentangled database register,
/// `bot·|⊥⟩ + uniform·|φ_0⟩ + Σ_y values[y]·|y⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellVector {
    pub bot: C64,
    pub uniform: C64,
    pub values: BTreeMap<u64, C64>,
}

/// Response distribution of a classical query: explicit probabilities and
/// one shared probability for each of the remaining responses.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryDistribution {
    pub explicit: BTreeMap<u64, f64>,
    pub generic: f64,
    pub generic_count: u64,
}

impl QueryDistribution {
    fn to_vec(&self, n: u32) -> Vec<(u64, f64)> {
        if self.generic <= PROBABILITY_FLOOR {
            return nonzero(self.explicit.iter().map(|(&h, &p)| (h, p)));
        }
        nonzero((0..1u64 << n).map(|h| (h, self.explicit.get(&h).copied().unwrap_or(self.generic))))
    }

    fn sample(&self, n: u32, rng: &mut SimRng) -> u64 {
        let generic_mass = self.generic * self.generic_count as f64;
        let mut weights: Vec<f64> = self.explicit.values().copied().collect();
        weights.push(generic_mass);
        let i = rng.weighted_index(&weights);
        if i < self.explicit.len() {
            return *self.explicit.keys().nth(i).unwrap_or(&0);
        }
        let d = 1u64 << n;
        if d <= 4096 {
            let rest: Vec<u64> = (0..d).filter(|h| !self.explicit.contains_key(h)).collect();
            return rest[rng.below(rest.len() as u64) as usize];
        }
        loop {
            let h = rng.below(d);
            if !self.explicit.contains_key(&h) {
                return h;
            }
        }
    }
}

fn amp(n: u32) -> f64 {
    1.0 / libm::sqrt((1u64 << n) as f64)
}

impl CellVector {
    pub fn bottom() -> Self {
        Self {
            bot: C64::new(1.0, 0.0),
            uniform: ZERO,
            values: BTreeMap::new(),
        }
    }

    /// Computational-basis amplitude of `|y⟩`.
    pub fn amplitude(&self, n: u32, y: u64) -> C64 {
        self.values.get(&y).copied().unwrap_or(ZERO) + self.uniform * amp(n)
    }

    pub fn norm_sqr(&self, n: u32) -> f64 {
        let g = self.uniform * amp(n);
        let explicit: f64 = self
            .values
            .values()
            .map(|v| (v + g).norm_sqr() - g.norm_sqr())
            .sum();
        self.bot.norm_sqr() + explicit + (1u64 << n) as f64 * g.norm_sqr()
    }

    fn scale(&mut self, s: f64) {
        self.bot *= s;
        self.uniform *= s;
        for v in self.values.values_mut() {
            *v *= s;
        }
    }

    /// `F` in the `{⊥, φ_0, y}` frame: `s = ⟨φ_0|v⟩` moves to `⊥` and the
    /// `φ_0` coefficient becomes `uniform + bot − s`.
    pub fn apply_f(&mut self, n: u32) {
        let s = self.values.values().sum::<C64>() * amp(n) + self.uniform;
        self.uniform += self.bot - s;
        self.bot = s;
    }

    pub fn query_distribution(&self, n: u32) -> QueryDistribution {
        let mut w = self.clone();
        w.apply_f(n);
        let mut explicit = BTreeMap::new();
        let mut support: BTreeSet<u64> = w.values.keys().copied().collect();
        support.insert(0);
        for &h in &support {
            let mut p = w.amplitude(n, h).norm_sqr();
            if h == 0 {
                p += w.bot.norm_sqr();
            }
            explicit.insert(h, p);
        }
        QueryDistribution {
            explicit,
            generic: (w.uniform * amp(n)).norm_sqr(),
            generic_count: (1u64 << n) - support.len() as u64,
        }
    }

    /// Post-query register for response `h`, normalized; returns `Pr[h]`.
    pub fn query_collapse(&mut self, n: u32, h: u64) -> f64 {
        let mut w = self.clone();
        w.apply_f(n);
        let a = w.amplitude(n, h);
        let beta = if h == 0 { w.bot } else { ZERO };
        let p = a.norm_sqr() + beta.norm_sqr();
        let mut next = CellVector {
            bot: beta,
            uniform: ZERO,
            values: BTreeMap::new(),
        };
        next.values.insert(h, a);
        next.apply_f(n);
        if p > 0.0 {
            next.scale(1.0 / libm::sqrt(p));
        }
        *self = next;
        p
    }

    /// `Σ_{y ∈ sat} |⟨y|v⟩|²`.
    pub fn satisfying_mass(&self, n: u32, sat: &[u64]) -> f64 {
        sat.iter().map(|&y| self.amplitude(n, y).norm_sqr()).sum()
    }

    /// Projects onto (or away from) `span{|y⟩ : y ∈ sat}`; normalizes and
    /// returns the kept mass.
    pub fn project(&mut self, n: u32, sat: &[u64], keep_satisfying: bool) -> f64 {
        let g = self.uniform * amp(n);
        if keep_satisfying {
            let values: BTreeMap<u64, C64> =
                sat.iter().map(|&y| (y, self.amplitude(n, y))).collect();
            *self = CellVector {
                bot: ZERO,
                uniform: ZERO,
                values,
            };
        } else {
            for &y in sat {
                self.values.insert(y, -g);
            }
        }
        let keep_all = self.uniform.norm() > PRUNE;
        self.values.retain(|_, v| keep_all || v.norm() > PRUNE);
        let p = self.norm_sqr(n);
        if p > 0.0 {
            self.scale(1.0 / libm::sqrt(p));
        }
        p
    }

    /// Computational-basis expansion: `(None, ⊥ amplitude)` then every `y`.
    pub fn expand(&self, n: u32) -> Vec<(Option<u32>, C64)> {
        let mut out = Vec::new();
        if self.bot.norm() > PRUNE {
            out.push((None, self.bot));
        }
        let g = self.uniform * amp(n);
        if g.norm() > PRUNE {
            for y in 0..1u64 << n {
                let a = self.amplitude(n, y);
                if a.norm() > PRUNE {
                    out.push((Some(y as u32), a));
                }
            }
        } else {
            for (&y, &v) in &self.values {
                if v.norm() > PRUNE {
                    out.push((Some(y as u32), v));
                }
            }
        }
        out
    }

    pub fn inner(&self, n: u32, other: &CellVector) -> C64 {
        let alpha = self.uniform * amp(n);
        let beta = other.uniform * amp(n);
        let sum_a: C64 = self.values.values().sum();
        let sum_b: C64 = other.values.values().sum();
        let mut direct = ZERO;
        for (y, a) in &self.values {
            if let Some(b) = other.values.get(y) {
                direct += a.conj() * b;
            }
        }
        self.bot.conj() * other.bot
            + direct
            + alpha.conj() * sum_b
            + beta * sum_a.conj()
            + (1u64 << n) as f64 * alpha.conj() * beta
    }
}

/// One line of the sparse dump format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub adversary: Vec<usize>,
    pub database: Vec<(u64, u32)>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug)]
pub struct SparseState {
    config: OracleConfig,
    q_cap: usize,
    queries: usize,
    adversary: RegisterLayout,
    active_basis: Basis,
    joint: BTreeMap<SparseKey, C64>,
    factors: BTreeMap<u64, CellVector>,
}

impl SparseState {
    pub fn new(config: OracleConfig, adversary: RegisterLayout, q_cap: usize) -> Self {
        let mut joint = BTreeMap::new();
        joint.insert(
            SparseKey {
                adv: 0,
                db: Vec::new(),
            },
            C64::new(1.0, 0.0),
        );
        Self {
            config,
            q_cap,
            queries: 0,
            adversary,
            active_basis: Basis::Computational,
            joint,
            factors: BTreeMap::new(),
        }
    }

    pub fn fresh(config: OracleConfig, q_cap: usize) -> Self {
        Self::new(config, RegisterLayout::empty(), q_cap)
    }

    pub fn q_cap(&self) -> usize {
        self.q_cap
    }

    pub fn queries_used(&self) -> usize {
        self.queries
    }

    pub fn active_basis(&self) -> Basis {
        self.active_basis
    }

    /// Number of joint keys (factors not expanded).
    pub fn joint_len(&self) -> usize {
        self.joint.len()
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    /// Sparse encoding of a dense state; fails if some database in its
    /// support has more than `q_cap` non-`⊥` cells.
    pub fn encode(dense: &OracleState, q_cap: usize) -> Result<Self> {
        let cfg = dense.config();
        let db_dim = dense.database_dim();
        let mut joint = BTreeMap::new();
        for (i, a) in dense.state().amplitudes().iter().enumerate() {
            if a.norm() <= PRUNE {
                continue;
            }
            let digits = dense.database_digits(i % db_dim);
            let db: Vec<(u64, u32)> = digits
                .iter()
                .enumerate()
                .filter(|(_, &d)| d != cfg.bot())
                .map(|(x, &d)| (x as u64, d as u32))
                .collect();
            if db.len() > q_cap {
                return Err(Error::SupportExceedsCap { cap: q_cap });
            }
            joint.insert(
                SparseKey {
                    adv: (i / db_dim) as u64,
                    db,
                },
                *a,
            );
        }
        Ok(Self {
            config: cfg,
            q_cap,
            queries: 0,
            adversary: dense.adversary().clone(),
            active_basis: Basis::Computational,
            joint,
            factors: BTreeMap::new(),
        })
    }

    /// Dense state of the same vector (cells re-expressed in the
    /// computational basis when needed).
    pub fn decode(&self) -> Result<OracleState> {
        self.decode_with_cap(DEFAULT_DIM_CAP)
    }

    pub fn decode_with_cap(&self, cap: usize) -> Result<OracleState> {
        let cfg = self.config;
        let db = cfg.database_layout(cap)?;
        let layout = self.adversary.concat(&db)?;
        if layout.dim() > cap {
            return Err(Error::CapExceeded { cap });
        }
        let canon = self.canonical();
        let mut amps = vec![ZERO; layout.dim()];
        for (k, a) in &canon.joint {
            let mut d = 0usize;
            for x in 0..cfg.domain {
                d = d * cfg.cell_dim() + k.cell(x).map_or(cfg.bot(), |c| c as usize);
            }
            amps[k.adv as usize * db.dim() + d] += a;
        }
        OracleState::from_state(cfg, self.adversary.clone(), StateVector::new(layout, amps)?)
    }

    /// All factors absorbed, cells in the computational basis.
    pub fn canonical(&self) -> SparseState {
        let mut s = self.clone();
        s.ensure_computational();
        let xs: Vec<u64> = s.factors.keys().copied().collect();
        for x in xs {
            s.absorb(x);
        }
        s
    }

    /// Canonical entries in the currently active basis, sorted by key.
    pub fn entries(&self) -> Vec<SparseEntry> {
        let mut s = self.canonical();
        if self.active_basis == Basis::Hadamard {
            s.switch_joint();
        }
        s.joint
            .iter()
            .map(|(k, a)| SparseEntry {
                adversary: self.adversary.digits(k.adv as usize),
                database: k.db.clone(),
                re: a.re,
                im: a.im,
            })
            .collect()
    }

    /// Largest number of non-`⊥` cells over the canonical support.
    pub fn max_key_len(&self) -> usize {
        self.canonical()
            .joint
            .keys()
            .map(|k| k.db.len())
            .max()
            .unwrap_or(0)
    }

    pub fn norm_sqr(&self) -> f64 {
        let j: f64 = self.joint.values().map(|a| a.norm_sqr()).sum();
        self.factors
            .values()
            .fold(j, |acc, f| acc * f.norm_sqr(self.config.n))
    }

    /// Re-expresses every cell in the other basis by the `n`-bit
    /// Walsh-Hadamard (identity on `⊥`). The represented state does not
    /// change; only the labels of the stored cells do.
    pub fn basis_switch(&mut self) {
        let xs: Vec<u64> = self.factors.keys().copied().collect();
        for x in xs {
            self.absorb(x);
        }
        self.switch_joint();
        self.active_basis = match self.active_basis {
            Basis::Computational => Basis::Hadamard,
            Basis::Hadamard => Basis::Computational,
        };
    }

    fn switch_joint(&mut self) {
        let h = walsh_hadamard(self.config.n);
        let d = self.config.y_dim();
        let mut current = core::mem::take(&mut self.joint);
        let xs: BTreeSet<u64> = current
            .keys()
            .flat_map(|k| k.db.iter().map(|e| e.0))
            .collect();
        for x in xs {
            let mut next: BTreeMap<SparseKey, C64> = BTreeMap::new();
            for (k, a) in current {
                match k.cell(x) {
                    None => *next.entry(k).or_insert(ZERO) += a,
                    Some(c) => {
                        for c2 in 0..d {
                            *next.entry(k.with(x, Some(c2 as u32))).or_insert(ZERO) +=
                                h[(c2, c as usize)] * a;
                        }
                    }
                }
            }
            next.retain(|_, a| a.norm() > PRUNE);
            current = next;
        }
        self.joint = current;
    }

    fn ensure_computational(&mut self) {
        if self.active_basis == Basis::Hadamard {
            self.basis_switch();
        }
    }

    fn computational(&self) -> alloc::borrow::Cow<'_, SparseState> {
        if self.active_basis == Basis::Hadamard {
            let mut s = self.clone();
            s.basis_switch();
            alloc::borrow::Cow::Owned(s)
        } else {
            alloc::borrow::Cow::Borrowed(self)
        }
    }

    /// Moves factor `x` into the joint map.
    fn absorb(&mut self, x: u64) {
        let Some(f) = self.factors.remove(&x) else {
            return;
        };
        let exp = f.expand(self.config.n);
        let mut next = BTreeMap::new();
        for (k, a) in &self.joint {
            for (c, b) in &exp {
                let v = a * b;
                if v.norm() > PRUNE {
                    *next.entry(k.with(x, *c)).or_insert(ZERO) += v;
                }
            }
        }
        self.joint = next;
    }

    fn joint_touches(&self, x: u64) -> bool {
        self.joint.keys().any(|k| k.cell(x).is_some())
    }

    fn charge_query(&mut self) -> Result<()> {
        if self.queries >= self.q_cap {
            return Err(Error::QueryBudgetExhausted { cap: self.q_cap });
        }
        self.queries += 1;
        Ok(())
    }

    fn normalize_joint(&mut self) -> f64 {
        self.joint.retain(|_, a| a.norm() > PRUNE);
        let p: f64 = self.joint.values().map(|a| a.norm_sqr()).sum();
        if p > 0.0 {
            let s = 1.0 / libm::sqrt(p);
            for a in self.joint.values_mut() {
                *a *= s;
            }
        }
        p
    }

    /// Per-context local vectors of register `x`: `(⊥ amplitude, cells)`.
    fn contexts(&self, x: u64) -> BTreeMap<SparseKey, (C64, BTreeMap<u32, C64>)> {
        let mut out: BTreeMap<SparseKey, (C64, BTreeMap<u32, C64>)> = BTreeMap::new();
        for (k, a) in &self.joint {
            let e = out.entry(k.without(x)).or_insert((ZERO, BTreeMap::new()));
            match k.cell(x) {
                None => e.0 += a,
                Some(c) => *e.1.entry(c).or_insert(ZERO) += a,
            }
        }
        out
    }

    fn joint_query_distribution(&self, x: u64) -> QueryDistribution {
        let n = self.config.n;
        let c = amp(n);
        let mut generic = 0.0;
        let mut adjust: BTreeMap<u64, f64> = BTreeMap::new();
        adjust.insert(0, 0.0);
        for (bot, cells) in self.contexts(x).values() {
            let s = cells.values().sum::<C64>() * c;
            let g = (bot - s) * c;
            generic += g.norm_sqr();
            for (&y, v) in cells {
                *adjust.entry(y as u64).or_insert(0.0) += (v + g).norm_sqr() - g.norm_sqr();
            }
            *adjust.entry(0).or_insert(0.0) += s.norm_sqr();
        }
        let explicit: BTreeMap<u64, f64> = adjust.iter().map(|(&h, &p)| (h, p + generic)).collect();
        QueryDistribution {
            explicit,
            generic,
            generic_count: (1u64 << n) - adjust.len() as u64,
        }
    }

    fn joint_query_collapse(&mut self, x: u64, h: u64) -> f64 {
        let n = self.config.n;
        let c = amp(n);
        let mut next: BTreeMap<SparseKey, C64> = BTreeMap::new();
        for (ctx, (bot, cells)) in self.contexts(x) {
            let s = cells.values().sum::<C64>() * c;
            let g = (bot - s) * c;
            let a = cells.get(&(h as u32)).copied().unwrap_or(ZERO) + g;
            let beta = if h == 0 { s } else { ZERO };
            // F(a|h⟩ + β|⊥⟩) = a|h⟩ + c·a|⊥⟩ + c(β − c·a)·Σ_y |y⟩.
            let spread = (beta - a * c) * c;
            let mut add = |cell: Option<u32>, v: C64| {
                if v.norm() > PRUNE {
                    *next.entry(ctx.with(x, cell)).or_insert(ZERO) += v;
                }
            };
            add(None, a * c);
            if spread.norm() > PRUNE {
                for y in 0..1u64 << n {
                    add(Some(y as u32), spread + if y == h { a } else { ZERO });
                }
            } else {
                add(Some(h as u32), a);
            }
        }
        self.joint = next;
        self.normalize_joint()
    }

    fn query_distribution(&self, x: u64) -> Result<QueryDistribution> {
        self.config.check_x(x)?;
        let s = self.computational();
        if let Some(f) = s.factors.get(&x) {
            return Ok(f.query_distribution(s.config.n));
        }
        if s.joint_touches(x) {
            return Ok(s.joint_query_distribution(x));
        }
        Ok(CellVector::bottom().query_distribution(s.config.n))
    }

    fn query_collapse(&mut self, x: u64, h: u64) -> Result<f64> {
        self.config.check_x(x)?;
        if h >> self.config.n != 0 {
            return Err(Error::CodomainOutOfRange {
                t: h,
                size: 1 << self.config.n,
            });
        }
        self.ensure_computational();
        self.charge_query()?;
        if !self.factors.contains_key(&x) && !self.joint_touches(x) {
            self.factors.insert(x, CellVector::bottom());
        }
        let n = self.config.n;
        match self.factors.get_mut(&x) {
            Some(f) => Ok(f.query_collapse(n, h)),
            None => Ok(self.joint_query_collapse(x, h)),
        }
    }

    fn digit(&self, adv: u64, pos: usize, strides: &[usize]) -> usize {
        (adv as usize / strides[pos]) % self.adversary.registers()[pos].dim
    }

    /// Per-component outcome statistics of `{Σ^x}`.
    fn extraction_components(
        &self,
        rel: &dyn RelationView,
    ) -> (BTreeMap<ExtractionOutcome, f64>, Vec<(u64, f64)>) {
        let mut joint = BTreeMap::new();
        for (k, a) in &self.joint {
            *joint.entry(key_outcome(k, rel)).or_insert(0.0) += a.norm_sqr();
        }
        let factors = self
            .factors
            .iter()
            .map(|(&x, f)| (x, f.satisfying_mass(self.config.n, &rel.satisfying(x))))
            .collect();
        (joint, factors)
    }
}

fn key_outcome(k: &SparseKey, rel: &dyn RelationView) -> ExtractionOutcome {
    k.db.iter()
        .find(|&&(x, c)| rel.contains(x, c as u64))
        .map_or(ExtractionOutcome::Empty, |&(x, _)| {
            ExtractionOutcome::Found(x)
        })
}

fn check_rel(config: OracleConfig, rel: &dyn RelationView) -> Result<()> {
    if rel.n() != config.n || rel.domain() != config.domain {
        return Err(Error::InvalidSpec(
            "relation does not match the oracle configuration".into(),
        ));
    }
    Ok(())
}

impl OracleBackend for SparseState {
    fn initial(config: OracleConfig, adversary: RegisterLayout, q_cap: usize) -> Result<Self> {
        Ok(SparseState::new(config, adversary, q_cap))
    }

    fn config(&self) -> OracleConfig {
        self.config
    }

    fn adversary_layout(&self) -> &RegisterLayout {
        &self.adversary
    }

    fn apply_adversary(&mut self, op: &Matrix, positions: &[usize]) -> Result<()> {
        if positions.iter().any(|&p| p >= self.adversary.len()) {
            return Err(Error::MalformedCircuit(
                "operator targets a missing register".into(),
            ));
        }
        let sub = self.adversary.sub_layout(positions);
        if op.nrows() != sub.dim() || op.ncols() != sub.dim() {
            return Err(Error::DimensionMismatch {
                expected: sub.dim(),
                found: op.nrows(),
            });
        }
        let strides = self.adversary.strides();
        let mut groups: BTreeMap<SparseKey, Vec<C64>> = BTreeMap::new();
        for (k, a) in core::mem::take(&mut self.joint) {
            let digits: Vec<usize> = positions
                .iter()
                .map(|&p| self.digit(k.adv, p, &strides))
                .collect();
            let base = k.adv as usize
                - positions
                    .iter()
                    .zip(&digits)
                    .map(|(&p, &d)| d * strides[p])
                    .sum::<usize>();
            let ctx = SparseKey {
                adv: base as u64,
                db: k.db,
            };
            groups.entry(ctx).or_insert_with(|| vec![ZERO; sub.dim()])[sub.index_of(&digits)] += a;
        }
        for (ctx, v) in groups {
            for r in 0..sub.dim() {
                let mut acc = ZERO;
                for (c, x) in v.iter().enumerate() {
                    acc += op[(r, c)] * x;
                }
                if acc.norm() > PRUNE {
                    let digits = sub.digits(r);
                    let adv = ctx.adv as usize
                        + positions
                            .iter()
                            .zip(&digits)
                            .map(|(&p, &d)| d * strides[p])
                            .sum::<usize>();
                    self.joint.insert(
                        SparseKey {
                            adv: adv as u64,
                            db: ctx.db.clone(),
                        },
                        acc,
                    );
                }
            }
        }
        Ok(())
    }

    fn quantum_query(&mut self, x_pos: usize, y_pos: usize) -> Result<()> {
        let cfg = self.config;
        {
            let regs = self.adversary.registers();
            if x_pos >= regs.len() || y_pos >= regs.len() || x_pos == y_pos {
                return Err(Error::MalformedCircuit(
                    "query registers are missing or coincide".into(),
                ));
            }
            if regs[x_pos].dim as u64 > cfg.domain || regs[y_pos].dim != cfg.y_dim() {
                return Err(Error::MalformedCircuit(
                    "query register dimensions do not match the oracle".into(),
                ));
            }
        }
        self.ensure_computational();
        self.charge_query()?;
        let strides = self.adversary.strides();
        let xs: BTreeSet<u64> = self
            .joint
            .keys()
            .map(|k| self.digit(k.adv, x_pos, &strides) as u64)
            .collect();
        for &x in &xs {
            self.absorb(x);
        }
        let d = cfg.y_dim();
        let cd = cfg.cell_dim();
        let mut by_x: BTreeMap<u64, BTreeMap<SparseKey, Vec<C64>>> = BTreeMap::new();
        for (k, a) in core::mem::take(&mut self.joint) {
            let x = self.digit(k.adv, x_pos, &strides) as u64;
            let y = self.digit(k.adv, y_pos, &strides);
            let cell = k.cell(x).map_or(cfg.bot(), |c| c as usize);
            let ctx = SparseKey {
                adv: (k.adv as usize - y * strides[y_pos]) as u64,
                db: k.without(x).db,
            };
            by_x.entry(x)
                .or_default()
                .entry(ctx)
                .or_insert_with(|| vec![ZERO; d * cd])[y * cd + cell] += a;
        }
        for (x, groups) in by_x {
            for (ctx, mut local) in groups {
                for row in local.chunks_mut(cd) {
                    apply_f_cell(row);
                }
                let mut swapped = vec![ZERO; d * cd];
                for y in 0..d {
                    for c in 0..cd {
                        let out = if c == cfg.bot() { y } else { y ^ c };
                        swapped[out * cd + c] = local[y * cd + c];
                    }
                }
                for row in swapped.chunks_mut(cd) {
                    apply_f_cell(row);
                }
                for y in 0..d {
                    for c in 0..cd {
                        let v = swapped[y * cd + c];
                        if v.norm() > PRUNE {
                            let cell = if c == cfg.bot() { None } else { Some(c as u32) };
                            let adv = ctx.adv + (y * strides[y_pos]) as u64;
                            let key = SparseKey {
                                adv,
                                db: ctx.db.clone(),
                            }
                            .with(x, cell);
                            *self.joint.entry(key).or_insert(ZERO) += v;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn measure_distribution(&self, positions: &[usize]) -> Result<Vec<(Vec<usize>, f64)>> {
        let strides = self.adversary.strides();
        let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (k, a) in &self.joint {
            let v: Vec<usize> = positions
                .iter()
                .map(|&p| self.digit(k.adv, p, &strides))
                .collect();
            *acc.entry(v).or_insert(0.0) += a.norm_sqr();
        }
        Ok(nonzero(acc))
    }

    fn measure_collapse(&mut self, positions: &[usize], values: &[usize]) -> Result<f64> {
        let strides = self.adversary.strides();
        let joint = core::mem::take(&mut self.joint);
        self.joint = joint
            .into_iter()
            .filter(|(k, _)| {
                positions
                    .iter()
                    .zip(values)
                    .all(|(&p, &v)| self.digit(k.adv, p, &strides) == v)
            })
            .collect();
        Ok(self.normalize_joint())
    }

    fn ro_distribution(&self, x: u64) -> Result<Vec<(u64, f64)>> {
        Ok(self.query_distribution(x)?.to_vec(self.config.n))
    }

    fn ro_collapse(&mut self, x: u64, h: u64) -> Result<f64> {
        self.query_collapse(x, h)
    }

    fn ro_sample(&mut self, x: u64, rng: &mut SimRng) -> Result<u64> {
        let h = self.query_distribution(x)?.sample(self.config.n, rng);
        self.query_collapse(x, h)?;
        Ok(h)
    }

    fn extract_distribution(
        &self,
        rel: &dyn RelationView,
    ) -> Result<Vec<(ExtractionOutcome, f64)>> {
        check_rel(self.config, rel)?;
        let s = self.computational();
        let (joint, factors) = s.extraction_components(rel);
        let joint_above = |x: u64| -> f64 {
            joint
                .iter()
                .filter(|(o, _)| o.rank() > x)
                .map(|(_, p)| p)
                .sum()
        };
        let factors_miss_below = |x: u64| -> f64 {
            factors
                .iter()
                .filter(|f| f.0 < x)
                .map(|f| 1.0 - f.1)
                .product()
        };
        let mut out: BTreeMap<ExtractionOutcome, f64> = BTreeMap::new();
        for (&o, &p) in &joint {
            if let ExtractionOutcome::Found(x) = o {
                out.insert(o, p * factors_miss_below(x));
            }
        }
        for &(x, q) in &factors {
            out.insert(
                ExtractionOutcome::Found(x),
                q * factors_miss_below(x) * joint_above(x),
            );
        }
        let empty = joint.get(&ExtractionOutcome::Empty).copied().unwrap_or(0.0)
            * factors_miss_below(u64::MAX);
        out.insert(ExtractionOutcome::Empty, empty);
        Ok(nonzero(out))
    }

    fn extract_collapse(
        &mut self,
        rel: &dyn RelationView,
        outcome: ExtractionOutcome,
    ) -> Result<f64> {
        check_rel(self.config, rel)?;
        self.ensure_computational();
        let n = self.config.n;
        let rank = outcome.rank();
        let in_factor = outcome
            .found()
            .is_some_and(|x| self.factors.contains_key(&x));
        let joint = core::mem::take(&mut self.joint);
        self.joint = joint
            .into_iter()
            .filter(|(k, _)| {
                let o = key_outcome(k, rel);
                if in_factor {
                    o.rank() > rank
                } else {
                    o == outcome
                }
            })
            .collect();
        let mut p = self.normalize_joint();
        for (&x, f) in self.factors.iter_mut() {
            if x < rank {
                p *= f.project(n, &rel.satisfying(x), false);
            } else if x == rank {
                p *= f.project(n, &rel.satisfying(x), true);
            }
        }
        Ok(p)
    }

    fn inner(&self, other: &Self) -> Result<C64> {
        if self.adversary != other.adversary || self.config != other.config {
            return Err(Error::LayoutMismatch);
        }
        let mut a = self.computational().into_owned();
        let mut b = other.computational().into_owned();
        let only_a: Vec<u64> = a
            .factors
            .keys()
            .filter(|x| !b.factors.contains_key(x))
            .copied()
            .collect();
        let only_b: Vec<u64> = b
            .factors
            .keys()
            .filter(|x| !a.factors.contains_key(x))
            .copied()
            .collect();
        for x in only_a {
            a.absorb(x);
        }
        for x in only_b {
            b.absorb(x);
        }
        let mut ip: C64 = a
            .joint
            .iter()
            .filter_map(|(k, va)| b.joint.get(k).map(|vb| va.conj() * vb))
            .sum();
        for (x, fa) in &a.factors {
            ip *= fa.inner(a.config.n, &b.factors[x]);
        }
        Ok(ip)
    }

    fn collision_mass(&self, f: &CommitFunction) -> Result<f64> {
        let canon = self.canonical();
        Ok(canon
            .joint
            .iter()
            .filter(|(k, _)| {
                let mut seen = BTreeSet::new();
                k.db.iter().any(|&(x, c)| !seen.insert(f.eval(x, c as u64)))
            })
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    fn to_dense(&self) -> Result<OracleState> {
        self.decode()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_unitary, TOLERANCE};
    use crate::oracle::build_f;
    use crate::relation::Relation;

    fn cfg(n: u32, m: u64) -> OracleConfig {
        OracleConfig::new(n, m).unwrap()
    }

    fn dist_close(a: &[(u64, f64)], b: &[(u64, f64)]) -> bool {
        let ma: BTreeMap<u64, f64> = a.iter().copied().collect();
        let mb: BTreeMap<u64, f64> = b.iter().copied().collect();
        crate::coins::total_variation(&ma, &mb) < TOLERANCE
    }

    fn dense_close(a: &OracleState, b: &OracleState) -> bool {
        a.state()
            .amplitudes()
            .iter()
            .zip(b.state().amplitudes())
            .all(|(x, y)| (x - y).norm() < TOLERANCE)
    }

    #[test]
    fn fresh_state_encodes_to_single_empty_key() {
        let s = SparseState::encode(&OracleState::fresh(cfg(1, 2)).unwrap(), 4).unwrap();
        assert_eq!(
            s.entries(),
            vec![SparseEntry {
                adversary: vec![],
                database: vec![],
                re: 1.0,
                im: 0.0
            }]
        );
    }

    #[test]
    fn f_of_h_encodes_to_its_components() {
        let c = cfg(1, 2);
        let mut dense = OracleState::fresh(c).unwrap();
        dense.classical_query_collapse(1, 0).unwrap();
        let s = SparseState::encode(&dense, 1).unwrap();
        let f = build_f(1).unwrap();
        let entries = s.entries();
        // F|0⟩ = (0.5, −0.5, 1/√2) over (|0⟩, |1⟩, |⊥⟩).
        assert_eq!(entries.len(), 3);
        for e in entries {
            let idx = e.database.first().map_or(2, |&(x, c)| {
                assert_eq!(x, 1);
                c as usize
            });
            assert!((e.re - f.matrix()[(idx, 0)].re).abs() < 1e-12);
        }
    }

    #[test]
    fn classical_queries_agree_with_dense() {
        let c = cfg(2, 3);
        let mut dense = OracleState::fresh(c).unwrap();
        let mut sparse = SparseState::fresh(c, 8);
        for (x, h) in [(1, 2), (0, 0), (1, 2), (2, 3), (0, 0)] {
            assert!(dist_close(
                &dense.ro_distribution(x).unwrap(),
                &sparse.ro_distribution(x).unwrap()
            ));
            let p1 = dense.ro_collapse(x, h).unwrap();
            let p2 = sparse.ro_collapse(x, h).unwrap();
            assert!((p1 - p2).abs() < TOLERANCE);
            assert!(dense_close(&dense, &sparse.decode().unwrap()));
        }
    }

    #[test]
    fn quantum_queries_agree_with_dense() {
        let c = cfg(1, 2);
        let adv = RegisterLayout::new([("X", 2), ("Y", 2), ("W", 2)]).unwrap();
        let mut dense = OracleState::with_adversary(c, adv.clone()).unwrap();
        let mut sparse = SparseState::new(c, adv, 4);
        let mut rng = SimRng::new(8);
        for _ in 0..3 {
            let u = random_unitary(8, &mut rng);
            dense.apply_adversary(&u, &[0, 1, 2]).unwrap();
            sparse.apply_adversary(&u, &[0, 1, 2]).unwrap();
            dense.quantum_query(0, 1).unwrap();
            sparse.quantum_query(0, 1).unwrap();
            assert!(dense_close(&dense, &sparse.decode().unwrap()));
        }
        assert!(sparse.max_key_len() <= 3);
        sparse.quantum_query(0, 1).unwrap();
        assert_eq!(
            sparse.quantum_query(0, 1),
            Err(Error::QueryBudgetExhausted { cap: 4 })
        );
    }

    #[test]
    fn mixed_factor_and_joint_queries_agree_with_dense() {
        let c = cfg(1, 2);
        let adv = RegisterLayout::new([("X", 2), ("Y", 2)]).unwrap();
        let mut dense = OracleState::with_adversary(c, adv.clone()).unwrap();
        let mut sparse = SparseState::new(c, adv, 8);
        dense.ro_collapse(1, 1).unwrap();
        sparse.ro_collapse(1, 1).unwrap();
        assert_eq!(sparse.factor_count(), 1);
        let h = walsh_hadamard(1);
        dense.apply_adversary(&h, &[0]).unwrap();
        sparse.apply_adversary(&h, &[0]).unwrap();
        dense.quantum_query(0, 1).unwrap();
        sparse.quantum_query(0, 1).unwrap();
        assert_eq!(sparse.factor_count(), 0);
        assert!(dense_close(&dense, &sparse.decode().unwrap()));
        for x in 0..2 {
            assert!(dist_close(
                &dense.ro_distribution(x).unwrap(),
                &sparse.ro_distribution(x).unwrap()
            ));
        }
        dense.ro_collapse(0, 1).unwrap();
        sparse.ro_collapse(0, 1).unwrap();
        assert!(dense_close(&dense, &sparse.decode().unwrap()));
    }

    #[test]
    fn extraction_agrees_with_dense_across_components() {
        let c = cfg(2, 3);
        let mut dense = OracleState::fresh(c).unwrap();
        let mut sparse = SparseState::fresh(c, 8);
        for (x, h) in [(2, 1), (0, 3)] {
            dense.ro_collapse(x, h).unwrap();
            sparse.ro_collapse(x, h).unwrap();
        }
        let mut rng = SimRng::new(1);
        for _ in 0..20 {
            let rel = Relation::random(2, 3, 0.4, &mut rng).unwrap();
            let a = dense.extract_distribution(&rel).unwrap();
            let b = sparse.extract_distribution(&rel).unwrap();
            let ma: BTreeMap<_, _> = a.into_iter().collect();
            let mb: BTreeMap<_, _> = b.into_iter().collect();
            assert!(crate::coins::total_variation(&ma, &mb) < TOLERANCE);
            for &o in ma.keys() {
                let mut d2 = dense.clone();
                let mut s2 = sparse.clone();
                let p1 = d2.extract_collapse(&rel, o).unwrap();
                let p2 = s2.extract_collapse(&rel, o).unwrap();
                assert!((p1 - p2).abs() < TOLERANCE);
                assert!(dense_close(&d2, &s2.decode().unwrap()));
            }
        }
    }

    #[test]
    fn inner_product_is_preserved() {
        let c = cfg(1, 2);
        let mut a = OracleState::fresh(c).unwrap();
        let mut b = OracleState::fresh(c).unwrap();
        a.ro_collapse(0, 1).unwrap();
        b.ro_collapse(0, 0).unwrap();
        b.ro_collapse(1, 1).unwrap();
        let mut sa = SparseState::fresh(c, 4);
        let mut sb = SparseState::fresh(c, 4);
        sa.ro_collapse(0, 1).unwrap();
        sb.ro_collapse(0, 0).unwrap();
        sb.ro_collapse(1, 1).unwrap();
        let dense_ip = a.inner(&b).unwrap();
        assert!((sa.inner(&sb).unwrap() - dense_ip).norm() < TOLERANCE);
        let ea = SparseState::encode(&a, 4).unwrap();
        let eb = SparseState::encode(&b, 4).unwrap();
        assert!((ea.inner(&eb).unwrap() - dense_ip).norm() < TOLERANCE);
    }

    #[test]
    fn basis_switch_is_an_involution_and_preserves_the_state() {
        let c = cfg(2, 2);
        let mut s = SparseState::fresh(c, 4);
        s.ro_collapse(0, 3).unwrap();
        s.ro_collapse(1, 1).unwrap();
        let before = s.entries();
        let dense = s.decode().unwrap();
        s.basis_switch();
        assert_eq!(s.active_basis(), Basis::Hadamard);
        assert!(dense_close(&dense, &s.decode().unwrap()));
        let rel = Relation::full(2, 2).unwrap();
        let d1: BTreeMap<_, _> = dense
            .extract_distribution(&rel)
            .unwrap()
            .into_iter()
            .collect();
        let d2: BTreeMap<_, _> = s.extract_distribution(&rel).unwrap().into_iter().collect();
        assert!(crate::coins::total_variation(&d1, &d2) < TOLERANCE);
        s.basis_switch();
        let after = s.entries();
        assert_eq!(before.len(), after.len());
        for (x, y) in before.iter().zip(&after) {
            assert_eq!(x.database, y.database);
            assert!((x.re - y.re).abs() < TOLERANCE && (x.im - y.im).abs() < TOLERANCE);
        }
        let mut empty = SparseState::fresh(c, 4);
        empty.basis_switch();
        assert_eq!(empty.entries(), SparseState::fresh(c, 4).entries());
    }

    #[test]
    fn encode_rejects_support_beyond_cap() {
        let mut dense = OracleState::fresh(cfg(1, 2)).unwrap();
        dense.ro_collapse(0, 0).unwrap();
        dense.ro_collapse(1, 0).unwrap();
        assert_eq!(
            SparseState::encode(&dense, 1).err(),
            Some(Error::SupportExceedsCap { cap: 1 })
        );
    }

    #[test]
    fn large_domain_classical_round_trip() {
        let c = cfg(16, 1 << 20);
        let mut s = SparseState::fresh(c, 4);
        let mut rng = SimRng::new(3);
        let h = s.ro_sample(123_456, &mut rng).unwrap();
        let f = CommitFunction::identity(16, 1 << 20).unwrap();
        let dist = s.extract_distribution(&f.relation_for(h)).unwrap();
        let found: f64 = dist
            .iter()
            .filter(|d| d.0 == ExtractionOutcome::Found(123_456))
            .map(|d| d.1)
            .sum();
        assert!((found - (1.0 - 1.0 / 65536.0f64).powi(2)).abs() < TOLERANCE);
    }
}
