//! Relations `R ⊆ X × {0,1}^n` and commit functions `f: X × {0,1}^n → T`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Read access to a relation. Implemented both by explicit tables and by
/// the on-demand relations `R_t = {(x, y) : f(x, y) = t}`.
pub trait RelationView {
    fn n(&self) -> u32;
    fn domain(&self) -> u64;
    fn contains(&self, x: u64, y: u64) -> bool;
    /// Every `y` with `(x, y) ∈ R`, ascending.
    fn satisfying(&self, x: u64) -> Vec<u64>;
}

/// An explicit relation, stored row by row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    n: u32,
    domain: u64,
    rows: Vec<Vec<u64>>,
    gamma: usize,
}

impl Relation {
    fn check(n: u32, domain: u64) -> Result<()> {
        if n == 0 || n > 30 {
            return Err(Error::InvalidBitLength(n));
        }
        if domain == 0 {
            return Err(Error::EmptyDomain);
        }
        Ok(())
    }

    pub fn from_pairs(
        n: u32,
        domain: u64,
        pairs: impl IntoIterator<Item = (u64, u64)>,
    ) -> Result<Self> {
        Self::check(n, domain)?;
        let mut rows = alloc::vec![Vec::new(); domain as usize];
        for (x, y) in pairs {
            if x >= domain {
                return Err(Error::DomainOutOfRange { x, domain });
            }
            if y >> n != 0 {
                return Err(Error::CodomainOutOfRange { t: y, size: 1 << n });
            }
            rows[x as usize].push(y);
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        let gamma = rows.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            n,
            domain,
            rows,
            gamma,
        })
    }

    pub fn from_predicate(n: u32, domain: u64, pred: impl Fn(u64, u64) -> bool) -> Result<Self> {
        Self::check(n, domain)?;
        let pairs = (0..domain)
            .flat_map(|x| (0..1u64 << n).map(move |y| (x, y)))
            .filter(|&(x, y)| pred(x, y));
        Self::from_pairs(n, domain, pairs.collect::<Vec<_>>())
    }

    /// Relation whose pair `(x, y)` is present iff bit `x·2^n + y` of
    /// `mask` is set. Used for exhaustive sweeps over all relations.
    pub fn from_mask(n: u32, domain: u64, mask: u64) -> Result<Self> {
        Self::from_predicate(n, domain, |x, y| (mask >> (x * (1 << n) + y)) & 1 == 1)
    }

    pub fn empty(n: u32, domain: u64) -> Result<Self> {
        Self::from_pairs(n, domain, [])
    }

    pub fn full(n: u32, domain: u64) -> Result<Self> {
        Self::from_predicate(n, domain, |_, _| true)
    }

    /// `X × {0^n}`.
    pub fn zero_preimage(n: u32, domain: u64) -> Result<Self> {
        Self::from_predicate(n, domain, |_, y| y == 0)
    }

    /// Each pair included independently with probability `density`.
    pub fn random(n: u32, domain: u64, density: f64, rng: &mut SimRng) -> Result<Self> {
        Self::check(n, domain)?;
        let mut pairs = Vec::new();
        for x in 0..domain {
            for y in 0..1u64 << n {
                if rng.unit() < density {
                    pairs.push((x, y));
                }
            }
        }
        Self::from_pairs(n, domain, pairs)
    }

    /// Cached `Γ_R = max_x |{y : (x, y) ∈ R}|`.
    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn gamma_x(&self, x: u64) -> usize {
        self.rows[x as usize].len()
    }

    /// Recomputes `Γ_R` from the rows, independently of the cache.
    pub fn recompute_gamma(&self) -> usize {
        (0..self.domain)
            .map(|x| (0..1u64 << self.n).filter(|&y| self.contains(x, y)).count())
            .max()
            .unwrap_or(0)
    }

    pub fn pairs(&self) -> Vec<(u64, u64)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(x, r)| r.iter().map(move |&y| (x as u64, y)))
            .collect()
    }

    pub fn is_subset_of(&self, other: &Relation) -> bool {
        self.pairs().iter().all(|&(x, y)| other.contains(x, y))
    }
}

impl RelationView for Relation {
    fn n(&self) -> u32 {
        self.n
    }
    fn domain(&self) -> u64 {
        self.domain
    }
    fn contains(&self, x: u64, y: u64) -> bool {
        self.rows
            .get(x as usize)
            .is_some_and(|r| r.binary_search(&y).is_ok())
    }
    fn satisfying(&self, x: u64) -> Vec<u64> {
        self.rows.get(x as usize).cloned().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommitKind {
    /// `f(x, y) = y`, with `T = {0,1}^n`.
    Identity,
    /// Row-major table: entry `x·2^n + y` holds `f(x, y)`.
    Table(Vec<u64>),
}

/// A commit function together with its binding parameters `Γ(f)` and
/// `Γ'(f)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitFunction {
    pub name: String,
    n: u32,
    domain: u64,
    codomain: u64,
    kind: CommitKind,
    gamma: u64,
    gamma_prime: u64,
}

impl CommitFunction {
    /// `f(x, y) = y`. `Γ = 1`, and `Γ' = 1` as soon as the domain has two
    /// points. Works for any domain size without enumerating it.
    pub fn identity(n: u32, domain: u64) -> Result<Self> {
        Relation::check(n, domain)?;
        Ok(Self {
            name: "identity".into(),
            n,
            domain,
            codomain: 1 << n,
            kind: CommitKind::Identity,
            gamma: 1,
            gamma_prime: u64::from(domain >= 2),
        })
    }

    pub fn from_table(
        name: impl Into<String>,
        n: u32,
        domain: u64,
        codomain: u64,
        table: Vec<u64>,
    ) -> Result<Self> {
        Relation::check(n, domain)?;
        let expected = (domain as usize)
            .checked_mul(1 << n)
            .ok_or(Error::SearchTooLarge)?;
        if table.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: table.len(),
            });
        }
        if let Some(&t) = table.iter().find(|&&t| t >= codomain) {
            return Err(Error::CodomainOutOfRange { t, size: codomain });
        }
        let mut f = Self {
            name: name.into(),
            n,
            domain,
            codomain,
            kind: CommitKind::Table(table),
            gamma: 0,
            gamma_prime: 0,
        };
        f.gamma = gamma_of_f(&f)?;
        f.gamma_prime = gamma_prime_of_f(&f)?;
        Ok(f)
    }

    /// Constant `f ≡ 0` with `T = {0, 1}`.
    pub fn constant(n: u32, domain: u64) -> Result<Self> {
        Self::from_table(
            "constant",
            n,
            domain,
            2,
            alloc::vec![0; (domain as usize) << n],
        )
    }

    /// A table that is injective on all of `X × {0,1}^n`, with
    /// `|T| = M·2^n`; a stand-in for a toy encryption table.
    pub fn toy_encryption(n: u32, domain: u64, seed: u64) -> Result<Self> {
        let size = (domain as usize) << n;
        let mut perm: Vec<u64> = (0..size as u64).collect();
        let mut rng = SimRng::new(seed);
        for i in (1..size).rev() {
            perm.swap(i, rng.below(i as u64 + 1) as usize);
        }
        Self::from_table("toy-encryption", n, domain, size as u64, perm)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    pub fn codomain(&self) -> u64 {
        self.codomain
    }

    pub fn kind(&self) -> &CommitKind {
        &self.kind
    }

    pub fn gamma(&self) -> u64 {
        self.gamma
    }

    pub fn gamma_prime(&self) -> u64 {
        self.gamma_prime
    }

    pub fn eval(&self, x: u64, y: u64) -> u64 {
        match &self.kind {
            CommitKind::Identity => y,
            CommitKind::Table(t) => t[((x as usize) << self.n) + y as usize],
        }
    }

    /// `{y : f(x, y) = t}`, ascending.
    pub fn preimages(&self, x: u64, t: u64) -> Vec<u64> {
        match &self.kind {
            CommitKind::Identity => {
                if t >> self.n == 0 {
                    alloc::vec![t]
                } else {
                    Vec::new()
                }
            }
            CommitKind::Table(_) => (0..1u64 << self.n)
                .filter(|&y| self.eval(x, y) == t)
                .collect(),
        }
    }

    pub fn check_t(&self, t: u64) -> Result<()> {
        if t >= self.codomain {
            return Err(Error::CodomainOutOfRange {
                t,
                size: self.codomain,
            });
        }
        Ok(())
    }

    /// `R_t = {(x, y) : f(x, y) = t}`.
    pub fn relation_for(&self, t: u64) -> CommitRelation<'_> {
        CommitRelation { f: self, t }
    }

    /// `R_t` materialized as an explicit table (small domains only).
    pub fn explicit_relation(&self, t: u64) -> Result<Relation> {
        Relation::from_predicate(self.n, self.domain, |x, y| self.eval(x, y) == t)
    }
}

/// Largest search `brute_force` functions accept.
const BRUTE_FORCE_LIMIT: u64 = 1 << 24;

fn table_size(f: &CommitFunction) -> Result<u64> {
    f.domain
        .checked_mul(1 << f.n)
        .filter(|&s| s <= BRUTE_FORCE_LIMIT)
        .ok_or(Error::SearchTooLarge)
}

/// Per-`x` counts `|{y : f(x, y) = t}|`, keyed by `t`.
fn counts_by_t(f: &CommitFunction) -> Result<BTreeMap<u64, BTreeMap<u64, u64>>> {
    table_size(f)?;
    let mut counts: BTreeMap<u64, BTreeMap<u64, u64>> = BTreeMap::new();
    for x in 0..f.domain {
        for y in 0..1u64 << f.n {
            *counts
                .entry(f.eval(x, y))
                .or_default()
                .entry(x)
                .or_default() += 1;
        }
    }
    Ok(counts)
}

/// `Γ(f) = max_{x,t} |{y : f(x, y) = t}|` by exhaustive enumeration.
pub fn gamma_of_f(f: &CommitFunction) -> Result<u64> {
    Ok(counts_by_t(f)?
        .values()
        .flat_map(|m| m.values().copied())
        .max()
        .unwrap_or(0))
}

/// `Γ'(f) = max_{x≠x', y'} |{y : f(x, y) = f(x', y')}|` by exhaustive
/// enumeration: a value `t` counts for `x` only if some other `x'` hits it.
pub fn gamma_prime_of_f(f: &CommitFunction) -> Result<u64> {
    let counts = counts_by_t(f)?;
    Ok(counts
        .values()
        .filter(|per_x| per_x.len() >= 2)
        .flat_map(|per_x| per_x.values().copied())
        .max()
        .unwrap_or(0))
}

/// The relation `R_t` of a commit function, evaluated on demand.
#[derive(Clone, Copy, Debug)]
pub struct CommitRelation<'a> {
    pub f: &'a CommitFunction,
    pub t: u64,
}

impl RelationView for CommitRelation<'_> {
    fn n(&self) -> u32 {
        self.f.n
    }
    fn domain(&self) -> u64 {
        self.f.domain
    }
    fn contains(&self, x: u64, y: u64) -> bool {
        x < self.f.domain && self.f.eval(x, y) == self.t
    }
    fn satisfying(&self, x: u64) -> Vec<u64> {
        self.f.preimages(x, self.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_cache_matches_recomputation() {
        let mut rng = SimRng::new(4);
        for _ in 0..200 {
            let r = Relation::random(2, 3, 0.4, &mut rng).unwrap();
            assert_eq!(r.gamma(), r.recompute_gamma());
        }
    }

    #[test]
    fn named_relations() {
        assert_eq!(Relation::empty(2, 3).unwrap().gamma(), 0);
        assert_eq!(Relation::zero_preimage(2, 3).unwrap().gamma(), 1);
        assert_eq!(Relation::full(2, 3).unwrap().gamma(), 4);
        assert_eq!(
            Relation::from_mask(1, 2, 0b1011).unwrap().pairs(),
            alloc::vec![(0, 0), (0, 1), (1, 1)]
        );
    }

    #[test]
    fn out_of_range_pairs_are_rejected() {
        assert!(Relation::from_pairs(1, 2, [(2, 0)]).is_err());
        assert!(Relation::from_pairs(1, 2, [(0, 2)]).is_err());
    }

    #[test]
    fn gamma_values_of_bundled_functions() {
        let id = CommitFunction::identity(2, 3).unwrap();
        let table =
            CommitFunction::from_table("id", 2, 3, 4, (0..12).map(|i| i % 4).collect()).unwrap();
        assert_eq!((id.gamma(), id.gamma_prime()), (1, 1));
        assert_eq!(
            (
                gamma_of_f(&table).unwrap(),
                gamma_prime_of_f(&table).unwrap()
            ),
            (1, 1)
        );
        let enc = CommitFunction::toy_encryption(2, 3, 7).unwrap();
        assert_eq!((enc.gamma(), enc.gamma_prime()), (1, 0));
        let c = CommitFunction::constant(2, 3).unwrap();
        assert_eq!((c.gamma(), c.gamma_prime()), (4, 4));
    }

    #[test]
    fn identity_gamma_prime_needs_two_points() {
        assert_eq!(CommitFunction::identity(3, 1).unwrap().gamma_prime(), 0);
    }

    #[test]
    fn commit_relation_membership() {
        let f = CommitFunction::toy_encryption(2, 2, 1).unwrap();
        let t = f.eval(1, 3);
        let r = f.relation_for(t);
        assert!(r.contains(1, 3));
        assert_eq!(r.satisfying(1), alloc::vec![3]);
        assert!(r.satisfying(0).is_empty());
        assert_eq!(f.explicit_relation(t).unwrap().pairs(), alloc::vec![(1, 3)]);
    }
}
