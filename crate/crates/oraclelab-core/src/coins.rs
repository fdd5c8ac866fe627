//! Sources of measurement outcomes.
//!
//! A game is written once against [`Coins`]. Driven by [`SampledCoins`] it
//! is an ordinary seeded Monte-Carlo run; driven by [`enumerate`] it is
//! re-executed along every branch of its outcome tree, yielding the exact
//! output distribution.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Outcomes with probability at or below this are treated as impossible.
pub const PROBABILITY_FLOOR: f64 = 1e-14;

/// Game trees with more leaves than this are sampled instead.
pub const MAX_EXHAUSTIVE_LEAVES: usize = 1_000_000;
/// Number of Monte-Carlo runs used when a tree is too large.
pub const MONTE_CARLO_RUNS: usize = 100_000;

pub trait Coins {
    /// Picks an index with probability proportional to `weights`.
    fn choose(&mut self, weights: &[f64]) -> usize;

    /// True when outcomes are drawn at random rather than enumerated.
    fn is_sampling(&self) -> bool;

    /// Random generator for sampling-mode callers; `None` when enumerating.
    fn rng(&mut self) -> Option<&mut SimRng>;
}

pub struct SampledCoins {
    pub rng: SimRng,
}

impl SampledCoins {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SimRng::new(seed),
        }
    }
}

impl Coins for SampledCoins {
    fn choose(&mut self, weights: &[f64]) -> usize {
        self.rng.weighted_index(weights)
    }
    fn is_sampling(&self) -> bool {
        true
    }
    fn rng(&mut self) -> Option<&mut SimRng> {
        Some(&mut self.rng)
    }
}

/// Follows a recorded prefix of choices, then takes the first possible
/// option at every new decision; tracks the path probability.
pub struct PathCoins {
    prefix: Vec<usize>,
    /// Possible option indices at every decision of the current run.
    options: Vec<Vec<usize>>,
    /// Chosen position within `options[k]`.
    chosen: Vec<usize>,
    probability: f64,
}

impl PathCoins {
    fn new(prefix: Vec<usize>) -> Self {
        Self {
            prefix,
            options: Vec::new(),
            chosen: Vec::new(),
            probability: 1.0,
        }
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    /// Next prefix in depth-first order, or `None` when done.
    fn next_prefix(&self) -> Option<Vec<usize>> {
        for k in (0..self.options.len()).rev() {
            if self.chosen[k] + 1 < self.options[k].len() {
                let mut p = self.chosen[..k].to_vec();
                p.push(self.chosen[k] + 1);
                return Some(p);
            }
        }
        None
    }
}

impl Coins for PathCoins {
    fn choose(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let opts: Vec<usize> = (0..weights.len())
            .filter(|&i| weights[i] > PROBABILITY_FLOOR)
            .collect();
        let k = self.options.len();
        let pos = self
            .prefix
            .get(k)
            .copied()
            .unwrap_or(0)
            .min(opts.len().saturating_sub(1));
        let pick = opts.get(pos).copied().unwrap_or(0);
        self.probability *= if total > 0.0 {
            weights[pick] / total
        } else {
            0.0
        };
        self.options.push(opts);
        self.chosen.push(pos);
        pick
    }
    fn is_sampling(&self) -> bool {
        false
    }
    fn rng(&mut self) -> Option<&mut SimRng> {
        None
    }
}

/// Runs `game` along every branch of its outcome tree; returns the
/// (probability, result) pair of every leaf.
pub fn enumerate<T>(
    max_leaves: usize,
    mut game: impl FnMut(&mut PathCoins) -> Result<T>,
) -> Result<Vec<(f64, T)>> {
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    loop {
        let mut coins = PathCoins::new(prefix);
        let value = game(&mut coins)?;
        out.push((coins.probability, value));
        if out.len() > max_leaves {
            return Err(Error::TooManyLeaves(max_leaves));
        }
        match coins.next_prefix() {
            Some(p) => prefix = p,
            None => return Ok(out),
        }
    }
}

/// Distribution of a game's result, with the method used to obtain it.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution<T: Ord> {
    pub probabilities: BTreeMap<T, f64>,
    pub exact: bool,
    /// Number of runs (sampled) or leaves (exact).
    pub runs: usize,
}

impl<T: Ord + Clone> Distribution<T> {
    pub fn probability_of(&self, pred: impl Fn(&T) -> bool) -> f64 {
        self.probabilities
            .iter()
            .filter(|(k, _)| pred(k))
            .map(|(_, p)| p)
            .sum()
    }

    /// Standard error of an event frequency; zero when exact.
    pub fn standard_error(&self, p: f64) -> f64 {
        if self.exact {
            0.0
        } else {
            libm::sqrt(p * (1.0 - p) / self.runs as f64)
        }
    }
}

/// Total variation distance between two finite distributions.
pub fn total_variation<T: Ord>(a: &BTreeMap<T, f64>, b: &BTreeMap<T, f64>) -> f64 {
    let mut tv = 0.0;
    for (k, p) in a {
        tv += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, p) in b {
        if !a.contains_key(k) {
            tv += p.abs();
        }
    }
    0.5 * tv
}

/// Exact distribution when the tree has at most `max_leaves` leaves,
/// otherwise `runs` seeded Monte-Carlo runs (run `i` uses seed
/// `derive_seed(seed, i)`). With `runs = 0` an oversized tree is an error.
pub fn exhaustive_or_sampled<T: Ord + Clone>(
    max_leaves: usize,
    runs: usize,
    seed: u64,
    mut game: impl FnMut(&mut dyn Coins) -> Result<T>,
) -> Result<Distribution<T>> {
    match enumerate(max_leaves, |c| game(c)) {
        Ok(leaves) => {
            let count = leaves.len();
            let mut probabilities = BTreeMap::new();
            for (p, v) in leaves {
                *probabilities.entry(v).or_insert(0.0) += p;
            }
            Ok(Distribution {
                probabilities,
                exact: true,
                runs: count,
            })
        }
        Err(Error::TooManyLeaves(limit)) => {
            if runs == 0 {
                return Err(Error::TooManyLeaves(limit));
            }
            let mut probabilities = BTreeMap::new();
            for i in 0..runs {
                let mut coins = SampledCoins::new(crate::rng::derive_seed(seed, i as u64));
                let v = game(&mut coins)?;
                *probabilities.entry(v).or_insert(0.0) += 1.0 / runs as f64;
            }
            Ok(Distribution {
                probabilities,
                exact: false,
                runs,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_a_two_level_tree() {
        let leaves = enumerate(100, |c| {
            let a = c.choose(&[0.25, 0.75]);
            let b = if a == 0 {
                c.choose(&[0.5, 0.0, 0.5])
            } else {
                9
            };
            Ok((a, b))
        })
        .unwrap();
        let mut dist: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (p, v) in leaves {
            *dist.entry(v).or_default() += p;
        }
        let expected: BTreeMap<_, _> = [((0, 0), 0.125), ((0, 2), 0.125), ((1, 9), 0.75)]
            .into_iter()
            .collect();
        assert!(total_variation(&dist, &expected) < 1e-15);
    }

    #[test]
    fn leaf_cap_is_enforced() {
        let r = enumerate(10, |c| {
            for _ in 0..4 {
                c.choose(&[0.5, 0.5]);
            }
            Ok(())
        });
        assert_eq!(r, Err(Error::TooManyLeaves(10)));
    }

    #[test]
    fn sampled_fallback_agrees_with_exact_within_three_standard_errors() {
        let game = |c: &mut dyn Coins| -> Result<usize> {
            let mut s = 0;
            for _ in 0..6 {
                s += c.choose(&[0.3, 0.7]);
            }
            Ok(s)
        };
        let exact = exhaustive_or_sampled(1000, 0, 0, game).unwrap();
        let sampled = exhaustive_or_sampled(8, 20_000, 5, game).unwrap();
        assert!(exact.exact && !sampled.exact);
        let p = exact.probability_of(|&s| s >= 5);
        let q = sampled.probability_of(|&s| s >= 5);
        assert!((p - q).abs() <= 3.0 * sampled.standard_error(p));
    }
}
