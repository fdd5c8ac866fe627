//! The interface shared by the dense and sparse database representations,
//! and its dense implementation on [`OracleState`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::coins::PROBABILITY_FLOOR;
use crate::error::{Error, Result};
use crate::extraction::{classify_digits, ExtractionOutcome};
use crate::linalg::{build_controlled, Matrix, RegisterLayout, StateVector, C64};
use crate::oracle::{build_local_query, OracleConfig, OracleState};
use crate::relation::{CommitFunction, RelationView};
use crate::rng::SimRng;

/// A compressed-oracle database jointly held with the adversary's
/// registers. Every method acts on the full joint state.
pub trait OracleBackend: Clone {
    /// Fresh state: adversary registers in `|0…0⟩`, database empty. The
    /// sparse backend takes `q_cap` as its query budget; the dense one
    /// ignores it.
    fn initial(config: OracleConfig, adversary: RegisterLayout, q_cap: usize) -> Result<Self>;

    fn config(&self) -> OracleConfig;

    fn adversary_layout(&self) -> &RegisterLayout;

    /// Applies `op` to the adversary registers at `positions`.
    fn apply_adversary(&mut self, op: &Matrix, positions: &[usize]) -> Result<()>;

    /// One superposition query `O_XYD` with the adversary registers at
    /// `x_pos` (dimension at most `M`) and `y_pos` (dimension `2^n`).
    fn quantum_query(&mut self, x_pos: usize, y_pos: usize) -> Result<()>;

    /// Born distribution of the adversary registers at `positions`.
    fn measure_distribution(&self, positions: &[usize]) -> Result<Vec<(Vec<usize>, f64)>>;

    /// Projects onto `values` at `positions` and renormalizes; returns the
    /// probability of that outcome.
    fn measure_collapse(&mut self, positions: &[usize], values: &[usize]) -> Result<f64>;

    /// Response distribution of a classical query on `x`.
    fn ro_distribution(&self, x: u64) -> Result<Vec<(u64, f64)>>;

    /// Applies the classical query on `x` conditioned on response `h`;
    /// returns the probability of `h`.
    fn ro_collapse(&mut self, x: u64, h: u64) -> Result<f64>;

    /// Classical query on `x` with the response drawn from `rng`.
    fn ro_sample(&mut self, x: u64, rng: &mut SimRng) -> Result<u64> {
        let dist = self.ro_distribution(x)?;
        let weights: Vec<f64> = dist.iter().map(|d| d.1).collect();
        let h = dist[rng.weighted_index(&weights)].0;
        self.ro_collapse(x, h)?;
        Ok(h)
    }

    /// Outcome distribution of the measurement `{Σ^x}` for `rel`.
    fn extract_distribution(&self, rel: &dyn RelationView)
        -> Result<Vec<(ExtractionOutcome, f64)>>;

    fn extract_collapse(
        &mut self,
        rel: &dyn RelationView,
        outcome: ExtractionOutcome,
    ) -> Result<f64>;

    fn extract_sample(
        &mut self,
        rel: &dyn RelationView,
        rng: &mut SimRng,
    ) -> Result<ExtractionOutcome> {
        let dist = self.extract_distribution(rel)?;
        let weights: Vec<f64> = dist.iter().map(|d| d.1).collect();
        let o = dist[rng.weighted_index(&weights)].0;
        self.extract_collapse(rel, o)?;
        Ok(o)
    }

    /// `⟨self|other⟩` of the full joint states.
    fn inner(&self, other: &Self) -> Result<C64>;

    /// `tr(Π^col ρ)`: weight of databases holding `x ≠ x'` with
    /// `f(x, D_x) = f(x', D_x')`.
    fn collision_mass(&self, f: &CommitFunction) -> Result<f64>;

    /// The same state as a dense [`OracleState`].
    fn to_dense(&self) -> Result<OracleState>;
}

fn check_query_registers(
    layout: &RegisterLayout,
    config: OracleConfig,
    x_pos: usize,
    y_pos: usize,
) -> Result<()> {
    let regs = layout.registers();
    if x_pos >= regs.len() || y_pos >= regs.len() || x_pos == y_pos {
        return Err(Error::MalformedCircuit(
            "query registers are missing or coincide".into(),
        ));
    }
    if regs[x_pos].dim as u64 > config.domain {
        return Err(Error::DimensionMismatch {
            expected: config.domain as usize,
            found: regs[x_pos].dim,
        });
    }
    if regs[y_pos].dim != config.y_dim() {
        return Err(Error::DimensionMismatch {
            expected: config.y_dim(),
            found: regs[y_pos].dim,
        });
    }
    Ok(())
}

pub(crate) fn nonzero<T>(dist: impl IntoIterator<Item = (T, f64)>) -> Vec<(T, f64)> {
    dist.into_iter()
        .filter(|d| d.1 > PROBABILITY_FLOOR)
        .collect()
}

impl OracleState {
    fn outcomes(&self, rel: &dyn RelationView) -> Vec<ExtractionOutcome> {
        let cfg = self.config();
        let db_dim = self.database_dim();
        let mut digits = vec![0usize; cfg.domain as usize];
        (0..db_dim)
            .map(|d| {
                let mut rest = d;
                for slot in digits.iter_mut().rev() {
                    *slot = rest % cfg.cell_dim();
                    rest /= cfg.cell_dim();
                }
                classify_digits(cfg, rel, &digits)
            })
            .collect()
    }
}

impl OracleBackend for OracleState {
    fn initial(config: OracleConfig, adversary: RegisterLayout, _q_cap: usize) -> Result<Self> {
        OracleState::with_adversary(config, adversary)
    }

    fn config(&self) -> OracleConfig {
        OracleState::config(self)
    }

    fn adversary_layout(&self) -> &RegisterLayout {
        self.adversary()
    }

    fn apply_adversary(&mut self, op: &Matrix, positions: &[usize]) -> Result<()> {
        if positions.iter().any(|&p| p >= self.adversary().len()) {
            return Err(Error::MalformedCircuit(
                "operator targets a database register".into(),
            ));
        }
        self.state_mut().apply_local(op, positions)
    }

    fn quantum_query(&mut self, x_pos: usize, y_pos: usize) -> Result<()> {
        let cfg = OracleState::config(self);
        check_query_registers(self.adversary(), cfg, x_pos, y_pos)?;
        let local = build_local_query(cfg.n)?;
        let x_dim = self.adversary().registers()[x_pos].dim;
        for x in 0..x_dim {
            let controlled = build_controlled(x_dim, x, local.matrix());
            let d_pos = self.database_position(x as u64);
            self.state_mut()
                .apply_local(&controlled, &[x_pos, y_pos, d_pos])?;
        }
        Ok(())
    }

    fn measure_distribution(&self, positions: &[usize]) -> Result<Vec<(Vec<usize>, f64)>> {
        let sub = self.adversary().sub_layout(positions);
        let probs = self.state().marginal(positions);
        Ok(nonzero(
            probs
                .into_iter()
                .enumerate()
                .map(|(i, p)| (sub.digits(i), p)),
        ))
    }

    fn measure_collapse(&mut self, positions: &[usize], values: &[usize]) -> Result<f64> {
        let p = self.state_mut().project(positions, values);
        self.state_mut().normalize();
        Ok(p)
    }

    fn ro_distribution(&self, x: u64) -> Result<Vec<(u64, f64)>> {
        Ok(nonzero(self.classical_query_distribution(x)?))
    }

    fn ro_collapse(&mut self, x: u64, h: u64) -> Result<f64> {
        self.classical_query_collapse(x, h)
    }

    fn extract_distribution(
        &self,
        rel: &dyn RelationView,
    ) -> Result<Vec<(ExtractionOutcome, f64)>> {
        let outcomes = self.outcomes(rel);
        Ok(nonzero(crate::extraction::outcome_probabilities(
            &outcomes,
            self.state().amplitudes(),
        )))
    }

    fn extract_collapse(
        &mut self,
        rel: &dyn RelationView,
        outcome: ExtractionOutcome,
    ) -> Result<f64> {
        let outcomes = self.outcomes(rel);
        let dd = outcomes.len();
        let mut kept = 0.0;
        for (i, a) in self.state_mut().amplitudes_mut().iter_mut().enumerate() {
            if outcomes[i % dd] == outcome {
                kept += a.norm_sqr();
            } else {
                *a = C64::new(0.0, 0.0);
            }
        }
        self.state_mut().normalize();
        Ok(kept)
    }

    fn inner(&self, other: &Self) -> Result<C64> {
        self.state().inner(other.state())
    }

    fn collision_mass(&self, f: &CommitFunction) -> Result<f64> {
        let cfg = OracleState::config(self);
        let db_dim = self.database_dim();
        let mut colliding = vec![false; db_dim];
        for (d, slot) in colliding.iter_mut().enumerate() {
            let digits = self.database_digits(d);
            let mut seen: BTreeMap<u64, ()> = BTreeMap::new();
            for (x, &y) in digits.iter().enumerate() {
                if y == cfg.bot() {
                    continue;
                }
                if seen.insert(f.eval(x as u64, y as u64), ()).is_some() {
                    *slot = true;
                    break;
                }
            }
        }
        Ok(self
            .state()
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(i, _)| colliding[i % db_dim])
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    fn to_dense(&self) -> Result<OracleState> {
        Ok(self.clone())
    }
}

/// Joint state of several registers as a dense vector, for tests that
/// need to compare backends independently of their internal layouts.
pub fn dense_amplitudes<B: OracleBackend>(backend: &B) -> Result<StateVector> {
    Ok(backend.to_dense()?.state().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{walsh_hadamard, TOLERANCE};
    use crate::oracle::build_query_unitary;
    use crate::relation::Relation;

    #[test]
    fn controlled_query_matches_full_unitary() {
        let cfg = OracleConfig::new(1, 2).unwrap();
        let adv = RegisterLayout::new([("X", 2), ("Y", 2)]).unwrap();
        let mut st = OracleState::with_adversary(cfg, adv).unwrap();
        st.apply_adversary(&walsh_hadamard(1), &[0]).unwrap();
        st.apply_adversary(&walsh_hadamard(1), &[1]).unwrap();
        let mut by_matrix = st.state().clone();
        st.quantum_query(0, 1).unwrap();
        let o = build_query_unitary(cfg).unwrap();
        let o =
            crate::linalg::DenseOperator::new(by_matrix.layout().clone(), o.into_matrix()).unwrap();
        by_matrix.apply(&o).unwrap();
        let d: f64 = by_matrix
            .amplitudes()
            .iter()
            .zip(st.state().amplitudes())
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert!(d < TOLERANCE);
    }

    #[test]
    fn fresh_extraction_is_empty() {
        let cfg = OracleConfig::new(2, 3).unwrap();
        let st = OracleState::fresh(cfg).unwrap();
        let dist = st
            .extract_distribution(&Relation::full(2, 3).unwrap())
            .unwrap();
        assert_eq!(dist.len(), 1);
        assert_eq!(dist[0].0, ExtractionOutcome::Empty);
    }
}
