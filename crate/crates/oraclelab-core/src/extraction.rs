//! Extraction projectors `Π^x`, `Π^∅`, the measurement `{Σ^x}` and its
//! purification `M_DP`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cyclic_shift, DenseOperator, Matrix, RegisterLayout, DEFAULT_DIM_CAP, ONE};
use crate::oracle::OracleConfig;
use crate::relation::RelationView;

/// Result of an extraction: an element of `X` or `∅`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExtractionOutcome {
    Empty,
    Found(u64),
}

impl ExtractionOutcome {
    /// Encoding in `Z/(M+1)Z`: `∅ ↦ 0`, `x ↦ x + 1`.
    pub fn encode(self) -> u64 {
        match self {
            Self::Empty => 0,
            Self::Found(x) => x + 1,
        }
    }

    pub fn decode(v: u64, domain: u64) -> Result<Self> {
        match v {
            0 => Ok(Self::Empty),
            v if v <= domain => Ok(Self::Found(v - 1)),
            v => Err(Error::DomainOutOfRange { x: v - 1, domain }),
        }
    }

    pub fn found(self) -> Option<u64> {
        match self {
            Self::Empty => None,
            Self::Found(x) => Some(x),
        }
    }

    /// Ordering key for "first satisfying register": every `x` sorts
    /// before `∅`.
    pub fn rank(self) -> u64 {
        match self {
            Self::Empty => u64::MAX,
            Self::Found(x) => x,
        }
    }
}

fn check_relation(config: OracleConfig, rel: &dyn RelationView) -> Result<()> {
    if rel.n() != config.n || rel.domain() != config.domain {
        return Err(Error::InvalidSpec(
            "relation does not match the oracle configuration".into(),
        ));
    }
    Ok(())
}

/// `Π^x = Σ_{(x,y)∈R} |y⟩⟨y|` as a matrix on one database register.
pub fn cell_projector(config: OracleConfig, rel: &dyn RelationView, x: u64) -> Matrix {
    let mut m = Matrix::zeros(config.cell_dim(), config.cell_dim());
    for y in rel.satisfying(x) {
        m[(y as usize, y as usize)] = ONE;
    }
    m
}

/// Outcome of `{Σ^x}` on the database basis state with the given digits:
/// the first `x` whose register holds an `R`-satisfying value.
pub fn classify_digits(
    config: OracleConfig,
    rel: &dyn RelationView,
    digits: &[usize],
) -> ExtractionOutcome {
    for (x, &d) in digits.iter().enumerate() {
        if d != config.bot() && rel.contains(x as u64, d as u64) {
            return ExtractionOutcome::Found(x as u64);
        }
    }
    ExtractionOutcome::Empty
}

/// Outcome for every database basis index.
pub fn classify_database(
    config: OracleConfig,
    rel: &dyn RelationView,
) -> Result<Vec<ExtractionOutcome>> {
    check_relation(config, rel)?;
    let layout = config.database_layout(DEFAULT_DIM_CAP)?;
    Ok((0..layout.dim())
        .map(|d| classify_digits(config, rel, &layout.digits(d)))
        .collect())
}

pub struct Projectors {
    /// `Π^x` on `D_x`, indexed by `x`.
    pub per_x: Vec<DenseOperator>,
    /// `Π^∅ = ⊗_x (1 − Π^x)` on the whole database.
    pub empty: DenseOperator,
}

pub fn projectors_for_relation(config: OracleConfig, rel: &dyn RelationView) -> Result<Projectors> {
    check_relation(config, rel)?;
    let mut per_x = Vec::new();
    let mut empty: Option<DenseOperator> = None;
    for x in 0..config.domain {
        let layout = RegisterLayout::new([(alloc::format!("D{x}"), config.cell_dim())])?;
        let pi = cell_projector(config, rel, x);
        let id = Matrix::identity(config.cell_dim(), config.cell_dim());
        let comp = DenseOperator::new(layout.clone(), id - &pi)?;
        empty = Some(match empty {
            None => comp,
            Some(acc) => acc.kron(&comp)?,
        });
        let mut p = DenseOperator::new(layout, pi)?;
        p.is_projector = true;
        per_x.push(p);
    }
    let mut empty = empty.ok_or(Error::EmptyDomain)?;
    empty.is_projector = true;
    Ok(Projectors { per_x, empty })
}

/// The family `{Σ^x}` followed by `Σ^∅`, built as Kronecker products:
/// `Σ^x = (⊗_{x'<x} (1 − Π^{x'})) ⊗ Π^x ⊗ 1`.
pub fn extraction_measurement(
    config: OracleConfig,
    rel: &dyn RelationView,
) -> Result<Vec<(ExtractionOutcome, DenseOperator)>> {
    let projectors = projectors_for_relation(config, rel)?;
    let d = config.cell_dim();
    let mut out = Vec::new();
    for x in 0..config.domain as usize {
        let mut acc: Option<DenseOperator> = None;
        for (x2, pi) in projectors.per_x.iter().enumerate() {
            let factor = if x2 < x {
                DenseOperator::new(pi.layout().clone(), Matrix::identity(d, d) - pi.matrix())?
            } else if x2 == x {
                pi.clone()
            } else {
                DenseOperator::identity(pi.layout().clone())
            };
            acc = Some(match acc {
                None => factor,
                Some(a) => a.kron(&factor)?,
            });
        }
        let mut sigma = acc.ok_or(Error::EmptyDomain)?;
        sigma.is_projector = true;
        out.push((ExtractionOutcome::Found(x as u64), sigma));
    }
    out.push((ExtractionOutcome::Empty, projectors.empty));
    Ok(out)
}

/// `M_DP = Σ_x Σ^x ⊗ X^{enc(x)}` on `D ⊗ P`, where `P` has dimension
/// `M + 1` and `X` is the cyclic shift.
pub fn purified_m(config: OracleConfig, rel: &dyn RelationView) -> Result<DenseOperator> {
    let outcomes = classify_database(config, rel)?;
    let m1 = config.domain as usize + 1;
    let db = config.database_layout(DEFAULT_DIM_CAP)?;
    let p = RegisterLayout::new([("P", m1)])?;
    let layout = db.concat(&p)?;
    let mut m = Matrix::zeros(layout.dim(), layout.dim());
    for (d, o) in outcomes.iter().enumerate() {
        let shift = o.encode() as usize;
        for v in 0..m1 {
            m[(d * m1 + (v + shift) % m1, d * m1 + v)] = ONE;
        }
    }
    let mut op = DenseOperator::new(layout, m)?;
    op.is_unitary = true;
    Ok(op)
}

/// `M_DP` assembled from the projector family, as an independent route
/// for cross-checking [`purified_m`].
pub fn purified_m_from_projectors(
    config: OracleConfig,
    rel: &dyn RelationView,
) -> Result<DenseOperator> {
    let m1 = config.domain as usize + 1;
    let shift = cyclic_shift(m1);
    let p = RegisterLayout::new([("P", m1)])?;
    let mut acc: Option<DenseOperator> = None;
    for (o, sigma) in extraction_measurement(config, rel)? {
        let mut power = Matrix::identity(m1, m1);
        for _ in 0..o.encode() {
            power = &shift * power;
        }
        let term = sigma.kron(&DenseOperator::new(p.clone(), power)?)?;
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    acc.ok_or(Error::EmptyDomain)
}

/// Probability of every outcome on a database amplitude vector (the
/// database must be the trailing registers of `amplitudes`' layout).
pub fn outcome_probabilities(
    outcomes: &[ExtractionOutcome],
    amplitudes: &[crate::C64],
) -> Vec<(ExtractionOutcome, f64)> {
    let dd = outcomes.len();
    let mut acc: BTreeMap<ExtractionOutcome, f64> = BTreeMap::new();
    for (i, a) in amplitudes.iter().enumerate() {
        *acc.entry(outcomes[i % dd]).or_default() += a.norm_sqr();
    }
    acc.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{operator_norm, StateVector, TOLERANCE};
    use crate::relation::Relation;
    use crate::rng::SimRng;

    fn cfg(n: u32, m: u64) -> OracleConfig {
        OracleConfig::new(n, m).unwrap()
    }

    #[test]
    fn encoding_is_bijective() {
        for v in 0..=5 {
            assert_eq!(ExtractionOutcome::decode(v, 5).unwrap().encode(), v);
        }
        assert!(ExtractionOutcome::decode(6, 5).is_err());
    }

    #[test]
    fn empty_relation_projectors() {
        let c = cfg(1, 2);
        let p = projectors_for_relation(c, &Relation::empty(1, 2).unwrap()).unwrap();
        assert!(p
            .per_x
            .iter()
            .all(|pi| pi.matrix().iter().all(|v| v.norm() == 0.0)));
        assert_eq!(p.empty.matrix(), &Matrix::identity(9, 9));
    }

    #[test]
    fn full_relation_empty_projector_keeps_only_bottom_databases() {
        let c = cfg(1, 2);
        let p = projectors_for_relation(c, &Relation::full(1, 2).unwrap()).unwrap();
        let layout = c.database_layout(DEFAULT_DIM_CAP).unwrap();
        for d in 0..9 {
            let all_bot = layout.digits(d).iter().all(|&v| v == 2);
            assert_eq!(p.empty.matrix()[(d, d)].re, if all_bot { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn sigma_family_is_complete_and_orthogonal_on_random_relations() {
        let mut rng = SimRng::new(17);
        for i in 0..200 {
            let (n, m) = if i % 2 == 0 { (1, 3) } else { (2, 2) };
            let rel = Relation::random(n, m, 0.5, &mut rng).unwrap();
            let fam = extraction_measurement(cfg(n, m), &rel).unwrap();
            let d = fam[0].1.dim();
            let mut sum = Matrix::zeros(d, d);
            for (a, (_, sa)) in fam.iter().enumerate() {
                sum += sa.matrix();
                for (_, sb) in fam.iter().skip(a + 1) {
                    assert!(operator_norm(&sa.mul(sb).unwrap()).unwrap() <= TOLERANCE);
                }
            }
            assert!((sum - Matrix::identity(d, d)).norm() <= TOLERANCE);
        }
    }

    #[test]
    fn smallest_index_wins() {
        let c = cfg(1, 2);
        let rel = Relation::full(1, 2).unwrap();
        assert_eq!(
            classify_digits(c, &rel, &[1, 0]),
            ExtractionOutcome::Found(0)
        );
        assert_eq!(
            classify_digits(c, &rel, &[2, 0]),
            ExtractionOutcome::Found(1)
        );
        assert_eq!(classify_digits(c, &rel, &[2, 2]), ExtractionOutcome::Empty);
    }

    #[test]
    fn purified_m_matches_projector_sum_and_is_unitary() {
        let mut rng = SimRng::new(3);
        for _ in 0..10 {
            let rel = Relation::random(1, 2, 0.5, &mut rng).unwrap();
            let a = purified_m(cfg(1, 2), &rel).unwrap();
            let b = purified_m_from_projectors(cfg(1, 2), &rel).unwrap();
            assert!((a.matrix() - b.matrix()).norm() <= TOLERANCE);
            assert!(a.unitarity_deviation().unwrap() <= TOLERANCE);
        }
    }

    #[test]
    fn purified_m_fixes_empty_database_with_zero_pointer() {
        let c = cfg(1, 2);
        let m = purified_m(c, &Relation::full(1, 2).unwrap()).unwrap();
        let psi = StateVector::basis(m.layout().clone(), &[2, 2, 0]).unwrap();
        let mut out = psi.clone();
        out.apply(&m).unwrap();
        assert_eq!(out, psi);
    }
}
