//! Commutator norms of the oracle unitary with the extraction projectors
//! and with the purified measurement `M_DP`.
//!
//! The full operators live on `X ⊗ Y ⊗ D ⊗ P`, which is far too large for
//! an SVD once `M = 3, n = 2`. Two exact reductions keep it small:
//!
//! - `O = Σ_x |x⟩⟨x| ⊗ O^x` is block-diagonal in `X`, so
//!   `‖[O, M_DP]‖ = max_x ‖[O^x, M_DP]‖`.
//! - `M_DP` is diagonal in the computational basis of the registers
//!   `D_{x'}`, `x' ≠ x`, and (after a Fourier transform) of `P`. `O^x`
//!   acts on neither, so `[O^x, M_DP]` is block-diagonal with one block
//!   per configuration `c` of those registers and Fourier mode `k`. Each
//!   block is `[O^x, 1_Y ⊗ diag_v(ω^{k·enc(o(v, c))})]` on `Y ⊗ D_x`, where
//!   `o(v, c)` is the extraction outcome with `D_x = v`.
//!
//! The same argument applies to `Π^∅`, whose blocks are `1 − Π^x` or `0`.
//! [`dense_commutator_norm`] builds the full operators directly and is
//! used to cross-check the reduction where it fits.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{f_local_bound, main_commutator_bound, query_local_bound, BoundReport, Params};
use crate::error::{Error, Result};
use crate::extraction::{cell_projector, classify_digits, purified_m};
use crate::linalg::{commutator_norm, matrix_norm, Matrix, C64, DEFAULT_DIM_CAP};
use crate::oracle::{build_f, build_local_query, build_query_unitary, OracleConfig};
use crate::relation::{Relation, RelationView};
use crate::rng::SimRng;

/// Largest joint dimension for which [`dense_commutator_norm`] runs.
pub const DENSE_CROSS_CHECK_MAX_DIM: usize = 1024;

/// Dimension up to which `‖[O^x, Π^∅]‖` is computed on the full `Y ⊗ D`.
const DENSE_EMPTY_PROJECTOR_MAX_DIM: usize = 256;

/// `‖[O^x, 1_Y ⊗ diag(g)]‖` for a diagonal `g` on one database register.
fn diagonal_commutator_norm(local: &Matrix, y_dim: usize, g: &[C64]) -> Result<f64> {
    let c = g.len();
    let d = y_dim * c;
    let comm = Matrix::from_fn(d, d, |i, j| local[(i, j)] * (g[j % c] - g[i % c]));
    matrix_norm(&comm)
}

/// Digits of every configuration of the registers other than `x`, with a
/// placeholder at position `x`.
fn other_configurations(config: OracleConfig, x: u64) -> Vec<Vec<usize>> {
    let m = config.domain as usize;
    let c = config.cell_dim();
    let count = c.pow(m as u32 - 1);
    (0..count)
        .map(|mut r| {
            let mut digits = vec![0usize; m];
            for (pos, slot) in digits.iter_mut().enumerate().rev() {
                if pos as u64 == x {
                    continue;
                }
                *slot = r % c;
                r /= c;
            }
            digits
        })
        .collect()
}

/// `‖[O^x, M_DP]‖` through the block reduction described above.
pub fn structured_commutator_norm_x(
    config: OracleConfig,
    rel: &dyn RelationView,
    x: u64,
) -> Result<f64> {
    config.check_x(x)?;
    let local = build_local_query(config.n)?.into_matrix();
    let c = config.cell_dim();
    let m1 = config.domain + 1;
    let mut patterns: BTreeSet<Vec<u64>> = BTreeSet::new();
    for mut digits in other_configurations(config, x) {
        let enc: Vec<u64> = (0..c)
            .map(|v| {
                digits[x as usize] = v;
                classify_digits(config, rel, &digits).encode()
            })
            .collect();
        for k in 1..m1 {
            let phases: Vec<u64> = enc.iter().map(|e| (k * e) % m1).collect();
            if phases.iter().any(|&p| p != phases[0]) {
                patterns.insert(phases);
            }
        }
    }
    let mut best = 0.0f64;
    for phases in patterns {
        let g: Vec<C64> = phases
            .iter()
            .map(|&p| C64::from_polar(1.0, core::f64::consts::TAU * p as f64 / m1 as f64))
            .collect();
        best = best.max(diagonal_commutator_norm(&local, config.y_dim(), &g)?);
    }
    Ok(best)
}

/// `‖[O_XYD, M_DP]‖ = max_x ‖[O^x, M_DP]‖`.
pub fn structured_commutator_norm(config: OracleConfig, rel: &dyn RelationView) -> Result<f64> {
    let mut best = 0.0f64;
    for x in 0..config.domain {
        best = best.max(structured_commutator_norm_x(config, rel, x)?);
    }
    Ok(best)
}

/// `‖[O_XYD ⊗ 1_P, 1_XY ⊗ M_DP]‖` from the full matrices.
pub fn dense_commutator_norm(config: OracleConfig, rel: &dyn RelationView) -> Result<f64> {
    let m1 = config.domain as usize + 1;
    let dim = config.query_space_dim().ok_or(Error::CapExceeded {
        cap: DENSE_CROSS_CHECK_MAX_DIM,
    })? * m1;
    if dim > DENSE_CROSS_CHECK_MAX_DIM {
        return Err(Error::CapExceeded {
            cap: DENSE_CROSS_CHECK_MAX_DIM,
        });
    }
    let o = build_query_unitary(config)?.into_matrix();
    let m = purified_m(config, rel)?.into_matrix();
    let xy = config.domain as usize * config.y_dim();
    let o_full = o.kronecker(&Matrix::identity(m1, m1));
    let m_full = Matrix::identity(xy, xy).kronecker(&m);
    commutator_norm(&o_full, &m_full)
}

/// The three local commutator norms for one `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalNorms {
    /// `‖[F, Π^x]‖`.
    pub f_pi: f64,
    /// `‖[O^x, Π^x]‖`.
    pub o_pi: f64,
    /// `‖[O^x, Π^∅]‖` with `Π^∅` on the whole database.
    pub o_empty: f64,
    /// Whether `o_empty` came from the full `Y ⊗ D` matrix.
    pub o_empty_dense: bool,
}

/// `‖[O^x ⊗ 1, Π^∅]‖` on the full `Y ⊗ D`.
pub fn dense_empty_projector_norm(
    config: OracleConfig,
    rel: &dyn RelationView,
    x: u64,
) -> Result<f64> {
    let db = config.database_layout(DEFAULT_DIM_CAP)?;
    let yd = config.y_dim();
    let c = config.cell_dim();
    let dim = yd * db.dim();
    let local = build_local_query(config.n)?.into_matrix();
    let empty: Vec<bool> = (0..db.dim())
        .map(|d| {
            db.digits(d)
                .iter()
                .enumerate()
                .all(|(x2, &v)| v == config.bot() || !rel.contains(x2 as u64, v as u64))
        })
        .collect();
    let stride = c.pow((config.domain - 1 - x) as u32);
    let mut comm = Matrix::zeros(dim, dim);
    for col in 0..dim {
        let (y, d) = (col / db.dim(), col % db.dim());
        let v = (d / stride) % c;
        let rest = d - v * stride;
        for y2 in 0..yd {
            for v2 in 0..c {
                let a = local[(y2 * c + v2, y * c + v)];
                if a.norm() == 0.0 {
                    continue;
                }
                let d2 = rest + v2 * stride;
                let diff = f64::from(u8::from(empty[d])) - f64::from(u8::from(empty[d2]));
                comm[(y2 * db.dim() + d2, col)] = a * diff;
            }
        }
    }
    matrix_norm(&comm)
}

pub fn local_norms(config: OracleConfig, rel: &dyn RelationView, x: u64) -> Result<LocalNorms> {
    config.check_x(x)?;
    let f = build_f(config.n)?.into_matrix();
    let pi = cell_projector(config, rel, x);
    let f_pi = commutator_norm(&f, &pi)?;
    let local = build_local_query(config.n)?.into_matrix();
    let yd = config.y_dim();
    let pi_y = Matrix::identity(yd, yd).kronecker(&pi);
    let o_pi = commutator_norm(&local, &pi_y)?;
    let dense_dim = config.database_dim().map(|d| d * yd);
    let (o_empty, o_empty_dense) = match dense_dim {
        Some(d) if d <= DENSE_EMPTY_PROJECTOR_MAX_DIM => {
            (dense_empty_projector_norm(config, rel, x)?, true)
        }
        _ => {
            // Blocks are (1 − Π^x) (the all-⊥ configuration always occurs) or 0.
            let g: Vec<C64> = (0..config.cell_dim())
                .map(|v| C64::new(1.0 - pi[(v, v)].re, 0.0))
                .collect();
            (diagonal_commutator_norm(&local, yd, &g)?, false)
        }
    };
    Ok(LocalNorms {
        f_pi,
        o_pi,
        o_empty,
        o_empty_dense,
    })
}

fn params(config: OracleConfig, gamma: u64) -> Params {
    Params {
        n: config.n,
        m: config.domain,
        gamma,
        ..Default::default()
    }
}

/// Three reports per `x`: the local lemma's bounds on `[F, Π^x]`,
/// `[O^x, Π^x]` and `[O^x, Π^∅]`.
pub fn verify_local_bounds(
    config: OracleConfig,
    rel: &Relation,
    label: &str,
) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    for x in 0..config.domain {
        let g = rel.gamma_x(x) as u64;
        let l = local_norms(config, rel, x)?;
        let p = params(config, g);
        let lbl = format!("{label} x={x}");
        out.push(BoundReport::new(
            "local-f-projector",
            lbl.clone(),
            p.clone(),
            l.f_pi,
            f_local_bound(config.n, g),
        ));
        out.push(BoundReport::new(
            "local-query-projector",
            lbl.clone(),
            p.clone(),
            l.o_pi,
            query_local_bound(config.n, g),
        ));
        let method = if l.o_empty_dense {
            "full Y⊗D matrix"
        } else {
            "block reduction"
        };
        out.push(
            BoundReport::new(
                "local-query-empty-projector",
                lbl,
                p,
                l.o_empty,
                query_local_bound(config.n, g),
            )
            .with_note(format!("computed from the {method}")),
        );
    }
    Ok(out)
}

/// The main commutator report plus one lifting report per `x`
/// (`‖[O^x, M_DP]‖ ≤ 3‖[O^x, Π^x]‖ + ‖[O^x, Π^∅]‖`).
pub fn verify_commutator_bound(
    config: OracleConfig,
    rel: &Relation,
    label: &str,
) -> Result<Vec<BoundReport>> {
    let gamma = rel.gamma() as u64;
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    for x in 0..config.domain {
        let lhs = structured_commutator_norm_x(config, rel, x)?;
        worst = worst.max(lhs);
        let l = local_norms(config, rel, x)?;
        out.push(BoundReport::new(
            "lifting",
            format!("{label} x={x}"),
            params(config, rel.gamma_x(x) as u64),
            lhs,
            3.0 * l.o_pi + l.o_empty,
        ));
    }
    out.insert(
        0,
        BoundReport::new(
            "commutator",
            label,
            params(config, gamma),
            worst,
            main_commutator_bound(config.n, gamma),
        ),
    );
    Ok(out)
}

/// `‖[F, |0⟩⟨0|]‖` at `n = 1` against the local bound `1`.
pub fn f_projector_anchor() -> Result<BoundReport> {
    let config = OracleConfig::new(1, 1)?;
    let rel = Relation::zero_preimage(1, 1)?;
    let l = local_norms(config, &rel, 0)?;
    Ok(BoundReport::new(
        "anchor-f-projector",
        "n=1 R={(0,0)}",
        params(config, 1),
        l.f_pi,
        f_local_bound(1, 1),
    )
    .with_note(format!(
        "independent two-dimensional value {}",
        anchor_reference(1)
    )))
}

/// `‖[F, |0⟩⟨0|]‖` from the two-dimensional invariant subspace, without
/// any SVD. With `a = ⟨0|F|0⟩` and `F|0⟩ = a|0⟩ + b|w⟩`, the commutator
/// is `b(|w⟩⟨0| − |0⟩⟨w|)`, so its norm is `√(1 − a²)`. `F` fixes the
/// complement of `span{⊥, φ_0}` and maps `φ_0` to `⊥`, which gives
/// `a = 1 − |⟨0|φ_0⟩|² = 1 − 2^{-n}`.
pub fn anchor_reference(n: u32) -> f64 {
    let a = 1.0 - libm::exp2(-(n as f64));
    libm::sqrt(1.0 - a * a)
}

/// Norms along a chain of nested relations, and whether they never decrease.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub labels: Vec<String>,
    pub norms: Vec<f64>,
    pub monotone: bool,
}

pub fn monotonicity_chain(config: OracleConfig, chain: &[Relation]) -> Result<MonotonicityCheck> {
    if chain.windows(2).any(|w| !w[0].is_subset_of(&w[1])) {
        return Err(Error::InvalidSpec("relations are not nested".into()));
    }
    let norms = chain
        .iter()
        .map(|r| structured_commutator_norm(config, r))
        .collect::<Result<Vec<_>>>()?;
    let monotone = norms.windows(2).all(|w| w[1] + crate::TOLERANCE >= w[0]);
    let labels = chain.iter().map(|r| format!("{:?}", r.pairs())).collect();
    Ok(MonotonicityCheck {
        labels,
        norms,
        monotone,
    })
}

/// The default chain at `n = 1, M = 2`: add one pair at a time, from the
/// empty relation up to the full one.
pub fn default_chain() -> Result<Vec<Relation>> {
    let order = [(1u64, 1u64), (0, 0), (1, 0), (0, 1)];
    (0..=order.len())
        .map(|k| Relation::from_pairs(1, 2, order[..k].iter().copied()))
        .collect()
}

/// Every relation of the commutator sweep, with a label.
pub fn sweep_relations(
    seed: u64,
    random_per_domain: usize,
) -> Result<Vec<(OracleConfig, String, Relation)>> {
    let mut out = Vec::new();
    for (m, count) in [(2u64, 16u64), (3, 64)] {
        let cfg = OracleConfig::new(1, m)?;
        for mask in 0..count {
            out.push((
                cfg,
                format!("n=1 M={m} mask={mask}"),
                Relation::from_mask(1, m, mask)?,
            ));
        }
    }
    let master = SimRng::new(seed);
    for (j, m) in [2u64, 3].into_iter().enumerate() {
        let cfg = OracleConfig::new(2, m)?;
        for i in 0..random_per_domain {
            let mut rng = master.split((j * random_per_domain + i) as u64);
            let density = rng.unit();
            out.push((
                cfg,
                format!("n=2 M={m} random#{i}"),
                Relation::random(2, m, density, &mut rng)?,
            ));
        }
    }
    Ok(out)
}

/// Largest gap between the block reduction and the full matrices over
/// the given relations (those whose full matrices fit).
pub fn cross_check(relations: &[(OracleConfig, String, Relation)]) -> Result<BoundReport> {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (cfg, _, rel) in relations {
        match dense_commutator_norm(*cfg, rel) {
            Ok(dense) => {
                worst = worst.max((dense - structured_commutator_norm(*cfg, rel)?).abs());
                checked += 1;
            }
            Err(Error::CapExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(BoundReport::new(
        "commutator-cross-check",
        format!("{checked} relations"),
        Params::default(),
        worst,
        0.0,
    )
    .with_note("block reduction against full matrices"))
}

/// The full commutator grid: 16 relations at `n = 1, M = 2`, 64 at
/// `n = 1, M = 3`, and `random_per_domain` random ones at `n = 2` for each
/// of `M = 2, 3`. Returns main, lifting and local reports.
pub fn commutator_suite(seed: u64, random_per_domain: usize) -> Result<Vec<BoundReport>> {
    let mut out = vec![f_projector_anchor()?];
    for (cfg, label, rel) in sweep_relations(seed, random_per_domain)? {
        out.extend(verify_commutator_bound(cfg, &rel, &label)?);
        out.extend(verify_local_bounds(cfg, &rel, &label)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TOLERANCE;

    #[test]
    fn anchor_value() {
        let r = f_projector_anchor().unwrap();
        assert!((r.measured - libm::sqrt(3.0) / 2.0).abs() < TOLERANCE);
        assert!((anchor_reference(1) - r.measured).abs() < TOLERANCE);
        assert!(r.satisfied);
    }

    #[test]
    fn block_reduction_matches_full_matrices() {
        let cfg = OracleConfig::new(1, 2).unwrap();
        for mask in 0..16 {
            let rel = Relation::from_mask(1, 2, mask).unwrap();
            let a = dense_commutator_norm(cfg, &rel).unwrap();
            let b = structured_commutator_norm(cfg, &rel).unwrap();
            assert!((a - b).abs() < 1e-9, "mask {mask}: {a} vs {b}");
        }
        let cfg = OracleConfig::new(2, 2).unwrap();
        let mut rng = SimRng::new(8);
        let rel = Relation::random(2, 2, 0.4, &mut rng).unwrap();
        let a = dense_commutator_norm(cfg, &rel).unwrap();
        let b = structured_commutator_norm(cfg, &rel).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn empty_projector_reduction_matches_full_matrix() {
        let mut rng = SimRng::new(31);
        for (n, m) in [(1, 2), (1, 3), (2, 2)] {
            let cfg = OracleConfig::new(n, m).unwrap();
            let rel = Relation::random(n, m, 0.5, &mut rng).unwrap();
            for x in 0..m {
                let dense = dense_empty_projector_norm(cfg, &rel, x).unwrap();
                let l = local_norms(cfg, &rel, x).unwrap();
                assert!((dense - l.o_pi).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_relation_commutes() {
        let cfg = OracleConfig::new(2, 3).unwrap();
        let reports =
            verify_commutator_bound(cfg, &Relation::empty(2, 3).unwrap(), "empty").unwrap();
        assert_eq!(reports[0].measured, 0.0);
        assert_eq!(reports[0].bound, 0.0);
        assert!(reports.iter().all(|r| r.satisfied));
    }

    #[test]
    fn full_relation_at_n2_within_local_bound() {
        let cfg = OracleConfig::new(2, 2).unwrap();
        let r = verify_local_bounds(cfg, &Relation::full(2, 2).unwrap(), "full").unwrap();
        assert!((r[1].bound - 2.0 * libm::sqrt(2.0)).abs() < 1e-12);
        assert!((r[0].bound - libm::sqrt(2.0)).abs() < 1e-12);
        assert!(r.iter().all(|x| x.satisfied));
    }

    #[test]
    fn sweep_sizes() {
        let rels = sweep_relations(1, 100).unwrap();
        assert_eq!(rels.len(), 16 + 64 + 200);
    }

    #[test]
    fn chain_is_nested() {
        let chain = default_chain().unwrap();
        let check = monotonicity_chain(OracleConfig::new(1, 2).unwrap(), &chain).unwrap();
        assert_eq!(check.norms.len(), 5);
        assert_eq!(check.norms[0], 0.0);
    }
}
