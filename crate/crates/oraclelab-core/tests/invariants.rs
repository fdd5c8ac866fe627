//! Property tests for the algebraic and probabilistic invariants the
//! experiments rely on.

use num_rational::Ratio;
use oraclelab_core::backend::OracleBackend;
use oraclelab_core::coins::SampledCoins;
use oraclelab_core::linalg::{
    build_controlled, embed_operator, matrix_norm, pure_pair_trace_norm, random_unitary,
    trace_norm_hermitian, DenseOperator, Matrix, RegisterLayout, StateVector, C64,
};
use oraclelab_core::oracle::{build_f, OracleConfig, OracleState};
use oraclelab_core::relation::CommitFunction;
use oraclelab_core::rng::SimRng;
use oraclelab_core::sigma::{
    p_trivial, p_trivial_parallel, ratio_pow, AccessStructure, SigmaSpec, Verifier,
    XorShareProtocol,
};
use oraclelab_core::simulator::SimulatorS;
use oraclelab_core::sparse::SparseState;
use proptest::prelude::*;

const EPS: f64 = 1e-9;

fn random_matrix(rows: usize, cols: usize, rng: &mut SimRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| C64::new(rng.gaussian(), rng.gaussian()))
}

fn layout3() -> RegisterLayout {
    RegisterLayout::new([("A", 2), ("B", 3), ("C", 2)]).unwrap()
}

fn op_on(labels: &[&str], m: Matrix) -> DenseOperator {
    let full = layout3();
    let sub = full.sub_layout(&full.positions(labels).unwrap());
    DenseOperator::new(sub, m).unwrap()
}

fn target_sets() -> Vec<Vec<&'static str>> {
    vec![
        vec!["A"],
        vec!["B"],
        vec!["C", "A"],
        vec!["B", "C"],
        vec!["A", "B", "C"],
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn embedding_is_a_homomorphism(seed in any::<u64>(), which in 0usize..5) {
        let targets = &target_sets()[which];
        let full = layout3();
        let d = full.sub_layout(&full.positions(targets).unwrap()).dim();
        let mut rng = SimRng::new(seed);
        let a = op_on(targets, random_matrix(d, d, &mut rng));
        let b = op_on(targets, random_matrix(d, d, &mut rng));
        let ea = embed_operator(&a, targets, &full).unwrap();
        let eb = embed_operator(&b, targets, &full).unwrap();
        let eab = embed_operator(&a.mul(&b).unwrap(), targets, &full).unwrap();
        let prod = ea.mul(&eb).unwrap();
        prop_assert!((eab.matrix() - prod.matrix()).norm() < EPS * (1.0 + prod.matrix().norm()));
        let adj = embed_operator(&a.adjoint(), targets, &full).unwrap();
        prop_assert!((adj.matrix() - ea.adjoint().matrix()).norm() < EPS);
        let id = embed_operator(&DenseOperator::identity(a.layout().clone()), targets, &full).unwrap();
        prop_assert!((id.matrix() - Matrix::identity(full.dim(), full.dim())).norm() < EPS);
    }

    #[test]
    fn operator_norm_properties(seed in any::<u64>(), d in 1usize..6, e in 1usize..4) {
        let mut rng = SimRng::new(seed);
        let a = random_matrix(d, d, &mut rng);
        let b = random_matrix(d, d, &mut rng);
        let c = random_matrix(e, e, &mut rng);
        let (na, nb, nc) = (matrix_norm(&a).unwrap(), matrix_norm(&b).unwrap(), matrix_norm(&c).unwrap());
        prop_assert!(matrix_norm(&(&a + &b)).unwrap() <= na + nb + EPS);
        prop_assert!(matrix_norm(&(&a * &b)).unwrap() <= na * nb * (1.0 + EPS) + EPS);
        prop_assert!((matrix_norm(&a.adjoint()).unwrap() - na).abs() < EPS * (1.0 + na));
        prop_assert!((matrix_norm(&a.kronecker(&c)).unwrap() - na * nc).abs() < 1e-7 * (1.0 + na * nc));
        let u = random_unitary(d, &mut rng);
        prop_assert!((matrix_norm(&u).unwrap() - 1.0).abs() < EPS);
        prop_assert!((matrix_norm(&(&u * &a)).unwrap() - na).abs() < 1e-7 * (1.0 + na));
    }

    #[test]
    fn orthogonal_images_bound(seed in any::<u64>(), parts in 2usize..4) {
        // Operators whose images lie in mutually orthogonal subspaces:
        // ‖Σ A_i‖ ≤ √(Σ ‖A_i‖²).
        let d = 6;
        let mut rng = SimRng::new(seed);
        let mut sum = Matrix::zeros(d, d);
        let mut squares = 0.0;
        for i in 0..parts {
            let mut a = random_matrix(d, d, &mut rng);
            for r in 0..d {
                if r % parts != i {
                    a.row_mut(r).fill(C64::new(0.0, 0.0));
                }
            }
            squares += matrix_norm(&a).unwrap().powi(2);
            sum += a;
        }
        prop_assert!(matrix_norm(&sum).unwrap() <= squares.sqrt() + EPS);
    }

    #[test]
    fn controlled_operator_norm_is_the_maximum(seed in any::<u64>(), k in 1usize..5, d in 1usize..4) {
        let mut rng = SimRng::new(seed);
        let blocks: Vec<Matrix> = (0..k).map(|_| random_matrix(d, d, &mut rng)).collect();
        let mut m = Matrix::zeros(k * d, k * d);
        for (i, b) in blocks.iter().enumerate() {
            m.view_mut((i * d, i * d), (d, d)).copy_from(b);
        }
        let max = blocks.iter().map(|b| matrix_norm(b).unwrap()).fold(0.0, f64::max);
        prop_assert!((matrix_norm(&m).unwrap() - max).abs() < 1e-7 * (1.0 + max));
        // A controlled unitary is unitary.
        let u = random_unitary(d, &mut rng);
        let cu = build_controlled(k, rng.below(k as u64) as usize, &u);
        prop_assert!((cu.adjoint() * &cu - Matrix::identity(k * d, k * d)).norm() < EPS);
    }

    #[test]
    fn pure_pair_trace_norm_matches_eigenvalues(seed in any::<u64>(), d in 2usize..6) {
        let mut rng = SimRng::new(seed);
        let a = random_matrix(d, 1, &mut rng);
        let b = random_matrix(d, 1, &mut rng);
        let diff = &a * a.adjoint() - &b * b.adjoint();
        let direct = trace_norm_hermitian(&diff).unwrap();
        let overlap = (a.adjoint() * &b)[(0, 0)];
        let formula = pure_pair_trace_norm(a.norm_squared(), b.norm_squared(), overlap);
        prop_assert!((direct - formula).abs() < 1e-8 * (1.0 + direct));
    }

    #[test]
    fn f_is_unitary(n in 1u32..4) {
        prop_assert!(build_f(n).unwrap().unitarity_deviation().unwrap() < 1e-12);
    }

    #[test]
    fn classical_queries_are_lazy_sampling(seed in any::<u64>(), xs in proptest::collection::vec(0u64..4, 1..6)) {
        // Fresh points answer uniformly; repeated points repeat their answer.
        let cfg = OracleConfig::new(2, 4).unwrap();
        let f = CommitFunction::identity(2, 4).unwrap();
        let backend = SparseState::initial(cfg, RegisterLayout::empty(), xs.len()).unwrap();
        let mut sim = SimulatorS::new(backend, f, seed).unwrap();
        let mut seen = std::collections::BTreeMap::new();
        for &x in &xs {
            let dist = sim.s_ro_outcomes(x).unwrap();
            match seen.get(&x) {
                Some(&h) => {
                    let p: f64 = dist.iter().filter(|d| d.0 == h).map(|d| d.1).sum();
                    prop_assert!((p - 1.0).abs() < EPS);
                }
                None => {
                    prop_assert_eq!(dist.len(), 4);
                    prop_assert!(dist.iter().all(|d| (d.1 - 0.25).abs() < EPS));
                }
            }
            let h = sim.s_ro(x).unwrap();
            seen.entry(x).or_insert(h);
        }
    }

    #[test]
    fn backends_agree_on_random_classical_games(seed in any::<u64>(), ops in proptest::collection::vec((any::<bool>(), 0u64..3), 1..5)) {
        // Random interleavings of S.RO(x) and S.E(t) with the toy
        // encryption table: dense and sparse give the same outcome
        // distributions along the same sampled path.
        let cfg = OracleConfig::new(2, 2).unwrap();
        let f = CommitFunction::toy_encryption(2, 2, 3).unwrap();
        let mut dense = SimulatorS::new(OracleState::initial(cfg, RegisterLayout::empty(), 8).unwrap(), f.clone(), seed).unwrap();
        let mut sparse = SimulatorS::new(SparseState::initial(cfg, RegisterLayout::empty(), 8).unwrap(), f, seed).unwrap();
        let mut coins = SampledCoins::new(seed);
        for (is_query, v) in ops {
            if is_query {
                let x = v % 2;
                let a = dense.s_ro_outcomes(x).unwrap();
                let b = sparse.s_ro_outcomes(x).unwrap();
                prop_assert_eq!(a.len(), b.len());
                for (p, q) in a.iter().zip(&b) {
                    prop_assert_eq!(p.0, q.0);
                    prop_assert!((p.1 - q.1).abs() < EPS);
                }
                let h = a[coins.rng.weighted_index(&a.iter().map(|d| d.1).collect::<Vec<_>>())].0;
                dense.s_ro_force(x, h).unwrap();
                sparse.s_ro_force(x, h).unwrap();
            } else {
                let t = v % 8;
                let a = dense.s_e_outcomes(t).unwrap();
                let b = sparse.s_e_outcomes(t).unwrap();
                prop_assert_eq!(a.len(), b.len());
                for (p, q) in a.iter().zip(&b) {
                    prop_assert_eq!(p.0, q.0);
                    prop_assert!((p.1 - q.1).abs() < EPS);
                }
                let o = a[coins.rng.weighted_index(&a.iter().map(|d| d.1).collect::<Vec<_>>())].0;
                dense.s_e_force(t, o).unwrap();
                sparse.s_e_force(t, o).unwrap();
            }
        }
    }

    #[test]
    fn parallel_trivial_probability_is_a_power(c in 1usize..5, k in 1usize..5, r in 1u32..4) {
        let spec = SigmaSpec {
            ell: c,
            challenges: (0..c).map(|i| vec![i]).collect(),
            message_bits: 1,
            randomness_bits: 0,
            verifier: Verifier::Table { accept: vec![] },
        };
        let access = AccessStructure::Threshold { k };
        let p = p_trivial(&spec, &access).unwrap();
        prop_assert_eq!(p, Ratio::new((k - 1).min(c) as u64, c as u64));
        prop_assert_eq!(p_trivial_parallel(&spec, &access, r).unwrap(), ratio_pow(p, r).unwrap());
    }

    #[test]
    fn share_map_is_a_bijection(bits in 1u32..12, v in any::<u64>()) {
        let toy = XorShareProtocol::new(bits, 0);
        let v = v & ((1 << bits) - 1);
        prop_assert_eq!(toy.l_inverse(toy.l_map(v)), v);
        prop_assert!(toy.l_map(v) < 1 << bits);
    }

    #[test]
    fn state_norm_is_preserved_by_unitaries(seed in any::<u64>()) {
        let layout = layout3();
        let mut rng = SimRng::new(seed);
        let amps: Vec<C64> = (0..layout.dim()).map(|_| C64::new(rng.gaussian(), rng.gaussian())).collect();
        let mut s = StateVector::new(layout, amps).unwrap();
        s.normalize();
        let u = random_unitary(6, &mut rng);
        s.apply_local(&u, &[1, 2]).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < EPS);
    }
}
