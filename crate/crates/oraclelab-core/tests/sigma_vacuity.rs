//! Where the online-extraction error term says something.

use oraclelab_core::sigma::{epsilon_simplified, run_sigma_experiment, Prover, XorShareProtocol};
use oraclelab_core::sparse::SparseState;

const Q_HONEST: usize = 4;

#[test]
fn epsilon_is_vacuous_at_sixteen_bits_and_not_from_nineteen() {
    // 34·ℓ·q/2^{n/2} + 2365·q³/2^n with ℓ = 3, q = 4.
    let by_hand = |n: i32| {
        408.0 / 2f64.powi(n / 2) * if n % 2 == 1 { 2f64.sqrt().recip() } else { 1.0 }
            + 151_360.0 / 2f64.powi(n)
    };
    for n in [16u32, 18, 19, 20, 24] {
        let e = epsilon_simplified(n, 3, Q_HONEST);
        assert!((e - by_hand(n as i32)).abs() < 1e-12, "n={n}: {e}");
        assert_eq!(e >= 1.0, n < 19, "n={n}: {e}");
    }
    // 408/256 + 151360/65536.
    assert_eq!(epsilon_simplified(16, 3, Q_HONEST), 3.903_320_312_5);
}

/// Fails: at n = 16 the inequality holds but ε exceeds 1, so it says
/// nothing about the extractor. Kept as a record; see the n = 20 check in
/// the acceptance suite.
#[test]
#[ignore = "epsilon is about 3.9 at n = 16; the bound is vacuous there"]
fn honest_extraction_bound_is_non_vacuous_at_sixteen_bits() {
    let r = run_sigma_experiment::<SparseState>(
        &Prover::Honest { witness: 11 },
        &XorShareProtocol::new(4, 4),
        16,
        Some(1000),
        1,
    )
    .unwrap();
    assert!(r.satisfied);
    assert!(!r.vacuous, "epsilon = {}", r.epsilon);
}
