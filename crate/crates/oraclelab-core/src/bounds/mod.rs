//! Bound verification: every inequality of the simulator's analysis,
//! evaluated exactly at desk scale and reported as a [`BoundReport`].

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::linalg::TOLERANCE;

pub mod commutator;
pub mod interfaces;
pub mod queries;
pub mod theorem;

/// `40e²`, the constant of the collision bound (taken as given).
pub const COLLISION_CONSTANT: f64 = 40.0 * core::f64::consts::E * core::f64::consts::E;

fn pow2(n: u32) -> f64 {
    libm::exp2(n as f64)
}

/// `‖[F, Π^x]‖ ≤ 2^{-n/2}√(2Γ_x)`.
pub fn f_local_bound(n: u32, gamma_x: u64) -> f64 {
    libm::sqrt(2.0 * gamma_x as f64 / pow2(n))
}

/// `‖[O^x, Π^x]‖, ‖[O^x, Π^∅]‖ ≤ 2·2^{-n/2}√(2Γ_x)`.
pub fn query_local_bound(n: u32, gamma_x: u64) -> f64 {
    2.0 * f_local_bound(n, gamma_x)
}

/// `‖[O_XYD, M_DP]‖ ≤ 8·2^{-n/2}√(2Γ_R)`.
pub fn main_commutator_bound(n: u32, gamma: u64) -> f64 {
    8.0 * f_local_bound(n, gamma)
}

/// Search bound `152(q+1)²Γ_R/2^n`.
pub fn search_bound(n: u32, q: usize, gamma: u64) -> f64 {
    152.0 * ((q + 1) * (q + 1)) as f64 * gamma as f64 / pow2(n)
}

/// Hard-property bound `128q²Γ_R/2^n`.
pub fn hard_property_bound(n: u32, q: usize, gamma_r: u64) -> f64 {
    128.0 * (q * q) as f64 * gamma_r as f64 / pow2(n)
}

/// Hard-collision bound `(40e²(q+ℓ+1)³Γ'+2)/2^n`; with `in_run` the
/// openings are among the adversary's own queries and the bound uses
/// `(q+1)³`.
pub fn hard_collision_bound(n: u32, q: usize, ell: usize, gamma_prime: u64, in_run: bool) -> f64 {
    let k = if in_run { q + 1 } else { q + ell + 1 } as f64;
    (COLLISION_CONSTANT * k * k * k * gamma_prime as f64 + 2.0) / pow2(n)
}

/// Collision-finding bound `40e²q²(q+1)Γ'/2^n`.
pub fn collision_bound(n: u32, q: usize, gamma_prime: u64) -> f64 {
    let q = q as f64;
    COLLISION_CONSTANT * q * q * (q + 1.0) * gamma_prime as f64 / pow2(n)
}

/// Almost-commutativity of `S.E` and `S.RO`: `8√(2Γ/2^n)`.
pub fn almost_commute_bound(n: u32, gamma: u64) -> f64 {
    8.0 * f_local_bound(n, gamma)
}

/// Two-round early extraction, distance: `8(q₂+1)√(2Γ/2^n)`.
pub fn two_round_distance_bound(n: u32, q2: usize, gamma: u64) -> f64 {
    (q2 + 1) as f64 * almost_commute_bound(n, gamma)
}

/// Two-round early extraction, mismatch:
/// `8(q₂+1)√(2Γ/2^n) + (40e²(q+2)³Γ'+2)/2^n` with `q = q₁ + q₂`.
pub fn two_round_mismatch_bound(n: u32, q: usize, q2: usize, gamma: u64, gamma_prime: u64) -> f64 {
    two_round_distance_bound(n, q2, gamma) + hard_collision_bound(n, q, 1, gamma_prime, false)
}

/// Multi-round early extraction, distance: `8ℓ(q+ℓ)√(2Γ/2^n)`.
pub fn multi_round_distance_bound(n: u32, q: usize, ell: usize, gamma: u64) -> f64 {
    (ell * (q + ell)) as f64 * almost_commute_bound(n, gamma)
}

/// Multi-round early extraction, mismatch:
/// `8ℓ(q+1)√(2Γ/2^n) + (40e²(q+ℓ+1)³Γ'+2)/2^n`.
pub fn multi_round_mismatch_bound(
    n: u32,
    q: usize,
    ell: usize,
    gamma: u64,
    gamma_prime: u64,
) -> f64 {
    (ell * (q + 1)) as f64 * almost_commute_bound(n, gamma)
        + hard_collision_bound(n, q, ell, gamma_prime, false)
}

/// Extract-then-query failure `2·2^{-n}Γ(f)`.
pub fn extract_then_query_bound(n: u32, gamma: u64) -> f64 {
    2.0 * gamma as f64 / pow2(n)
}

/// Query-then-extract failure `2·2^{-n}`.
pub fn query_then_extract_bound(n: u32) -> f64 {
    2.0 / pow2(n)
}

/// One measured quantity against its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub experiment: String,
    /// Relation, function, adversary or backend the row refers to.
    pub label: String,
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u64,
    pub gamma: u64,
    pub q: usize,
    pub ell: usize,
    pub measured: f64,
    pub bound: f64,
    pub satisfied: bool,
    /// False when `measured` is a Monte-Carlo estimate.
    pub exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Wall-clock time; filled in by the runner only when timing is requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

/// The parameter columns of a report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    pub n: u32,
    pub m: u64,
    pub gamma: u64,
    pub q: usize,
    pub ell: usize,
}

impl BoundReport {
    pub fn new(
        experiment: impl Into<String>,
        label: impl Into<String>,
        p: Params,
        measured: f64,
        bound: f64,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            label: label.into(),
            n: p.n,
            m: p.m,
            gamma: p.gamma,
            q: p.q,
            ell: p.ell,
            measured,
            bound,
            satisfied: measured <= bound + TOLERANCE,
            exact: true,
            std_error: None,
            note: None,
            runtime_ms: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn sampled(mut self, std_error: f64) -> Self {
        self.exact = false;
        self.std_error = Some(std_error);
        self
    }

    /// True when the bound is at least 1, so the inequality says nothing
    /// about a probability or trace distance.
    pub fn vacuous(&self) -> bool {
        self.bound >= 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas_at_reference_points() {
        assert!((f_local_bound(1, 1) - 1.0).abs() < 1e-15);
        assert!((main_commutator_bound(1, 1) - 8.0).abs() < 1e-15);
        assert!((query_local_bound(2, 4) - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!((search_bound(3, 1, 1) - 76.0).abs() < 1e-12);
        assert!((search_bound(6, 0, 1) - 152.0 / 64.0).abs() < 1e-12);
        assert!((hard_collision_bound(3, 0, 1, 0, false) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn satisfied_uses_shared_tolerance() {
        let p = Params {
            n: 1,
            m: 2,
            ..Default::default()
        };
        assert!(BoundReport::new("e", "l", p.clone(), 1e-10, 0.0).satisfied);
        assert!(!BoundReport::new("e", "l", p, 1e-8, 0.0).satisfied);
    }
}
