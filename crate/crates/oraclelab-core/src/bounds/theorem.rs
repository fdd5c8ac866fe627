//! The simulator's properties checked exactly on a grid of small
//! configurations: indistinguishability (1), commutation of independent
//! queries (2.a, 2.b, 2.c), idempotence (3.a, 3.b) and the two
//! consistency bounds between `S.E` and `S.RO` (4.a, 4.b).
//!
//! Each property is evaluated on every member of two ensembles: the fresh
//! state, and the branches of a short prior game (random unitaries on two
//! query-register pairs, one superposition query, one classical query on
//! the last input). The adversary memory is `[X, Y, X2, Y2]`.
//!
//! Exact properties are measured from amplitude differences rather than
//! overlaps, so rounding stays at the level of the amplitudes: the report
//! is `½ Σ_k (‖a_k‖ + ‖b_k‖)·‖a_k − b_k‖`, an upper bound on the trace
//! distance between the two cq-states with sub-normalized branches `a_k`, `b_k`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    almost_commute_bound, extract_then_query_bound, query_then_extract_bound, BoundReport, Params,
};
use crate::backend::OracleBackend;
use crate::circuit::{builtin_suite, indistinguishability_gap};
use crate::error::Result;
use crate::extraction::ExtractionOutcome;
use crate::linalg::{pure_pair_trace_norm, random_unitary, RegisterLayout};
use crate::oracle::OracleConfig;
use crate::relation::CommitFunction;
use crate::rng::SimRng;

/// Query budget for the sparse backend: two prior queries plus at most
/// two per property.
pub const THEOREM_QUERY_CAP: usize = 6;

/// Largest `|T|²` for which 2.b runs over all pairs.
pub const ALL_PAIRS_LIMIT: usize = 64;

const X: usize = 0;
const Y: usize = 1;
const X2: usize = 2;
const Y2: usize = 3;

/// One interface call of a two-call sequence.
#[derive(Clone, Copy, Debug)]
enum Call {
    Ro(u64),
    Extract(u64),
    Query(usize, usize),
}

/// Sub-normalized branches after a sequence of calls, keyed by outcomes
/// listed in call order (`S.E` outcomes encoded, `0` for quantum queries).
type Branches<B> = BTreeMap<Vec<u64>, (f64, B)>;

fn run_calls<B: OracleBackend>(
    state: &B,
    f: &CommitFunction,
    calls: &[Call],
) -> Result<Branches<B>> {
    let mut frontier: Vec<(Vec<u64>, f64, B)> = vec![(Vec::new(), 1.0, state.clone())];
    for call in calls {
        let mut next = Vec::new();
        for (key, p, st) in frontier {
            match *call {
                Call::Query(a, b) => {
                    let mut s = st;
                    s.quantum_query(a, b)?;
                    let mut k = key;
                    k.push(0);
                    next.push((k, p, s));
                }
                Call::Ro(x) => {
                    for (h, ph) in st.ro_distribution(x)? {
                        let mut s = st.clone();
                        s.ro_collapse(x, h)?;
                        let mut k = key.clone();
                        k.push(h);
                        next.push((k, p * ph, s));
                    }
                }
                Call::Extract(t) => {
                    let rel = f.relation_for(t);
                    for (o, po) in st.extract_distribution(&rel)? {
                        let mut s = st.clone();
                        s.extract_collapse(&rel, o)?;
                        let mut k = key.clone();
                        k.push(o.encode());
                        next.push((k, p * po, s));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(frontier.into_iter().map(|(k, p, s)| (k, (p, s))).collect())
}

/// Both orders of two calls, with the second order's keys permuted back
/// to the first order's call positions.
fn both_orders<B: OracleBackend>(
    state: &B,
    f: &CommitFunction,
    a: Call,
    b: Call,
) -> Result<(Branches<B>, Branches<B>)> {
    let ab = run_calls(state, f, &[a, b])?;
    let ba = run_calls(state, f, &[b, a])?
        .into_iter()
        .map(|(mut k, v)| {
            k.reverse();
            (k, v)
        })
        .collect();
    Ok((ab, ba))
}

/// `‖√p·ψ − √q·φ‖` from the dense amplitudes.
fn amplitude_distance<B: OracleBackend>(p: f64, a: &B, q: f64, b: &B) -> Result<f64> {
    let da = a.to_dense()?;
    let db = b.to_dense()?;
    let (sp, sq) = (libm::sqrt(p), libm::sqrt(q));
    let s: f64 = da
        .state()
        .amplitudes()
        .iter()
        .zip(db.state().amplitudes())
        .map(|(x, y)| (x * sp - y * sq).norm_sqr())
        .sum();
    Ok(libm::sqrt(s))
}

/// Upper bound `½ Σ_k (‖a_k‖ + ‖b_k‖)‖a_k − b_k‖` on the cq-state trace distance.
fn exact_gap<B: OracleBackend>(a: &Branches<B>, b: &Branches<B>) -> Result<f64> {
    let mut total = 0.0;
    for (k, (pa, sa)) in a {
        total += match b.get(k) {
            Some((pb, sb)) => {
                (libm::sqrt(*pa) + libm::sqrt(*pb)) * amplitude_distance(*pa, sa, *pb, sb)?
            }
            None => 2.0 * pa,
        };
    }
    for (k, (pb, _)) in b {
        if !a.contains_key(k) {
            total += 2.0 * pb;
        }
    }
    Ok(0.5 * total)
}

/// Exact cq-state trace distance from overlaps.
fn overlap_gap<B: OracleBackend>(a: &Branches<B>, b: &Branches<B>) -> Result<f64> {
    let mut total = 0.0;
    for (k, (pa, sa)) in a {
        total += match b.get(k) {
            Some((pb, sb)) => pure_pair_trace_norm(*pa, *pb, sa.inner(sb)? * libm::sqrt(pa * pb)),
            None => *pa,
        };
    }
    for (k, (pb, _)) in b {
        if !a.contains_key(k) {
            total += pb;
        }
    }
    Ok(0.5 * total)
}

/// Applying a call once vs twice: the twice-branches whose two outcomes
/// agree are compared with the once-branches, and the rest is added as mass.
fn idempotence_gap<B: OracleBackend>(state: &B, f: &CommitFunction, call: Call) -> Result<f64> {
    let once = run_calls(state, f, &[call])?;
    let twice = run_calls(state, f, &[call, call])?;
    let mut same: Branches<B> = BTreeMap::new();
    let mut stray = 0.0;
    for (k, v) in twice {
        if k[0] == k[1] {
            same.insert(vec![k[0]], v);
        } else {
            stray += v.0;
        }
    }
    Ok(exact_gap(&once, &same)? + 0.5 * stray)
}

fn adversary_layout(cfg: OracleConfig) -> Result<RegisterLayout> {
    let m = cfg.domain as usize;
    RegisterLayout::new([("X", m), ("Y", cfg.y_dim()), ("X2", m), ("Y2", cfg.y_dim())])
}

/// The two ensembles: the fresh state, and the branches of the prior game.
pub fn prior_ensembles<B: OracleBackend>(
    cfg: OracleConfig,
    seed: u64,
) -> Result<Vec<Vec<(f64, B)>>> {
    let layout = adversary_layout(cfg)?;
    let fresh = B::initial(cfg, layout.clone(), THEOREM_QUERY_CAP)?;
    let mut rng = SimRng::new(seed);
    let pair = cfg.domain as usize * cfg.y_dim();
    let mut st = fresh.clone();
    st.apply_adversary(&random_unitary(pair, &mut rng), &[X, Y])?;
    st.apply_adversary(&random_unitary(pair, &mut rng), &[X2, Y2])?;
    st.quantum_query(X, Y)?;
    let last = cfg.domain - 1;
    let mut branches = Vec::new();
    for (h, p) in st.ro_distribution(last)? {
        let mut b = st.clone();
        b.ro_collapse(last, h)?;
        branches.push((p, b));
    }
    Ok(vec![vec![(1.0, fresh)], branches])
}

fn t_pairs(codomain: u64, seed: u64) -> Vec<(u64, u64)> {
    let c = codomain as usize;
    if c * c <= ALL_PAIRS_LIMIT {
        return (0..codomain)
            .flat_map(|a| (0..codomain).map(move |b| (a, b)))
            .collect();
    }
    let mut rng = SimRng::new(seed);
    (0..ALL_PAIRS_LIMIT)
        .map(|_| (rng.below(codomain), rng.below(codomain)))
        .collect()
}

/// Measured values of properties 2.a through 4.b for one `f`, each the
/// worst case over ensembles (weighted within an ensemble for the
/// distance properties, per member for 4.a and 4.b).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PropertyValues {
    pub p2a: f64,
    pub p2b: f64,
    pub p2c: f64,
    pub p3a: f64,
    pub p3b: f64,
    pub p4a: f64,
    pub p4b: f64,
}

pub fn property_values<B: OracleBackend>(f: &CommitFunction, seed: u64) -> Result<PropertyValues> {
    let cfg = OracleConfig::new(f.n(), f.domain())?;
    let mut v = PropertyValues::default();
    let ts: Vec<u64> = (0..f.codomain()).collect();
    let pairs = t_pairs(f.codomain(), seed);
    let xs: Vec<u64> = (0..cfg.domain).collect();
    for ensemble in prior_ensembles::<B>(cfg, seed)? {
        let mut acc = PropertyValues::default();
        for (w, st) in &ensemble {
            // 2.a: independent quantum queries, classical queries on
            // distinct inputs, and repeated classical queries.
            let (ab, ba) = both_orders(st, f, Call::Query(X, Y), Call::Query(X2, Y2))?;
            let mut a = exact_gap(&ab, &ba)?;
            for &x in &xs {
                for &x2 in &xs {
                    if x != x2 {
                        let (ab, ba) = both_orders(st, f, Call::Ro(x), Call::Ro(x2))?;
                        a = a.max(exact_gap(&ab, &ba)?);
                    }
                }
                let rep = run_calls(st, f, &[Call::Ro(x), Call::Ro(x)])?;
                let differ: f64 = rep
                    .iter()
                    .filter(|(k, _)| k[0] != k[1])
                    .map(|(_, (p, _))| p)
                    .sum();
                a = a.max(differ);
            }
            acc.p2a += w * a;

            let mut b = 0.0f64;
            for &(t, t2) in &pairs {
                let (ab, ba) = both_orders(st, f, Call::Extract(t), Call::Extract(t2))?;
                b = b.max(exact_gap(&ab, &ba)?);
            }
            acc.p2b += w * b;

            let mut c = 0.0f64;
            let mut e3 = 0.0f64;
            let mut a4 = 0.0f64;
            for &t in &ts {
                let (ab, ba) = both_orders(st, f, Call::Extract(t), Call::Query(X2, Y2))?;
                c = c.max(overlap_gap(&ab, &ba)?);
                for &x in &xs {
                    let (ab, ba) = both_orders(st, f, Call::Extract(t), Call::Ro(x))?;
                    c = c.max(overlap_gap(&ab, &ba)?);
                }
                e3 = e3.max(idempotence_gap(st, f, Call::Extract(t))?);
                // 4.a: x̂ = S.E(t), then ĥ = S.RO(x̂).
                let rel = f.relation_for(t);
                let mut fail = 0.0;
                for (o, po) in st.extract_distribution(&rel)? {
                    if let ExtractionOutcome::Found(x) = o {
                        let mut s = st.clone();
                        s.extract_collapse(&rel, o)?;
                        let bad: f64 = s
                            .ro_distribution(x)?
                            .into_iter()
                            .filter(|&(h, _)| f.eval(x, h) != t)
                            .map(|d| d.1)
                            .sum();
                        fail += po * bad;
                    }
                }
                a4 = a4.max(fail);
            }
            acc.p2c += w * c;
            acc.p3b += w * e3;
            v.p4a = v.p4a.max(a4);

            let mut r3 = 0.0f64;
            let mut b4 = 0.0f64;
            for &x in &xs {
                r3 = r3.max(idempotence_gap(st, f, Call::Ro(x))?);
                // 4.b: h = S.RO(x), then S.E(f(x, h)) = ∅.
                let mut fail = 0.0;
                for (h, ph) in st.ro_distribution(x)? {
                    let mut s = st.clone();
                    s.ro_collapse(x, h)?;
                    let empty: f64 = s
                        .extract_distribution(&f.relation_for(f.eval(x, h)))?
                        .into_iter()
                        .filter(|d| d.0 == ExtractionOutcome::Empty)
                        .map(|d| d.1)
                        .sum();
                    fail += ph * empty;
                }
                b4 = b4.max(fail);
            }
            acc.p3a += w * r3;
            v.p4b = v.p4b.max(b4);
        }
        v.p2a = v.p2a.max(acc.p2a);
        v.p2b = v.p2b.max(acc.p2b);
        v.p2c = v.p2c.max(acc.p2c);
        v.p3a = v.p3a.max(acc.p3a);
        v.p3b = v.p3b.max(acc.p3b);
    }
    Ok(v)
}

/// Property 1: largest total variation between the backend and the
/// reference random oracle over the bundled circuits at `(n, M)`, with
/// the number of circuits used.
pub fn indistinguishability<B: OracleBackend>(n: u32, domain: u64) -> Result<(f64, usize)> {
    let mut worst = 0.0f64;
    let mut count = 0;
    for c in builtin_suite()
        .into_iter()
        .filter(|c| c.n == n && c.domain == domain)
    {
        let compiled = c.compile()?;
        worst = worst.max(indistinguishability_gap(
            &compiled,
            compiled.backend::<B>()?,
        )?);
        count += 1;
    }
    Ok((worst, count))
}

/// The eight reports for one `f`, given the property-1 value at its `(n, M)`.
pub fn property_reports<B: OracleBackend>(
    f: &CommitFunction,
    p1: (f64, usize),
    seed: u64,
) -> Result<Vec<BoundReport>> {
    let v = property_values::<B>(f, seed)?;
    let (n, g) = (f.n(), f.gamma());
    let label = format!("f={}", f.name());
    let p = Params {
        n,
        m: f.domain(),
        gamma: g,
        ..Default::default()
    };
    let r = |name: &str, measured: f64, bound: f64| {
        BoundReport::new(
            format!("property-{name}"),
            label.clone(),
            p.clone(),
            measured,
            bound,
        )
    };
    let upper = "upper bound on the cq-state trace distance from amplitude differences";
    Ok(vec![
        r("1", p1.0, 0.0).with_note(format!("max total variation over {} circuits", p1.1)),
        r("2a", v.p2a, 0.0).with_note(upper),
        r("2b", v.p2b, 0.0).with_note(upper),
        r("2c", v.p2c, almost_commute_bound(n, g)),
        r("3a", v.p3a, 0.0).with_note(upper),
        r("3b", v.p3b, 0.0).with_note(upper),
        r("4a", v.p4a, extract_then_query_bound(n, g)),
        r("4b", v.p4b, query_then_extract_bound(n)),
    ])
}

/// The full grid `n ∈ {1, 2}`, `M ∈ {2, 3}`, identity, toy-encryption and
/// constant `f`: eight reports per grid point.
pub fn theorem2_property_suite<B: OracleBackend>(seed: u64) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    for n in [1u32, 2] {
        for m in [2u64, 3] {
            let p1 = indistinguishability::<B>(n, m)?;
            for f in super::interfaces::bundled_functions(n, m, seed)? {
                out.extend(property_reports::<B>(&f, p1, seed)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleState;
    use crate::sparse::SparseState;
    use crate::TOLERANCE;

    #[test]
    fn exact_properties_vanish_at_n1() {
        let f = CommitFunction::identity(1, 2).unwrap();
        let v = property_values::<OracleState>(&f, 4).unwrap();
        for x in [v.p2a, v.p2b, v.p3a, v.p3b] {
            assert!(x <= TOLERANCE, "{v:?}");
        }
        assert!(v.p2c > 0.0 && v.p2c <= almost_commute_bound(1, 1));
        assert!(v.p4b <= query_then_extract_bound(1));
    }

    #[test]
    fn backends_give_the_same_values() {
        let f = CommitFunction::toy_encryption(1, 3, 2).unwrap();
        let a = property_values::<OracleState>(&f, 7).unwrap();
        let b = property_values::<SparseState>(&f, 7).unwrap();
        for (x, y) in [(a.p2c, b.p2c), (a.p4a, b.p4a), (a.p4b, b.p4b)] {
            assert!((x - y).abs() < TOLERANCE, "{a:?} {b:?}");
        }
        for x in [b.p2a, b.p2b, b.p3a, b.p3b] {
            assert!(x <= TOLERANCE);
        }
    }

    #[test]
    fn query_then_extract_at_fresh_state() {
        // From the fresh state the cell after h = S.RO(x) is F|h⟩, and
        // S.E(f(x, h)) = ∅ exactly when it is not h (identity f): 1 − (1 − 2^{-n})².
        let f = CommitFunction::identity(2, 2).unwrap();
        let cfg = OracleConfig::new(2, 2).unwrap();
        let fresh = &prior_ensembles::<OracleState>(cfg, 1).unwrap()[0][0].1;
        let mut s = fresh.clone();
        s.ro_collapse(0, 3).unwrap();
        let empty: f64 = s
            .extract_distribution(&f.relation_for(3))
            .unwrap()
            .into_iter()
            .filter(|d| d.0 == ExtractionOutcome::Empty)
            .map(|d| d.1)
            .sum();
        assert!((empty - (1.0 - 0.75f64 * 0.75)).abs() < TOLERANCE);
    }
}
