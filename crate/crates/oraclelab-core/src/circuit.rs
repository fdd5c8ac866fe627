//! Adversary circuits as data, and their exact execution.
//!
//! A circuit names its registers, then lists steps: standard gates,
//! explicit unitaries, oracle queries and computational-basis
//! measurements. Execution branches on every measurement outcome, so the
//! result is the exact output distribution rather than a sample.
//!
//! The output of a run is the record of explicit measurements followed by
//! an implicit final measurement of every register.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::OracleBackend;
use crate::coins::total_variation;
use crate::error::{Error, Result};
use crate::linalg::{
    fourier, random_unitary, walsh_hadamard, Matrix, RegisterLayout, StateVector, C64, ONE,
    TOLERANCE,
};
use crate::oracle::{FunctionTable, OracleConfig, OracleState};
use crate::rng::SimRng;
use crate::sparse::SparseState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterSpec {
    pub label: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    /// Walsh-Hadamard on power-of-two dimensions, Fourier transform otherwise.
    Hadamard { target: String },
    /// Complements every bit: `|v⟩ ↦ |d − 1 − v⟩`.
    Flip { target: String },
    /// Flip on `target` when `control` is non-zero.
    ControlledFlip { control: String, target: String },
    /// `|v⟩ ↦ e^{iθv}|v⟩`.
    Phase { target: String, theta: f64 },
    /// Explicit unitary; entries are `[re, im]`, row-major over `targets`.
    Unitary {
        targets: Vec<String>,
        matrix: Vec<Vec<[f64; 2]>>,
    },
    /// Superposition oracle query on input register `x`, output register `y`.
    Query { x: String, y: String },
    Measure {
        targets: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub name: String,
    pub n: u32,
    pub domain: u64,
    pub registers: Vec<RegisterSpec>,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug)]
pub enum Op {
    Local {
        matrix: Matrix,
        positions: Vec<usize>,
    },
    Query {
        x: usize,
        y: usize,
    },
    Measure {
        positions: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
pub struct CompiledCircuit {
    pub name: String,
    pub config: OracleConfig,
    pub layout: RegisterLayout,
    pub ops: Vec<Op>,
}

impl CompiledCircuit {
    pub fn queries(&self) -> usize {
        self.ops
            .iter()
            .filter(|o| matches!(o, Op::Query { .. }))
            .count()
    }

    /// Fresh backend for this circuit; the sparse budget is the circuit's
    /// query count.
    pub fn backend<B: OracleBackend>(&self) -> Result<B> {
        B::initial(self.config, self.layout.clone(), self.queries())
    }

    pub fn dense_backend(&self) -> Result<OracleState> {
        OracleState::with_adversary(self.config, self.layout.clone())
    }

    /// Sparse backend with a query budget equal to the circuit's query count.
    pub fn sparse_backend(&self) -> SparseState {
        SparseState::new(self.config, self.layout.clone(), self.queries())
    }
}

fn flip_matrix(d: usize) -> Matrix {
    let mut m = Matrix::zeros(d, d);
    for v in 0..d {
        m[(d - 1 - v, v)] = ONE;
    }
    m
}

impl Circuit {
    pub fn compile(&self) -> Result<CompiledCircuit> {
        let config = OracleConfig::new(self.n, self.domain)?;
        let layout = RegisterLayout::new(self.registers.iter().map(|r| (r.label.clone(), r.dim)))?;
        let pos = |label: &String| layout.position(label);
        let dim = |p: usize| layout.registers()[p].dim;
        let mut ops = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            let op = match step {
                Step::Hadamard { target } => {
                    let p = pos(target)?;
                    let d = dim(p);
                    let matrix = if d.is_power_of_two() {
                        walsh_hadamard(d.trailing_zeros())
                    } else {
                        fourier(d)
                    };
                    Op::Local {
                        matrix,
                        positions: vec![p],
                    }
                }
                Step::Flip { target } => {
                    let p = pos(target)?;
                    Op::Local {
                        matrix: flip_matrix(dim(p)),
                        positions: vec![p],
                    }
                }
                Step::ControlledFlip { control, target } => {
                    let (c, t) = (pos(control)?, pos(target)?);
                    if c == t {
                        return Err(Error::MalformedCircuit(
                            "control and target coincide".into(),
                        ));
                    }
                    let (dc, dt) = (dim(c), dim(t));
                    let mut matrix = Matrix::identity(dc * dt, dc * dt);
                    let f = flip_matrix(dt);
                    for v in 1..dc {
                        matrix.view_mut((v * dt, v * dt), (dt, dt)).copy_from(&f);
                    }
                    Op::Local {
                        matrix,
                        positions: vec![c, t],
                    }
                }
                Step::Phase { target, theta } => {
                    let p = pos(target)?;
                    let d = dim(p);
                    let matrix = Matrix::from_fn(d, d, |i, j| {
                        if i == j {
                            C64::from_polar(1.0, theta * i as f64)
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    });
                    Op::Local {
                        matrix,
                        positions: vec![p],
                    }
                }
                Step::Unitary { targets, matrix } => {
                    let positions = targets.iter().map(pos).collect::<Result<Vec<_>>>()?;
                    let d: usize = positions.iter().map(|&p| dim(p)).product();
                    if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            found: matrix.len(),
                        });
                    }
                    let m =
                        Matrix::from_fn(d, d, |i, j| C64::new(matrix[i][j][0], matrix[i][j][1]));
                    let dev = (m.adjoint() * &m - Matrix::identity(d, d)).norm();
                    if !dev.is_finite() || dev > TOLERANCE {
                        return Err(Error::MalformedCircuit(alloc::format!(
                            "matrix on {targets:?} is not unitary"
                        )));
                    }
                    Op::Local {
                        matrix: m,
                        positions,
                    }
                }
                Step::Query { x, y } => {
                    let (xp, yp) = (pos(x)?, pos(y)?);
                    if xp == yp || dim(xp) as u64 > self.domain || dim(yp) != config.y_dim() {
                        return Err(Error::MalformedCircuit(alloc::format!(
                            "query registers {x}, {y} do not fit the oracle"
                        )));
                    }
                    Op::Query { x: xp, y: yp }
                }
                Step::Measure { targets, .. } => Op::Measure {
                    positions: targets.iter().map(pos).collect::<Result<Vec<_>>>()?,
                },
            };
            ops.push(op);
        }
        Ok(CompiledCircuit {
            name: self.name.clone(),
            config,
            layout,
            ops,
        })
    }
}

/// One leaf of a circuit's measurement tree.
#[derive(Clone, Debug)]
pub struct Branch<B> {
    pub probability: f64,
    pub record: Vec<usize>,
    pub state: B,
}

/// Runs `circuit` from `initial`, branching on every explicit measurement.
pub fn execute<B: OracleBackend>(circuit: &CompiledCircuit, initial: B) -> Result<Vec<Branch<B>>> {
    let mut out = Vec::new();
    let mut stack = vec![(
        0usize,
        Branch {
            probability: 1.0,
            record: Vec::new(),
            state: initial,
        },
    )];
    while let Some((mut pc, mut br)) = stack.pop() {
        loop {
            match circuit.ops.get(pc) {
                None => {
                    out.push(br);
                    break;
                }
                Some(Op::Local { matrix, positions }) => {
                    br.state.apply_adversary(matrix, positions)?
                }
                Some(Op::Query { x, y }) => br.state.quantum_query(*x, *y)?,
                Some(Op::Measure { positions }) => {
                    let dist = br.state.measure_distribution(positions)?;
                    for (values, p) in dist.into_iter().rev() {
                        let mut child = br.clone();
                        child.state.measure_collapse(positions, &values)?;
                        child.probability *= p;
                        child.record.extend(values);
                        stack.push((pc + 1, child));
                    }
                    break;
                }
            }
            pc += 1;
        }
    }
    Ok(out)
}

/// Joint distribution of measurement records and the final measurement
/// of every register.
pub fn output_distribution<B: OracleBackend>(
    branches: &[Branch<B>],
) -> Result<BTreeMap<Vec<usize>, f64>> {
    let mut out = BTreeMap::new();
    for br in branches {
        let all: Vec<usize> = (0..br.state.adversary_layout().len()).collect();
        for (values, p) in br.state.measure_distribution(&all)? {
            let mut key = br.record.clone();
            key.extend(values);
            *out.entry(key).or_insert(0.0) += br.probability * p;
        }
    }
    Ok(out)
}

/// Largest number of functions averaged over by [`reference_distribution`].
pub const REFERENCE_FUNCTION_LIMIT: u64 = 1 << 16;

/// Output distribution under a uniformly random classical function,
/// computed by running the circuit with the standard oracle of every
/// function `X → {0,1}^n` and averaging.
pub fn reference_distribution(circuit: &CompiledCircuit) -> Result<BTreeMap<Vec<usize>, f64>> {
    let count = FunctionTable::count(circuit.config)
        .filter(|&c| c <= REFERENCE_FUNCTION_LIMIT)
        .ok_or(Error::SearchTooLarge)?;
    let mut out = BTreeMap::new();
    let digits0 = vec![0usize; circuit.layout.len()];
    let start = StateVector::basis(circuit.layout.clone(), &digits0)?;
    let all: Vec<usize> = (0..circuit.layout.len()).collect();
    for index in 0..count {
        let h = FunctionTable::nth(circuit.config, index);
        let mut stack = vec![(0usize, 1.0f64, Vec::<usize>::new(), start.clone())];
        while let Some((mut pc, prob, record, mut psi)) = stack.pop() {
            loop {
                match circuit.ops.get(pc) {
                    None => {
                        let sub = circuit.layout.sub_layout(&all);
                        for (i, p) in psi.marginal(&all).into_iter().enumerate() {
                            if p > crate::coins::PROBABILITY_FLOOR {
                                let mut key = record.clone();
                                key.extend(sub.digits(i));
                                *out.entry(key).or_insert(0.0) += prob * p / count as f64;
                            }
                        }
                        break;
                    }
                    Some(Op::Local { matrix, positions }) => psi.apply_local(matrix, positions)?,
                    Some(Op::Query { x, y }) => {
                        let xd = circuit.layout.registers()[*x].dim;
                        psi.apply_local(&h.standard_unitary(xd), &[*x, *y])?;
                    }
                    Some(Op::Measure { positions }) => {
                        let sub = circuit.layout.sub_layout(positions);
                        for (i, p) in psi.marginal(positions).into_iter().enumerate() {
                            if p > crate::coins::PROBABILITY_FLOOR {
                                let values = sub.digits(i);
                                let mut child = psi.clone();
                                child.project(positions, &values);
                                child.normalize();
                                let mut rec = record.clone();
                                rec.extend(values);
                                stack.push((pc + 1, prob * p, rec, child));
                            }
                        }
                        break;
                    }
                }
                pc += 1;
            }
        }
    }
    Ok(out)
}

/// Total variation between the circuit's output under `backend` and under
/// the reference random oracle.
pub fn indistinguishability_gap<B: OracleBackend>(
    circuit: &CompiledCircuit,
    backend: B,
) -> Result<f64> {
    let ours = output_distribution(&execute(circuit, backend)?)?;
    Ok(total_variation(&ours, &reference_distribution(circuit)?))
}

fn reg(label: &str, dim: usize) -> RegisterSpec {
    RegisterSpec {
        label: label.into(),
        dim,
    }
}

fn h(t: &str) -> Step {
    Step::Hadamard { target: t.into() }
}

fn q() -> Step {
    Step::Query {
        x: "X".into(),
        y: "Y".into(),
    }
}

fn m(ts: &[&str]) -> Step {
    Step::Measure {
        targets: ts.iter().map(|s| (*s).into()).collect(),
        label: None,
    }
}

fn unitary_step(targets: &[&str], u: &Matrix) -> Step {
    let matrix = (0..u.nrows())
        .map(|i| {
            (0..u.ncols())
                .map(|j| [u[(i, j)].re, u[(i, j)].im])
                .collect()
        })
        .collect();
    Step::Unitary {
        targets: targets.iter().map(|s| (*s).into()).collect(),
        matrix,
    }
}

/// Hand-written circuits covering classical, superposition, repeated,
/// uncomputed and phase-kickback queries.
pub fn handcrafted_suite() -> Vec<Circuit> {
    let mut out = Vec::new();
    for &(n, m_dom) in &[(1u32, 2u64), (2, 3)] {
        let y = 1usize << n;
        let base = |name: &str, steps: Vec<Step>, extra: bool| {
            let mut registers = vec![reg("X", m_dom as usize), reg("Y", y)];
            if extra {
                registers.push(reg("W", 2));
            }
            Circuit {
                name: alloc::format!("{name}-n{n}-m{m_dom}"),
                n,
                domain: m_dom,
                registers,
                steps,
            }
        };
        out.push(base("classical-query", vec![q(), m(&["Y"])], false));
        out.push(base(
            "repeat-classical",
            vec![
                q(),
                m(&["Y"]),
                Step::Flip { target: "Y".into() },
                q(),
                m(&["Y"]),
            ],
            false,
        ));
        out.push(base(
            "two-inputs",
            vec![
                q(),
                m(&["Y"]),
                Step::Flip { target: "X".into() },
                q(),
                m(&["X", "Y"]),
            ],
            false,
        ));
        out.push(base("superposition-query", vec![h("X"), q()], false));
        out.push(base(
            "phase-kickback",
            vec![
                Step::Flip { target: "Y".into() },
                h("Y"),
                h("X"),
                q(),
                h("X"),
            ],
            false,
        ));
        out.push(base(
            "compute-uncompute",
            vec![h("X"), h("Y"), q(), q(), h("Y")],
            false,
        ));
        out.push(base(
            "three-queries",
            vec![
                h("X"),
                q(),
                Step::Phase {
                    target: "Y".into(),
                    theta: 0.7,
                },
                h("Y"),
                q(),
                h("X"),
                q(),
            ],
            false,
        ));
        out.push(base(
            "measure-between",
            vec![h("X"), q(), m(&["X"]), h("Y"), q(), h("Y")],
            false,
        ));
        out.push(base(
            "entangled-work",
            vec![
                h("W"),
                Step::ControlledFlip {
                    control: "W".into(),
                    target: "X".into(),
                },
                q(),
                h("W"),
            ],
            true,
        ));
        out.push(base(
            "search-iteration",
            vec![
                h("X"),
                Step::Flip { target: "Y".into() },
                h("Y"),
                q(),
                h("X"),
                Step::Phase {
                    target: "X".into(),
                    theta: 1.3,
                },
                h("X"),
            ],
            false,
        ));
        out.push(base(
            "input-only-measure",
            vec![h("X"), h("Y"), q(), m(&["X"])],
            false,
        ));
        out.push(base(
            "controlled-uncompute",
            vec![
                h("X"),
                q(),
                Step::ControlledFlip {
                    control: "Y".into(),
                    target: "W".into(),
                },
                q(),
                m(&["W"]),
            ],
            true,
        ));
    }
    out
}

/// Seeded random circuits: random unitaries on random register subsets,
/// up to three queries and occasional mid-circuit measurements.
pub fn random_suite(count: usize, seed: u64) -> Vec<Circuit> {
    let master = SimRng::new(seed);
    (0..count)
        .map(|i| {
            let mut rng = master.split(i as u64);
            let n = 1 + rng.below(2) as u32;
            let domain = 2 + rng.below(2);
            let x_dim = 2 + rng.below(domain - 1) as usize;
            let mut registers = vec![reg("X", x_dim), reg("Y", 1 << n)];
            let work = rng.below(2) == 1;
            if work {
                registers.push(reg("W", 2));
            }
            let labels: Vec<&str> = registers
                .iter()
                .map(|r| r.label.as_str())
                .collect::<Vec<_>>();
            let dims: Vec<usize> = registers.iter().map(|r| r.dim).collect();
            let queries = 1 + rng.below(3) as usize;
            let mut steps = Vec::new();
            for k in 0..queries {
                let gates = 1 + rng.below(2);
                for _ in 0..gates {
                    let a = rng.below(labels.len() as u64) as usize;
                    let pair = rng.below(2) == 1 && labels.len() > 1;
                    let mut targets = vec![a];
                    if pair {
                        let b =
                            (a + 1 + rng.below(labels.len() as u64 - 1) as usize) % labels.len();
                        targets.push(b);
                    }
                    let d: usize = targets.iter().map(|&t| dims[t]).product();
                    let u = random_unitary(d, &mut rng);
                    let names: Vec<&str> = targets.iter().map(|&t| labels[t]).collect();
                    steps.push(unitary_step(&names, &u));
                }
                steps.push(q());
                if k + 1 < queries && rng.below(4) == 0 {
                    steps.push(m(&[labels[rng.below(labels.len() as u64) as usize]]));
                }
            }
            let u = random_unitary(dims[0] * dims[1], &mut rng);
            steps.push(unitary_step(&["X", "Y"], &u));
            Circuit {
                name: alloc::format!("random-{i}"),
                n,
                domain,
                registers,
                steps,
            }
        })
        .collect()
}

/// The bundled indistinguishability suite: 24 handcrafted circuits plus 32
/// random ones.
pub fn builtin_suite() -> Vec<Circuit> {
    let mut out = handcrafted_suite();
    out.extend(random_suite(32, 0x5eed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_large_enough_and_within_limits() {
        let suite = builtin_suite();
        assert!(suite.len() >= 50);
        for c in &suite {
            let cc = c.compile().unwrap();
            assert!(c.n <= 2 && c.domain <= 3 && cc.queries() <= 3, "{}", c.name);
        }
    }

    #[test]
    fn compressed_oracle_is_indistinguishable_on_handcrafted_circuits() {
        for c in handcrafted_suite() {
            let cc = c.compile().unwrap();
            let gap = indistinguishability_gap(&cc, cc.dense_backend().unwrap()).unwrap();
            assert!(gap <= TOLERANCE, "{}: {gap}", c.name);
        }
    }

    #[test]
    fn sparse_backend_is_indistinguishable_on_random_circuits() {
        for c in random_suite(8, 11) {
            let cc = c.compile().unwrap();
            let gap = indistinguishability_gap(&cc, cc.sparse_backend()).unwrap();
            assert!(gap <= TOLERANCE, "{}: {gap}", c.name);
        }
    }

    #[test]
    fn classical_query_response_is_uniform() {
        let c = &handcrafted_suite()[0];
        let cc = c.compile().unwrap();
        let dist =
            output_distribution(&execute(&cc, cc.dense_backend().unwrap()).unwrap()).unwrap();
        assert_eq!(dist.len(), 2);
        assert!(dist.values().all(|&p| (p - 0.5).abs() < TOLERANCE));
    }

    #[test]
    fn non_unitary_matrix_is_rejected() {
        let c = Circuit {
            name: "bad".into(),
            n: 1,
            domain: 2,
            registers: vec![reg("X", 2), reg("Y", 2)],
            steps: vec![Step::Unitary {
                targets: vec!["X".into()],
                matrix: vec![vec![[1.0, 0.0], [1.0, 0.0]], vec![[0.0, 0.0], [1.0, 0.0]]],
            }],
        };
        assert!(matches!(c.compile(), Err(Error::MalformedCircuit(_))));
    }

    #[test]
    fn oversized_query_register_is_rejected() {
        let c = Circuit {
            name: "bad".into(),
            n: 1,
            domain: 2,
            registers: vec![reg("X", 3), reg("Y", 2)],
            steps: vec![q()],
        };
        assert!(c.compile().is_err());
    }
}
