//! Dense complex linear algebra over labeled multi-register spaces.
//!
//! Index convention: registers are ordered as declared in the
//! [`RegisterLayout`], and a basis index is the row-major (lexicographic)
//! combination of the per-register digits, so the last register varies
//! fastest. `A ⊗ B` therefore corresponds to the Kronecker product with `A`
//! acting on the earlier registers.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub type C64 = num_complex::Complex64;
pub type Matrix = DMatrix<C64>;

/// Shared absolute tolerance for every floating-point assertion.
pub const TOLERANCE: f64 = 1e-9;
/// Default cap on the total dimension of a layout.
pub const DEFAULT_DIM_CAP: usize = 1 << 22;
/// Largest side length for which norms use a full SVD.
pub const EXACT_SVD_MAX_DIM: usize = 1024;
/// Convergence threshold of the power iteration used above that size.
pub const POWER_ITERATION_THRESHOLD: f64 = 1e-12;
pub const POWER_ITERATION_MAX_STEPS: usize = 100_000;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub label: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    registers: Vec<Register>,
    dim: usize,
}

impl RegisterLayout {
    pub fn new<I, S>(registers: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        Self::with_cap(registers, DEFAULT_DIM_CAP)
    }

    pub fn with_cap<I, S>(registers: I, cap: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut regs: Vec<Register> = Vec::new();
        let mut dim: usize = 1;
        for (label, d) in registers {
            let label = label.into();
            if d == 0 {
                return Err(Error::ZeroDimension(label));
            }
            if regs.iter().any(|r| r.label == label) {
                return Err(Error::DuplicateRegister(label));
            }
            dim = dim
                .checked_mul(d)
                .filter(|&v| v <= cap)
                .ok_or(Error::CapExceeded { cap })?;
            regs.push(Register { label, dim: d });
        }
        Ok(Self {
            registers: regs,
            dim,
        })
    }

    /// The one-dimensional layout with no registers.
    pub fn empty() -> Self {
        Self {
            registers: Vec::new(),
            dim: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.registers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registers.is_empty()
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn dims(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.dim).collect()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.label == label)
            .ok_or_else(|| Error::UnknownRegister(label.to_string()))
    }

    /// Row-major strides: the last register has stride 1.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.registers.len()];
        for i in (0..self.registers.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.registers[i + 1].dim;
        }
        strides
    }

    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.registers.len()];
        for i in (0..self.registers.len()).rev() {
            let d = self.registers[i].dim;
            out[i] = index % d;
            index /= d;
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(self.registers.iter())
            .fold(0, |acc, (&d, r)| acc * r.dim + d)
    }

    /// Layout of the registers at `positions`, in that order.
    pub fn sub_layout(&self, positions: &[usize]) -> RegisterLayout {
        let registers: Vec<Register> = positions
            .iter()
            .map(|&p| self.registers[p].clone())
            .collect();
        let dim = registers.iter().map(|r| r.dim).product();
        RegisterLayout { registers, dim }
    }

    pub fn concat(&self, other: &RegisterLayout) -> Result<RegisterLayout> {
        Self::with_cap(
            self.registers
                .iter()
                .chain(other.registers.iter())
                .map(|r| (r.label.clone(), r.dim)),
            usize::MAX,
        )
    }

    pub fn positions(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            let p = self.position(l)?;
            if out.contains(&p) {
                return Err(Error::DuplicateRegister(l.to_string()));
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// Offsets (relative to a context base index) of every sub-index of the
/// registers at `positions`, plus the list of base indices with all those
/// digits equal to zero.
pub(crate) fn local_offsets(
    layout: &RegisterLayout,
    positions: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let strides = layout.strides();
    let sub = layout.sub_layout(positions);
    let mut offsets = Vec::with_capacity(sub.dim());
    for s in 0..sub.dim() {
        let d = sub.digits(s);
        offsets.push(d.iter().zip(positions).map(|(&v, &p)| v * strides[p]).sum());
    }
    let dims = layout.dims();
    let mut bases = Vec::with_capacity(layout.dim() / sub.dim().max(1));
    let mut digits = vec![0usize; dims.len()];
    let free: Vec<usize> = (0..dims.len()).filter(|i| !positions.contains(i)).collect();
    loop {
        bases.push(digits.iter().zip(strides.iter()).map(|(a, b)| a * b).sum());
        let mut k = free.len();
        loop {
            if k == 0 {
                return (offsets, bases);
            }
            k -= 1;
            let r = free[k];
            digits[r] += 1;
            if digits[r] < dims[r] {
                break;
            }
            digits[r] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    layout: RegisterLayout,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(layout: RegisterLayout, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: amplitudes.len(),
            });
        }
        Ok(Self { layout, amplitudes })
    }

    /// Computational basis state with the given per-register digits.
    pub fn basis(layout: RegisterLayout, digits: &[usize]) -> Result<Self> {
        if digits.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                found: digits.len(),
            });
        }
        for (d, r) in digits.iter().zip(layout.registers()) {
            if *d >= r.dim {
                return Err(Error::DimensionMismatch {
                    expected: r.dim,
                    found: *d,
                });
            }
        }
        let mut amplitudes = vec![ZERO; layout.dim()];
        amplitudes[layout.index_of(digits)] = ONE;
        Ok(Self { layout, amplitudes })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sqr())
    }

    /// Rescales to unit norm; returns the squared norm before rescaling.
    pub fn normalize(&mut self) -> f64 {
        let n2 = self.norm_sqr();
        if n2 > 0.0 {
            let s = 1.0 / libm::sqrt(n2);
            for a in &mut self.amplitudes {
                *a *= s;
            }
        }
        n2
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let layout = self.layout.concat(&other.layout)?;
        let mut amplitudes = Vec::with_capacity(layout.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        Ok(StateVector { layout, amplitudes })
    }

    /// Applies `op` (square, side = product of target dims) to the registers
    /// at `positions`, identity elsewhere.
    pub fn apply_local(&mut self, op: &Matrix, positions: &[usize]) -> Result<()> {
        let sub_dim: usize = positions
            .iter()
            .map(|&p| self.layout.registers()[p].dim)
            .product();
        if op.nrows() != sub_dim || op.ncols() != sub_dim {
            return Err(Error::DimensionMismatch {
                expected: sub_dim,
                found: op.nrows(),
            });
        }
        let (offsets, bases) = local_offsets(&self.layout, positions);
        let mut buf = vec![ZERO; sub_dim];
        for base in bases {
            for (k, off) in offsets.iter().enumerate() {
                buf[k] = self.amplitudes[base + off];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (c, v) in buf.iter().enumerate() {
                    acc += op[(r, c)] * v;
                }
                self.amplitudes[base + off] = acc;
            }
        }
        Ok(())
    }

    pub fn apply_local_labels(&mut self, op: &Matrix, labels: &[&str]) -> Result<()> {
        let positions = self.layout.positions(labels)?;
        self.apply_local(op, &positions)
    }

    pub fn apply(&mut self, op: &DenseOperator) -> Result<()> {
        if op.layout != self.layout {
            return Err(Error::LayoutMismatch);
        }
        let v = nalgebra::DVector::from_vec(core::mem::take(&mut self.amplitudes));
        self.amplitudes = (&op.matrix * v).data.into();
        Ok(())
    }

    /// Born distribution of the registers at `positions`, indexed by their
    /// sub-layout index.
    pub fn marginal(&self, positions: &[usize]) -> Vec<f64> {
        let sub = self.layout.sub_layout(positions);
        let mut out = vec![0.0; sub.dim()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let d = self.layout.digits(i);
            let s: Vec<usize> = positions.iter().map(|&p| d[p]).collect();
            out[sub.index_of(&s)] += a.norm_sqr();
        }
        out
    }

    /// Zeroes every amplitude whose digits at `positions` differ from
    /// `values`; returns the retained squared norm (not renormalized).
    pub fn project(&mut self, positions: &[usize], values: &[usize]) -> f64 {
        let mut kept = 0.0;
        for i in 0..self.amplitudes.len() {
            let d = self.layout.digits(i);
            if positions.iter().zip(values).all(|(&p, &v)| d[p] == v) {
                kept += self.amplitudes[i].norm_sqr();
            } else {
                self.amplitudes[i] = ZERO;
            }
        }
        kept
    }

    /// `|ψ⟩⟨ψ|` as an operator on the same layout.
    pub fn density(&self) -> DenseOperator {
        let v = nalgebra::DVector::from_column_slice(&self.amplitudes);
        DenseOperator::new_unchecked(self.layout.clone(), &v * v.adjoint())
    }

    /// Reduced density matrix on the registers at `keep` (in that order),
    /// tracing out everything else.
    pub fn reduced_density(&self, keep: &[usize]) -> Matrix {
        let sub = self.layout.sub_layout(keep);
        let (offsets, bases) = local_offsets(&self.layout, keep);
        let mut rho = Matrix::zeros(sub.dim(), sub.dim());
        for base in bases {
            for (r, ro) in offsets.iter().enumerate() {
                let a = self.amplitudes[base + ro];
                if a == ZERO {
                    continue;
                }
                for (c, co) in offsets.iter().enumerate() {
                    rho[(r, c)] += a * self.amplitudes[base + co].conj();
                }
            }
        }
        rho
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    layout: RegisterLayout,
    matrix: Matrix,
    /// Advisory flag, set only after verification.
    pub is_unitary: bool,
    /// Advisory flag, set only after verification.
    pub is_projector: bool,
}

impl DenseOperator {
    pub fn new(layout: RegisterLayout, matrix: Matrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: matrix.nrows(),
            });
        }
        Ok(Self::new_unchecked(layout, matrix))
    }

    pub(crate) fn new_unchecked(layout: RegisterLayout, matrix: Matrix) -> Self {
        Self {
            layout,
            matrix,
            is_unitary: false,
            is_projector: false,
        }
    }

    pub fn identity(layout: RegisterLayout) -> Self {
        let d = layout.dim();
        let mut op = Self::new_unchecked(layout, Matrix::identity(d, d));
        op.is_unitary = true;
        op.is_projector = true;
        op
    }

    pub fn zeros(layout: RegisterLayout) -> Self {
        let d = layout.dim();
        let mut op = Self::new_unchecked(layout, Matrix::zeros(d, d));
        op.is_projector = true;
        op
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn same_layout(&self, other: &DenseOperator) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(())
    }

    pub fn mul(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.same_layout(other)?;
        Ok(Self::new_unchecked(
            self.layout.clone(),
            &self.matrix * &other.matrix,
        ))
    }

    pub fn add(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.same_layout(other)?;
        Ok(Self::new_unchecked(
            self.layout.clone(),
            &self.matrix + &other.matrix,
        ))
    }

    pub fn sub(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.same_layout(other)?;
        Ok(Self::new_unchecked(
            self.layout.clone(),
            &self.matrix - &other.matrix,
        ))
    }

    pub fn scale(&self, s: C64) -> DenseOperator {
        Self::new_unchecked(self.layout.clone(), &self.matrix * s)
    }

    pub fn adjoint(&self) -> DenseOperator {
        let mut op = Self::new_unchecked(self.layout.clone(), self.matrix.adjoint());
        op.is_unitary = self.is_unitary;
        op.is_projector = self.is_projector;
        op
    }

    /// `self ⊗ other` on the concatenated layout.
    pub fn kron(&self, other: &DenseOperator) -> Result<DenseOperator> {
        let layout = self.layout.concat(&other.layout)?;
        let mut op = Self::new_unchecked(layout, self.matrix.kronecker(&other.matrix));
        op.is_unitary = self.is_unitary && other.is_unitary;
        op.is_projector = self.is_projector && other.is_projector;
        Ok(op)
    }

    /// `‖A†A − 1‖`.
    pub fn unitarity_deviation(&self) -> Result<f64> {
        let d = self.dim();
        matrix_norm(&(self.matrix.adjoint() * &self.matrix - Matrix::identity(d, d)))
    }

    /// `max(‖A² − A‖, ‖A − A†‖)`.
    pub fn projector_deviation(&self) -> Result<f64> {
        let sq = matrix_norm(&(&self.matrix * &self.matrix - &self.matrix))?;
        let herm = matrix_norm(&(&self.matrix - self.matrix.adjoint()))?;
        Ok(sq.max(herm))
    }

    /// Verifies unitarity within tolerance and sets the flag.
    pub fn verified_unitary(mut self) -> Result<Self> {
        let dev = self.unitarity_deviation()?;
        self.is_unitary = dev <= TOLERANCE;
        Ok(self)
    }

    /// Verifies the projector property within tolerance and sets the flag.
    pub fn verified_projector(mut self) -> Result<Self> {
        let dev = self.projector_deviation()?;
        self.is_projector = dev <= TOLERANCE;
        Ok(self)
    }
}

/// Embeds `op` (acting on the registers `targets`, in that order) into the
/// full layout, acting as identity on every other register.
pub fn embed_operator(
    op: &DenseOperator,
    targets: &[&str],
    full: &RegisterLayout,
) -> Result<DenseOperator> {
    let positions = full.positions(targets)?;
    let sub = full.sub_layout(&positions);
    if sub.dims() != op.layout.dims() {
        return Err(Error::DimensionMismatch {
            expected: sub.dim(),
            found: op.dim(),
        });
    }
    let (offsets, bases) = local_offsets(full, &positions);
    let mut m = Matrix::zeros(full.dim(), full.dim());
    for base in bases {
        for (r, ro) in offsets.iter().enumerate() {
            for (c, co) in offsets.iter().enumerate() {
                let v = op.matrix[(r, c)];
                if v != ZERO {
                    m[(base + ro, base + co)] = v;
                }
            }
        }
    }
    let mut out = DenseOperator::new_unchecked(full.clone(), m);
    out.is_unitary = op.is_unitary;
    out.is_projector = op.is_projector;
    Ok(out)
}

/// Largest singular value of a square or rectangular matrix.
pub fn matrix_norm(m: &Matrix) -> Result<f64> {
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    if m.nrows().max(m.ncols()) <= EXACT_SVD_MAX_DIM {
        let svd = m.clone().svd(false, false);
        return Ok(svd.singular_values.iter().cloned().fold(0.0, f64::max));
    }
    Ok(power_iteration_norm(m))
}

fn power_iteration_norm(m: &Matrix) -> f64 {
    let mut rng = SimRng::new(0x5eed);
    let mut v =
        nalgebra::DVector::from_fn(m.ncols(), |_, _| C64::new(rng.gaussian(), rng.gaussian()));
    let n = v.norm();
    v /= C64::new(n, 0.0);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATION_MAX_STEPS {
        let w = m.adjoint() * (m * &v);
        let next = v.dotc(&w).re;
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / C64::new(wn, 0.0);
        if (next - lambda).abs() <= POWER_ITERATION_THRESHOLD * next.max(1.0) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    libm::sqrt(lambda.max(0.0))
}

/// Operator norm (largest singular value).
pub fn operator_norm(op: &DenseOperator) -> Result<f64> {
    matrix_norm(&op.matrix)
}

/// `AB − BA`.
pub fn commutator(a: &DenseOperator, b: &DenseOperator) -> Result<DenseOperator> {
    a.same_layout(b)?;
    Ok(DenseOperator::new_unchecked(
        a.layout.clone(),
        &a.matrix * &b.matrix - &b.matrix * &a.matrix,
    ))
}

/// `‖AB − BA‖` for raw matrices of equal size.
pub fn commutator_norm(a: &Matrix, b: &Matrix) -> Result<f64> {
    matrix_norm(&(a * b - b * a))
}

/// Eigenvalues of a Hermitian matrix (input symmetrized first).
pub fn hermitian_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let dev = matrix_norm(&(m - m.adjoint()))?;
    if dev > TOLERANCE {
        return Err(Error::NotHermitian(dev));
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().cloned().collect())
}

/// Schatten-1 norm of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &Matrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?.iter().map(|l| l.abs()).sum())
}

fn check_density(op: &DenseOperator) -> Result<()> {
    let dev = matrix_norm(&(op.matrix() - op.matrix().adjoint()))?;
    if dev > TOLERANCE {
        return Err(Error::NotHermitian(dev));
    }
    let tr = op.matrix().trace().re;
    if (tr - 1.0).abs() > TOLERANCE {
        return Err(Error::BadTrace(tr));
    }
    Ok(())
}

/// `½‖ρ − σ‖₁` for unit-trace Hermitian operators on the same layout.
pub fn trace_distance(rho: &DenseOperator, sigma: &DenseOperator) -> Result<f64> {
    rho.same_layout(sigma)?;
    check_density(rho)?;
    check_density(sigma)?;
    Ok(0.5 * trace_norm_hermitian(&(rho.matrix() - sigma.matrix()))?)
}

/// `‖|a⟩⟨a| − |b⟩⟨b|‖₁` for possibly unnormalized vectors, in closed form:
/// the difference has rank at most two and eigenvalues summing to
/// `‖a‖² − ‖b‖²` with product `−(‖a‖²‖b‖² − |⟨a|b⟩|²)`.
pub fn pure_pair_trace_norm(a_norm_sqr: f64, b_norm_sqr: f64, overlap: C64) -> f64 {
    let s = a_norm_sqr + b_norm_sqr;
    let disc = s * s - 4.0 * overlap.norm_sqr();
    libm::sqrt(disc.max(0.0))
}

/// Walsh-Hadamard matrix on `n` qubits (entries `±2^{-n/2}`).
pub fn walsh_hadamard(n: u32) -> Matrix {
    let d = 1usize << n;
    let s = 1.0 / libm::sqrt(d as f64);
    Matrix::from_fn(d, d, |i, j| {
        let sign = if (i & j).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        C64::new(sign * s, 0.0)
    })
}

/// Quantum Fourier transform of dimension `d`.
pub fn fourier(d: usize) -> Matrix {
    let s = 1.0 / libm::sqrt(d as f64);
    Matrix::from_fn(d, d, |i, j| {
        let ang = core::f64::consts::TAU * ((i * j) % d) as f64 / d as f64;
        C64::new(libm::cos(ang) * s, libm::sin(ang) * s)
    })
}

/// `|v⟩⟨v| ⊗ op + (1 − |v⟩⟨v|) ⊗ 1` on a control of dimension
/// `control_dim` followed by the registers `op` acts on.
pub fn build_controlled(control_dim: usize, value: usize, op: &Matrix) -> Matrix {
    let d = op.nrows();
    let mut m = Matrix::identity(control_dim * d, control_dim * d);
    m.view_mut((value * d, value * d), (d, d)).copy_from(op);
    m
}

/// Cyclic shift `|v⟩ ↦ |v + 1 mod d⟩`.
pub fn cyclic_shift(d: usize) -> Matrix {
    let mut m = Matrix::zeros(d, d);
    for v in 0..d {
        m[((v + 1) % d, v)] = ONE;
    }
    m
}

/// Haar-like random unitary via Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary(d: usize, rng: &mut SimRng) -> Matrix {
    let mut m = Matrix::from_fn(d, d, |_, _| C64::new(rng.gaussian(), rng.gaussian()));
    for j in 0..d {
        for k in 0..j {
            let proj: C64 = (0..d).map(|i| m[(i, k)].conj() * m[(i, j)]).sum();
            for i in 0..d {
                let v = m[(i, k)];
                m[(i, j)] -= proj * v;
            }
        }
        let n = libm::sqrt((0..d).map(|i| m[(i, j)].norm_sqr()).sum::<f64>());
        for i in 0..d {
            m[(i, j)] /= C64::new(n, 0.0);
        }
    }
    m
}

/// Random unit vector of dimension `d`.
pub fn random_state(layout: RegisterLayout, rng: &mut SimRng) -> StateVector {
    let mut amps: Vec<C64> = (0..layout.dim())
        .map(|_| C64::new(rng.gaussian(), rng.gaussian()))
        .collect();
    let n = libm::sqrt(amps.iter().map(|a| a.norm_sqr()).sum::<f64>());
    for a in &mut amps {
        *a /= C64::new(n, 0.0);
    }
    StateVector {
        layout,
        amplitudes: amps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit(label: &str) -> RegisterLayout {
        RegisterLayout::new([(label, 2)]).unwrap()
    }

    fn pauli_x() -> Matrix {
        Matrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    fn pauli_z() -> Matrix {
        Matrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    #[test]
    fn layout_rejects_duplicates_zero_dims_and_cap() {
        assert!(matches!(
            RegisterLayout::new([("a", 2), ("a", 3)]),
            Err(Error::DuplicateRegister(_))
        ));
        assert!(matches!(
            RegisterLayout::new([("a", 0)]),
            Err(Error::ZeroDimension(_))
        ));
        assert!(matches!(
            RegisterLayout::with_cap([("a", 4), ("b", 4)], 15),
            Err(Error::CapExceeded { .. })
        ));
        let l = RegisterLayout::new([("a", 2), ("b", 3), ("c", 5)]).unwrap();
        assert_eq!(l.dim(), 30);
        assert_eq!(l.strides(), vec![15, 5, 1]);
        for i in 0..30 {
            assert_eq!(l.index_of(&l.digits(i)), i);
        }
    }

    #[test]
    fn embed_identity_is_identity() {
        let full = RegisterLayout::new([("a", 2), ("b", 3)]).unwrap();
        let id = DenseOperator::identity(RegisterLayout::new([("b", 3)]).unwrap());
        let e = embed_operator(&id, &["b"], &full).unwrap();
        assert_eq!(e.matrix(), &Matrix::identity(6, 6));
    }

    #[test]
    fn embed_flip_on_first_register_is_flip_kron_identity() {
        let full = RegisterLayout::new([("a", 2), ("b", 2)]).unwrap();
        let flip = DenseOperator::new(qubit("a"), pauli_x()).unwrap();
        let e = embed_operator(&flip, &["a"], &full).unwrap();
        assert_eq!(e.matrix(), &pauli_x().kronecker(&Matrix::identity(2, 2)));
    }

    #[test]
    fn embed_respects_target_order() {
        let full = RegisterLayout::new([("a", 2), ("b", 3)]).unwrap();
        let mut rng = SimRng::new(3);
        let u = random_unitary(6, &mut rng);
        let op = DenseOperator::new(
            RegisterLayout::new([("b", 3), ("a", 2)]).unwrap(),
            u.clone(),
        )
        .unwrap();
        let e = embed_operator(&op, &["b", "a"], &full).unwrap();
        // Reorder by hand: full index (a,b) ↔ op index (b,a).
        for ra in 0..2 {
            for rb in 0..3 {
                for ca in 0..2 {
                    for cb in 0..3 {
                        assert_eq!(
                            e.matrix()[(ra * 3 + rb, ca * 3 + cb)],
                            u[(rb * 2 + ra, cb * 2 + ca)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn norms_of_identity_and_zero() {
        let l = RegisterLayout::new([("a", 3)]).unwrap();
        assert!(
            (operator_norm(&DenseOperator::identity(l.clone())).unwrap() - 1.0).abs() < TOLERANCE
        );
        assert_eq!(operator_norm(&DenseOperator::zeros(l)).unwrap(), 0.0);
    }

    #[test]
    fn commutator_of_flip_and_phase_has_norm_two() {
        let x = DenseOperator::new(qubit("q"), pauli_x()).unwrap();
        let z = DenseOperator::new(qubit("q"), pauli_z()).unwrap();
        let c = commutator(&x, &z).unwrap();
        // XZ − ZX = −2iY, whose singular values are both 2.
        assert!((operator_norm(&c).unwrap() - 2.0).abs() < TOLERANCE);
        assert_eq!(operator_norm(&commutator(&x, &x).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let mut m = Matrix::identity(2, 2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert_eq!(matrix_norm(&m), Err(Error::NonFinite));
    }

    #[test]
    fn power_iteration_agrees_with_svd() {
        let mut rng = SimRng::new(11);
        let m = Matrix::from_fn(40, 40, |_, _| C64::new(rng.gaussian(), rng.gaussian()));
        let exact = m.clone().svd(false, false).singular_values.max();
        assert!((power_iteration_norm(&m) - exact).abs() < 1e-6 * exact);
    }

    #[test]
    fn trace_distance_basics() {
        let l = qubit("q");
        let zero = StateVector::basis(l.clone(), &[0]).unwrap().density();
        let one = StateVector::basis(l, &[1]).unwrap().density();
        assert!(trace_distance(&zero, &zero).unwrap().abs() < TOLERANCE);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < TOLERANCE);
    }

    #[test]
    fn trace_distance_bounded_by_vector_distance() {
        let l = RegisterLayout::new([("a", 3), ("b", 2)]).unwrap();
        let mut rng = SimRng::new(5);
        for _ in 0..100 {
            let p = random_state(l.clone(), &mut rng);
            let q = random_state(l.clone(), &mut rng);
            let td = trace_distance(&p.density(), &q.density()).unwrap();
            let diff: f64 = p
                .amplitudes()
                .iter()
                .zip(q.amplitudes())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
            assert!(td <= libm::sqrt(diff) + TOLERANCE);
            // Closed form for pure pairs agrees with the eigenvalue route.
            let closed = 0.5 * pure_pair_trace_norm(1.0, 1.0, p.inner(&q).unwrap());
            assert!((closed - td).abs() < 1e-8);
        }
    }

    #[test]
    fn trace_distance_rejects_non_hermitian() {
        let l = qubit("q");
        let bad = DenseOperator::new(
            l.clone(),
            Matrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ZERO]),
        )
        .unwrap();
        let good = StateVector::basis(l, &[0]).unwrap().density();
        assert!(matches!(
            trace_distance(&bad, &good),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn reduced_density_of_product_state() {
        let mut rng = SimRng::new(9);
        let a = random_state(RegisterLayout::new([("a", 3)]).unwrap(), &mut rng);
        let b = random_state(RegisterLayout::new([("b", 2)]).unwrap(), &mut rng);
        let ab = a.tensor(&b).unwrap();
        let ra = ab.reduced_density(&[0]);
        assert!((ra - a.density().into_matrix()).norm() < TOLERANCE);
        let rb = ab.reduced_density(&[1]);
        assert!((rb - b.density().into_matrix()).norm() < TOLERANCE);
    }

    #[test]
    fn apply_local_matches_embedded_operator() {
        let full = RegisterLayout::new([("a", 2), ("b", 3), ("c", 2)]).unwrap();
        let mut rng = SimRng::new(21);
        let u = random_unitary(6, &mut rng);
        let op = DenseOperator::new(
            RegisterLayout::new([("c", 2), ("b", 3)]).unwrap(),
            u.clone(),
        )
        .unwrap();
        let e = embed_operator(&op, &["c", "b"], &full).unwrap();
        let psi = random_state(full.clone(), &mut rng);
        let mut a = psi.clone();
        a.apply_local(&u, &[2, 1]).unwrap();
        let mut b = psi;
        b.apply(&e).unwrap();
        let d: f64 = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - y).norm())
            .sum();
        assert!(d < 1e-10);
    }
}
