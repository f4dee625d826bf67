//! Dense complex linear algebra for registers of up to four qubits.
//!
//! Qubit ordering: register index 0 is the leftmost tensor factor, so in a
//! basis index `b` the bit of qubit `q` (out of `n`) is `(b >> (n - 1 - q)) & 1`.
//! Every module in the crate uses this convention.

use std::fmt;
use std::ops::Index;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest register handled: two Bell pairs.
pub const MAX_QUBITS: usize = 4;

/// Tolerance for Hermiticity, trace and positivity checks on states.
pub const VALIDATION_TOL: f64 = 1e-10;

/// Unit-norm tolerance for pure states.
pub const NORM_TOL: f64 = 1e-12;

/// Off-diagonal norm at which Jacobi sweeps stop.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real entries given row by row.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| c(x, 0.0)))
            .collect();
        Self::new(n_rows, n_cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for col in 0..cols {
                data.push(f(r, col));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, col| if r == col { C64::ONE } else { C64::ZERO })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |r, col| {
            if r == col {
                c(values[r], 0.0)
            } else {
                C64::ZERO
            }
        })
    }

    /// Outer product `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |r, col| u[r] * v[col].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, r: usize, col: usize) -> C64 {
        self.data[r * self.cols + col]
    }

    pub(crate) fn set(&mut self, r: usize, col: usize, value: C64) {
        self.data[r * self.cols + col] = value;
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == C64::ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot apply {}x{} matrix to a vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn dagger(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |r, col| self.get(col, r).conj())
    }

    /// Entrywise complex conjugate (not transposed).
    pub fn conj(&self) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> Result<C64> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "trace of a non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok((0..self.rows).map(|i| self.get(i, i)).sum())
    }

    /// Kronecker product `self ⊗ other`.
    pub fn tensor(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        Self::from_fn(rows, cols, |r, col| {
            self.get(r / other.rows, col / other.cols) * other.get(r % other.rows, col % other.cols)
        })
    }

    pub fn scale(&self, factor: C64) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &ComplexMatrix, f: impl Fn(C64, C64) -> C64) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        Ok(self.sub(other)?.max_norm())
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |M - M†|`, or infinity for non-square input.
    pub fn hermitian_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for col in r..n {
                worst = worst.max((self.get(r, col) - self.get(col, r).conj()).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, col): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + col]
    }
}

impl fmt::Display for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|col| {
                    let z = self.get(r, col);
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::new(2, 2, vec![C64::ZERO, c(0.0, -1.0), c(0.0, 1.0), C64::ZERO]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::diag(&[1.0, -1.0])
}

pub fn hadamard() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real_rows(&[&[h, h], &[h, -h]]).unwrap()
}

/// Phase gate `diag(1, i)`.
pub fn phase_s() -> ComplexMatrix {
    ComplexMatrix::new(2, 2, vec![C64::ONE, C64::ZERO, C64::ZERO, C64::I]).unwrap()
}

/// Number of qubits for a register of dimension `dim`, if it is a supported power of two.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    if dim >= 2 && dim.is_power_of_two() {
        let n = dim.trailing_zeros() as usize;
        (n <= MAX_QUBITS).then_some(n)
    } else {
        None
    }
}

/// `(I ⊗ … ⊗ op ⊗ … ⊗ I) m (I ⊗ … ⊗ op ⊗ … ⊗ I)†` with the 2×2 `op` on `qubit`,
/// computed without forming the full operator.
pub(crate) fn conjugate_local(m: &ComplexMatrix, op: &ComplexMatrix, qubit: usize, n_qubits: usize) -> ComplexMatrix {
    debug_assert!(op.rows == 2 && op.cols == 2);
    debug_assert!(m.rows == 1 << n_qubits && m.is_square());
    let dim = m.rows;
    let mask = 1usize << (n_qubits - 1 - qubit);
    let (k00, k01, k10, k11) = (op.get(0, 0), op.get(0, 1), op.get(1, 0), op.get(1, 1));

    // left multiplication acts on row pairs
    let mut left = m.clone();
    for r0 in (0..dim).filter(|r| r & mask == 0) {
        let r1 = r0 | mask;
        for col in 0..dim {
            let a = m.get(r0, col);
            let b = m.get(r1, col);
            left.set(r0, col, k00 * a + k01 * b);
            left.set(r1, col, k10 * a + k11 * b);
        }
    }
    // right multiplication by op† acts on column pairs
    let mut out = left.clone();
    let (d00, d01, d10, d11) = (k00.conj(), k01.conj(), k10.conj(), k11.conj());
    for c0 in (0..dim).filter(|col| col & mask == 0) {
        let c1 = c0 | mask;
        for r in 0..dim {
            let a = left.get(r, c0);
            let b = left.get(r, c1);
            out.set(r, c0, a * d00 + b * d01);
            out.set(r, c1, a * d10 + b * d11);
        }
    }
    out
}

/// Conjugation by the permutation unitary sending basis state `b` to `perm[b]`.
pub(crate) fn permute_basis(m: &ComplexMatrix, perm: &[usize]) -> ComplexMatrix {
    let dim = m.rows;
    debug_assert_eq!(perm.len(), dim);
    let mut out = ComplexMatrix::zeros(dim, dim);
    for r in 0..dim {
        for col in 0..dim {
            out.set(perm[r], perm[col], m.get(r, col));
        }
    }
    out
}

/// Basis permutation implementing a CNOT from `control` onto `target`.
pub fn cnot_permutation(control: usize, target: usize, n_qubits: usize) -> Vec<usize> {
    let cmask = 1usize << (n_qubits - 1 - control);
    let tmask = 1usize << (n_qubits - 1 - target);
    (0..1usize << n_qubits)
        .map(|b| if b & cmask != 0 { b ^ tmask } else { b })
        .collect()
}

/// All eigenvalues of a Hermitian matrix in ascending order.
///
/// The matrix `A + iB` is embedded as the real symmetric `[[A, -B], [B, A]]`,
/// whose spectrum is that of the original with every eigenvalue doubled, and
/// diagonalized with cyclic Jacobi sweeps.
pub fn eigenvalues_hermitian(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("eigenvalues of a non-square matrix".into()));
    }
    let residual = m.hermitian_residual();
    if residual > VALIDATION_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let n = m.rows;
    let size = 2 * n;
    let mut a = vec![0.0f64; size * size];
    for r in 0..n {
        for col in 0..n {
            // symmetrize to remove the tolerated anti-Hermitian residue
            let z = (m.get(r, col) + m.get(col, r).conj()) * 0.5;
            a[r * size + col] = z.re;
            a[(r + n) * size + col + n] = z.re;
            a[r * size + col + n] = -z.im;
            a[(r + n) * size + col] = z.im;
        }
    }
    jacobi_symmetric(&mut a, size);
    let mut eig: Vec<f64> = (0..size).map(|i| a[i * size + i]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig.into_iter().step_by(2).collect())
}

fn jacobi_symmetric(a: &mut [f64], n: usize) {
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|r| (0..n).filter(move |&col| col != r).map(move |col| (r, col)))
            .map(|(r, col)| a[r * n + col] * a[r * n + col])
            .sum::<f64>()
            .sqrt();
        if off < JACOBI_TOL {
            return;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = cs * akp - sn * akq;
                    a[k * n + q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = cs * apk - sn * aqk;
                    a[q * n + k] = sn * apk + cs * aqk;
                }
            }
        }
    }
}

pub fn min_eigenvalue_hermitian(m: &ComplexMatrix) -> Result<f64> {
    Ok(eigenvalues_hermitian(m)?[0])
}

/// A normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if qubits_for_dim(amplitudes.len()).is_none() {
            return Err(Error::DimensionMismatch(format!(
                "state vector length {} is not a supported register size",
                amplitudes.len()
            )));
        }
        let norm_sq: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if !norm_sq.is_finite() || (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("state norm² is {norm_sq}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Computational basis state `|index>` on `n_qubits`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::DimensionMismatch(format!("basis index {index} >= {dim}")));
        }
        let mut amps = vec![C64::ZERO; dim];
        amps[index] = C64::ONE;
        Self::new(amps)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("inner product of states of different size".into()));
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(ComplexMatrix::outer(&self.amplitudes, &self.amplitudes))
    }
}

/// A validated mixed state on 1 to 4 qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity at `VALIDATION_TOL`.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let rho = Self::shaped(matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    fn shaped(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        let n_qubits = qubits_for_dim(matrix.rows).ok_or_else(|| {
            Error::DimensionMismatch(format!("unsupported register dimension {}", matrix.rows))
        })?;
        Ok(Self { n_qubits, matrix })
    }

    /// For results of CPTP maps on already valid states; invariants are checked in debug builds only.
    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        let rho = Self::shaped(matrix).expect("density matrix shape");
        debug_assert!(rho.matrix.hermitian_residual() <= VALIDATION_TOL);
        debug_assert!((rho.trace_re() - 1.0).abs() <= VALIDATION_TOL);
        rho
    }

    /// Re-checks all three state invariants.
    pub fn validate(&self) -> Result<()> {
        let residual = self.matrix.hermitian_residual();
        if residual > VALIDATION_TOL {
            return Err(Error::NotHermitian { residual });
        }
        let tr = self.matrix.trace()?;
        if (tr - C64::ONE).norm() > VALIDATION_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min = min_eigenvalue_hermitian(&self.matrix)?;
        if min < -VALIDATION_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::DimensionMismatch(format!("unsupported qubit count {n_qubits}")));
        }
        let dim = 1usize << n_qubits;
        Ok(Self::from_matrix_unchecked(ComplexMatrix::diag(&vec![1.0 / dim as f64; dim])))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    fn trace_re(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix.get(i, i).re).sum()
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        // ρ is Hermitian, so tr(ρ²) = Σ |ρ_ij|²
        self.matrix.entries().iter().map(|z| z.norm_sqr()).sum()
    }

    /// Joint state `self ⊗ other`; register of `self` comes first.
    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let total = self.n_qubits + other.n_qubits;
        if total > MAX_QUBITS {
            return Err(Error::DimensionMismatch(format!(
                "joint register of {total} qubits exceeds {MAX_QUBITS}"
            )));
        }
        Ok(Self::from_matrix_unchecked(self.matrix.tensor(&other.matrix)))
    }

    /// Reduced state on the qubits in `keep` (kept in ascending register order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::Usage("partial trace needs at least one kept qubit".into()));
        }
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if let Some(&bad) = kept.iter().find(|&&q| q >= self.n_qubits) {
            return Err(Error::QubitIndex {
                index: bad,
                n_qubits: self.n_qubits,
            });
        }
        let n = self.n_qubits;
        let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();
        let bit = |q: usize| 1usize << (n - 1 - q);
        let compose = |qubits: &[usize], value: usize| -> usize {
            let m = qubits.len();
            qubits
                .iter()
                .enumerate()
                .filter(|(k, _)| value >> (m - 1 - k) & 1 == 1)
                .map(|(_, &q)| bit(q))
                .sum()
        };
        let out_dim = 1usize << kept.len();
        let env_dim = 1usize << traced.len();
        let mut out = ComplexMatrix::zeros(out_dim, out_dim);
        for r in 0..out_dim {
            let rb = compose(&kept, r);
            for col in 0..out_dim {
                let cb = compose(&kept, col);
                let sum: C64 = (0..env_dim)
                    .map(|e| {
                        let eb = compose(&traced, e);
                        self.matrix.get(rb | eb, cb | eb)
                    })
                    .sum();
                out.set(r, col, sum);
            }
        }
        Ok(Self::from_matrix_unchecked(out))
    }
}

impl From<&PureState> for DensityMatrix {
    fn from(psi: &PureState) -> Self {
        psi.projector()
    }
}

/// `<ψ|ρ|ψ>` as a real number in [0, 1].
pub fn pure_fidelity(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} vs reference of dimension {}",
            rho.dim(),
            psi.dim()
        )));
    }
    let v = rho.matrix.mul_vec(psi.amplitudes())?;
    let f: C64 = psi.amplitudes().iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
    if f.im.abs() > VALIDATION_TOL || f.re < -VALIDATION_TOL || f.re > 1.0 + VALIDATION_TOL {
        return Err(Error::InvalidState(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f.re.clamp(0.0, 1.0))
}
