//! Dense complex linear algebra for the small operators used throughout the crate.
//!
//! Matrices here are at most a few dozen rows (the single-excitation sector of a
//! chain, or a 2^N test oracle for N <= 6), so everything is a plain row-major
//! `Vec<Complex64>` and the Hermitian eigensolver is cyclic Jacobi.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Relative tolerance for the Hermitian symmetry check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues of a PSD input may dip this far below zero from rounding.
pub const PSD_CLAMP: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("Jacobi iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix must have dimension >= 1")]
    Empty,
    #[error("rows must all have length {expected}, found {found}")]
    Ragged { expected: usize, found: usize },
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self, LinalgError> {
        let dim = rows.len();
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::Ragged { expected: dim, found: row.len() });
            }
            data.extend(row);
        }
        Ok(Self { dim, data })
    }

    /// Real matrix from row slices.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        Self::from_rows(rows.iter().map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect()).collect())
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    /// `|a><b|`
    pub fn outer(a: &StateVector, b: &StateVector) -> Self {
        assert_eq!(a.dim(), b.dim(), "outer product of vectors with different dimensions");
        Self::from_fn(a.dim(), |i, j| a[i] * b[j].conj())
    }

    /// Rank-1 density matrix `|psi><psi|`.
    pub fn pure_density(psi: &StateVector) -> Self {
        Self::outer(psi, psi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * factor).collect() }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * factor).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "comparing matrices of different dimension");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max |A_ij - conj(A_ji)|`
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL * self.max_abs()
    }

    pub fn check_hermitian(&self) -> Result<(), LinalgError> {
        let deviation = self.hermitian_deviation();
        if deviation > HERMITIAN_TOL * self.max_abs() {
            return Err(LinalgError::NotHermitian { deviation });
        }
        Ok(())
    }

    /// `AB - BA`
    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Top-left `k x k` block.
    pub fn principal_block(&self, k: usize) -> Self {
        assert!(k >= 1 && k <= self.dim, "block size {k} out of range");
        Self::from_fn(k, |i, j| self[(i, j)])
    }

    /// Zero-pad into a `dim x dim` matrix occupying the top-left corner.
    pub fn embed(&self, dim: usize) -> Self {
        assert!(dim >= self.dim, "cannot embed into a smaller space");
        let mut out = Self::zeros(dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(i, j)];
            }
        }
        out
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        assert_eq!(self.dim, psi.dim(), "matrix-vector dimension mismatch");
        let n = self.dim;
        let mut out = vec![ZERO; n];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * n..(i + 1) * n];
            *o = row.iter().zip(psi.amplitudes()).map(|(a, b)| a * b).sum();
        }
        StateVector::new(out)
    }

    /// In-place `psi <- A psi` using a caller-provided scratch buffer.
    pub fn apply_into(&self, psi: &mut StateVector, scratch: &mut Vec<Complex64>) {
        let n = self.dim;
        assert_eq!(n, psi.dim(), "matrix-vector dimension mismatch");
        scratch.clear();
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            scratch.push(row.iter().zip(psi.amplitudes()).map(|(a, b)| a * b).sum());
        }
        psi.amplitudes_mut().copy_from_slice(scratch);
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix product dimension mismatch");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix sum dimension mismatch");
        ComplexMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix difference dimension mismatch");
        ComplexMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.4e}{:+.4e}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Pure state amplitudes in a fixed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        assert!(!amplitudes.is_empty(), "state vector must have dimension >= 1");
        Self { amplitudes }
    }

    pub fn from_real(amplitudes: &[f64]) -> Self {
        Self::new(amplitudes.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// `|i>` with zero-based index.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dimension {dim}");
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    /// Returns `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(Self::new(self.amplitudes.iter().map(|z| z / n).collect()))
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> Complex64 {
        assert_eq!(self.dim(), other.dim(), "inner product dimension mismatch");
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// Squared moduli of the amplitudes.
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "comparing vectors of different dimension");
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Zero-pad to `dim` entries.
    pub fn embed(&self, dim: usize) -> Self {
        assert!(dim >= self.dim(), "cannot embed into a smaller space");
        let mut amps = self.amplitudes.clone();
        amps.resize(dim, ZERO);
        Self::new(amps)
    }

    /// First `k` amplitudes.
    pub fn truncate(&self, k: usize) -> Self {
        assert!(k >= 1 && k <= self.dim(), "truncation length {k} out of range");
        Self::new(self.amplitudes[..k].to_vec())
    }
}

impl Index<usize> for StateVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.amplitudes[i]
    }
}

impl IndexMut<usize> for StateVector {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.amplitudes[i]
    }
}

/// Spectral decomposition `A = V diag(eigenvalues) V^dagger` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Builds `V f(lambda) V^dagger` for a spectral function `f`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = self.dim();
        let weights: Vec<Complex64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        ComplexMatrix::from_fn(n, |i, j| (0..n).map(|k| v[(i, k)] * weights[k] * v[(j, k)].conj()).sum())
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.spectral_map(|l| Complex64::new(l, 0.0))
    }

    /// `exp(-i A t)`
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        self.spectral_map(|l| Complex64::from_polar(1.0, -l * t))
    }

    /// `exp(-i A t) psi` without forming the full propagator.
    pub fn evolve(&self, psi: &StateVector, t: f64) -> StateVector {
        let coeffs = self.eigenbasis_coefficients(psi);
        self.evolve_coefficients(&coeffs, t)
    }

    /// `V^dagger psi`
    pub fn eigenbasis_coefficients(&self, psi: &StateVector) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(n, psi.dim(), "state dimension does not match decomposition");
        let v = &self.eigenvectors;
        (0..n).map(|k| (0..n).map(|i| v[(i, k)].conj() * psi[i]).sum()).collect()
    }

    /// `V diag(exp(-i lambda t)) coeffs`
    pub fn evolve_coefficients(&self, coeffs: &[Complex64], t: f64) -> StateVector {
        let n = self.dim();
        let v = &self.eigenvectors;
        let phased: Vec<Complex64> =
            coeffs.iter().zip(&self.eigenvalues).map(|(c, &l)| c * Complex64::from_polar(1.0, -l * t)).collect();
        StateVector::new((0..n).map(|i| (0..n).map(|k| v[(i, k)] * phased[k]).sum()).collect())
    }
}

/// Cyclic complex Jacobi eigensolver for Hermitian matrices.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<EigenDecomposition, LinalgError> {
    a.check_hermitian()?;
    let n = a.dim();
    let mut m = a.clone();
    // Symmetrize exactly so the rotations see a true Hermitian matrix.
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    let mut v = ComplexMatrix::identity(n);

    let frob: f64 = m.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let max_sweeps = n * n * 50;
    let tol = 4.0 * f64::EPSILON * frob;
    let mut converged = n == 1 || frob == 0.0;

    let mut sweep = 0;
    while !converged {
        if sweep >= max_sweeps {
            return Err(LinalgError::NoConvergence { sweeps: max_sweeps });
        }
        sweep += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                // Negligible against both diagonals: drop it.
                if sweep > 4 && app.abs() + 100.0 * mag == app.abs() && aqq.abs() + 100.0 * mag == aqq.abs() {
                    m[(p, q)] = ZERO;
                    m[(q, p)] = ZERO;
                    continue;
                }
                jacobi_rotate(&mut m, &mut v, p, q, apq, mag, app, aqq);
                rotated = true;
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        converged = off <= tol || !rotated;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let eigenvalues = order.iter().map(|&i| diag[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, |i, k| v[(i, order[k])]);
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Zeroes `m[p][q]` with the unitary `G = diag(1, e^{-i phi}) R(theta)` acting on
/// rows/columns `p, q`, and accumulates `V <- V G`.
#[allow(clippy::too_many_arguments)]
fn jacobi_rotate(
    m: &mut ComplexMatrix,
    v: &mut ComplexMatrix,
    p: usize,
    q: usize,
    apq: Complex64,
    mag: f64,
    app: f64,
    aqq: f64,
) {
    let n = m.dim();
    let phase = apq / mag;
    let theta = (aqq - app) / (2.0 * mag);
    let t =
        if theta.abs() > 1e150 { 0.5 / theta } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let g_pp = Complex64::new(c, 0.0);
    let g_pq = Complex64::new(s, 0.0);
    let g_qp = -phase.conj() * s;
    let g_qq = phase.conj() * c;

    // A <- A G
    for k in 0..n {
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = akp * g_pp + akq * g_qp;
        m[(k, q)] = akp * g_pq + akq * g_qq;
    }
    // A <- G^dagger A
    for k in 0..n {
        let apk = m[(p, k)];
        let aqk = m[(q, k)];
        m[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
        m[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
    }
    m[(p, q)] = ZERO;
    m[(q, p)] = ZERO;
    m[(p, p)] = Complex64::new(app - t * mag, 0.0);
    m[(q, q)] = Complex64::new(aqq + t * mag, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * g_pp + vkq * g_qp;
        v[(k, q)] = vkp * g_pq + vkq * g_qq;
    }
}

/// `exp(-i H t)` for Hermitian `H` (hbar = 1).
pub fn propagator(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix, LinalgError> {
    Ok(hermitian_eig(h)?.propagator(t))
}

/// Principal square root of a Hermitian positive semidefinite matrix.
///
/// Eigenvalues in `[-PSD_CLAMP, 0)` are treated as zero.
pub fn sqrt_psd(a: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let eig = hermitian_eig(a)?;
    let min = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if min < -PSD_CLAMP {
        return Err(LinalgError::NotPsd { min_eigenvalue: min });
    }
    Ok(eig.spectral_map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0)))
}
