//! XY spin chain restricted to the single-excitation sector.
//!
//! Basis state `i` (zero-based) is `|1_{i+1}>`: one excitation on site `i+1`,
//! every other spin in `|0>`. Sites are 1-based in the public API.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{ComplexMatrix, StateVector};

/// `2 pi x 5 kHz` expressed in rad/us.
pub const DEFAULT_RATE: f64 = 2.0 * std::f64::consts::PI * 5e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("invalid chain: {0}")]
    InvalidSpec(String),
    #[error("subspace too large: lambda + 2 = {needed} exceeds N = {n}")]
    SubspaceTooLarge { needed: usize, n: usize },
    #[error("site {site} out of range 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },
}

/// Physical chain parameters. Rates are in rad/us, times in us.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Number of leading sites forming the Zeno subspace.
    pub lambda: usize,
    /// Keep the sector-constant `alpha (2 - N)` diagonal.
    pub include_field_phase: bool,
}

impl ChainSpec {
    /// Strict constructor: `N >= 3`, `1 <= lambda <= N - 2`, `beta > 0`.
    pub fn new(n: usize, alpha: f64, beta: f64, lambda: usize) -> Result<Self, ChainError> {
        let spec = Self { n, alpha, beta, lambda, include_field_phase: false };
        spec.validate()?;
        Ok(spec)
    }

    /// Default rates `alpha = beta = 2 pi x 5 kHz`.
    pub fn with_default_rates(n: usize, lambda: usize) -> Result<Self, ChainError> {
        Self::new(n, DEFAULT_RATE, DEFAULT_RATE, lambda)
    }

    /// Measurement-only chains: `N >= 2`, `1 <= lambda <= N`.
    ///
    /// These cannot host the coupling Hamiltonian when `lambda + 2 > N`, but
    /// projective and exact-subspace runs are well defined.
    pub fn new_relaxed(n: usize, alpha: f64, beta: f64, lambda: usize) -> Result<Self, ChainError> {
        let spec = Self { n, alpha, beta, lambda, include_field_phase: false };
        spec.validate_relaxed()?;
        Ok(spec)
    }

    pub fn with_field_phase(mut self, on: bool) -> Self {
        self.include_field_phase = on;
        self
    }

    pub fn with_lambda(&self, lambda: usize) -> Self {
        Self { lambda, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        self.validate_relaxed()?;
        if self.n < 3 {
            return Err(ChainError::InvalidSpec(format!("N must be >= 3, got {}", self.n)));
        }
        if self.lambda + 2 > self.n {
            return Err(ChainError::SubspaceTooLarge { needed: self.lambda + 2, n: self.n });
        }
        Ok(())
    }

    pub fn validate_relaxed(&self) -> Result<(), ChainError> {
        if self.n < 2 {
            return Err(ChainError::InvalidSpec(format!("N must be >= 2, got {}", self.n)));
        }
        if self.lambda < 1 || self.lambda > self.n {
            return Err(ChainError::InvalidSpec(format!("lambda must lie in 1..={}, got {}", self.n, self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(ChainError::InvalidSpec(format!("beta must be positive, got {}", self.beta)));
        }
        if !self.alpha.is_finite() {
            return Err(ChainError::InvalidSpec(format!("alpha must be finite, got {}", self.alpha)));
        }
        Ok(())
    }

    /// `alpha (2 - N)` when the field phase is kept, else zero.
    pub fn diagonal_offset(&self) -> f64 {
        if self.include_field_phase {
            self.alpha * (2.0 - self.n as f64)
        } else {
            0.0
        }
    }
}

/// Open chain with uniform hopping and a constant diagonal.
pub fn open_chain(n: usize, hopping: f64, diagonal: f64) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(n);
    for i in 0..n {
        h[(i, i)] = Complex64::new(diagonal, 0.0);
        if i + 1 < n {
            h[(i, i + 1)] = Complex64::new(hopping, 0.0);
            h[(i + 1, i)] = Complex64::new(hopping, 0.0);
        }
    }
    h
}

/// `H_N` in the single-excitation sector.
///
/// `(beta/2)(XX + YY)` on neighbours reduces to a hopping of amplitude `beta`; with
/// `sigma_z |1> = +|1>` the field term is the constant `alpha (2 - N)`.
pub fn hamiltonian(spec: &ChainSpec) -> Result<ComplexMatrix, ChainError> {
    spec.validate_relaxed()?;
    Ok(open_chain(spec.n, spec.beta, spec.diagonal_offset()))
}

/// Projector onto excitations of the first `lambda` sites.
pub fn projector(spec: &ChainSpec) -> ComplexMatrix {
    let diag: Vec<f64> = (0..spec.n).map(|i| if i < spec.lambda { 1.0 } else { 0.0 }).collect();
    ComplexMatrix::from_diagonal(&diag)
}

/// `Pi H Pi` restricted to the subspace coordinates (`lambda x lambda`).
pub fn zeno_hamiltonian(spec: &ChainSpec) -> Result<ComplexMatrix, ChainError> {
    spec.validate_relaxed()?;
    Ok(open_chain(spec.lambda, spec.beta, spec.diagonal_offset()))
}

/// `H_c = XX + YY` on sites `lambda + 1, lambda + 2`; hopping amplitude 2 in the sector.
pub fn coupling_hamiltonian(spec: &ChainSpec) -> Result<ComplexMatrix, ChainError> {
    if spec.lambda + 2 > spec.n {
        return Err(ChainError::SubspaceTooLarge { needed: spec.lambda + 2, n: spec.n });
    }
    let mut h = ComplexMatrix::zeros(spec.n);
    let (a, b) = (spec.lambda, spec.lambda + 1);
    h[(a, b)] = Complex64::new(2.0, 0.0);
    h[(b, a)] = Complex64::new(2.0, 0.0);
    Ok(h)
}

/// `H_Pi = H - Pi H Pi`, the part of `H` that moves population across the boundary
/// (plus the dynamics of the complement).
pub fn leakage_operator(spec: &ChainSpec) -> Result<ComplexMatrix, ChainError> {
    let h = hamiltonian(spec)?;
    let p = projector(spec);
    Ok(&h - &(&(&p * &h) * &p))
}

/// W state delocalised over the first `lambda` of `n` sites.
pub fn w_state(n: usize, lambda: usize) -> StateVector {
    assert!(lambda >= 1 && lambda <= n, "W state support {lambda} out of range for N = {n}");
    let amp = 1.0 / (lambda as f64).sqrt();
    let amps: Vec<f64> = (0..n).map(|i| if i < lambda { amp } else { 0.0 }).collect();
    StateVector::from_real(&amps)
}

/// `|1_site>` with a 1-based site index.
pub fn site_state(n: usize, site: usize) -> Result<StateVector, ChainError> {
    if site < 1 || site > n {
        return Err(ChainError::SiteOutOfRange { site, n });
    }
    Ok(StateVector::basis(n, site - 1))
}

/// Population outside the first `lambda` sites.
pub fn outside_population(psi: &StateVector, lambda: usize) -> f64 {
    psi.amplitudes()[lambda..].iter().map(|z| z.norm_sqr()).sum()
}

/// Population on the first `lambda` sites.
pub fn inside_population(psi: &StateVector, lambda: usize) -> f64 {
    psi.amplitudes()[..lambda].iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eig, propagator};

    const BETA: f64 = 0.0314159;

    #[test]
    fn three_site_hamiltonian() {
        let spec = ChainSpec::new(3, BETA, BETA, 1).unwrap();
        let h = hamiltonian(&spec).unwrap();
        let expected =
            ComplexMatrix::from_real_rows(&[&[0.0, BETA, 0.0], &[BETA, 0.0, BETA], &[0.0, BETA, 0.0]]).unwrap();
        assert_eq!(h, expected);
        assert!(h.is_hermitian());
    }

    #[test]
    fn field_phase_is_constant_diagonal() {
        let spec = ChainSpec::new(5, 0.7, BETA, 2).unwrap().with_field_phase(true);
        let h = hamiltonian(&spec).unwrap();
        for i in 0..5 {
            assert_eq!(h[(i, i)].re, 0.7 * -3.0);
        }
    }

    #[test]
    fn field_phase_does_not_change_populations() {
        let off = ChainSpec::new(6, BETA, BETA, 3).unwrap();
        let on = off.clone().with_field_phase(true);
        let psi = w_state(6, 3);
        for &t in &[1.0, 25.0, 133.0] {
            let a = propagator(&hamiltonian(&off).unwrap(), t).unwrap().apply(&psi);
            let b = propagator(&hamiltonian(&on).unwrap(), t).unwrap().apply(&psi);
            for (x, y) in a.populations().iter().zip(b.populations()) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn projector_properties() {
        let spec = ChainSpec::new(3, BETA, BETA, 1).unwrap();
        assert_eq!(projector(&spec), ComplexMatrix::from_diagonal(&[1.0, 0.0, 0.0]));
        let spec = ChainSpec::new(12, BETA, BETA, 9).unwrap();
        let p = projector(&spec);
        assert_eq!(p.trace().re, 9.0);
        assert_eq!(&p * &p, p);
        assert_eq!(p.adjoint(), p);
    }

    #[test]
    fn zeno_hamiltonian_is_projected_block() {
        let spec = ChainSpec::new(3, BETA, BETA, 1).unwrap();
        assert_eq!(zeno_hamiltonian(&spec).unwrap(), ComplexMatrix::zeros(1));
        let spec = ChainSpec::new(4, BETA, BETA, 2).unwrap();
        let expected = ComplexMatrix::from_real_rows(&[&[0.0, BETA], &[BETA, 0.0]]).unwrap();
        assert_eq!(zeno_hamiltonian(&spec).unwrap(), expected);
        for lambda in 1..=10 {
            let spec = ChainSpec::new(12, BETA, BETA, lambda).unwrap();
            let h = hamiltonian(&spec).unwrap();
            let p = projector(&spec);
            let block = (&(&p * &h) * &p).principal_block(lambda);
            let small = hamiltonian(&ChainSpec::new_relaxed(lambda.max(2), BETA, BETA, 1).unwrap())
                .unwrap()
                .principal_block(lambda);
            assert!(block.max_abs_diff(&zeno_hamiltonian(&spec).unwrap()) <= 1e-14);
            assert!(block.max_abs_diff(&small) <= 1e-14);
        }
    }

    #[test]
    fn coupling_entries_and_commutation() {
        let spec = ChainSpec::new(4, BETA, BETA, 1).unwrap();
        let hc = coupling_hamiltonian(&spec).unwrap();
        // 1-based (2,3) and (3,2)
        assert_eq!(hc[(1, 2)].re, 2.0);
        assert_eq!(hc[(2, 1)].re, 2.0);
        assert_eq!(hc.as_slice().iter().filter(|z| z.norm() > 0.0).count(), 2);
        let p = projector(&spec);
        assert_eq!(hc.commutator(&p).max_abs(), 0.0);
    }

    #[test]
    fn coupling_requires_two_free_sites() {
        let spec = ChainSpec::new_relaxed(4, BETA, BETA, 3).unwrap();
        assert_eq!(coupling_hamiltonian(&spec), Err(ChainError::SubspaceTooLarge { needed: 5, n: 4 }));
        assert!(matches!(ChainSpec::new(12, BETA, BETA, 11), Err(ChainError::SubspaceTooLarge { .. })));
    }

    #[test]
    fn coupling_quarter_area_swaps_pair() {
        // exp(-i H_c s) rotates the pair by 2s; the full exchange sits at s = pi/4.
        let spec = ChainSpec::new(6, BETA, BETA, 2).unwrap();
        let hc = coupling_hamiltonian(&spec).unwrap();
        let u = propagator(&hc, std::f64::consts::FRAC_PI_4).unwrap();
        let psi = StateVector::from_real(&[0.0, 0.0, 0.8, 0.6, 0.0, 0.0]);
        let out = u.apply(&psi);
        assert!((out[2].norm_sqr() - 0.36).abs() <= 1e-10);
        assert!((out[3].norm_sqr() - 0.64).abs() <= 1e-10);
    }

    #[test]
    fn coupling_half_area_is_minus_identity_on_pair() {
        let spec = ChainSpec::new(6, BETA, BETA, 2).unwrap();
        let hc = coupling_hamiltonian(&spec).unwrap();
        let u = propagator(&hc, std::f64::consts::FRAC_PI_2).unwrap();
        let expected = ComplexMatrix::from_diagonal(&[1.0, 1.0, -1.0, -1.0, 1.0, 1.0]);
        assert!(u.max_abs_diff(&expected) <= 1e-12);
    }

    #[test]
    fn two_site_chain_eigenvalues() {
        let spec = ChainSpec::new_relaxed(2, BETA, BETA, 1).unwrap();
        let eig = hermitian_eig(&hamiltonian(&spec).unwrap()).unwrap();
        assert!((eig.eigenvalues[0] + BETA).abs() < 1e-15);
        assert!((eig.eigenvalues[1] - BETA).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(ChainSpec::new(2, BETA, BETA, 1).is_err());
        assert!(ChainSpec::new(5, BETA, 0.0, 1).is_err());
        assert!(ChainSpec::new(5, BETA, BETA, 0).is_err());
        assert!(ChainSpec::new_relaxed(5, BETA, BETA, 5).is_ok());
        assert!(ChainSpec::new_relaxed(5, BETA, BETA, 6).is_err());
    }

    #[test]
    fn states() {
        let w = w_state(12, 4);
        assert!(w.is_normalized(1e-14));
        assert!((inside_population(&w, 4) - 1.0).abs() < 1e-14);
        assert_eq!(outside_population(&w, 4), 0.0);
        assert_eq!(site_state(3, 1).unwrap(), StateVector::basis(3, 0));
        assert!(site_state(3, 4).is_err());
    }
}
