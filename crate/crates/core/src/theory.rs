//! Closed-form survival predictions.
//!
//! With `x = m Var(H_Pi) (1 + kappa) mu_mean^2`, the typical survival probability is
//! `exp(-x)` in the weak regime and `1 - x` in the strong regime. For the chain,
//! `Var(H_Pi) = beta^2 |c_lambda|^2`, and a time-dependent edge population enters
//! through its time average.

use num_complex::Complex64;
use thiserror::Error;

use crate::chain::{hamiltonian, leakage_operator, outside_population, zeno_hamiltonian, ChainError, ChainSpec};
use crate::linalg::{hermitian_eig, ComplexMatrix, EigenDecomposition, LinalgError, StateVector};
use crate::stochastics::{IntervalDistribution, Moments};

/// Exponent above which the linearised form is flagged.
pub const STRONG_REGIME_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("survival factor q({mu}) = {q} is outside (0, 1]")]
    NonPositiveQ { mu: f64, q: f64 },
    #[error("finite-difference estimate not converged: {coarse:e} at step h vs {fine:e} at h/2")]
    GridTooCoarse { coarse: f64, fine: f64 },
    #[error("edge-population series ends at {available} us, {required} us needed")]
    SeriesTooShort { available: f64, required: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Strong,
    Weak,
    TimeAveraged,
    ExactProduct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryPrediction {
    pub pstar: f64,
    /// `ln pstar`, kept separately so small survival values lose no precision.
    pub ln_pstar: f64,
    pub regime: Regime,
    pub m: usize,
    pub moments: Moments,
    /// The variance term in rad^2/us^2 (`beta^2 <|c_lambda|^2>` for the time-averaged form).
    pub variance: f64,
    /// `m * variance * (1 + kappa) * mu_mean^2`
    pub exponent: f64,
    /// Set when the strong-regime form is used with `exponent > 0.1`.
    pub out_of_regime: bool,
}

fn exponent(m: usize, moments: &Moments, variance: f64) -> f64 {
    m as f64 * variance * (1.0 + moments.kappa) * moments.mean * moments.mean
}

/// `<H_Pi^2> - <H_Pi>^2` with `H_Pi = H - Pi H Pi`.
pub fn variance_h_pi(psi: &StateVector, spec: &ChainSpec) -> Result<f64, TheoryError> {
    let hp = leakage_operator(spec)?;
    let v = hp.apply(psi);
    let mean = psi.inner(&v).re;
    let second = v.norm_sqr();
    Ok((second - mean * mean).max(0.0))
}

/// `beta^2 |c_lambda|^2`, the chain value of the leakage variance for states in the subspace.
pub fn edge_variance(psi: &StateVector, spec: &ChainSpec) -> f64 {
    spec.beta * spec.beta * psi[spec.lambda - 1].norm_sqr()
}

pub fn pstar_weak(m: usize, d: &IntervalDistribution, variance: f64) -> TheoryPrediction {
    let moments = d.moments();
    let x = exponent(m, &moments, variance);
    TheoryPrediction {
        pstar: (-x).exp(),
        ln_pstar: -x,
        regime: Regime::Weak,
        m,
        moments,
        variance,
        exponent: x,
        out_of_regime: false,
    }
}

/// Linearised prediction `1 - x`. Clamped at zero; `out_of_regime` flags `x > 0.1`.
pub fn pstar_strong(m: usize, d: &IntervalDistribution, variance: f64) -> TheoryPrediction {
    let moments = d.moments();
    let x = exponent(m, &moments, variance);
    let pstar = (1.0 - x).max(0.0);
    TheoryPrediction {
        pstar,
        ln_pstar: (-x).ln_1p(),
        regime: Regime::Strong,
        m,
        moments,
        variance,
        exponent: x,
        out_of_regime: x > STRONG_REGIME_LIMIT,
    }
}

/// `exp(m sum_mu p(mu) ln q(mu))` for a survival factor that depends only on `mu`.
pub fn pstar_exact_product(
    m: usize,
    d: &IntervalDistribution,
    q_of_mu: impl Fn(f64) -> f64,
) -> Result<TheoryPrediction, TheoryError> {
    let mut mean_ln_q = 0.0;
    for &(mu, p) in d.atoms() {
        let q = q_of_mu(mu);
        if !(q > 0.0 && q <= 1.0 + 1e-12) {
            return Err(TheoryError::NonPositiveQ { mu, q });
        }
        mean_ln_q += p * q.min(1.0).ln();
    }
    let ln_pstar = m as f64 * mean_ln_q;
    Ok(TheoryPrediction {
        pstar: ln_pstar.exp(),
        ln_pstar,
        regime: Regime::ExactProduct,
        m,
        moments: d.moments(),
        variance: f64::NAN,
        exponent: -ln_pstar,
        out_of_regime: false,
    })
}

/// `|c_lambda(t)|^2` under the Zeno Hamiltonian on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePopulationSeries {
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Trapezoidal average over the whole grid.
    pub time_average: f64,
}

impl EdgePopulationSeries {
    /// Builds the series from samples; `t_grid` must start at 0 and increase.
    pub fn from_samples(t_grid: Vec<f64>, values: Vec<f64>) -> Result<Self, TheoryError> {
        if t_grid.len() != values.len() || t_grid.len() < 2 {
            return Err(TheoryError::InvalidArgument("series needs at least two matching samples".into()));
        }
        if t_grid[0] != 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TheoryError::InvalidArgument("time grid must start at 0 and increase".into()));
        }
        let mut s = Self { t_grid, values, time_average: 0.0 };
        s.time_average = s.integral_until(s.t_max()) / s.t_max();
        Ok(s)
    }

    pub fn t_max(&self) -> f64 {
        *self.t_grid.last().expect("series is non-empty")
    }

    /// Trapezoidal integral over `[0, t]`, interpolating linearly inside the last panel.
    pub fn integral_until(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.t_grid.len() {
            let (t0, t1) = (self.t_grid[k - 1], self.t_grid[k]);
            let (y0, y1) = (self.values[k - 1], self.values[k]);
            if t >= t1 {
                acc += 0.5 * (y0 + y1) * (t1 - t0);
            } else {
                if t > t0 {
                    let yt = y0 + (y1 - y0) * (t - t0) / (t1 - t0);
                    acc += 0.5 * (y0 + yt) * (t - t0);
                }
                break;
            }
        }
        acc
    }

    /// `(1/t) int_0^t |c_lambda|^2`.
    pub fn average_until(&self, t: f64) -> Result<f64, TheoryError> {
        if t > self.t_max() * (1.0 + 1e-12) {
            return Err(TheoryError::SeriesTooShort { available: self.t_max(), required: t });
        }
        if t <= 0.0 {
            return Ok(self.values[0]);
        }
        Ok(self.integral_until(t) / t)
    }
}

/// Edge-site amplitude evaluator for the subspace dynamics of `psi0`.
struct EdgeAmplitude {
    eig: EigenDecomposition,
    weights: Vec<Complex64>,
}

impl EdgeAmplitude {
    fn new(spec: &ChainSpec, psi0: &StateVector) -> Result<Self, TheoryError> {
        if outside_population(psi0, spec.lambda) > 1e-12 {
            return Err(TheoryError::InvalidArgument("initial state must lie in the subspace".into()));
        }
        let eig = hermitian_eig(&zeno_hamiltonian(spec)?)?;
        let coeffs = eig.eigenbasis_coefficients(&psi0.truncate(spec.lambda));
        let edge = spec.lambda - 1;
        let weights = coeffs.iter().enumerate().map(|(k, c)| eig.eigenvectors[(edge, k)] * c).collect();
        Ok(Self { eig, weights })
    }

    fn population(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.eig.eigenvalues)
            .map(|(w, &e)| w * Complex64::from_polar(1.0, -e * t))
            .sum::<Complex64>()
            .norm_sqr()
    }
}

/// Samples `|c_lambda(t)|^2` on `[0, t_m]` with step at most `dt`, evolving under `H_lambda`.
pub fn edge_population(
    spec: &ChainSpec,
    psi0: &StateVector,
    t_m: f64,
    dt: f64,
) -> Result<EdgePopulationSeries, TheoryError> {
    if !(t_m > 0.0 && dt > 0.0 && t_m.is_finite()) {
        return Err(TheoryError::InvalidArgument(format!("need t_m > 0 and dt > 0, got {t_m}, {dt}")));
    }
    let amp = EdgeAmplitude::new(spec, psi0)?;
    let n = (t_m / dt).ceil().max(1.0) as usize;
    let h = t_m / n as f64;
    let t_grid: Vec<f64> = (0..=n).map(|k| if k == n { t_m } else { k as f64 * h }).collect();
    let values = t_grid.iter().map(|&t| amp.population(t)).collect();
    EdgePopulationSeries::from_samples(t_grid, values)
}

/// `exp(-m beta^2 mu_mean^2 (1 + kappa) <|c_lambda|^2>)` with the average over `[0, m mu_mean]`.
pub fn pstar_time_averaged(
    m: usize,
    d: &IntervalDistribution,
    series: &EdgePopulationSeries,
    beta: f64,
) -> Result<TheoryPrediction, TheoryError> {
    let moments = d.moments();
    let avg = series.average_until(m as f64 * moments.mean)?;
    let variance = beta * beta * avg;
    let x = exponent(m, &moments, variance);
    Ok(TheoryPrediction {
        pstar: (-x).exp(),
        ln_pstar: -x,
        regime: Regime::TimeAveraged,
        m,
        moments,
        variance,
        exponent: x,
        out_of_regime: false,
    })
}

/// Edge population of the `H_lambda` eigenstate with the largest overlap with `psi0`.
pub fn eigenstate_edge_population(spec: &ChainSpec, psi0: &StateVector) -> Result<f64, TheoryError> {
    let eig = hermitian_eig(&zeno_hamiltonian(spec)?)?;
    let coeffs = eig.eigenbasis_coefficients(&psi0.truncate(spec.lambda));
    let best = coeffs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .map(|(k, _)| k)
        .ok_or_else(|| TheoryError::InvalidArgument("empty subspace".into()))?;
    Ok(eig.eigenvectors[(spec.lambda - 1, best)].norm_sqr())
}

/// `ln q(mu)` for a single free evolution of `psi0` followed by projection.
pub fn ln_q_exact(eig: &EigenDecomposition, psi0: &StateVector, lambda: usize, mu: f64) -> f64 {
    let psi = eig.evolve(psi0, mu);
    (-outside_population(&psi, lambda)).ln_1p()
}

/// `C = max |(1/6) d^3 ln q / d mu^3|` over `[0, mu_max]`, sampled every `grid_step`.
///
/// The derivative uses the five-point central stencil with step `grid_step`; the
/// result must agree within 10% with the same stencil at half the step.
pub fn remainder_constant(
    spec: &ChainSpec,
    psi0: &StateVector,
    mu_max: f64,
    grid_step: f64,
) -> Result<f64, TheoryError> {
    if !(mu_max > 0.0 && grid_step > 0.0 && grid_step <= mu_max) {
        return Err(TheoryError::InvalidArgument(format!("need 0 < grid_step <= mu_max, got {grid_step}, {mu_max}")));
    }
    let eig = hermitian_eig(&hamiltonian(spec)?)?;
    let f = |mu: f64| ln_q_exact(&eig, psi0, spec.lambda, mu);
    let third =
        |x: f64, h: f64| (-f(x - 2.0 * h) + 2.0 * f(x - h) - 2.0 * f(x + h) + f(x + 2.0 * h)) / (2.0 * h * h * h);
    let n = (mu_max / grid_step).round() as usize;
    let mut coarse: f64 = 0.0;
    let mut fine: f64 = 0.0;
    let mut leak_max: f64 = 0.0;
    for k in 0..=n {
        let x = (k as f64 * grid_step).min(mu_max);
        coarse = coarse.max((third(x, grid_step) / 6.0).abs());
        fine = fine.max((third(x, grid_step / 2.0) / 6.0).abs());
        leak_max = leak_max.max(-f(x + 2.0 * grid_step).exp_m1());
    }
    // Amplitude rounding of order dim * eps perturbs ln q by about 2 |c| dim eps.
    let f_noise = 4.0 * spec.n as f64 * f64::EPSILON * (leak_max.sqrt() + f64::EPSILON);
    let half = grid_step / 2.0;
    let noise = 10.0 * f_noise / (2.0 * half * half * half);
    if coarse.max(fine) <= noise {
        return Ok(fine.max(coarse));
    }
    if (coarse - fine).abs() > 0.1 * coarse.max(fine) {
        return Err(TheoryError::GridTooCoarse { coarse, fine });
    }
    Ok(fine)
}

/// Survival of level 1 for `H = omega (|1><2| + h.c.) + g (|2><3| + h.c.)` started in level 1.
pub fn three_level_survival(omega: f64, g: f64, t: f64) -> f64 {
    let w2 = omega * omega;
    let big = w2 + g * g;
    if big == 0.0 {
        return 1.0;
    }
    let amp = 1.0 - 2.0 * w2 / big * (0.5 * big.sqrt() * t).sin().powi(2);
    amp * amp
}

pub fn three_level_hamiltonian(omega: f64, g: f64) -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, omega, 0.0], &[omega, 0.0, g], &[0.0, g, 0.0]]).expect("3x3 rows")
}

/// Change of basis that diagonalises the `|2>, |3>` coupling block.
pub fn three_level_transform() -> ComplexMatrix {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, r, r], &[0.0, r, -r]]).expect("3x3 rows")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{site_state, w_state, DEFAULT_RATE};

    const B: f64 = DEFAULT_RATE;

    fn fig2() -> IntervalDistribution {
        IntervalDistribution::new(vec![(1.0, 0.5), (5.0, 0.5)]).unwrap()
    }

    #[test]
    fn variance_matches_edge_formula() {
        let spec = ChainSpec::with_default_rates(12, 5).unwrap();
        for psi in [w_state(12, 5), site_state(12, 1).unwrap(), site_state(12, 5).unwrap()] {
            let a = variance_h_pi(&psi, &spec).unwrap();
            let b = edge_variance(&psi, &spec);
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        assert!((variance_h_pi(&w_state(12, 5), &spec).unwrap() - B * B / 5.0).abs() < 1e-15);
        assert!((variance_h_pi(&site_state(12, 5).unwrap(), &spec).unwrap() - B * B).abs() < 1e-15);
        assert_eq!(edge_variance(&site_state(12, 1).unwrap(), &spec), 0.0);
    }

    #[test]
    fn weak_regime_numbers() {
        let p = pstar_weak(500, &fig2(), B * B / 2.0);
        assert!((p.ln_pstar + 3.2076).abs() < 1e-3, "{}", p.ln_pstar);
        assert!((p.pstar - 0.0404).abs() < 5e-4);
        assert_eq!(pstar_weak(500, &fig2(), 0.0).pstar, 1.0);
        let p2 = pstar_weak(1000, &fig2(), B * B / 2.0);
        assert!((p2.pstar - p.pstar * p.pstar).abs() < 1e-15);
    }

    #[test]
    fn strong_regime_identity() {
        let d = IntervalDistribution::deterministic(0.5).unwrap();
        let s = pstar_strong(20, &d, B * B / 2.0);
        let w = pstar_weak(20, &d, B * B / 2.0);
        assert_eq!(s.exponent, -w.ln_pstar);
        assert!((1.0 - s.pstar + w.ln_pstar).abs() < 1e-16);
        assert!(!s.out_of_regime);
        assert!(pstar_strong(5000, &fig2(), B * B).out_of_regime);
        assert_eq!(pstar_strong(10, &d, 0.0).pstar, 1.0);
    }

    #[test]
    fn exact_product_two_level() {
        let p = pstar_exact_product(100, &fig2(), |mu| (B * mu).cos().powi(2)).unwrap();
        let expected = (100.0 * 0.5 * ((B).cos().powi(2).ln() + (5.0 * B).cos().powi(2).ln())).exp();
        assert!((p.pstar - expected).abs() < 1e-15);
        assert_eq!(pstar_exact_product(10, &fig2(), |_| 1.0).unwrap().pstar, 1.0);
        let single = IntervalDistribution::deterministic(2.0).unwrap();
        let p = pstar_exact_product(7, &single, |_| 0.9).unwrap();
        assert!((p.pstar - 0.9f64.powi(7)).abs() < 1e-15);
        assert!(matches!(pstar_exact_product(1, &single, |_| 0.0), Err(TheoryError::NonPositiveQ { .. })));
    }

    #[test]
    fn edge_population_cases() {
        let spec = ChainSpec::with_default_rates(12, 2).unwrap();
        let s = edge_population(&spec, &w_state(12, 2), 300.0, 0.15).unwrap();
        assert!(s.values.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!((s.time_average - 0.5).abs() < 1e-12);

        let period = std::f64::consts::PI / B;
        let s = edge_population(&spec, &site_state(12, 1).unwrap(), 20.0 * period, 0.15).unwrap();
        assert!((s.time_average - 0.5).abs() < 1e-6);

        let one = ChainSpec::with_default_rates(12, 1).unwrap();
        let s = edge_population(&one, &site_state(12, 1).unwrap(), 10.0, 0.15).unwrap();
        assert!(s.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn time_averaged_reduces_to_constant_form() {
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 20.0).collect();
        let series = EdgePopulationSeries::from_samples(grid, vec![0.3; 101]).unwrap();
        let d = IntervalDistribution::new(vec![(1.0, 0.5), (5.0, 0.5)]).unwrap();
        let avg = pstar_time_averaged(500, &d, &series, B).unwrap();
        let weak = pstar_weak(500, &d, B * B * 0.3);
        assert!((avg.ln_pstar - weak.ln_pstar).abs() <= 1e-12 * weak.ln_pstar.abs());
        let zero = EdgePopulationSeries::from_samples(vec![0.0, 2000.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(pstar_time_averaged(500, &d, &zero, B).unwrap().pstar, 1.0);
        assert!(matches!(pstar_time_averaged(1000, &d, &zero, B), Err(TheoryError::SeriesTooShort { .. })));
    }

    #[test]
    fn eigenstate_edge_for_w_state() {
        let spec = ChainSpec::with_default_rates(12, 2).unwrap();
        assert!((eigenstate_edge_population(&spec, &w_state(12, 2)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn remainder_constant_two_level() {
        let spec = ChainSpec::new_relaxed(2, B, B, 1).unwrap();
        let psi0 = site_state(2, 1).unwrap();
        let c = remainder_constant(&spec, &psi0, 5.0, 0.05).unwrap();
        let x = B * 5.0;
        let analytic = 2.0 / 3.0 * B.powi(3) * x.tan() / x.cos().powi(2);
        assert!(((c - analytic) / analytic).abs() < 0.01, "{c} vs {analytic}");
    }

    #[test]
    fn remainder_constant_vanishes_for_frozen_chain() {
        let spec = ChainSpec::new_relaxed(2, 1e-6, 1e-6, 1).unwrap();
        let c = remainder_constant(&spec, &site_state(2, 1).unwrap(), 5.0, 0.05).unwrap();
        assert!(c < 1e-15, "{c}");
    }

    #[test]
    fn three_level_limits() {
        assert_eq!(three_level_survival(1.0, 2.0, 0.0), 1.0);
        for &t in &[0.3, 1.7, 4.0] {
            assert!((three_level_survival(1.0, 0.0, t) - t.cos().powi(2)).abs() < 1e-14);
        }
        let floor = (1.0 - 2.0 / 101.0f64).powi(2);
        for k in 0..1000 {
            assert!(three_level_survival(1.0, 10.0, k as f64 * 0.01) >= floor - 1e-15);
        }
    }

    #[test]
    fn transform_diagonalises_coupling() {
        let t = three_level_transform();
        let td = t.adjoint();
        assert!((&td * &t).max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
        let g = 3.0;
        let hc = three_level_hamiltonian(0.0, g);
        let d = &(&td * &hc) * &t;
        assert!(d.scale_real(1.0 / g).max_abs_diff(&ComplexMatrix::from_diagonal(&[0.0, 1.0, -1.0])) < 1e-14);
        let omega = 0.7;
        let full = &(&td * &three_level_hamiltonian(omega, g)) * &t;
        let r = omega * std::f64::consts::FRAC_1_SQRT_2;
        let expected = ComplexMatrix::from_real_rows(&[&[0.0, r, r], &[r, g, 0.0], &[r, 0.0, -g]]).unwrap();
        assert!(full.max_abs_diff(&expected) < 1e-14);
    }
}
