//! Fidelities, ensemble statistics and the excitation-front velocity.

use std::f64::consts::E;

use thiserror::Error;

use crate::chain::{ChainError, ChainSpec};
use crate::linalg::{hermitian_eig, sqrt_psd, ComplexMatrix, LinalgError, StateVector};
use crate::protocols::Trajectory;
use crate::theory::TheoryPrediction;

/// Trace and PSD tolerance for density-matrix inputs.
pub const DENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("final times differ: {protocol} us vs reference {reference} us")]
    TimeMismatch { protocol: f64, reference: f64 },
    #[error("edge population for lambda = {lambda} never exceeds the threshold")]
    NoPeakFound { lambda: usize },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("velocity fit needs at least two subspace sizes")]
    TooFewPoints,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_density(rho: &ComplexMatrix, name: &str) -> Result<(), AnalysisError> {
    if !rho.is_hermitian() {
        return Err(AnalysisError::InvalidDensityMatrix(format!("{name} is not Hermitian")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > DENSITY_TOL || tr.im.abs() > DENSITY_TOL {
        return Err(AnalysisError::InvalidDensityMatrix(format!("{name} has trace {tr}")));
    }
    Ok(())
}

/// `Tr sqrt(sqrt(a) b sqrt(a))`, clamped to `[0, 1]`.
pub fn uhlmann_fidelity(rho_a: &ComplexMatrix, rho_b: &ComplexMatrix) -> Result<f64, AnalysisError> {
    if rho_a.dim() != rho_b.dim() {
        return Err(AnalysisError::Linalg(LinalgError::DimensionMismatch { left: rho_a.dim(), right: rho_b.dim() }));
    }
    check_density(rho_a, "first argument")?;
    check_density(rho_b, "second argument")?;
    let sa = sqrt_psd(rho_a).map_err(|e| AnalysisError::InvalidDensityMatrix(e.to_string()))?;
    // PSD check on the second argument.
    sqrt_psd(rho_b).map_err(|e| AnalysisError::InvalidDensityMatrix(e.to_string()))?;
    let m = &(&sa * rho_b) * &sa;
    let eig = hermitian_eig(&m)?;
    // Rounding leaves eigenvalues of order dim * eps on the null space; their square
    // roots would dominate the error for pure states.
    let floor = 64.0 * m.dim() as f64 * f64::EPSILON;
    let f: f64 = eig.eigenvalues.iter().filter(|&&l| l > floor).map(|l| l.sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// `|<a|b>|`, the fidelity of two pure states.
pub fn pure_state_fidelity(a: &StateVector, b: &StateVector) -> f64 {
    a.inner(b).norm().min(1.0)
}

/// Fidelity of a protocol's final state against the exact-subspace reference,
/// which is zero-padded to the chain dimension.
pub fn protocol_fidelity(traj: &Trajectory, reference: &Trajectory) -> Result<f64, AnalysisError> {
    let (tp, tr) = (traj.total_time(), reference.total_time());
    if (tp - tr).abs() > 1e-9 * tp.abs().max(1.0) {
        return Err(AnalysisError::TimeMismatch { protocol: tp, reference: tr });
    }
    let n = traj.final_state.dim();
    let psi_ref = reference.final_state.embed(n);
    let a = ComplexMatrix::pure_density(&psi_ref);
    let b = ComplexMatrix::pure_density(&traj.final_state);
    uhlmann_fidelity(&a, &b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub realizations: usize,
    /// Final survival probabilities, ascending.
    pub final_p: Vec<f64>,
    pub mean_ln_p: f64,
    /// Sample standard deviation (`R - 1` denominator); zero for a single realisation.
    pub std_ln_p: f64,
    /// Centre of the fullest histogram bin of `ln P` (bin width `std / 5`).
    pub mode_ln_p: f64,
    pub theory_pstar: f64,
    pub theory_ln_pstar: f64,
}

impl EnsembleSummary {
    pub fn most_probable_p(&self) -> f64 {
        self.mode_ln_p.exp()
    }

    pub fn mean_final_p(&self) -> f64 {
        self.final_p.iter().sum::<f64>() / self.realizations as f64
    }
}

pub fn aggregate(realizations: &[Trajectory], theory: &TheoryPrediction) -> Result<EnsembleSummary, AnalysisError> {
    if realizations.is_empty() {
        return Err(AnalysisError::EmptyEnsemble);
    }
    let mut ln_p: Vec<f64> = realizations.iter().map(|t| t.final_log_survival()).collect();
    let mut final_p: Vec<f64> = realizations.iter().map(|t| t.final_survival()).collect();
    ln_p.sort_by(f64::total_cmp);
    final_p.sort_by(f64::total_cmp);
    let r = ln_p.len();
    let mean = ln_p.iter().sum::<f64>() / r as f64;
    let std =
        if r > 1 { (ln_p.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1) as f64).sqrt() } else { 0.0 };
    Ok(EnsembleSummary {
        realizations: r,
        final_p,
        mean_ln_p: mean,
        std_ln_p: std,
        mode_ln_p: histogram_mode(&ln_p, std).unwrap_or(mean),
        theory_pstar: theory.pstar,
        theory_ln_pstar: theory.ln_pstar,
    })
}

/// Mode of sorted samples with bins of width `std / 5` anchored at the minimum.
fn histogram_mode(sorted: &[f64], std: f64) -> Option<f64> {
    let width = std / 5.0;
    if !width.is_finite() || width <= 0.0 {
        return None;
    }
    let lo = sorted[0];
    let bins = ((sorted[sorted.len() - 1] - lo) / width).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for &x in sorted {
        let b = (((x - lo) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let (best, _) = counts.iter().enumerate().fold((0, 0), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc });
    Some(lo + (best as f64 + 0.5) * width)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFit {
    pub lambda_values: Vec<usize>,
    /// us
    pub first_peak_times: Vec<f64>,
    /// Slope of `lambda - 1` against the peak time, sites/us.
    pub velocity: f64,
    /// `e * beta`, sites/us.
    pub bound: f64,
}

impl VelocityFit {
    pub fn ratio(&self) -> f64 {
        self.velocity / self.bound
    }
}

/// Time of the first strict local maximum of `|c_lambda(t)|^2` above `threshold`
/// for a chain of `lambda` sites started in `|1_1>`, refined by a parabola through
/// the three grid points around it.
pub fn first_peak_time(beta: f64, lambda: usize, threshold: f64, dt: f64, t_max: f64) -> Result<f64, AnalysisError> {
    if lambda < 2 {
        return Err(AnalysisError::NoPeakFound { lambda });
    }
    let spec = ChainSpec::new_relaxed(lambda, 0.0, beta, lambda)?;
    let eig = hermitian_eig(&crate::chain::hamiltonian(&spec)?)?;
    let coeffs = eig.eigenbasis_coefficients(&StateVector::basis(lambda, 0));
    let weights: Vec<_> = coeffs.iter().enumerate().map(|(k, c)| eig.eigenvectors[(lambda - 1, k)] * c).collect();
    let pop = |t: f64| -> f64 {
        weights
            .iter()
            .zip(&eig.eigenvalues)
            .map(|(w, &e)| w * num_complex::Complex64::from_polar(1.0, -e * t))
            .sum::<num_complex::Complex64>()
            .norm_sqr()
    };
    let steps = (t_max / dt).ceil() as usize;
    let (mut y0, mut y1) = (pop(0.0), pop(dt));
    for k in 1..steps {
        let y2 = pop((k + 1) as f64 * dt);
        if y1 > threshold && y1 > y0 && y1 > y2 {
            let denom = y0 - 2.0 * y1 + y2;
            let shift = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
            return Ok((k as f64 + shift) * dt);
        }
        y0 = y1;
        y1 = y2;
    }
    Err(AnalysisError::NoPeakFound { lambda })
}

/// Least-squares line through `(t_peak(lambda), lambda - 1)`.
pub fn fit_velocity(beta: f64, lambdas: &[usize], threshold: f64, dt: f64) -> Result<VelocityFit, AnalysisError> {
    if lambdas.len() < 2 {
        return Err(AnalysisError::TooFewPoints);
    }
    let mut times = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        // The front needs roughly (lambda - 1) / beta; allow a wide margin.
        let t_max = 20.0 * l as f64 / beta;
        times.push(first_peak_time(beta, l, threshold, dt, t_max)?);
    }
    let n = lambdas.len() as f64;
    let xs = &times;
    let ys: Vec<f64> = lambdas.iter().map(|&l| (l - 1) as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(VelocityFit { lambda_values: lambdas.to_vec(), first_peak_times: times, velocity: sxy / sxx, bound: E * beta })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
