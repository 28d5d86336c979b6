//! The three confinement protocols and the ideal-confinement reference.
//!
//! * Projective measurements: free evolution for `mu_j`, then a projection onto
//!   the subspace. The run follows the surviving branch: `q_j` is the in-subspace
//!   population before projection, the state is renormalised, and the survival
//!   probability is `prod q_j`.
//! * Pulsed coupling: free evolution for `mu_j`, then the instantaneous kick
//!   `exp(-i H_c s)`. Nothing is renormalised.
//! * Continuous coupling: evolution under `H + g H_c` for the whole run.
//!
//! Leakage `1 - P` is accumulated from the outside populations directly, so tiny
//! leakages keep full relative precision.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{
    coupling_hamiltonian, hamiltonian, inside_population, outside_population, zeno_hamiltonian, ChainError, ChainSpec,
};
use crate::linalg::{hermitian_eig, ComplexMatrix, EigenDecomposition, LinalgError, StateVector};
use crate::numfmt::g15;
use crate::stochastics::{sample_intervals, IntervalDistribution, SeededSampler};

/// Population outside the subspace tolerated in an initial state.
pub const SUBSPACE_TOL: f64 = 1e-12;
/// Allowed deviation of `||psi||^2` from one.
pub const NORM_TOL: f64 = 1e-10;
/// Survival factors below this end the run.
pub const DEAD_BRANCH: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error(
        "initial state must be normalized and inside the subspace (outside population {outside:e}, norm^2 {norm_sqr})"
    )]
    InitialStateOutsideSubspace { outside: f64, norm_sqr: f64 },
    #[error("survival factor {q:e} at step {step} is numerically zero")]
    ZeroSurvival { step: usize, q: f64 },
    #[error("state has dimension {found}, chain has {expected} sites")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),
    #[error("sample times must be non-decreasing within [0, {total_time}]")]
    BadSampleTimes { total_time: f64 },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    ProjectiveMeasurement,
    PulsedCoupling,
    ContinuousCoupling,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [Self::ProjectiveMeasurement, Self::PulsedCoupling, Self::ContinuousCoupling];

    /// Short label used in CSV files and configs.
    pub fn label(self) -> &'static str {
        match self {
            Self::ProjectiveMeasurement => "pm",
            Self::PulsedCoupling => "pc",
            Self::ContinuousCoupling => "cc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pm" | "p.m." | "projective" | "projective_measurement" => Some(Self::ProjectiveMeasurement),
            "pc" | "p.c." | "pulsed" | "pulsed_coupling" => Some(Self::PulsedCoupling),
            "cc" | "c.c." | "continuous" | "continuous_coupling" => Some(Self::ContinuousCoupling),
            _ => None,
        }
    }

    pub fn needs_coupling_sites(self) -> bool {
        !matches!(self, Self::ProjectiveMeasurement)
    }
}

/// How measurement outcomes are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeasurementMode {
    /// Follow the surviving branch and multiply the survival factors.
    #[default]
    PostSelected,
    /// Draw each outcome; the run stops at the first escape.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub m: usize,
    pub distribution: IntervalDistribution,
    /// Kick angle `s` in rad (pulsed coupling).
    pub pulse_area: f64,
    /// Coupling `g` in rad/us (continuous coupling); `None` means `pi / (2 mu_mean)`.
    pub coupling: Option<f64>,
    pub record_states: bool,
    pub measurement: MeasurementMode,
}

impl ProtocolConfig {
    pub fn new(kind: ProtocolKind, m: usize, distribution: IntervalDistribution) -> Self {
        Self {
            kind,
            m,
            distribution,
            pulse_area: PI / 2.0,
            coupling: None,
            record_states: false,
            measurement: MeasurementMode::PostSelected,
        }
    }

    pub fn with_kind(&self, kind: ProtocolKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn coupling_strength(&self) -> f64 {
        self.coupling.unwrap_or_else(|| PI / (2.0 * self.distribution.moments().mean))
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.m == 0 {
            return Err(ProtocolError::InvalidConfig("m must be at least 1".into()));
        }
        if !(self.pulse_area > 0.0 && self.pulse_area.is_finite()) {
            return Err(ProtocolError::InvalidConfig(format!("pulse area must be positive, got {}", self.pulse_area)));
        }
        let g = self.coupling_strength();
        if !(g > 0.0 && g.is_finite()) {
            return Err(ProtocolError::InvalidConfig(format!("coupling must be positive, got {g}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Protocol(ProtocolKind),
    /// Evolution under the Zeno Hamiltonian alone.
    ExactSubspace,
}

/// One realisation. Per-step vectors are indexed by step `j = 1..=m` at position `j - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub lambda: usize,
    pub intervals: Vec<f64>,
    /// Cumulative time after each step.
    pub times: Vec<f64>,
    /// `q_j`; projective measurements only, empty otherwise.
    pub survival_factors: Vec<f64>,
    /// Survival probability after each step.
    pub cumulative_survival: Vec<f64>,
    /// `ln` of `cumulative_survival`, accumulated without cancellation.
    pub log_survival: Vec<f64>,
    /// `Tr(Pi rho)` after the free evolution of each step (before any projection).
    pub subspace_population: Vec<f64>,
    pub states: Option<Vec<StateVector>>,
    pub final_state: StateVector,
    /// False only when a Bernoulli run registered an escape.
    pub survived: bool,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.times.len()
    }

    pub fn total_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn final_survival(&self) -> f64 {
        self.cumulative_survival.last().copied().unwrap_or(1.0)
    }

    pub fn final_log_survival(&self) -> f64 {
        self.log_survival.last().copied().unwrap_or(0.0)
    }

    /// `1 - P` at the end of the run.
    pub fn leakage(&self) -> f64 {
        match self.kind {
            TrajectoryKind::Protocol(ProtocolKind::ProjectiveMeasurement) => -self.final_log_survival().exp_m1(),
            TrajectoryKind::Protocol(_) => outside_population(&self.final_state, self.lambda),
            TrajectoryKind::ExactSubspace => 0.0,
        }
    }

    /// CSV with header `step,t_us,mu_us,q_j,P_cum,pop_subspace`; `q_j` is empty
    /// for protocols without measurements.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "t_us", "mu_us", "q_j", "P_cum", "pop_subspace"])?;
        for j in 0..self.steps() {
            let q = self.survival_factors.get(j).map(|&q| g15(q)).unwrap_or_default();
            w.write_record([
                (j + 1).to_string(),
                g15(self.times[j]),
                g15(self.intervals[j]),
                q,
                g15(self.cumulative_survival[j]),
                g15(self.subspace_population[j]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_initial(spec: &ChainSpec, psi0: &StateVector) -> Result<(), ProtocolError> {
    if psi0.dim() != spec.n {
        return Err(ProtocolError::DimensionMismatch { expected: spec.n, found: psi0.dim() });
    }
    let outside = outside_population(psi0, spec.lambda);
    let norm_sqr = psi0.norm_sqr();
    if outside > SUBSPACE_TOL || (norm_sqr - 1.0).abs() > NORM_TOL {
        return Err(ProtocolError::InitialStateOutsideSubspace { outside, norm_sqr });
    }
    Ok(())
}

/// `ln(1 - leak)` given both the leaked and the retained population.
fn ln_retained(leak: f64, kept: f64) -> f64 {
    if leak < 0.5 {
        (-leak).ln_1p()
    } else {
        kept.ln()
    }
}

/// Precomputed operators for one chain and protocol, shared across realisations.
#[derive(Debug, Clone)]
pub struct ProtocolEngine {
    spec: ChainSpec,
    config: ProtocolConfig,
    free: EigenDecomposition,
    kick: Option<ComplexMatrix>,
    /// Step operator per distribution atom, keyed by the bits of `mu`.
    cache: Vec<(u64, ComplexMatrix)>,
    coupled: Option<EigenDecomposition>,
}

impl ProtocolEngine {
    pub fn new(spec: &ChainSpec, config: &ProtocolConfig) -> Result<Self, ProtocolError> {
        config.validate()?;
        spec.validate_relaxed()?;
        let h = hamiltonian(spec)?;
        let free = hermitian_eig(&h)?;
        let mut kick = None;
        let mut coupled = None;
        match config.kind {
            ProtocolKind::ProjectiveMeasurement => {}
            ProtocolKind::PulsedCoupling => {
                let hc = coupling_hamiltonian(spec)?;
                kick = Some(hermitian_eig(&hc)?.propagator(config.pulse_area));
            }
            ProtocolKind::ContinuousCoupling => {
                let hc = coupling_hamiltonian(spec)?;
                let total = &h + &hc.scale_real(config.coupling_strength());
                coupled = Some(hermitian_eig(&total)?);
            }
        }
        let mut engine = Self { spec: spec.clone(), config: config.clone(), free, kick, cache: Vec::new(), coupled };
        if config.kind != ProtocolKind::ContinuousCoupling {
            engine.cache =
                config.distribution.atoms().iter().map(|&(mu, _)| (mu.to_bits(), engine.build_step(mu))).collect();
        }
        Ok(engine)
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    fn build_step(&self, mu: f64) -> ComplexMatrix {
        let u = self.free.propagator(mu);
        match &self.kick {
            Some(k) => k * &u,
            None => u,
        }
    }

    fn step(&self, mu: f64) -> Cow<'_, ComplexMatrix> {
        let bits = mu.to_bits();
        match self.cache.iter().find(|(b, _)| *b == bits) {
            Some((_, u)) => Cow::Borrowed(u),
            None => Cow::Owned(self.build_step(mu)),
        }
    }

    /// Draws `m` intervals from `sampler` and runs the configured protocol.
    pub fn run_sampled(&self, psi0: &StateVector, sampler: &mut SeededSampler) -> Result<Trajectory, ProtocolError> {
        let intervals = sample_intervals(&self.config.distribution, sampler, self.config.m);
        self.run_intervals(psi0, &intervals, Some(sampler))
    }

    /// Runs the configured protocol on an explicit interval sequence. The sampler
    /// is consulted only for Bernoulli measurement outcomes.
    pub fn run_intervals(
        &self,
        psi0: &StateVector,
        intervals: &[f64],
        sampler: Option<&mut SeededSampler>,
    ) -> Result<Trajectory, ProtocolError> {
        check_initial(&self.spec, psi0)?;
        if let Some(&mu) = intervals.iter().find(|&&mu| !(mu >= 0.0 && mu.is_finite())) {
            return Err(ProtocolError::InvalidConfig(format!("interval {mu} must be non-negative")));
        }
        match self.config.kind {
            ProtocolKind::ProjectiveMeasurement => self.measured(psi0, intervals, sampler),
            ProtocolKind::PulsedCoupling => self.pulsed(psi0, intervals),
            ProtocolKind::ContinuousCoupling => {
                let times = cumulative_times(intervals);
                let coupled = self.coupled.as_ref().expect("continuous engine has a coupled decomposition");
                Ok(continuous_from(coupled, &self.spec, psi0, &times, self.config.record_states))
            }
        }
    }

    fn measured(
        &self,
        psi0: &StateVector,
        intervals: &[f64],
        mut sampler: Option<&mut SeededSampler>,
    ) -> Result<Trajectory, ProtocolError> {
        let lambda = self.spec.lambda;
        let bernoulli = self.config.measurement == MeasurementMode::Bernoulli;
        let mut rec = Recorder::new(
            TrajectoryKind::Protocol(ProtocolKind::ProjectiveMeasurement),
            lambda,
            intervals.len(),
            self.config.record_states,
        );
        let mut psi = psi0.clone();
        let mut scratch = Vec::new();
        let mut ln_p = 0.0;
        let mut survived = true;
        for (j, &mu) in intervals.iter().enumerate() {
            self.step(mu).apply_into(&mut psi, &mut scratch);
            let leak = outside_population(&psi, lambda);
            let q = inside_population(&psi, lambda);
            if q < DEAD_BRANCH {
                return Err(ProtocolError::ZeroSurvival { step: j + 1, q });
            }
            ln_p += ln_retained(leak, q);
            rec.traj.survival_factors.push(q);
            let escaped = bernoulli && sampler.as_deref_mut().map(|s| s.next_f64() >= q).unwrap_or(false);
            let amps = psi.amplitudes_mut();
            if escaped {
                let scale = 1.0 / leak.sqrt();
                amps[..lambda].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                amps[lambda..].iter_mut().for_each(|z| *z *= scale);
            } else {
                let scale = 1.0 / q.sqrt();
                amps[..lambda].iter_mut().for_each(|z| *z *= scale);
                amps[lambda..].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            }
            rec.push(mu, ln_p.exp(), ln_p, q, &psi);
            if escaped {
                survived = false;
                break;
            }
        }
        Ok(rec.finish(psi, survived))
    }

    fn pulsed(&self, psi0: &StateVector, intervals: &[f64]) -> Result<Trajectory, ProtocolError> {
        let lambda = self.spec.lambda;
        let mut rec = Recorder::new(
            TrajectoryKind::Protocol(ProtocolKind::PulsedCoupling),
            lambda,
            intervals.len(),
            self.config.record_states,
        );
        let mut psi = psi0.clone();
        let mut scratch = Vec::new();
        for &mu in intervals {
            self.step(mu).apply_into(&mut psi, &mut scratch);
            let leak = outside_population(&psi, lambda);
            let kept = inside_population(&psi, lambda);
            rec.push(mu, kept, ln_retained(leak, kept), kept, &psi);
        }
        Ok(rec.finish(psi, true))
    }
}

struct Recorder {
    traj: Trajectory,
    t: f64,
}

impl Recorder {
    fn new(kind: TrajectoryKind, lambda: usize, steps: usize, record_states: bool) -> Self {
        let measured = kind == TrajectoryKind::Protocol(ProtocolKind::ProjectiveMeasurement);
        Self {
            traj: Trajectory {
                kind,
                lambda,
                intervals: Vec::with_capacity(steps),
                times: Vec::with_capacity(steps),
                survival_factors: Vec::with_capacity(if measured { steps } else { 0 }),
                cumulative_survival: Vec::with_capacity(steps),
                log_survival: Vec::with_capacity(steps),
                subspace_population: Vec::with_capacity(steps),
                states: record_states.then(|| Vec::with_capacity(steps)),
                final_state: StateVector::basis(1, 0),
                survived: true,
            },
            t: 0.0,
        }
    }

    fn push(&mut self, mu: f64, p: f64, ln_p: f64, pop: f64, psi: &StateVector) {
        self.t += mu;
        self.push_at(self.t, mu, p, ln_p, pop, psi);
    }

    fn push_at(&mut self, t: f64, mu: f64, p: f64, ln_p: f64, pop: f64, psi: &StateVector) {
        self.t = t;
        let tr = &mut self.traj;
        tr.intervals.push(mu);
        tr.times.push(t);
        tr.cumulative_survival.push(p);
        tr.log_survival.push(ln_p);
        tr.subspace_population.push(pop);
        if let Some(states) = tr.states.as_mut() {
            states.push(psi.clone());
        }
    }

    fn finish(mut self, final_state: StateVector, survived: bool) -> Trajectory {
        self.traj.final_state = final_state;
        self.traj.survived = survived;
        self.traj
    }
}

fn cumulative_times(intervals: &[f64]) -> Vec<f64> {
    intervals
        .iter()
        .scan(0.0, |t, &mu| {
            *t += mu;
            Some(*t)
        })
        .collect()
}

fn continuous_from(
    coupled: &EigenDecomposition,
    spec: &ChainSpec,
    psi0: &StateVector,
    times: &[f64],
    record_states: bool,
) -> Trajectory {
    let lambda = spec.lambda;
    let coeffs = coupled.eigenbasis_coefficients(psi0);
    let mut rec =
        Recorder::new(TrajectoryKind::Protocol(ProtocolKind::ContinuousCoupling), lambda, times.len(), record_states);
    let mut psi = psi0.clone();
    let mut prev = 0.0;
    for &t in times {
        psi = coupled.evolve_coefficients(&coeffs, t);
        let leak = outside_population(&psi, lambda);
        let kept = inside_population(&psi, lambda);
        rec.push_at(t, t - prev, kept, ln_retained(leak, kept), kept, &psi);
        prev = t;
    }
    rec.finish(psi, true)
}

/// Projective-measurement run with intervals drawn from `config.distribution`.
pub fn run_projective(
    spec: &ChainSpec,
    psi0: &StateVector,
    config: &ProtocolConfig,
    sampler: &mut SeededSampler,
) -> Result<Trajectory, ProtocolError> {
    let config = config.with_kind(ProtocolKind::ProjectiveMeasurement);
    ProtocolEngine::new(spec, &config)?.run_sampled(psi0, sampler)
}

/// Pulsed-coupling run with intervals drawn from `config.distribution`.
pub fn run_pulsed(
    spec: &ChainSpec,
    psi0: &StateVector,
    config: &ProtocolConfig,
    sampler: &mut SeededSampler,
) -> Result<Trajectory, ProtocolError> {
    let config = config.with_kind(ProtocolKind::PulsedCoupling);
    ProtocolEngine::new(spec, &config)?.run_sampled(psi0, sampler)
}

/// Runs whichever protocol `config.kind` names. Continuous coupling is sampled at
/// the cumulative times of a drawn interval sequence.
pub fn run_protocol(
    spec: &ChainSpec,
    psi0: &StateVector,
    config: &ProtocolConfig,
    sampler: &mut SeededSampler,
) -> Result<Trajectory, ProtocolError> {
    ProtocolEngine::new(spec, config)?.run_sampled(psi0, sampler)
}

/// Post-selected projective measurements on a given interval sequence.
pub fn run_projective_intervals(
    spec: &ChainSpec,
    psi0: &StateVector,
    intervals: &[f64],
) -> Result<Trajectory, ProtocolError> {
    let dist = single_atom_for(intervals);
    let config = ProtocolConfig::new(ProtocolKind::ProjectiveMeasurement, intervals.len().max(1), dist);
    ProtocolEngine::new(spec, &config)?.run_intervals(psi0, intervals, None)
}

/// Pulsed coupling with kick angle `pulse_area` on a given interval sequence.
pub fn run_pulsed_intervals(
    spec: &ChainSpec,
    psi0: &StateVector,
    intervals: &[f64],
    pulse_area: f64,
) -> Result<Trajectory, ProtocolError> {
    let mut config =
        ProtocolConfig::new(ProtocolKind::PulsedCoupling, intervals.len().max(1), single_atom_for(intervals));
    config.pulse_area = pulse_area;
    ProtocolEngine::new(spec, &config)?.run_intervals(psi0, intervals, None)
}

fn single_atom_for(intervals: &[f64]) -> IntervalDistribution {
    let mu = intervals.iter().copied().find(|&mu| mu > 0.0 && mu.is_finite()).unwrap_or(1.0);
    IntervalDistribution::deterministic(mu).expect("positive finite atom")
}

/// `exp(-i (H + g H_c) t) psi0` at each of `sample_times`, from one decomposition.
pub fn run_continuous(
    spec: &ChainSpec,
    psi0: &StateVector,
    total_time: f64,
    g: f64,
    sample_times: &[f64],
) -> Result<Trajectory, ProtocolError> {
    check_initial(spec, psi0)?;
    check_sample_times(total_time, sample_times)?;
    let h = hamiltonian(spec)?;
    let hc = coupling_hamiltonian(spec)?;
    let coupled = hermitian_eig(&(&h + &hc.scale_real(g)))?;
    Ok(continuous_from(&coupled, spec, psi0, sample_times, false))
}

fn check_sample_times(total_time: f64, times: &[f64]) -> Result<(), ProtocolError> {
    let ok = total_time > 0.0
        && total_time.is_finite()
        && times.iter().all(|&t| (0.0..=total_time).contains(&t))
        && times.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(ProtocolError::BadSampleTimes { total_time })
    }
}

/// Evolution under the Zeno Hamiltonian `H_lambda` at the times of `t_grid`.
///
/// States live in the `lambda`-dimensional subspace; embed them to compare with
/// chain states.
pub fn run_exact_subspace(spec: &ChainSpec, psi0: &StateVector, t_grid: &[f64]) -> Result<Trajectory, ProtocolError> {
    check_initial(spec, psi0)?;
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_grid.windows(2).any(|w| w[0] > w[1]) {
        let total_time = t_grid.last().copied().unwrap_or(0.0);
        return Err(ProtocolError::BadSampleTimes { total_time });
    }
    let lambda = spec.lambda;
    let eig = hermitian_eig(&zeno_hamiltonian(spec)?)?;
    let local = psi0.truncate(lambda);
    let coeffs = eig.eigenbasis_coefficients(&local);
    let mut rec = Recorder::new(TrajectoryKind::ExactSubspace, lambda, t_grid.len(), false);
    let mut psi = local;
    let mut prev = 0.0;
    for &t in t_grid {
        psi = eig.evolve_coefficients(&coeffs, t);
        rec.push_at(t, t - prev, 1.0, 0.0, 1.0, &psi);
        prev = t;
    }
    Ok(rec.finish(psi, true))
}

/// `r` independent realisations with child seeds `(seed, i)`, run on the current
/// rayon pool and returned in index order.
pub fn run_ensemble(
    spec: &ChainSpec,
    psi0: &StateVector,
    config: &ProtocolConfig,
    seed: u64,
    r: usize,
) -> Result<Vec<Trajectory>, ProtocolError> {
    let engine = ProtocolEngine::new(spec, config)?;
    (0..r).into_par_iter().map(|i| engine.run_sampled(psi0, &mut SeededSampler::child(seed, i as u64))).collect()
}
