//! Stochastic quantum Zeno dynamics on an XY spin chain.
//!
//! The chain lives in its single-excitation sector: an `N`-site chain is an
//! `N`-dimensional problem. Rates are in rad/us and times in us throughout.
//!
//! * [`linalg`]: dense complex matrices, Jacobi eigensolver, propagators.
//! * [`chain`]: Hamiltonian, projector, Zeno and coupling Hamiltonians.
//! * [`stochastics`]: waiting-time distributions and the seeded generator.
//! * [`protocols`]: projective measurements, pulsed and continuous coupling.
//! * [`theory`]: closed-form survival predictions.
//! * [`analysis`]: fidelities, ensemble statistics, front velocity.
//! * [`harness`]: config files, experiment runs and CSV output.

pub mod analysis;
pub mod chain;
pub mod harness;
pub mod linalg;
pub mod numfmt;
pub mod protocols;
pub mod stochastics;
pub mod theory;

pub use analysis::{
    aggregate, fit_velocity, protocol_fidelity, uhlmann_fidelity, AnalysisError, EnsembleSummary, VelocityFit,
};
pub use chain::{ChainError, ChainSpec, DEFAULT_RATE};
pub use linalg::{hermitian_eig, propagator, sqrt_psd, ComplexMatrix, EigenDecomposition, LinalgError, StateVector};
pub use num_complex::Complex64;
pub use protocols::{
    run_continuous, run_ensemble, run_exact_subspace, run_projective, run_protocol, run_pulsed, MeasurementMode,
    ProtocolConfig, ProtocolEngine, ProtocolError, ProtocolKind, Trajectory, TrajectoryKind,
};
pub use stochastics::{DistributionError, IntervalDistribution, Moments, SeededSampler};
pub use theory::{EdgePopulationSeries, Regime, TheoryError, TheoryPrediction};
