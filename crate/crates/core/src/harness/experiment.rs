//! Running a parsed configuration and writing its CSV files.
//!
//! Outputs in the run directory:
//!
//! * `trajectory_r{i}.csv` per realisation (inside `{protocol}_l{lambda}_k{k}/`
//!   when the run sweeps protocols, subspace sizes or distributions);
//! * `summary.csv`: `lambda,protocol,F,P_final,pstar_theory,kappa,m,mu_mean`, one
//!   row per point, where `F` is the mean fidelity and `P_final` is
//!   `exp(mean ln P)` over realisations;
//! * `theory.csv`: both predictions along `m`, recomputable from the columns
//!   `beta, mu_mean, kappa, m` and the two edge populations.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::config::{ExperimentConfig, ValidationError};
use super::output::{open_output, write_table};
use crate::analysis::{aggregate, protocol_fidelity, AnalysisError, EnsembleSummary};
use crate::chain::ChainSpec;
use crate::linalg::StateVector;
use crate::numfmt::g15;
use crate::protocols::{run_ensemble, run_exact_subspace, ProtocolError, ProtocolKind, Trajectory};
use crate::stochastics::{IntervalDistribution, Moments};
use crate::theory::{
    edge_population, eigenstate_edge_population, pstar_time_averaged, pstar_weak, EdgePopulationSeries, TheoryError,
    TheoryPrediction,
};

/// Theory rows per point are thinned to about this many values of `m`.
const THEORY_ROWS: usize = 200;
/// Quadrature step for the edge-population average, as a fraction of `mu_mean`.
const EDGE_DT_FRACTION: f64 = 1.0 / 20.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("thread pool: {0}")]
    Pool(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Omit the timestamp comment line so repeated runs are byte-identical.
    pub reproducible: bool,
    pub write_trajectories: bool,
    /// Also write `comparison.csv` (simulated versus predicted `ln P`).
    pub write_comparison: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), reproducible: false, write_trajectories: true, write_comparison: false }
    }
}

/// Ensemble results for one (lambda, distribution, protocol) point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub lambda: usize,
    pub kind: ProtocolKind,
    pub distribution_index: usize,
    pub moments: Moments,
    pub m: usize,
    pub mean_fidelity: f64,
    pub summary: EnsembleSummary,
    /// Time-averaged prediction at `m`.
    pub theory: TheoryPrediction,
    /// Mean of `ln P` over realisations after each step.
    pub mean_ln_p_by_step: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

/// Predictions for one (lambda, distribution) pair.
#[derive(Debug, Clone)]
pub struct TheoryCurve {
    pub lambda: usize,
    pub distribution_index: usize,
    pub moments: Moments,
    pub beta: f64,
    pub edge: EdgePopulationSeries,
    /// Edge population of the dominant `H_lambda` eigenstate.
    pub edge_eigen: f64,
    pub rows: Vec<TheoryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryRow {
    pub m: usize,
    pub edge_avg: f64,
    pub ln_pstar_avg: f64,
    pub ln_pstar_eigen: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub points: Vec<PointResult>,
    pub theory: Vec<TheoryCurve>,
    pub files: Vec<PathBuf>,
}

/// Worker pool sized by `ZENO_LAB_THREADS` (unset or 0: one thread per core).
pub fn thread_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let threads = std::env::var("ZENO_LAB_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| HarnessError::Pool(e.to_string()))
}

fn m_grid(m: usize) -> Vec<usize> {
    let stride = (m / THEORY_ROWS).max(1);
    let mut ms: Vec<usize> = (1..=m).filter(|k| k % stride == 0).collect();
    if ms.last() != Some(&m) {
        ms.push(m);
    }
    ms
}

fn theory_curve(
    spec: &ChainSpec,
    psi0: &StateVector,
    dist: &IntervalDistribution,
    distribution_index: usize,
    m: usize,
) -> Result<TheoryCurve, HarnessError> {
    let moments = dist.moments();
    let edge = edge_population(spec, psi0, m as f64 * moments.mean, moments.mean * EDGE_DT_FRACTION)?;
    let edge_eigen = eigenstate_edge_population(spec, psi0)?;
    let beta2 = spec.beta * spec.beta;
    let rows = m_grid(m)
        .into_iter()
        .map(|mk| {
            let avg = pstar_time_averaged(mk, dist, &edge, spec.beta)?;
            Ok(TheoryRow {
                m: mk,
                edge_avg: avg.variance / beta2,
                ln_pstar_avg: avg.ln_pstar,
                ln_pstar_eigen: pstar_weak(mk, dist, beta2 * edge_eigen).ln_pstar,
            })
        })
        .collect::<Result<Vec<_>, TheoryError>>()?;
    Ok(TheoryCurve { lambda: spec.lambda, distribution_index, moments, beta: spec.beta, edge, edge_eigen, rows })
}

/// Predictions only; no simulation.
pub fn compute_theory(config: &ExperimentConfig) -> Result<Vec<TheoryCurve>, HarnessError> {
    config.validate()?;
    let dists = config.distributions()?;
    let mut curves = Vec::new();
    for lambda in config.lambdas() {
        let spec = config.chain.with_lambda(lambda);
        let psi0 = config.initial_state.build(&spec)?;
        for (k, d) in dists.iter().enumerate() {
            curves.push(theory_curve(&spec, &psi0, d, k, config.protocol.m)?);
        }
    }
    Ok(curves)
}

fn mean_by_step(trajs: &[Trajectory], m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let (sum, n) =
                trajs.iter().filter_map(|t| t.log_survival.get(j)).fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
            if n == 0 {
                f64::NAN
            } else {
                sum / n as f64
            }
        })
        .collect()
}

/// Runs every point of the configuration on the `ZENO_LAB_THREADS` pool.
pub fn simulate(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let pool = thread_pool()?;
    pool.install(|| simulate_on_current_pool(config))
}

fn simulate_on_current_pool(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let dists = config.distributions()?;
    let mut points = Vec::new();
    let mut theory = Vec::new();
    for lambda in config.lambdas() {
        let spec = config.chain.with_lambda(lambda);
        let psi0 = config.initial_state.build(&spec)?;
        for (k, dist) in dists.iter().enumerate() {
            let curve = theory_curve(&spec, &psi0, dist, k, config.protocol.m)?;
            let prediction = pstar_time_averaged(config.protocol.m, dist, &curve.edge, spec.beta)?;
            for &kind in &config.protocols {
                let mut pc = config.protocol.with_kind(kind);
                pc.distribution = dist.clone();
                let trajs = run_ensemble(&spec, &psi0, &pc, config.seed, config.realizations)?;
                let mut f_sum = 0.0;
                for t in &trajs {
                    let reference = run_exact_subspace(&spec, &psi0, &[t.total_time()])?;
                    f_sum += protocol_fidelity(t, &reference)?;
                }
                points.push(PointResult {
                    lambda,
                    kind,
                    distribution_index: k,
                    moments: dist.moments(),
                    m: pc.m,
                    mean_fidelity: f_sum / trajs.len() as f64,
                    summary: aggregate(&trajs, &prediction)?,
                    theory: prediction.clone(),
                    mean_ln_p_by_step: mean_by_step(&trajs, pc.m),
                    trajectories: trajs,
                });
            }
            theory.push(curve);
        }
    }
    Ok(ExperimentReport { points, theory, files: Vec::new() })
}

fn is_sweep(config: &ExperimentConfig) -> bool {
    config.protocols.len() > 1 || config.lambda_sweep.is_some() || config.kappa_sweep.is_some()
}

/// Simulates and writes all CSV files under `opts.out_dir`.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport, HarnessError> {
    let mut report = simulate(config)?;
    std::fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    if opts.write_trajectories {
        let nested = is_sweep(config);
        for p in &report.points {
            let dir = if nested {
                opts.out_dir.join(format!("{}_l{}_k{}", p.kind.label(), p.lambda, p.distribution_index))
            } else {
                opts.out_dir.clone()
            };
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            for (i, t) in p.trajectories.iter().enumerate() {
                let path = dir.join(format!("trajectory_r{i}.csv"));
                let out = open_output(&path, opts.reproducible).map_err(io_err(&path))?;
                t.write_csv(out).map_err(|e| HarnessError::Io { path: path.clone(), source: e.into() })?;
                report.files.push(path);
            }
        }
    }
    let summary = opts.out_dir.join("summary.csv");
    write_summary(&summary, opts.reproducible, &report.points)?;
    report.files.push(summary);
    let theory = opts.out_dir.join("theory.csv");
    write_theory(&theory, opts.reproducible, &report.theory)?;
    report.files.push(theory);
    if opts.write_comparison {
        let path = opts.out_dir.join("comparison.csv");
        write_comparison(&path, opts.reproducible, &report)?;
        report.files.push(path);
    }
    Ok(report)
}

pub const SUMMARY_HEADER: [&str; 8] = ["lambda", "protocol", "F", "P_final", "pstar_theory", "kappa", "m", "mu_mean"];

pub fn write_summary(path: &Path, reproducible: bool, points: &[PointResult]) -> Result<(), HarnessError> {
    let rows = points.iter().map(|p| {
        let pstar = if p.kind == ProtocolKind::ProjectiveMeasurement { g15(p.theory.pstar) } else { String::new() };
        vec![
            p.lambda.to_string(),
            p.kind.label().to_string(),
            g15(p.mean_fidelity),
            g15(p.summary.mean_ln_p.exp()),
            pstar,
            g15(p.moments.kappa),
            p.m.to_string(),
            g15(p.moments.mean),
        ]
    });
    write_table(path, reproducible, &SUMMARY_HEADER, rows).map_err(io_err(path))
}

pub const THEORY_HEADER: [&str; 10] = [
    "lambda",
    "beta",
    "mu_mean",
    "kappa",
    "m",
    "edge_pop_avg",
    "edge_pop_eigen",
    "ln_pstar_avg",
    "ln_pstar_eigen",
    "pstar_avg",
];

pub fn write_theory(path: &Path, reproducible: bool, curves: &[TheoryCurve]) -> Result<(), HarnessError> {
    let rows = curves.iter().flat_map(|c| {
        c.rows.iter().map(move |r| {
            vec![
                c.lambda.to_string(),
                g15(c.beta),
                g15(c.moments.mean),
                g15(c.moments.kappa),
                r.m.to_string(),
                g15(r.edge_avg),
                g15(c.edge_eigen),
                g15(r.ln_pstar_avg),
                g15(r.ln_pstar_eigen),
                g15(r.ln_pstar_avg.exp()),
            ]
        })
    });
    write_table(path, reproducible, &THEORY_HEADER, rows).map_err(io_err(path))
}

pub const COMPARISON_HEADER: [&str; 8] =
    ["lambda", "protocol", "kappa", "m", "mean_ln_p_sim", "std_ln_p_sim", "ln_pstar_theory", "rel_diff"];

/// Final-`m` comparison of simulated and predicted `ln P` for projective runs.
pub fn write_comparison(path: &Path, reproducible: bool, report: &ExperimentReport) -> Result<(), HarnessError> {
    let rows = report.points.iter().filter(|p| p.kind == ProtocolKind::ProjectiveMeasurement).map(|p| {
        let theory = p.theory.ln_pstar;
        let sim = p.summary.mean_ln_p;
        let rel = if theory != 0.0 { (sim - theory) / theory.abs() } else { f64::NAN };
        vec![
            p.lambda.to_string(),
            p.kind.label().to_string(),
            g15(p.moments.kappa),
            p.m.to_string(),
            g15(sim),
            g15(p.summary.std_ln_p),
            g15(theory),
            g15(rel),
        ]
    });
    write_table(path, reproducible, &COMPARISON_HEADER, rows).map_err(io_err(path))
}
