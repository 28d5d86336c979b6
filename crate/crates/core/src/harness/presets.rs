//! Built-in experiment presets.
//!
//! | preset | initial state | distribution | sweep | m |
//! |--------|---------------|--------------|-------|---|
//! | fig2 | W | (1, 5) us, 0.5/0.5 | lambda 1..9, p.m. | 2000 |
//! | fig3 | site 1 | (1, 5) us, 0.5/0.5 | lambda 1..9, p.m. | 2000 |
//! | fig4 | W | (3, 5) us, 0.5/0.5 | lambda 1..10, all protocols | 375 |
//! | fig5 | W (inset: site 1) | p1 = 0.8, mean 3 us | mu1 in [1, 3], all protocols, lambda 3 | 500 |
//!
//! fig3 also writes `edge_population.csv` for lambda = 9 and `velocity.csv`;
//! fig4 also writes `scaling.csv` (lambda = 5, deterministic intervals, `m mu`
//! fixed at 1500 us).

use std::path::PathBuf;
use std::str::FromStr;

use super::config::{ExperimentConfig, InitialState};
use super::experiment::{io_err, run_experiment, ExperimentReport, HarnessError, RunOptions};
use super::output::write_table;
use crate::analysis::{fit_velocity, loglog_slope, VelocityFit};
use crate::chain::{site_state, w_state, ChainSpec, DEFAULT_RATE};
use crate::linalg::StateVector;
use crate::numfmt::g15;
use crate::protocols::{ProtocolConfig, ProtocolEngine, ProtocolKind};
use crate::stochastics::IntervalDistribution;
use crate::theory::edge_population;

pub const CHAIN_LENGTH: usize = 12;
/// `m mu_mean` held fixed along the Zeno-limit sweep, in us.
pub const ZENO_LIMIT_TIME: f64 = 1500.0;
/// Interval lengths of the Zeno-limit sweep, in us.
pub const ZENO_LIMIT_MUS: [f64; 11] = [3.0, 1.5, 1.0, 0.5, 0.3, 0.2, 0.15, 0.1, 0.075, 0.05, 0.03];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            "fig4" => Ok(Self::Fig4),
            "fig5" => Ok(Self::Fig5),
            other => Err(format!("unknown figure `{other}` (expected fig2, fig3, fig4 or fig5)")),
        }
    }
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
        }
    }

    pub fn default_realizations(self) -> usize {
        match self {
            Self::Fig2 | Self::Fig3 => 1,
            Self::Fig4 => 20,
            Self::Fig5 => 40,
        }
    }
}

fn bimodal(mu1: f64, mu2: f64) -> IntervalDistribution {
    IntervalDistribution::new(vec![(mu1, 0.5), (mu2, 0.5)]).expect("valid preset distribution")
}

fn base(
    lambda: usize,
    kinds: Vec<ProtocolKind>,
    m: usize,
    dist: IntervalDistribution,
    initial_state: InitialState,
    seed: u64,
    realizations: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        chain: ChainSpec::new_relaxed(CHAIN_LENGTH, DEFAULT_RATE, DEFAULT_RATE, lambda).expect("valid preset chain"),
        protocol: ProtocolConfig::new(kinds[0], m, dist),
        protocols: kinds,
        initial_state,
        realizations,
        seed,
        output_path: None,
        lambda_sweep: None,
        kappa_sweep: None,
    }
}

/// `mu1` values of the kappa sweep; `mu2 = (3 - 0.8 mu1) / 0.2`.
pub fn kappa_sweep_points() -> Vec<(f64, f64, f64)> {
    (0..=8)
        .map(|k| {
            let mu1 = 1.0 + 0.25 * k as f64;
            (0.8, mu1, (3.0 - 0.8 * mu1) / 0.2)
        })
        .collect()
}

/// Configurations of a preset, each paired with its subdirectory (empty for the top level).
pub fn preset_configs(fig: Figure, seed: u64, realizations: Option<usize>) -> Vec<(String, ExperimentConfig)> {
    let r = realizations.unwrap_or(fig.default_realizations());
    let pm = vec![ProtocolKind::ProjectiveMeasurement];
    match fig {
        Figure::Fig2 | Figure::Fig3 => {
            let state = if fig == Figure::Fig2 { InitialState::WState } else { InitialState::LeftmostExcited };
            let mut c = base(9, pm, 2000, bimodal(1.0, 5.0), state, seed, r);
            c.lambda_sweep = Some((1..=9).collect());
            vec![(String::new(), c)]
        }
        Figure::Fig4 => {
            let mut c = base(5, ProtocolKind::ALL.to_vec(), 375, bimodal(3.0, 5.0), InitialState::WState, seed, r);
            c.lambda_sweep = Some((1..=CHAIN_LENGTH - 2).collect());
            vec![(String::new(), c)]
        }
        Figure::Fig5 => {
            let sweep = kappa_sweep_points();
            let first = IntervalDistribution::bimodal(sweep[0].1, sweep[0].0, sweep[0].2).expect("valid preset");
            let mut main = base(3, ProtocolKind::ALL.to_vec(), 500, first, InitialState::WState, seed, r);
            main.kappa_sweep = Some(sweep);
            let mut inset = main.clone();
            inset.initial_state = InitialState::LeftmostExcited;
            vec![(String::new(), main), ("inset".to_string(), inset)]
        }
    }
}

/// `1 - P` after `round(total_time / mu)` deterministic intervals of length `mu`.
pub fn zeno_limit_leakage(
    spec: &ChainSpec,
    psi0: &StateVector,
    kind: ProtocolKind,
    mu: f64,
    total_time: f64,
) -> Result<f64, HarnessError> {
    let m = (total_time / mu).round() as usize;
    let dist = IntervalDistribution::deterministic(mu).expect("positive interval");
    let config = ProtocolConfig::new(kind, m, dist);
    let engine = ProtocolEngine::new(spec, &config)?;
    let traj = engine.run_intervals(psi0, &vec![mu; m], None)?;
    Ok(traj.leakage())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub mu: f64,
    pub m: usize,
    pub kind: ProtocolKind,
    pub one_minus_p: f64,
}

pub fn zeno_limit_sweep(lambda: usize, mus: &[f64]) -> Result<Vec<ScalingRow>, HarnessError> {
    let spec = ChainSpec::with_default_rates(CHAIN_LENGTH, lambda).map_err(|e| HarnessError::Protocol(e.into()))?;
    let psi0 = w_state(CHAIN_LENGTH, lambda);
    let mut rows = Vec::new();
    for kind in ProtocolKind::ALL {
        for &mu in mus {
            rows.push(ScalingRow {
                mu,
                m: (ZENO_LIMIT_TIME / mu).round() as usize,
                kind,
                one_minus_p: zeno_limit_leakage(&spec, &psi0, kind, mu, ZENO_LIMIT_TIME)?,
            });
        }
    }
    Ok(rows)
}

/// Log-log slope of `1 - P` against `mu` for one protocol.
pub fn scaling_slope(rows: &[ScalingRow], kind: ProtocolKind) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.kind == kind).map(|r| (r.mu, r.one_minus_p)).unzip();
    loglog_slope(&xs, &ys)
}

#[derive(Debug)]
pub struct FigureReport {
    pub runs: Vec<(String, ExperimentReport)>,
    pub scaling: Option<Vec<ScalingRow>>,
    pub velocity: Option<VelocityFit>,
    pub files: Vec<PathBuf>,
}

pub fn run_figure(
    fig: Figure,
    seed: u64,
    realizations: Option<usize>,
    opts: &RunOptions,
) -> Result<FigureReport, HarnessError> {
    let mut report = FigureReport { runs: Vec::new(), scaling: None, velocity: None, files: Vec::new() };
    for (sub, config) in preset_configs(fig, seed, realizations) {
        let mut o = opts.clone();
        if !sub.is_empty() {
            o.out_dir = opts.out_dir.join(&sub);
        }
        let run = run_experiment(&config, &o)?;
        report.files.extend(run.files.iter().cloned());
        report.runs.push((sub, run));
    }
    match fig {
        Figure::Fig3 => {
            let spec = ChainSpec::with_default_rates(CHAIN_LENGTH, 9).map_err(|e| HarnessError::Protocol(e.into()))?;
            let psi0 = site_state(CHAIN_LENGTH, 1).map_err(|e| HarnessError::Protocol(e.into()))?;
            let series = edge_population(&spec, &psi0, 2000.0 * 3.0, 3.0 / 20.0)?;
            let path = opts.out_dir.join("edge_population.csv");
            let rows = series.t_grid.iter().zip(&series.values).map(|(t, v)| vec![g15(*t), g15(*v)]);
            write_table(&path, opts.reproducible, &["t_us", "edge_pop"], rows).map_err(io_err(&path))?;
            report.files.push(path);

            let lambdas: Vec<usize> = (2..=10).collect();
            let fit = fit_velocity(DEFAULT_RATE, &lambdas, 0.05, 0.05)?;
            let path = opts.out_dir.join("velocity.csv");
            let rows = fit
                .lambda_values
                .iter()
                .zip(&fit.first_peak_times)
                .map(|(l, t)| vec![l.to_string(), g15(*t), g15(fit.velocity), g15(fit.bound)]);
            write_table(&path, opts.reproducible, &["lambda", "first_peak_t_us", "velocity", "bound"], rows)
                .map_err(io_err(&path))?;
            report.files.push(path);
            report.velocity = Some(fit);
        }
        Figure::Fig4 => {
            let rows = zeno_limit_sweep(5, &ZENO_LIMIT_MUS)?;
            let path = opts.out_dir.join("scaling.csv");
            let table =
                rows.iter().map(|r| vec![g15(r.mu), r.m.to_string(), r.kind.label().to_string(), g15(r.one_minus_p)]);
            write_table(&path, opts.reproducible, &["mu_mean", "m", "protocol", "one_minus_p"], table)
                .map_err(io_err(&path))?;
            report.files.push(path);
            report.scaling = Some(rows);
        }
        Figure::Fig2 | Figure::Fig5 => {}
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_names_round_trip() {
        for f in [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5] {
            assert_eq!(f.name().parse::<Figure>().unwrap(), f);
        }
        assert!("fig9".parse::<Figure>().is_err());
    }

    #[test]
    fn presets_validate() {
        for f in [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5] {
            for (_, c) in preset_configs(f, 1, None) {
                c.validate().unwrap();
            }
        }
    }

    #[test]
    fn kappa_sweep_spans_range() {
        let pts = kappa_sweep_points();
        let kappas: Vec<f64> = pts
            .iter()
            .map(|&(p1, mu1, mu2)| IntervalDistribution::bimodal(mu1, p1, mu2).unwrap().moments().kappa)
            .collect();
        assert!((kappas[0] - 16.0 / 9.0).abs() < 1e-12);
        assert_eq!(*kappas.last().unwrap(), 0.0);
        assert!(kappas.windows(2).all(|w| w[1] < w[0]));
    }
}
