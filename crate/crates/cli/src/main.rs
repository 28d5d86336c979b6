//! `zeno-lab`: run stochastic Zeno-confinement experiments from the command line.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use zeno_core::harness::experiment::write_theory;
use zeno_core::harness::{
    compute_theory, parse_config, run_experiment, run_figure, run_three_level, write_three_level, ExperimentConfig,
    ExperimentReport, Figure, RunOptions,
};
use zeno_core::ProtocolKind;

#[derive(Debug, Parser)]
#[command(name = "zeno-lab", version, about = "Stochastic quantum Zeno confinement in XY spin chains")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output` in the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Omit the timestamp comment so identical runs give identical bytes.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Number of realizations; overrides the config file or preset.
    #[arg(long, global = true)]
    realizations: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a configuration and write trajectories, summary and theory tables.
    Simulate { config: PathBuf },
    /// Write theory predictions only.
    Theory { config: PathBuf },
    /// Simulate and write a simulation-versus-theory comparison table.
    Compare { config: PathBuf },
    /// Run a built-in preset.
    Figure { name: Figure },
    /// Closed-form versus numerical survival in the three-level model.
    ThreeLevel {
        /// Rabi frequency, rad/us.
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        /// Coupling strengths, rad/us.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 10.0])]
        g: Vec<f64>,
        #[arg(long, default_value_t = 200.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
    },
}

const DEFAULT_OUT_DIR: &str = "zeno-out";

fn load_config(path: &Path, global: &GlobalOpts) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(r) = global.realizations {
        config.realizations = r;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(global: &GlobalOpts, config: Option<&ExperimentConfig>) -> PathBuf {
    global
        .out_dir
        .clone()
        .or_else(|| config.and_then(|c| c.output_path.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn print_report(report: &ExperimentReport) {
    println!("{:>6} {:>4} {:>8} {:>12} {:>12} {:>12}", "lambda", "kind", "kappa", "F", "mean lnP", "lnP*");
    for p in &report.points {
        let theory = match p.kind {
            ProtocolKind::ProjectiveMeasurement => format!("{:.6}", p.theory.ln_pstar),
            _ => "-".to_string(),
        };
        println!(
            "{:>6} {:>4} {:>8.4} {:>12.6} {:>12.6} {:>12}",
            p.lambda,
            p.kind.label(),
            p.moments.kappa,
            p.mean_fidelity,
            p.summary.mean_ln_p,
            theory
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Simulate { config } => {
            let config = load_config(&config, g)?;
            let mut opts = RunOptions::new(out_dir(g, Some(&config)));
            opts.reproducible = g.reproducible;
            let report = run_experiment(&config, &opts)?;
            print_report(&report);
            eprintln!("wrote {} files to {}", report.files.len(), opts.out_dir.display());
        }
        Command::Compare { config } => {
            let config = load_config(&config, g)?;
            let mut opts = RunOptions::new(out_dir(g, Some(&config)));
            opts.reproducible = g.reproducible;
            opts.write_trajectories = false;
            opts.write_comparison = true;
            let report = run_experiment(&config, &opts)?;
            print_report(&report);
            eprintln!("wrote {} files to {}", report.files.len(), opts.out_dir.display());
        }
        Command::Theory { config } => {
            let config = load_config(&config, g)?;
            let dir = out_dir(g, Some(&config));
            let curves = compute_theory(&config)?;
            let path = dir.join("theory.csv");
            write_theory(&path, g.reproducible, &curves)?;
            for c in &curves {
                if let Some(last) = c.rows.last() {
                    println!(
                        "lambda={} kappa={:.4} m={} ln P*={:.6} (eigenstate {:.6})",
                        c.lambda, c.moments.kappa, last.m, last.ln_pstar_avg, last.ln_pstar_eigen
                    );
                }
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Figure { name } => {
            let mut opts = RunOptions::new(out_dir(g, None).join(name.name()));
            opts.reproducible = g.reproducible;
            opts.write_comparison = true;
            let report = run_figure(name, g.seed.unwrap_or(0), g.realizations, &opts)?;
            for (sub, run) in &report.runs {
                if !sub.is_empty() {
                    println!("[{sub}]");
                }
                print_report(run);
            }
            if let Some(v) = &report.velocity {
                println!("velocity={:.6} sites/us bound={:.6} ratio={:.4}", v.velocity, v.bound, v.ratio());
            }
            eprintln!("wrote {} files to {}", report.files.len(), opts.out_dir.display());
        }
        Command::ThreeLevel { omega, g: couplings, t_max, dt } => {
            anyhow::ensure!(omega > 0.0 && t_max > 0.0 && dt > 0.0, "omega, t-max and dt must be positive");
            let rows = run_three_level(omega, &couplings, t_max, dt)?;
            let path = out_dir(g, None).join("three_level.csv");
            write_three_level(&path, g.reproducible, &rows)?;
            let worst = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
            println!("max |P_formula - P_numeric| = {worst:.3e}");
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
