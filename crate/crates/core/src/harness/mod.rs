//! Configuration, orchestration and CSV output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod presets;
pub mod three_level;

pub use config::{parse_config, ConfigError, ExperimentConfig, InitialState, ValidationError};
pub use experiment::{
    compute_theory, run_experiment, simulate, thread_pool, ExperimentReport, HarnessError, PointResult, RunOptions,
    TheoryCurve,
};
pub use presets::{run_figure, Figure, FigureReport};
pub use three_level::{run_three_level, write_three_level, ThreeLevelRow};
