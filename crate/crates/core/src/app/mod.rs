//! Command-line application: configuration, optimization loop and file output.

pub mod config;
pub mod hs;
pub mod io;
pub mod run;

pub use config::{parse_config, CliArgs, FilterPlacement, InitKind, RunConfig};
pub use hs::hs_bounds;
pub use run::{
    density_chain, evaluate_design, initial_density, objective_expr, run_optimization, DesignEvaluation, IterationRecord,
    OptimizationReport,
};
