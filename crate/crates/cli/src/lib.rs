//! Command-line front end: run configuration, presets, file output and the
//! command implementations behind the `raftfem` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;

pub use commands::{
    cmd_benchmark, cmd_mesh_info, cmd_run, BenchmarkConfig, BenchmarkKind, RunSummary,
};
pub use config::{parse_config, Geometry, RunConfig, OUTPUT_DIR_ENV};
pub use error::CliError;
