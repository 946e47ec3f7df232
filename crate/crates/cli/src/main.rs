use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raftfem_cli::presets::{preset, PRESETS};
use raftfem_cli::{
    cmd_benchmark, cmd_mesh_info, cmd_run, parse_config, BenchmarkConfig, BenchmarkKind, CliError,
};

/// Lipid raft phase-field simulations on triangulated surfaces.
#[derive(Parser)]
#[command(name = "raftfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation from a TOML config or a named preset.
    Run {
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Overrides the output directory of the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run a validation benchmark: convergence, ode or ok-compare.
    Benchmark {
        which: String,
        config: Option<PathBuf>,
        /// Refinement levels for the convergence benchmark, e.g. 4,5,6.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u32>>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print statistics of a mesh: sphere:N, octahedron:N, bumpy:L:A:K or a .off file.
    MeshInfo { spec: String },
    /// List the scenario presets.
    Presets,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            preset: name,
            output_dir,
        } => {
            let mut runs = match (config, name) {
                (Some(path), None) => vec![parse_config(&path)?],
                (None, Some(name)) => preset(&name)?,
                _ => return Err(CliError::Usage("give a config file or --preset".into())),
            };
            if let Some(dir) = output_dir {
                for r in runs.iter_mut() {
                    let sub = r
                        .output
                        .directory
                        .strip_prefix("output")
                        .unwrap_or(&r.output.directory)
                        .to_path_buf();
                    r.output.directory = dir.join(sub);
                }
            }
            for r in &runs {
                let summary = cmd_run(r)?;
                println!("{summary}");
            }
            Ok(())
        }
        Command::Benchmark {
            which,
            config,
            levels,
            output_dir,
        } => {
            let kind: BenchmarkKind = which.parse()?;
            let mut cfg = match config {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                    BenchmarkConfig::from_toml(&text)?
                }
                None => BenchmarkConfig::default(),
            };
            if let Some(levels) = levels {
                cfg.convergence.levels = levels;
            }
            if output_dir.is_some() {
                cfg.output_directory = output_dir;
            }
            let report = cmd_benchmark(kind, &cfg).inspect_err(|e| {
                if let CliError::Acceptance(m) | CliError::Numerical(m) = e {
                    println!("{m}");
                }
            })?;
            println!("{report}");
            Ok(())
        }
        Command::MeshInfo { spec } => {
            println!("{}", cmd_mesh_info(&spec)?);
            Ok(())
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
