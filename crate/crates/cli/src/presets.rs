//! Scenario presets for the parameter studies.

use raftfem::{ExchangeLaw, Variant};

use crate::config::{Geometry, RunConfig};
use crate::error::CliError;

pub const PRESETS: [&str; 8] = [
    "basic",
    "symmetric",
    "phi-hat-sweep",
    "delta-sweep",
    "c1-sweep",
    "c2-sweep",
    "energy-decreasing",
    "bumpy",
];

fn tagged(name: &str, cfg: RunConfig) -> RunConfig {
    let mut cfg = cfg;
    cfg.output.directory = cfg.output.directory.join(name.replace(['=', '/'], "_"));
    cfg.scenario = name.to_string();
    cfg
}

fn sweep(prefix: &str, values: &[f64], set: impl Fn(&mut RunConfig, f64)) -> Vec<RunConfig> {
    values
        .iter()
        .map(|&x| {
            let mut cfg = RunConfig::default();
            set(&mut cfg, x);
            tagged(&format!("{prefix}={x}"), cfg)
        })
        .collect()
}

/// Configurations of a named preset; sweeps expand to one configuration per
/// value, each writing into its own subdirectory.
pub fn preset(name: &str) -> Result<Vec<RunConfig>, CliError> {
    let base = RunConfig::default();
    let runs = match name {
        "basic" => vec![tagged("basic", base)],
        "symmetric" => {
            let mut cfg = base;
            cfg.initial.phi_hat = 0.0;
            vec![tagged("symmetric", cfg)]
        }
        "phi-hat-sweep" => sweep("phi_hat", &[0.0, -0.1, -0.25, -0.5, -0.75], |c, x| {
            c.initial.phi_hat = x
        }),
        "delta-sweep" => sweep("delta", &[0.3, 0.1, 0.02, 0.002], |c, x| c.model.delta = x),
        "c1-sweep" => sweep("c1", &[5.0, 100.0, 500.0, 2000.0], |c, x| c.model.c1 = x),
        "c2-sweep" => sweep("c2", &[5.0, 100.0, 500.0, 2000.0], |c, x| c.model.c2 = x),
        "energy-decreasing" => {
            let mut cfg = base;
            cfg.model.exchange = ExchangeLaw::EnergyDecreasing;
            cfg.model.c = 500.0;
            cfg.stepper.variant = Variant::EnergyDecreasing;
            vec![tagged("energy-decreasing", cfg)]
        }
        "bumpy" => {
            let mut cfg = base;
            cfg.geometry = Geometry::Bumpy {
                level: 4,
                amplitude: 0.2,
                wavenumber: 3,
            };
            vec![tagged("bumpy", cfg)]
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset '{other}', expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(runs)
}
