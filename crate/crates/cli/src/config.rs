//! Run configuration read from TOML.
//!
//! Every section and key is optional; missing values take the baseline
//! defaults. Unknown keys are rejected.
//!
//! ```toml
//! scenario = "basic"
//!
//! [geometry]
//! kind = "sphere"      # or "bumpy" (amplitude, wavenumber) or "file" (path)
//! level = 4
//!
//! [model]
//! eps = 0.02
//! delta = 0.02
//! c1 = 500.0
//! c2 = 500.0
//! exchange = "reaction"  # or "energy-decreasing" (uses c)
//!
//! [stepper]
//! tau_max = 1e-2
//! variant = "reduced"
//!
//! [initial]
//! phi_hat = -0.5
//! v0 = 0.25
//! amplitude = 1e-3
//! seed = 1
//!
//! [run]
//! t_end = 10.0
//! stop_on_stationary = true
//!
//! [output]
//! directory = "out"
//! snapshot_times = [0.0, 1.0]
//! ```

use std::path::{Path, PathBuf};

use raftfem::benchmarks::InitialData;
use raftfem::mesh::build_octahedral_sphere;
use raftfem::{
    build_bumpy_sphere, build_refined_sphere, load_mesh, ModelParams, StepperConfig, SurfaceMesh,
    Variant,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Geometry {
    /// Midpoint-refined cube projected to the unit sphere.
    Sphere { level: u32 },
    /// Midpoint-refined octahedron projected to the unit sphere.
    Octahedron { level: u32 },
    Bumpy {
        level: u32,
        amplitude: f64,
        wavenumber: u32,
    },
    /// ASCII OFF file.
    File { path: PathBuf },
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry::Sphere { level: 4 }
    }
}

impl Geometry {
    pub fn build(&self) -> Result<SurfaceMesh, CliError> {
        let mesh = match self {
            Geometry::Sphere { level } => build_refined_sphere(*level),
            Geometry::Octahedron { level } => build_octahedral_sphere(*level),
            Geometry::Bumpy {
                level,
                amplitude,
                wavenumber,
            } => build_bumpy_sphere(*level, *amplitude, *wavenumber),
            Geometry::File { path } => load_mesh(path),
        };
        mesh.map_err(|e| CliError::Config(format!("geometry: {e}")))
    }

    /// Parses `sphere:N`, `octahedron:N`, `bumpy:L:A:K` or a path to an OFF
    /// file.
    pub fn parse_spec(spec: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || CliError::Usage(format!("cannot parse geometry spec '{spec}'"));
        let level = |s: &str| s.parse::<u32>().map_err(|_| bad());
        match parts.as_slice() {
            ["sphere", l] => Ok(Geometry::Sphere { level: level(l)? }),
            ["octahedron", l] => Ok(Geometry::Octahedron { level: level(l)? }),
            ["bumpy", l, a, k] => Ok(Geometry::Bumpy {
                level: level(l)?,
                amplitude: a.parse().map_err(|_| bad())?,
                wavenumber: k.parse().map_err(|_| bad())?,
            }),
            [path] if path.ends_with(".off") => Ok(Geometry::File {
                path: PathBuf::from(path),
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub stop_on_stationary: bool,
    pub max_steps: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 10.0,
            stop_on_stationary: true,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub snapshot_times: Vec<f64>,
    /// Also write the final state as VTK.
    pub final_snapshot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("output"),
            snapshot_times: Vec::new(),
            final_snapshot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub geometry: Geometry,
    pub model: ModelParams,
    pub stepper: StepperConfig,
    pub initial: InitialData,
    pub run: RunSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: "basic".into(),
            geometry: Geometry::default(),
            model: ModelParams::default(),
            stepper: StepperConfig::default(),
            initial: InitialData::default(),
            run: RunSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Environment variable that replaces `output.directory`.
pub const OUTPUT_DIR_ENV: &str = "RAFTFEM_OUTPUT_DIR";

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model
            .validate()
            .map_err(|e| CliError::Config(format!("model: {e}")))?;
        self.stepper
            .validate()
            .map_err(|e| CliError::Config(format!("stepper: {e}")))?;
        let consistent = matches!(
            (self.stepper.variant, self.model.exchange),
            (
                Variant::EnergyDecreasing,
                raftfem::ExchangeLaw::EnergyDecreasing
            ) | (
                Variant::Reduced | Variant::OhtaKawasaki,
                raftfem::ExchangeLaw::Reaction
            )
        );
        if !consistent {
            return Err(CliError::Config(format!(
                "stepper.variant {:?} does not match model.exchange {:?}",
                self.stepper.variant, self.model.exchange
            )));
        }
        if !(self.run.t_end >= 0.0 && self.run.t_end.is_finite()) {
            return Err(CliError::Config(format!(
                "run.t_end must be finite and >= 0, got {}",
                self.run.t_end
            )));
        }
        let times = &self.output.snapshot_times;
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[0] > w[1])
        {
            return Err(CliError::Config(
                "output.snapshot_times must be finite, nonnegative and sorted".into(),
            ));
        }
        let init = &self.initial;
        if !(init.phi_hat.is_finite() && init.v0.is_finite() && init.amplitude >= 0.0) {
            return Err(CliError::Config(
                "initial: phi_hat, v0 must be finite and amplitude >= 0".into(),
            ));
        }
        match &self.geometry {
            Geometry::File { path } if !path.exists() => Err(CliError::Config(format!(
                "geometry: mesh file {} does not exist",
                path.display()
            ))),
            _ => Ok(()),
        }
    }

    /// Output directory after applying the environment override.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output.directory.clone())
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_baseline() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.model.c1, 500.0);
        assert!((cfg.model.mass - 20.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
        assert_eq!(cfg.initial.phi_hat, -0.5);
        assert_eq!(cfg.initial.amplitude, 1e-3);
    }

    #[test]
    fn negative_delta_names_the_key() {
        let err = RunConfig::from_toml("[model]\ndelta = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = RunConfig::from_toml("[model]\nepsilon = 0.1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("epsilon") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn type_mismatch_rejected() {
        assert!(RunConfig::from_toml("[initial]\nseed = \"one\"\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.geometry = Geometry::Bumpy {
            level: 3,
            amplitude: 0.2,
            wavenumber: 4,
        };
        cfg.model.sigma_override = Some(12.5);
        cfg.output.snapshot_times = vec![0.0, 0.5];
        cfg.run.max_steps = Some(10);
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::from_toml(&back.to_toml()).unwrap(), back);
    }

    #[test]
    fn ramp_stepper_round_trips() {
        let cfg = RunConfig {
            stepper: StepperConfig::ramp(1e-6, 1e-2),
            ..Default::default()
        };
        let text = cfg.to_toml();
        assert!(text.contains("adapt_const = inf"), "{text}");
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unsorted_snapshots_rejected() {
        assert!(RunConfig::from_toml("[output]\nsnapshot_times = [1.0, 0.5]\n").is_err());
    }

    #[test]
    fn variant_must_match_exchange() {
        let text = "[stepper]\nvariant = \"energy-decreasing\"\n";
        assert!(RunConfig::from_toml(text).is_err());
        let text = "[stepper]\nvariant = \"energy-decreasing\"\n[model]\nexchange = \"energy-decreasing\"\n";
        assert!(RunConfig::from_toml(text).is_ok());
    }

    #[test]
    fn geometry_specs() {
        assert_eq!(
            Geometry::parse_spec("sphere:3").unwrap(),
            Geometry::Sphere { level: 3 }
        );
        assert_eq!(
            Geometry::parse_spec("bumpy:2:0.1:3").unwrap(),
            Geometry::Bumpy {
                level: 2,
                amplitude: 0.1,
                wavenumber: 3
            }
        );
        assert!(matches!(
            Geometry::parse_spec("mesh.off").unwrap(),
            Geometry::File { .. }
        ));
        assert!(Geometry::parse_spec("cube:1").is_err());
        assert!(Geometry::parse_spec("sphere:x").is_err());
    }
}
