//! TOML experiment configuration.
//!
//! One document describes a whole run. Every table rejects unknown keys and
//! parse errors report the dotted path of the offending key.
//!
//! ```toml
//! eta_b = 0.15
//!
//! [landscape]
//! preset = "double-well"
//! double_well = { h = 0.5, w = 0.8, a0 = 54.598150033144236, beta = 2.0, half_width = 2.0 }
//!
//! [grid]
//! n_points = 2001
//!
//! [scan]
//! eta_min = 0.3
//! eta_max = 7.5
//! n_samples = 64
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::presets::{self, DoubleWellParams};
use crate::landscape::{Grid, LandscapeSpec, RiverProfile, ValleyCurvature};
use crate::mpemba::RootChoice;
use crate::schedule::Margins;
use crate::simulator::{Dynamics, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub landscape: LandscapeBlock,
    #[serde(default)]
    pub grid: GridBlock,
    /// Bath (final) learning rate.
    pub eta_b: Option<f64>,
    pub scan: Option<ScanBlock>,
    pub schedule: Option<ScheduleBlock>,
    pub sim: Option<SimConfig>,
    pub simulate: Option<SimulateBlock>,
    pub experiment: Option<ExperimentBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Either a named preset or an explicit `c`/`a`/`domain` triple.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeBlock {
    pub preset: Option<String>,
    /// Parameter overrides for the `double-well` preset.
    pub double_well: Option<DoubleWellParams>,
    pub c: Option<RiverProfile>,
    pub a: Option<ValleyCurvature>,
    pub domain: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "default_grid_points")]
    pub n_points: usize,
    /// Replaces the landscape's river interval.
    pub domain: Option<[f64; 2]>,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            n_points: default_grid_points(),
            domain: None,
        }
    }
}

fn default_grid_points() -> usize {
    2001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub eta_min: f64,
    pub eta_max: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Eigenpairs kept in the bath decomposition.
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub root_choice: RootChoice,
}

fn default_samples() -> usize {
    64
}

fn default_modes() -> usize {
    8
}

fn default_tol() -> f64 {
    crate::mpemba::ROOT_TOLERANCE
}

/// Custom decay `η̇ = −m η^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayBlock {
    pub exponent: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    /// Plateau learning rate; computed from the amplitude scan when absent.
    pub eta_star: Option<f64>,
    /// Valley curvature; defaults to `a` at the river minimum.
    pub a: Option<f64>,
    /// Curvature log-slope; defaults to `|a'/a|` at the river minimum.
    pub k: Option<f64>,
    #[serde(default)]
    pub warmup: f64,
    #[serde(default)]
    pub margins: Margins,
    /// Replaces the recommended `p = 1, m = a/5` decay.
    pub decay: Option<DecayBlock>,
    pub stable_duration: Option<f64>,
    pub decay_duration: Option<f64>,
    /// Validation window after the decay starts; defaults to the decay duration.
    pub horizon: Option<f64>,
    #[serde(default = "default_checks")]
    pub n_check: usize,
    /// Search for a passing decay when validation fails.
    #[serde(default)]
    pub tune: bool,
}

fn default_checks() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolBlock {
    Constant {
        eta: f64,
    },
    Quench {
        eta_from: f64,
        eta_to: f64,
        t_quench: f64,
    },
    /// The plan described by the `schedule` table.
    Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    #[serde(default)]
    pub dynamics: Dynamics,
    pub protocol: ProtocolBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default)]
    pub dynamics: Dynamics,
    pub plateau: Option<f64>,
    pub horizon: f64,
    /// Defaults to the strong point from the amplitude scan.
    pub eta_h: Option<f64>,
    /// Defaults to `(eta_b + eta_h) / 2`.
    pub eta_l: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Error::config("<document>", e.message().to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let message = e.inner().message().to_string();
            Error::config(
                if key == "." {
                    "<document>".to_string()
                } else {
                    key
                },
                message,
            )
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// The landscape with any grid domain override applied.
    pub fn landscape_spec(&self) -> Result<LandscapeSpec> {
        let mut spec = self.landscape.resolve()?;
        if let Some([lo, hi]) = self.grid.domain {
            spec.domain = [lo, hi];
            spec.validate()
                .map_err(|e| Error::config("grid.domain", e.to_string()))?;
        }
        Ok(spec)
    }

    pub fn grid(&self, spec: &LandscapeSpec) -> Result<Grid> {
        Grid::for_spec(spec, self.grid.n_points)
            .map_err(|e| Error::config("grid.n_points", e.to_string()))
    }

    pub fn eta_b(&self) -> Result<f64> {
        match self.eta_b {
            Some(v) if v > 0.0 && v.is_finite() => Ok(v),
            Some(v) => Err(Error::config("eta_b", format!("must be positive, got {v}"))),
            None => Err(Error::config("eta_b", "missing")),
        }
    }

    /// The scan block, checked against the plateau constraint `eta_min > eta_b`.
    pub fn scan(&self) -> Result<&ScanBlock> {
        let scan = self
            .scan
            .as_ref()
            .ok_or_else(|| Error::config("scan", "missing table"))?;
        let eta_b = self.eta_b()?;
        if !(scan.eta_min > eta_b) {
            return Err(Error::config(
                "scan.eta_min",
                format!(
                    "plateau learning rates must exceed the bath rate (eta_min > eta_b), got eta_min = {} and eta_b = {eta_b}",
                    scan.eta_min
                ),
            ));
        }
        if !(scan.eta_max > scan.eta_min && scan.eta_max.is_finite()) {
            return Err(Error::config(
                "scan.eta_max",
                "must be finite and exceed eta_min",
            ));
        }
        if scan.n_samples < 8 {
            return Err(Error::config("scan.n_samples", "must be >= 8"));
        }
        if !(scan.tol > 0.0) {
            return Err(Error::config("scan.tol", "must be positive"));
        }
        Ok(scan)
    }

    pub fn schedule(&self) -> Result<&ScheduleBlock> {
        self.schedule
            .as_ref()
            .ok_or_else(|| Error::config("schedule", "missing table"))
    }

    pub fn sim(&self) -> Result<&SimConfig> {
        self.sim
            .as_ref()
            .ok_or_else(|| Error::config("sim", "missing table"))
    }

    pub fn simulate(&self) -> Result<&SimulateBlock> {
        self.simulate
            .as_ref()
            .ok_or_else(|| Error::config("simulate", "missing table"))
    }

    pub fn experiment(&self) -> Result<&ExperimentBlock> {
        self.experiment
            .as_ref()
            .ok_or_else(|| Error::config("experiment", "missing table"))
    }
}

impl LandscapeBlock {
    pub fn resolve(&self) -> Result<LandscapeSpec> {
        let explicit = self.c.is_some() || self.a.is_some() || self.domain.is_some();
        match &self.preset {
            Some(_) if explicit => Err(Error::config(
                "landscape",
                "give either `preset` or the explicit `c`, `a`, `domain` tables, not both",
            )),
            Some(name) => {
                let spec = match (name.as_str(), self.double_well) {
                    ("double-well", Some(params)) => presets::double_well(params),
                    (_, Some(_)) => {
                        return Err(Error::config(
                            "landscape.double_well",
                            format!("only applies to the double-well preset, not `{name}`"),
                        ))
                    }
                    _ => presets::by_name(name),
                };
                spec.map_err(|e| match e {
                    Error::Config { .. } => e,
                    other => Error::config("landscape.double_well", other.to_string()),
                })
            }
            None => {
                if self.double_well.is_some() {
                    return Err(Error::config(
                        "landscape.double_well",
                        "requires preset = \"double-well\"",
                    ));
                }
                let c = self
                    .c
                    .clone()
                    .ok_or_else(|| Error::config("landscape.c", "missing"))?;
                let a = self
                    .a
                    .clone()
                    .ok_or_else(|| Error::config("landscape.a", "missing"))?;
                let [lo, hi] = self
                    .domain
                    .ok_or_else(|| Error::config("landscape.domain", "missing"))?;
                LandscapeSpec::new(c, a, lo, hi)
                    .map_err(|e| Error::config("landscape", e.to_string()))
            }
        }
    }
}
