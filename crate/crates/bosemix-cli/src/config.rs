//! Run configuration: a JSON document with unknown keys rejected at every
//! level. The schema in `config.schema.json` is generated from these types.

use std::path::{Path, PathBuf};

use bosemix::bogoliubov::Tensor4;
use bosemix::fock::{ToyModel, DEFAULT_DIMENSION_CAP};
use bosemix::meanfield::{MinimizeOptions, ModelDescription, ModelSpec, Regime};
use bosemix::models::random_toy_model;
use bosemix::scattering::RadialPotential;
use nalgebra::DMatrix;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Scatter,
    Minimize,
    Bogoliubov,
    Exactdiag,
    Convergence,
    Definetti,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scatter => "scatter",
            Command::Minimize => "minimize",
            Command::Bogoliubov => "bogoliubov",
            Command::Exactdiag => "exactdiag",
            Command::Convergence => "convergence",
            Command::Definetti => "definetti",
            Command::Check => "check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Command the file is written for; must match the command line.
    pub command: Command,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Grid model for `minimize`, `bogoliubov` and `check`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuum: Option<ModelDescription>,
    /// Few-mode model for `bogoliubov`, `exactdiag`, `convergence`,
    /// `definetti` and `check`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySource>,
    /// Radial potential for `scatter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ToySource {
    /// Matrices as lists of rows; tensors as `{dims, data}` with the last
    /// index fastest.
    Explicit {
        t1: Vec<Vec<f64>>,
        t2: Vec<Vec<f64>>,
        v1: Tensor4,
        v2: Tensor4,
        v12: Tensor4,
        n1: usize,
        n2: usize,
    },
    /// Seeded random miscible model.
    Random {
        modes: [usize; 2],
        n1: usize,
        n2: usize,
        strength: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSource {
    Zero {},
    /// `height` on `r < radius`.
    SquareBarrier { height: f64, radius: f64, samples: usize },
    /// `strength · exp(-r²/(2 width²))` cut off at `radius`.
    Gaussian { strength: f64, width: f64, radius: f64, samples: usize },
    /// Samples on a uniform grid of `[0, support_radius]`.
    Samples { samples: Vec<f64>, support_radius: f64 },
    /// Two-column `r,V` CSV, relative paths resolved against the config file.
    Csv { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DefinettiState {
    /// `e₀^{⊗N₁} ⊗ e₀^{⊗N₂}` in the modes of the toy model.
    Condensate,
    /// Exact ground state of the toy model.
    Ground,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NeumannConfig {
    pub n: Vec<f64>,
    pub ell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Master seed; `--seed` overrides it.
    pub seed: u64,
    pub minimize: MinimizeOptions,
    /// Independent minimisations from seeds `seed, seed+1, …`.
    pub starts: usize,
    /// Excited modes per species for `bogoliubov` on a grid model.
    pub modes: [usize; 2],
    /// Largest accepted `|E(M) - E(M/2)|` before non-convergence is flagged.
    pub mode_tolerance: f64,
    /// Quanta cutoff of the Fock oracle that cross-checks `bogoliubov`.
    pub quanta: usize,
    pub dimension_cap: usize,
    /// Eigenvalues reported by `exactdiag`.
    pub levels: usize,
    /// Total particle numbers swept by `convergence` and `definetti`.
    pub sizes: Vec<usize>,
    pub samples: usize,
    /// Reduced densities `(k, ℓ)` compared by `definetti`.
    pub orders: Vec<[usize; 2]>,
    pub definetti_state: DefinettiState,
    /// Born-limit coupling for `scatter`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub born_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neumann: Option<NeumannConfig>,
    /// Random density quadruples sampled by `check`.
    pub convexity_samples: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            seed: 0,
            minimize: MinimizeOptions::default(),
            starts: 1,
            modes: [4, 4],
            mode_tolerance: 1e-3,
            quanta: 10,
            dimension_cap: DEFAULT_DIMENSION_CAP,
            levels: 4,
            sizes: vec![4, 8, 16],
            samples: 100_000,
            orders: vec![[1, 0], [0, 1]],
            definetti_state: DefinettiState::Condensate,
            born_lambda: None,
            neumann: None,
            convexity_samples: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory; `--out` and `BOSEMIX_OUT` take precedence.
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("bosemix-out"),
            formats: vec![Format::Json, Format::Csv, Format::Binary],
        }
    }
}

pub fn schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(RunConfig)).expect("schema serialises")
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("{name} must be a square list of rows")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ToySource {
    pub fn build(&self) -> Result<ToyModel, CliError> {
        let model = match self {
            ToySource::Explicit {
                t1,
                t2,
                v1,
                v2,
                v12,
                n1,
                n2,
            } => ToyModel::new(
                matrix("t1", t1)?,
                matrix("t2", t2)?,
                v1.clone(),
                v2.clone(),
                v12.clone(),
                *n1,
                *n2,
            ),
            &ToySource::Random {
                modes,
                n1,
                n2,
                strength,
                seed,
            } => random_toy_model(modes, n1, n2, strength, seed),
        };
        model.map_err(|e| CliError::Config(format!("toy model: {e}")))
    }
}

impl PotentialSource {
    pub fn build(&self, base: &Path) -> Result<RadialPotential, CliError> {
        let config = |e: bosemix::Error| CliError::Config(format!("potential: {e}"));
        match self {
            PotentialSource::Zero {} => Ok(RadialPotential::zero()),
            &PotentialSource::SquareBarrier {
                height,
                radius,
                samples,
            } => RadialPotential::square_barrier(height, radius, samples).map_err(config),
            &PotentialSource::Gaussian {
                strength,
                width,
                radius,
                samples,
            } => RadialPotential::from_fn(radius, samples, |r| strength * (-r * r / (2.0 * width * width)).exp())
                .map_err(config),
            PotentialSource::Samples {
                samples,
                support_radius,
            } => RadialPotential::new(samples.clone(), *support_radius).map_err(config),
            PotentialSource::Csv { path } => {
                let full = base.join(path);
                if !full.is_file() {
                    return Err(CliError::Config(format!("potential file {} not found", full.display())));
                }
                bosemix::io::load_radial_csv(&full).map_err(config)
            }
        }
    }
}

/// Everything a command needs, built and validated before any computation.
pub struct Resolved {
    pub config: RunConfig,
    pub continuum: Option<(ModelDescription, ModelSpec)>,
    pub toy: Option<ToyModel>,
    pub potential: Option<RadialPotential>,
}

impl Resolved {
    pub fn continuum(&self) -> Result<&(ModelDescription, ModelSpec), CliError> {
        self.continuum
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs model.continuum".into()))
    }

    pub fn toy(&self) -> Result<&ToyModel, CliError> {
        self.toy
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs model.toy".into()))
    }

    pub fn wants(&self, format: Format) -> bool {
        self.config.output.formats.contains(&format)
    }
}

pub fn resolve(config: RunConfig, base: &Path) -> Result<Resolved, CliError> {
    let n = &config.numerics;
    if n.starts == 0 {
        return Err(CliError::Config("numerics.starts must be at least 1".into()));
    }
    if n.sizes.is_empty() && matches!(config.command, Command::Convergence | Command::Definetti) {
        return Err(CliError::Config("numerics.sizes is empty".into()));
    }
    if !(n.mode_tolerance >= 0.0) {
        return Err(CliError::Config("numerics.mode_tolerance must be nonnegative".into()));
    }
    let continuum = match &config.model.continuum {
        Some(d) => {
            let spec = d.build().map_err(|e| CliError::Config(format!("continuum model: {e}")))?;
            Some((d.clone(), spec))
        }
        None => None,
    };
    let toy = config.model.toy.as_ref().map(ToySource::build).transpose()?;
    let potential = config.model.potential.as_ref().map(|p| p.build(base)).transpose()?;
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!("{} needs {what}", config.command.name())))
        }
    };
    match config.command {
        Command::Scatter => need(potential.is_some(), "model.potential")?,
        Command::Minimize => need(continuum.is_some(), "model.continuum")?,
        Command::Bogoliubov | Command::Check => {
            need(continuum.is_some() || toy.is_some(), "model.continuum or model.toy")?
        }
        Command::Exactdiag | Command::Convergence | Command::Definetti => need(toy.is_some(), "model.toy")?,
    }
    if config.command == Command::Bogoliubov {
        if let Some((d, _)) = &continuum {
            if d.regime != Regime::MeanField {
                return Err(CliError::Config(
                    "bogoliubov on a grid model needs the mean-field regime".into(),
                ));
            }
            if n.modes.iter().any(|&m| m < 2) {
                return Err(CliError::Config("numerics.modes must be at least 2 per species".into()));
            }
        }
    }
    Ok(Resolved {
        config,
        continuum,
        toy,
        potential,
    })
}
