//! Run configuration file, merged under command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sas_core::fit::FitConfig;
use sas_core::spectra::linear_grid;
use sas_core::{Preset, SpectralParams, SpectroscopicParams, TensorSet};

/// Every field is optional; a flag given on the command line replaces the
/// corresponding value from the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    /// Explicit tensor set, used instead of a preset.
    pub tensor: Option<TensorSet>,
    pub spectral: Option<SpectroscopicParams>,
    pub theta_deg: Option<f64>,
    pub shift_cm1: Option<f64>,
    pub grid: Option<GridConfig>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Relative multiplicative noise for synthetic spectra.
    pub noise: Option<f64>,
    pub accidental: Option<AccidentalConfig>,
    pub map: Option<MapConfig>,
    pub fit: Option<FitConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start_cm1: f64,
    pub stop_cm1: f64,
    pub step_cm1: f64,
}

impl GridConfig {
    pub fn points(&self) -> Result<Vec<f64>> {
        Ok(linear_grid(self.start_cm1, self.stop_cm1, self.step_cm1)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccidentalConfig {
    pub amplitude: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub axis: Option<String>,
    pub theta_step_deg: Option<f64>,
    pub width_points: Option<usize>,
    pub width_max_gamma: Option<f64>,
    pub hatch_half_width: Option<f64>,
    pub f_min_level: Option<f64>,
    pub formats: Option<Vec<String>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            anyhow::anyhow!(
                "invalid run configuration {}: field `{}`: {}",
                path.display(),
                e.path(),
                e.inner()
            )
        })?;
        cfg.validate()
            .with_context(|| format!("invalid run configuration {}", path.display()))?;
        Ok(cfg)
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn validate(&self) -> Result<()> {
        if self.preset.is_some() && self.tensor.is_some() {
            bail!("`preset` and `tensor` are mutually exclusive");
        }
        if let Some(p) = &self.preset {
            p.parse::<Preset>().context("preset")?;
        }
        if let Some(t) = &self.tensor {
            t.validate().context("tensor")?;
        }
        if let Some(s) = &self.spectral {
            s.to_params().context("spectral")?;
        }
        if let Some(g) = &self.grid {
            g.points().context("grid")?;
        }
        if let Some(f) = &self.fit {
            f.validate().context("fit")?;
        }
        if let Some(n) = self.noise {
            if !(n >= 0.0 && n.is_finite()) {
                bail!("noise: must be non-negative");
            }
        }
        Ok(())
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Run configuration file (JSON); flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Tensor preset: table1, fig1-fit or ideal-centrosymmetric.
    #[arg(long)]
    pub preset: Option<String>,
    /// Tensor set file (JSON) used instead of a preset.
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    pub tensor: Option<PathBuf>,
    /// Laser centre in cm⁻¹.
    #[arg(long, value_name = "CM1")]
    pub center: Option<f64>,
    /// Phonon shift in cm⁻¹.
    #[arg(long, value_name = "CM1")]
    pub phonon: Option<f64>,
    /// Phonon linewidth parameter.
    #[arg(long, value_name = "CM1")]
    pub gamma: Option<f64>,
    /// Laser power-spectrum FWHM in cm⁻¹.
    #[arg(long, value_name = "CM1", group = "laser_width")]
    pub fwhm: Option<f64>,
    /// Laser amplitude width W as a multiple of gamma.
    #[arg(long, value_name = "X", group = "laser_width")]
    pub width_gamma: Option<f64>,
    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Fully resolved shared inputs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: RunConfig,
    pub tensor: TensorSet,
    pub tensor_name: String,
    pub spectroscopic: SpectroscopicParams,
    pub sp: SpectralParams,
    pub out_dir: PathBuf,
}

pub fn resolve(common: &CommonArgs) -> Result<Resolved> {
    let cfg = RunConfig::load_optional(common.config.as_deref())?;

    let (tensor, tensor_name) = if let Some(path) = &common.tensor {
        let t = TensorSet::from_json_file(path).with_context(|| format!("--tensor {}", path.display()))?;
        (t, path.display().to_string())
    } else if let Some(p) = &common.preset {
        let preset: Preset = p.parse().context("--preset")?;
        (preset.tensor(), preset.name().to_string())
    } else if let Some(t) = cfg.tensor {
        (t, "config tensor".to_string())
    } else {
        let preset: Preset = cfg.preset.as_deref().unwrap_or("table1").parse().context("preset")?;
        (preset.tensor(), preset.name().to_string())
    };

    let mut spectroscopic = cfg.spectral.unwrap_or_default();
    if let Some(v) = common.center {
        spectroscopic.center_cm1 = v;
    }
    if let Some(v) = common.phonon {
        spectroscopic.phonon_cm1 = v;
    }
    if let Some(v) = common.gamma {
        spectroscopic.gamma_cm1 = v;
    }
    if common.fwhm.is_some() || common.width_gamma.is_some() {
        spectroscopic.fwhm_cm1 = common.fwhm;
        spectroscopic.width_cm1 = None;
        spectroscopic.width_angular = common.width_gamma.map(|k| k * spectroscopic.gamma_cm1);
    }
    let sp = spectroscopic.to_params().context("spectral parameters")?;

    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(Resolved {
        cfg,
        tensor,
        tensor_name,
        spectroscopic,
        sp,
        out_dir,
    })
}
