//! Run configuration: presets, the TOML config file, and the manifest.
//!
//! A run resolves to one complete [`ExperimentConfig`]; the manifest
//! written to the output directory is that struct serialized back to
//! TOML, so re-running any command with `--config manifest.toml` in
//! single-threaded mode reproduces every CSV byte for byte.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::fd::GridSpec;
use crate::model::{FeedingStrategy, ModelParams};

/// Scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Coarse grids and short training runs; minutes on a laptop core.
    Desk,
    /// Full production scale; expect roughly an hour per solver artifact
    /// on a single core.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => bail!("unknown preset {other:?} (expected desk or paper)"),
        }
    }
}

/// `[feeding]` section: variant tag plus the variant's parameters, with
/// the standard normalizations as defaults (exponential rate reaching 1
/// at the horizon, sinusoidal drift closing the envelope at 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedingSection {
    pub variant: String,
    pub f0: f64,
    pub eta: f64,
    pub lambda: Option<f64>,
    pub l: f64,
    pub k: f64,
    pub t_i: Option<f64>,
    pub a: f64,
    pub t_p: Option<f64>,
    pub b: Option<f64>,
}

impl Default for FeedingSection {
    fn default() -> Self {
        Self {
            variant: "linear".into(),
            f0: 0.1,
            eta: 0.3,
            lambda: None,
            l: 1.0,
            k: 2.5,
            t_i: None,
            a: 0.1,
            t_p: None,
            b: None,
        }
    }
}

impl FeedingSection {
    pub fn resolve(&self, horizon: f64) -> Result<FeedingStrategy> {
        Ok(match self.variant.as_str() {
            "linear" => FeedingStrategy::Linear {
                f0: self.f0,
                eta: self.eta,
            },
            "exponential" => FeedingStrategy::Exponential {
                f0: self.f0,
                lambda: self.lambda.unwrap_or((1.0 / self.f0).ln() / horizon),
            },
            "logistic" => FeedingStrategy::Logistic {
                f0: self.f0,
                l: self.l,
                k: self.k,
                t_i: self.t_i.unwrap_or(0.5 * horizon),
            },
            "sinusoidal" => FeedingStrategy::Sinusoidal {
                f0: self.f0,
                a: self.a,
                t_p: self.t_p.unwrap_or(horizon / 12.0),
                b: self.b.unwrap_or((1.0 - self.a - self.f0) / horizon),
            },
            other => bail!("unknown feeding variant {other:?}"),
        })
    }

    pub fn for_variant(variant: &str) -> Self {
        Self {
            variant: variant.into(),
            ..Self::default()
        }
    }
}

/// `[pinn]` section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PinnSection {
    pub epochs: usize,
    pub batch: usize,
    pub fuzzy_eps: f64,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub control_grid: usize,
    pub stop_eps: f64,
    pub lr0: f64,
    pub hidden: Vec<usize>,
    pub literal_hinge: bool,
    pub max_sample_rounds: usize,
}

impl Default for PinnSection {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch: 1024,
            fuzzy_eps: 0.01,
            inner_steps: 5,
            inner_lr: 5e-4,
            control_grid: 32,
            stop_eps: 0.01,
            lr0: 5e-3,
            hidden: vec![32, 32, 32],
            literal_hinge: false,
            max_sample_rounds: 256,
        }
    }
}

impl PinnSection {
    fn paper() -> Self {
        Self {
            epochs: 10_000,
            batch: 4096,
            control_grid: 64,
            ..Self::default()
        }
    }
}

/// `[deepos]` section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepOsSection {
    pub stride: usize,
    pub hidden: Vec<usize>,
    pub steps_per_time: usize,
    pub minibatch: usize,
    pub lr: f64,
    /// Report the rule on its own training batch (single-batch mode)
    /// instead of the shared evaluation batch.
    pub eval_on_train: bool,
}

impl Default for DeepOsSection {
    fn default() -> Self {
        Self {
            stride: 64,
            hidden: vec![32, 32],
            steps_per_time: 300,
            minibatch: 2048,
            lr: 1e-3,
            eval_on_train: false,
        }
    }
}

impl DeepOsSection {
    fn paper() -> Self {
        Self {
            stride: 16,
            steps_per_time: 500,
            minibatch: 4096,
            ..Self::default()
        }
    }
}

/// `[run]` section: the shared Monte-Carlo batch and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub n_paths: usize,
    pub n_steps: usize,
    /// Seed of the shared evaluation batch; training batches and network
    /// initializations derive their streams from it.
    pub seed: u64,
    /// Threshold of the value-based stopping rule read from the solved
    /// field. The coarse desk grid reads `V − g` low near the boundary,
    /// so its threshold is calibrated smaller than the production 0.01.
    pub fd_stop_eps: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_paths: 8192,
            n_steps: 2048,
            seed: 12345,
            fd_stop_eps: 1e-3,
        }
    }
}

/// Fully resolved run configuration (also the manifest schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub feeding: FeedingSection,
    pub grid: GridSpec,
    pub pinn: PinnSection,
    pub deepos: DeepOsSection,
    pub run: RunSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let model = ModelParams::baseline();
        match preset {
            Preset::Desk => Self {
                grid: GridSpec::desk(&model),
                pinn: PinnSection::default(),
                deepos: DeepOsSection::default(),
                run: RunSection::default(),
                feeding: FeedingSection::default(),
                model,
            },
            Preset::Paper => Self {
                grid: GridSpec::paper(&model),
                pinn: PinnSection::paper(),
                deepos: DeepOsSection::paper(),
                run: RunSection {
                    fd_stop_eps: 0.01,
                    ..RunSection::default()
                },
                feeding: FeedingSection::default(),
                model,
            },
        }
    }

    /// Loads a config file on top of a preset: sections present in the
    /// file replace the preset's; omitted fields inside a present section
    /// fall back to the desk defaults.
    pub fn load(preset: Preset, path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::preset(preset);
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let value: toml::Value =
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let table = value
                .as_table()
                .context("config root must be a TOML table")?;
            macro_rules! overlay {
                ($key:literal, $field:ident) => {
                    if let Some(section) = table.get($key) {
                        cfg.$field = section
                            .clone()
                            .try_into()
                            .with_context(|| format!("invalid [{}] section", $key))?;
                    }
                };
            }
            overlay!("model", model);
            overlay!("feeding", feeding);
            overlay!("grid", grid);
            overlay!("pinn", pinn);
            overlay!("deepos", deepos);
            overlay!("run", run);
        }
        cfg.model.validate()?;
        cfg.grid.validate().map_err(anyhow::Error::msg)?;
        Ok(cfg)
    }

    pub fn feeding_strategy(&self) -> Result<FeedingStrategy> {
        self.feeding.resolve(self.model.horizon)
    }

    /// Serializes the resolved configuration as the run manifest.
    pub fn manifest(&self) -> Result<String> {
        let body = toml::to_string_pretty(self)?;
        Ok(format!(
            "# aquafarm run manifest (crate version {})\n{body}",
            env!("CARGO_PKG_VERSION")
        ))
    }

    pub fn write_manifest(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("manifest.toml"), self.manifest()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn presets_differ_in_scale() {
        let desk = ExperimentConfig::preset(Preset::Desk);
        let paper = ExperimentConfig::preset(Preset::Paper);
        assert_eq!(desk.grid.w.n, 32);
        assert_eq!(paper.grid.w.n, 64);
        assert_eq!(paper.pinn.epochs, 10_000);
        assert_eq!(paper.deepos.stride, 16);
        assert_abs_diff_eq!(paper.run.fd_stop_eps, 0.01);
    }

    #[test]
    fn manifest_round_trips() {
        let cfg = ExperimentConfig::preset(Preset::Paper);
        let dir = tempfile::tempdir().unwrap();
        cfg.write_manifest(dir.path()).unwrap();
        let back = ExperimentConfig::load(Preset::Desk, Some(&dir.path().join("manifest.toml"))).unwrap();
        // the manifest fully overrides the differing preset
        assert_eq!(back.grid, cfg.grid);
        assert_eq!(back.pinn.epochs, cfg.pinn.epochs);
        assert_eq!(back.run.seed, cfg.run.seed);
        assert_abs_diff_eq!(back.run.fd_stop_eps, cfg.run.fd_stop_eps);
    }

    #[test]
    fn partial_config_overrides_one_section() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.toml");
        fs::write(&path, "[run]\nseed = 77\n\n[feeding]\nvariant = \"exponential\"\n").unwrap();
        let cfg = ExperimentConfig::load(Preset::Desk, Some(&path)).unwrap();
        assert_eq!(cfg.run.seed, 77);
        assert_eq!(cfg.run.n_paths, 8192);
        let s = cfg.feeding_strategy().unwrap();
        assert_abs_diff_eq!(s.rate(cfg.model.horizon), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_feeding_variants_resolve() {
        for variant in ["linear", "exponential", "logistic", "sinusoidal"] {
            let section = FeedingSection::for_variant(variant);
            let s = section.resolve(3.0).unwrap();
            assert!(s.rate(0.0) > 0.0);
        }
        assert!(FeedingSection::for_variant("cubic").resolve(3.0).is_err());
    }
}
