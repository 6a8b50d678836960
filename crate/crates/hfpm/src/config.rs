//! Experiment configuration (JSON, versioned, unknown keys rejected).

use std::fs;
use std::path::{Path, PathBuf};

use hfpm_core::cost::WorkloadSpec;
use hfpm_core::mapper::{HardwareShape, ParallelMode};
use hfpm_core::redistribution::{FinetuneConfig, SelectionMode, TaskBuilder};
use hfpm_core::xbar::{calibrate_sigma, CellMode, NoisePlacement, DEFAULT_NOISE_SIGMA, DEFAULT_ON_OFF_RATIO};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_K_GRID: [f64; 7] = [0.0, 5.0, 10.0, 30.0, 40.0, 50.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RankPolicy {
    /// `⌊d1·d2/(d1+d2)⌋`, at least 1.
    HardThreshold,
    Explicit { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Relative programming noise of MLC cells.
    pub sigma: Option<f64>,
    /// Calibrate `sigma` so that MLC cells show this bit error rate.
    pub target_ber: Option<f64>,
    pub on_off_ratio: f64,
    pub placement: NoisePlacement,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            target_ber: None,
            on_off_ratio: DEFAULT_ON_OFF_RATIO,
            placement: NoisePlacement::PerWeight,
        }
    }
}

impl NoiseConfig {
    /// Effective `sigma`; defaults to 0.025 when neither field is set.
    pub fn resolve_sigma(&self) -> Result<f64> {
        match (self.sigma, self.target_ber) {
            (Some(_), Some(_)) => Err(CliError::config("noise: set either sigma or target_ber, not both")),
            (Some(s), None) if s >= 0.0 && s.is_finite() => Ok(s),
            (Some(s), None) => Err(CliError::config(format!("noise: sigma {s} must be finite and >= 0"))),
            (None, Some(b)) => Ok(calibrate_sigma(b, CellMode::Mlc2, self.on_off_ratio)?),
            (None, None) => Ok(DEFAULT_NOISE_SIGMA),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub task: TaskBuilder,
    /// Transformer shape used for the model-level cost rollup.
    #[serde(default = "default_model")]
    pub model: WorkloadSpec,
    #[serde(default = "default_rank_policy")]
    pub rank_policy: RankPolicy,
    #[serde(default = "default_grid")]
    pub k_percent_grid: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_modes")]
    pub selection_modes: Vec<SelectionMode>,
    #[serde(default = "default_parallelism")]
    pub parallelism: ParallelMode,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub hardware: HardwareShape,
    /// Weight files for `decompose`; the task's base weights when empty.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_model() -> WorkloadSpec {
    WorkloadSpec::bert_base(128)
}

fn default_rank_policy() -> RankPolicy {
    RankPolicy::HardThreshold
}

fn default_grid() -> Vec<f64> {
    DEFAULT_K_GRID.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_modes() -> Vec<SelectionMode> {
    vec![SelectionMode::Gradient]
}

fn default_parallelism() -> ParallelMode {
    ParallelMode::OnePuPerLayer
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task: TaskBuilder::default(),
            model: default_model(),
            rank_policy: default_rank_policy(),
            k_percent_grid: default_grid(),
            noise: NoiseConfig::default(),
            seeds: default_seeds(),
            selection_modes: default_modes(),
            parallelism: default_parallelism(),
            finetune: FinetuneConfig::default(),
            hardware: HardwareShape::default(),
            inputs: Vec::new(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(k) = self.k_percent_grid.iter().find(|k| !(0.0..=100.0).contains(*k)) {
            return Err(CliError::config(format!("k_percent {k} outside [0, 100]")));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("at least one seed is required"));
        }
        if self.selection_modes.is_empty() {
            return Err(CliError::config("at least one selection mode is required"));
        }
        if let RankPolicy::Explicit { k: 0 } = self.rank_policy {
            return Err(CliError::config("explicit rank must be positive"));
        }
        let core = |e: hfpm_core::Error| CliError::config(e.to_string());
        self.noise.resolve_sigma().map_err(|e| match e {
            CliError::Core(e) => core(e),
            other => other,
        })?;
        self.finetune.validate().map_err(core)?;
        self.model.validate().map_err(core)?;
        self.hardware.validate().map_err(core)?;
        Ok(())
    }

    /// Output directory: the flag wins over the config.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("hfpm-out"))
    }
}
