//! Experiment configuration: one JSON document, every field defaulted except
//! the dataset path and task.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tabbin::binning::BinMethod;
use tabbin::corruption::ReplaceMode;
use tabbin::data::{SplitMode, Task};
use tabbin::nn::MlpSpec;
use tabbin::objectives::{LossKind, LossTerm};
use tabbin::train::{GridSpec, ProbeConfig, SslConfig};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub binning: BinningConfig,
    #[serde(default)]
    pub corruption: CorruptionSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_losses")]
    pub losses: Vec<LossTerm>,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default = "ProbeSection::linear")]
    pub probe: ProbeSection,
    #[serde(default = "ProbeSection::finetune")]
    pub finetune: ProbeSection,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub task: Task,
    #[serde(default = "default_label")]
    pub label_column: String,
    #[serde(default = "default_split")]
    pub split: SplitMode,
    #[serde(default = "default_categorical")]
    pub categorical_threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinningConfig {
    pub method: BinMethod,
    pub bins: usize,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            method: BinMethod::Quantile,
            bins: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionSection {
    pub mode: ReplaceMode,
    pub p_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub representation_dim: usize,
    /// Defaults to the encoder's hidden layers in reverse.
    pub decoder_hidden: Option<Vec<usize>>,
    pub head_embed: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256],
            representation_dim: 256,
            decoder_hidden: None,
            head_embed: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: Option<usize>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 1e-4,
            weight_decay: 1e-5,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub lr: f64,
    pub epochs: usize,
    pub seeds: usize,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

impl ProbeSection {
    fn from(p: ProbeConfig) -> Self {
        Self {
            lr: p.lr,
            epochs: p.epochs,
            seeds: p.seeds,
            weight_decay: p.weight_decay,
            batch_size: p.batch_size,
        }
    }

    pub fn linear() -> Self {
        Self::from(ProbeConfig::linear())
    }

    pub fn finetune() -> Self {
        Self::from(ProbeConfig::finetune())
    }

    pub fn to_probe(&self, seed: u64, frozen: bool) -> ProbeConfig {
        ProbeConfig {
            lr: self.lr,
            epochs: self.epochs,
            seeds: self.seeds,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            seed,
            frozen,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Feature whose bin index annotates PCA coordinates.
    pub pca_feature: usize,
    /// `eval_bin_error.json` of a BinRecon run to compare against.
    pub bin_error_baseline: Option<PathBuf>,
}

fn default_losses() -> Vec<LossTerm> {
    vec![LossTerm::new(LossKind::BinRecon, 1.0)]
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_label() -> String {
    "target".into()
}

fn default_split() -> SplitMode {
    SplitMode::Ratio {
        fractions: [0.64, 0.16, 0.2],
        seed: 0,
    }
}

fn default_categorical() -> usize {
    20
}

fn default_wd() -> f64 {
    1e-5
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // Relative dataset paths are resolved against the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.dataset.path = resolve(base, &cfg.dataset.path);
        if let SplitMode::IndexFiles { train, val, test } = &mut cfg.dataset.split {
            *train = resolve(base, train);
            *val = resolve(base, val);
            *test = resolve(base, test);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Hash of everything that influences results (the output directory excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        tabbin::binning::hex_digest(c.to_json().as_bytes())
    }

    pub fn ssl_config(&self, d: usize) -> Result<SslConfig, Failure> {
        let encoder = MlpSpec::new(d, self.model.hidden_dims.clone(), self.model.representation_dim)?;
        let cfg = SslConfig {
            encoder,
            decoder_hidden: self.model.decoder_hidden.clone(),
            head_embed: self.model.head_embed,
            losses: self.losses.clone(),
            p_m: self.corruption.p_m,
            mode: self.corruption.mode,
            epochs: self.pretrain.epochs,
            base_lr: self.pretrain.lr,
            weight_decay: self.pretrain.weight_decay,
            batch_size: self.pretrain.batch_size,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
