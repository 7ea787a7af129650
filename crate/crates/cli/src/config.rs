//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/blobs"     # relative to this file
//! target_floor = 0.0
//!
//! [data]
//! source = "blobs"              # blobs | rectangles | csv | idx
//! n = 200
//! dim = 2
//! separation = 6.0
//!
//! [split]
//! train = 0.8
//! validation = 0.1
//! test = 0.1
//!
//! [[layers]]
//! width = 4
//! sigma = 1.0
//!
//! [[layers]]                    # output layer: width follows the loss
//! sigma = 1.0
//! retention = 0.5
//!
//! [train]
//! learning_rate = 0.01
//! epochs = 100
//! ```

use std::path::{Path, PathBuf};

use kmlp_core::data::{
    gen_blobs, gen_rectangles, load_csv, load_idx, resolve_data_path, LabelColumn,
};
use kmlp_core::seed::Seeds;
use kmlp_core::training::{LayerInit, LayerSpec, NetSpec, OutputLoss, TrainConfig};
use kmlp_core::{LabeledDataset, Metric};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub target_floor: f64,
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitFractions,
    pub layers: Vec<LayerConfig>,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Blobs {
        n: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        separation: f64,
    },
    Rectangles {
        n: usize,
        #[serde(default = "default_side")]
        side: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: LabelColumnConfig,
        #[serde(default)]
        header: bool,
        #[serde(default)]
        normalize: bool,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        normalize: bool,
    },
}

fn default_dim() -> usize {
    2
}

fn default_side() -> usize {
    28
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(untagged)]
pub enum LabelColumnConfig {
    Named(NamedColumn),
    Index(usize),
    #[default]
    #[serde(skip)]
    Default,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedColumn {
    First,
    Last,
}

impl From<LabelColumnConfig> for LabelColumn {
    fn from(c: LabelColumnConfig) -> Self {
        match c {
            LabelColumnConfig::Named(NamedColumn::First) => LabelColumn::First,
            LabelColumnConfig::Named(NamedColumn::Last) | LabelColumnConfig::Default => {
                LabelColumn::Last
            }
            LabelColumnConfig::Index(i) => LabelColumn::Index(i),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    #[serde(default)]
    pub validation: f64,
    #[serde(default)]
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub width: Option<usize>,
    pub sigma: f64,
    #[serde(default)]
    pub init: LayerInit,
    #[serde(default = "default_retention")]
    pub retention: f64,
}

fn default_retention() -> f64 {
    1.0
}

/// `[train]` table: every field optional, defaults as in [`TrainConfig`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub tau_prime: Option<f64>,
    pub metric: Option<Metric>,
    pub output_loss: Option<OutputLoss>,
    pub patience: Option<usize>,
}

/// A parsed and validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub net: NetSpec,
    pub train: TrainConfig,
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
    pub config_sha256: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config {
            path: String::new(),
            message: e.to_string(),
        })?;
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            adam_beta1: t.adam_beta1.unwrap_or(d.adam_beta1),
            adam_beta2: t.adam_beta2.unwrap_or(d.adam_beta2),
            adam_eps: t.adam_eps.unwrap_or(d.adam_eps),
            epochs: t.epochs.unwrap_or(d.epochs),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            tau_prime: t.tau_prime.unwrap_or(d.tau_prime),
            metric: t.metric.unwrap_or(d.metric),
            output_loss: t.output_loss.unwrap_or(d.output_loss),
            patience: t.patience.unwrap_or(d.patience),
            seed: self.seed,
            retention: self.layers.iter().map(|l| l.retention).collect(),
        }
    }

    /// Check everything that can be checked without touching data.
    pub fn validate(self, base_dir: PathBuf, config_sha256: String) -> Result<Experiment, CliError> {
        let bad = |path: &str, message: String| CliError::Config {
            path: path.to_string(),
            message,
        };
        if self.layers.is_empty() {
            return Err(bad("layers", "at least one layer is required".into()));
        }
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if i < last && l.width.is_none_or(|w| w == 0) {
                return Err(bad(&format!("layers[{i}].width"), "hidden layers need a positive width".into()));
            }
            if !(l.sigma > 0.0 && l.sigma.is_finite()) {
                return Err(bad(&format!("layers[{i}].sigma"), format!("must be positive, got {}", l.sigma)));
            }
            if !(l.retention > 0.0 && l.retention <= 1.0) {
                return Err(bad(
                    &format!("layers[{i}].retention"),
                    format!("must lie in (0, 1], got {}", l.retention),
                ));
            }
        }
        if self.layers[0].retention != 1.0 {
            return Err(bad("layers[0].retention", "the first layer keeps every center".into()));
        }
        let s = self.split;
        let sum = s.train + s.validation + s.test;
        if [s.train, s.validation, s.test].iter().any(|f| f.is_nan() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(bad("split", format!("fractions must be nonnegative and sum to 1, got {sum}")));
        }
        if s.train == 0.0 {
            return Err(bad("split.train", "the training split cannot be empty".into()));
        }
        match &self.data {
            DataSource::Blobs { n, dim, separation } => {
                if *n == 0 || n % 2 != 0 {
                    return Err(bad("data.n", format!("blobs need a positive even n, got {n}")));
                }
                if *dim == 0 {
                    return Err(bad("data.dim", "must be positive".into()));
                }
                if !(*separation >= 0.0 && separation.is_finite()) {
                    return Err(bad("data.separation", "must be finite and nonnegative".into()));
                }
            }
            DataSource::Rectangles { n, side } => {
                if *n == 0 {
                    return Err(bad("data.n", "must be positive".into()));
                }
                if *side < 6 {
                    return Err(bad("data.side", format!("must be at least 6, got {side}")));
                }
            }
            DataSource::Csv { .. } | DataSource::Idx { .. } => {}
        }
        let net = NetSpec {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    width: l.width,
                    sigma: l.sigma,
                    init: l.init,
                })
                .collect(),
            target_floor: self.target_floor,
        };
        net.kernels()
            .map_err(|e| bad("target_floor", e.to_string()))?;
        let train = self.train_config();
        train.validate().map_err(|e| bad("train", e.to_string()))?;
        Ok(Experiment {
            config: self,
            net,
            train,
            base_dir,
            config_sha256,
        })
    }
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Config {
            path: String::new(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config {
            path: String::new(),
            message: "config is not UTF-8".into(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ExperimentConfig::parse(&text)?.validate(base, sha256_hex(&bytes))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let via_env = resolve_data_path(p);
        if via_env != p {
            via_env
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        if self.config.output_dir.is_absolute() {
            self.config.output_dir.clone()
        } else {
            self.base_dir.join(&self.config.output_dir)
        }
    }

    /// Load or generate the dataset and assign splits.
    pub fn dataset(&self) -> Result<LabeledDataset, CliError> {
        let seeds = Seeds::from_root(self.config.seed);
        let (ds, normalize) = match &self.config.data {
            DataSource::Blobs { n, dim, separation } => {
                (gen_blobs(*n, *dim, *separation, seeds.data)?, false)
            }
            DataSource::Rectangles { n, side } => (gen_rectangles(*n, *side, seeds.data)?, false),
            DataSource::Csv {
                path,
                label_column,
                header,
                normalize,
            } => (
                load_csv(self.resolve(path), (*label_column).into(), *header)?,
                *normalize,
            ),
            DataSource::Idx {
                images,
                labels,
                normalize,
            } => (load_idx(self.resolve(images), self.resolve(labels))?, *normalize),
        };
        let s = self.config.split;
        let mut ds = ds.split([s.train, s.validation, s.test], seeds.data ^ 0x5eed)?;
        if normalize {
            ds.normalize()?;
        }
        ds.validate()?;
        Ok(ds)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
