//! Layer-wise greedy training.
//!
//! Layers are trained one at a time in order. Every hidden layer is pushed
//! toward the ideal kernel matrix as seen through the next layer's kernel;
//! the last layer is trained as a classifier on the frozen representation
//! produced by the layers before it.

mod adam;
mod layerwise;
mod objective;

use serde::{Deserialize, Serialize};

use crate::error::{KmlpError, Result};
use crate::targets::Metric;

pub use adam::Adam;
pub use layerwise::{
    evaluate, predict, train_layer, train_network, LayerData, LayerInit, LayerSpec, NetSpec,
    NetworkTrainError,
};
pub use objective::{
    binary_sign, cross_entropy_risk, gradients, hidden_objective, hinge_risk, objective_value,
    output_objective, Gradients, Objective, OutputLoss,
};

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    64
}
fn default_patience() -> usize {
    10
}
fn default_metric() -> Metric {
    Metric::L1
}
fn default_output_loss() -> OutputLoss {
    OutputLoss::CrossEntropy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Weight on the largest RKHS norm of a layer's outputs.
    #[serde(default)]
    pub tau_prime: f64,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default = "default_output_loss")]
    pub output_loss: OutputLoss,
    /// Epochs without improvement before stopping; 0 never stops early.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of training rows kept as centers, per layer. Empty keeps all.
    #[serde(default)]
    pub retention: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            tau_prime: 0.0,
            metric: default_metric(),
            output_loss: default_output_loss(),
            patience: default_patience(),
            seed: 0,
            retention: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.learning_rate) {
            return Err(KmlpError::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(KmlpError::invalid("adam betas must lie in [0, 1)"));
        }
        if !positive(self.adam_eps) {
            return Err(KmlpError::invalid("adam_eps must be positive"));
        }
        if self.batch_size == 0 {
            return Err(KmlpError::invalid("batch_size must be positive"));
        }
        if !(self.tau_prime >= 0.0 && self.tau_prime.is_finite()) {
            return Err(KmlpError::invalid("tau_prime must be nonnegative"));
        }
        if let Some(bad) = self.retention.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(KmlpError::invalid(format!(
                "retention fractions must lie in (0, 1], got {bad}"
            )));
        }
        if self.retention.first().is_some_and(|&r| r != 1.0) {
            return Err(KmlpError::invalid("the first layer keeps all centers (retention 1)"));
        }
        Ok(())
    }

    /// Retention for each of `depth` layers.
    pub fn retention_for(&self, depth: usize) -> Result<Vec<f64>> {
        if self.retention.is_empty() {
            return Ok(vec![1.0; depth]);
        }
        if self.retention.len() != depth {
            return Err(KmlpError::invalid(format!(
                "{} retention fractions for {depth} layers",
                self.retention.len()
            )));
        }
        Ok(self.retention.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Objective (risk plus norm penalty) on the training rows.
    pub train_objective: f64,
    /// Selection metric: dissimilarity for hidden layers, error rate for the
    /// output layer, on validation rows when given, else training rows.
    pub validation_metric: f64,
    /// Seconds since training of this layer began.
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// One-based layer index.
    pub layer: usize,
    pub records: Vec<EpochRecord>,
    pub chosen_epoch: usize,
    /// Dissimilarity to the ideal kernel matrix on the training rows at the
    /// chosen epoch; `None` for the output layer.
    pub final_dissimilarity: Option<f64>,
    pub final_norms: Vec<f64>,
    pub wall_seconds: f64,
}

impl TrainReport {
    /// True when both reports describe the same run, ignoring timings.
    pub fn same_run(&self, other: &TrainReport) -> bool {
        self.layer == other.layer
            && self.chosen_epoch == other.chosen_epoch
            && self.final_dissimilarity.map(f64::to_bits)
                == other.final_dissimilarity.map(f64::to_bits)
            && bits(&self.final_norms) == bits(&other.final_norms)
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_objective.to_bits() == b.train_objective.to_bits()
                    && a.validation_metric.to_bits() == b.validation_metric.to_bits()
            })
    }

    /// JSON lines, one record per epoch, followed by a summary line.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            let line = serde_json::json!({
                "layer": self.layer,
                "epoch": r.epoch,
                "train_objective": r.train_objective,
                "validation_metric": r.validation_metric,
                "timestamp": r.elapsed_seconds,
            });
            writeln!(w, "{line}")?;
        }
        let summary = serde_json::json!({
            "layer": self.layer,
            "chosen_epoch": self.chosen_epoch,
            "final_dissimilarity": self.final_dissimilarity,
            "final_norms": self.final_norms,
            "wall_seconds": self.wall_seconds,
        });
        writeln!(w, "{summary}")
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
