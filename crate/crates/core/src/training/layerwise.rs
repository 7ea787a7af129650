use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::objective::{Objective, OutputLoss, Problem};
use super::{EpochRecord, TrainConfig, TrainReport};
use crate::analysis::tau_bound_output;
use crate::error::{KmlpError, Result};
use crate::kernel::KernelSpec;
use crate::network::{subsample_layer, KernelLayer, KernelNetwork, LayerTemplate};
use crate::seed::{derive_indexed, Seeds};
use crate::targets::{dissimilarity_raw, IdealGram};

/// Rows used to monitor objectives each epoch; larger sets are subsampled.
const MONITOR_ROWS: usize = 2000;

/// Examples and labels presented to one layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerData<'a> {
    pub x: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

impl<'a> LayerData<'a> {
    pub fn new(x: ArrayView2<'a, f64>, labels: &'a [usize]) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(KmlpError::invalid(format!(
                "{} rows but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KmlpError::invalid("inputs contain non-finite values"));
        }
        Ok(LayerData { x, labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerInit {
    #[default]
    Random,
    /// Reproduce the layer's input on the training rows; needs equal widths.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    /// Output width; `None` on the last layer derives it from the loss.
    pub width: Option<usize>,
    pub sigma: f64,
    pub init: LayerInit,
}

/// Architecture of a network before training.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub layers: Vec<LayerSpec>,
    /// Target floor `a` shared by every kernel.
    pub target_floor: f64,
}

impl NetSpec {
    pub fn kernels(&self) -> Result<Vec<KernelSpec>> {
        self.layers
            .iter()
            .map(|l| KernelSpec::gaussian(l.sigma)?.with_floor(self.target_floor))
            .collect()
    }

    fn widths(&self, n_classes: usize, loss: OutputLoss) -> Result<Vec<usize>> {
        if self.layers.is_empty() {
            return Err(KmlpError::invalid("a network needs at least one layer"));
        }
        let out = loss.width(n_classes)?;
        let last = self.layers.len() - 1;
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| match (i == last, l.width) {
                (true, None) => Ok(out),
                (true, Some(w)) if w == out => Ok(w),
                (true, Some(w)) => Err(KmlpError::invalid(format!(
                    "output layer width {w} does not match the {out} outputs the loss needs"
                ))),
                (false, Some(w)) if w > 0 => Ok(w),
                (false, _) => Err(KmlpError::invalid(format!(
                    "hidden layer {} needs a positive width",
                    i + 1
                ))),
            })
            .collect()
    }
}

/// Train one layer's coefficients and biases with minibatch Adam.
///
/// Epoch 0 (the initialization) takes part in best-iterate selection, so the
/// returned parameters never score worse on the selection metric than the
/// ones passed in. `epochs = 0` returns the layer untouched with no records.
pub fn train_layer(
    layer: KernelLayer,
    objective: Objective,
    train: LayerData<'_>,
    validation: Option<LayerData<'_>>,
    config: &TrainConfig,
    layer_index: usize,
    seed: u64,
) -> Result<(KernelLayer, TrainReport)> {
    config.validate()?;
    layer.validate()?;
    let start = Instant::now();
    let mut report = TrainReport {
        layer: layer_index,
        records: Vec::new(),
        chosen_epoch: 0,
        final_dissimilarity: None,
        final_norms: layer.rkhs_norms().to_vec(),
        wall_seconds: 0.0,
    };
    if config.epochs == 0 {
        return Ok((layer, report));
    }
    let n = train.labels.len();
    let min_batch = match objective {
        Objective::Hidden { .. } => 2,
        Objective::Output { .. } => 1,
    };
    if n < min_batch {
        return Err(KmlpError::invalid(format!(
            "layer {layer_index} needs at least {min_batch} training rows"
        )));
    }
    if let Objective::Output { loss } = objective {
        let classes = train.labels.iter().max().map_or(0, |&m| m + 1);
        let width = loss.width(classes)?;
        if layer.out_width() != width && !(loss == OutputLoss::CrossEntropy && layer.out_width() >= classes) {
            return Err(KmlpError::invalid(format!(
                "output layer width {} does not fit {classes} classes",
                layer.out_width()
            )));
        }
    }

    let k_train = layer.center_gram(train.x)?;
    let gcc = if config.tau_prime > 0.0 {
        Some(layer.kernel.gram(layer.centers.view(), layer.centers.view())?.values)
    } else {
        None
    };
    let monitor_train = Monitor::new(k_train.view(), train.labels, derive_indexed(seed, "monitor", 0));
    let monitor_val = match validation {
        Some(v) => Some(Monitor::new(
            layer.center_gram(v.x)?.view(),
            v.labels,
            derive_indexed(seed, "monitor", 1),
        )),
        None => None,
    };
    let selector = monitor_val.as_ref().unwrap_or(&monitor_train);

    let mut alpha = layer.alpha.clone();
    let mut bias = layer.bias.clone();
    let train_obj = |a: &Array2<f64>, b: &Array1<f64>| -> Result<f64> {
        Problem {
            objective,
            k: monitor_train.k.view(),
            labels: &monitor_train.labels,
            center_gram: gcc.as_ref(),
            tau: config.tau_prime,
        }
        .evaluate(a, b, false)
        .map(|(v, _)| v)
    };

    let metric0 = selector.selection_metric(objective, &alpha, &bias)?;
    report.records.push(EpochRecord {
        epoch: 0,
        train_objective: train_obj(&alpha, &bias)?,
        validation_metric: metric0,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    });
    let mut best = (metric0, alpha.clone(), bias.clone(), 0usize);
    let mut stale = 0usize;

    let mut adam_alpha = Adam::new(
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
        alpha.len(),
    );
    let mut adam_bias = Adam::new(
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
        bias.len(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = config.batch_size.max(min_batch);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            if chunk.len() < min_batch {
                continue;
            }
            let k_batch = k_train.select(Axis(0), chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let problem = Problem {
                objective,
                k: k_batch.view(),
                labels: &labels,
                center_gram: gcc.as_ref(),
                tau: config.tau_prime,
            };
            let (_, grads) = problem.evaluate(&alpha, &bias, true)?;
            let grads = grads.expect("gradient requested");
            adam_alpha.step(alpha.iter_mut(), grads.alpha.iter());
            adam_bias.step(bias.iter_mut(), grads.bias.iter());
            if alpha.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
                return Err(KmlpError::Divergence {
                    layer: layer_index,
                    epoch,
                });
            }
        }
        let metric = selector.selection_metric(objective, &alpha, &bias)?;
        report.records.push(EpochRecord {
            epoch,
            train_objective: train_obj(&alpha, &bias)?,
            validation_metric: metric,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
        if metric < best.0 {
            best = (metric, alpha.clone(), bias.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                break;
            }
        }
    }

    let (_, alpha, bias, chosen) = best;
    let mut trained = KernelLayer {
        alpha,
        bias,
        ..layer
    };
    if let Objective::Hidden { metric, .. } = objective {
        trained.metric = Some(metric);
        report.final_dissimilarity =
            Some(monitor_train.selection_metric(objective, &trained.alpha, &trained.bias)?);
    }
    report.chosen_epoch = chosen;
    report.final_norms = trained.rkhs_norms().to_vec();
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((trained, report))
}

/// Precomputed kernel rows for the examples an objective is monitored on.
struct Monitor {
    k: Array2<f64>,
    labels: Vec<usize>,
}

impl Monitor {
    fn new(k: ArrayView2<f64>, labels: &[usize], seed: u64) -> Self {
        let n = labels.len();
        if n <= MONITOR_ROWS {
            return Monitor {
                k: k.to_owned(),
                labels: labels.to_vec(),
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = index::sample(&mut rng, n, MONITOR_ROWS).into_vec();
        idx.sort_unstable();
        Monitor {
            k: k.select(Axis(0), &idx),
            labels: idx.iter().map(|&i| labels[i]).collect(),
        }
    }

    /// Dissimilarity (hidden) or error rate (output) without the norm penalty.
    fn selection_metric(
        &self,
        objective: Objective,
        alpha: &Array2<f64>,
        bias: &Array1<f64>,
    ) -> Result<f64> {
        let mut z = self.k.dot(alpha);
        z += &bias.view().insert_axis(Axis(0));
        match objective {
            Objective::Hidden {
                next_kernel,
                metric,
            } => {
                let g = next_kernel.gram(z.view(), z.view())?.values;
                let t = IdealGram::new(&self.labels, next_kernel.a, next_kernel.c)?;
                Ok(dissimilarity_raw(g.view(), t.values.view(), metric))
            }
            Objective::Output { .. } => Ok(error_rate(&readout(z.view()), &self.labels)),
        }
    }
}

fn error_rate(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = pred.iter().zip(labels).filter(|(p, y)| p != y).count();
    wrong as f64 / labels.len() as f64
}

/// Class decisions: sign for one output (0 counts as class 1), otherwise
/// argmax with ties to the lowest class index.
fn readout(scores: ArrayView2<f64>) -> Vec<usize> {
    if scores.ncols() == 1 {
        scores.column(0).iter().map(|&s| usize::from(s >= 0.0)).collect()
    } else {
        scores
            .axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn predict(net: &KernelNetwork, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    if net.depth() == 0 || net.frozen_upto < net.depth() {
        return Err(KmlpError::InvalidState(format!(
            "network is not trained ({} of {} layers frozen)",
            net.frozen_upto,
            net.depth()
        )));
    }
    let scores = net.forward(x, net.depth())?;
    Ok(readout(scores.view()))
}

/// Mean 0/1 loss.
pub fn evaluate(net: &KernelNetwork, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if x.nrows() != labels.len() {
        return Err(KmlpError::invalid(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    Ok(error_rate(&predict(net, x)?, labels))
}

/// Failure of a network run, with the reports of layers that finished.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct NetworkTrainError {
    #[source]
    pub error: KmlpError,
    pub reports: Vec<TrainReport>,
}

/// Train every layer in order, freezing each before moving on.
pub fn train_network(
    spec: &NetSpec,
    train: LayerData<'_>,
    validation: Option<LayerData<'_>>,
    config: &TrainConfig,
) -> std::result::Result<(KernelNetwork, Vec<TrainReport>), NetworkTrainError> {
    let mut reports = Vec::new();
    match run_network(spec, train, validation, config, &mut reports) {
        Ok(net) => Ok((net, reports)),
        Err(error) => Err(NetworkTrainError { error, reports }),
    }
}

fn run_network(
    spec: &NetSpec,
    train: LayerData<'_>,
    validation: Option<LayerData<'_>>,
    config: &TrainConfig,
    reports: &mut Vec<TrainReport>,
) -> Result<KernelNetwork> {
    config.validate()?;
    let depth = spec.layers.len();
    let n_classes = train.labels.iter().max().map_or(0, |&m| m + 1);
    let widths = spec.widths(n_classes, config.output_loss)?;
    let kernels = spec.kernels()?;
    let retention = config.retention_for(depth)?;
    let seeds = Seeds::from_root(config.seed);
    if config.tau_prime > 0.0 && n_classes == 2 {
        let k = kernels[depth - 1];
        let bound = tau_bound_output(train.labels, k.c, k.a);
        if config.tau_prime >= bound {
            log::warn!(
                "tau_prime {} is not below {bound:.5}; the ideal representation may not be optimal for the output layer",
                config.tau_prime
            );
        }
    }

    let mut net = KernelNetwork {
        layers: Vec::with_capacity(depth),
        frozen_upto: 0,
    };
    let mut rep_train = train.x.to_owned();
    let mut rep_val = validation.map(|v| v.x.to_owned());

    for i in 0..depth {
        let template = LayerTemplate {
            kernel: kernels[i],
            width: widths[i],
        };
        let init_seed = derive_indexed(seeds.init, "layer", i);
        let layer = match spec.layers[i].init {
            LayerInit::Random => subsample_layer(
                &template,
                rep_train.view(),
                train.labels,
                retention[i],
                init_seed,
            )?,
            LayerInit::Identity => {
                if retention[i] != 1.0 {
                    return Err(KmlpError::invalid(format!(
                        "layer {}: identity init keeps every center",
                        i + 1
                    )));
                }
                if template.width != rep_train.ncols() {
                    return Err(KmlpError::invalid(format!(
                        "layer {}: identity init needs output width {} to equal input width {}",
                        i + 1,
                        template.width,
                        rep_train.ncols()
                    )));
                }
                let ridge = KernelLayer::default_ridge(&template.kernel);
                let (layer, residual) =
                    KernelLayer::identity_init(template.kernel, rep_train.view(), ridge)?;
                log::debug!("layer {}: identity init residual {residual:e}", i + 1);
                layer
            }
        };
        let objective = if i + 1 < depth {
            Objective::Hidden {
                next_kernel: kernels[i + 1],
                metric: config.metric,
            }
        } else {
            Objective::Output {
                loss: config.output_loss,
            }
        };
        let val = match (&rep_val, validation) {
            (Some(x), Some(v)) => Some(LayerData {
                x: x.view(),
                labels: v.labels,
            }),
            _ => None,
        };
        let (trained, report) = train_layer(
            layer,
            objective,
            LayerData {
                x: rep_train.view(),
                labels: train.labels,
            },
            val,
            config,
            i + 1,
            derive_indexed(seeds.batching, "layer", i),
        )?;
        log::info!(
            "layer {}: chosen epoch {} of {}, selection metric {:.5}",
            i + 1,
            report.chosen_epoch,
            report.records.len().saturating_sub(1),
            report
                .records
                .iter()
                .find(|r| r.epoch == report.chosen_epoch)
                .map_or(f64::NAN, |r| r.validation_metric)
        );
        reports.push(report);
        if i + 1 < depth {
            rep_train = trained.forward(rep_train.view())?;
            if let Some(v) = rep_val.as_mut() {
                *v = trained.forward(v.view())?;
            }
        }
        net.layers.push(trained);
        net.frozen_upto = i + 1;
    }
    net.validate()?;
    Ok(net)
}
