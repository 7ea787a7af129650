//! Per-layer objectives and their analytic gradients.
//!
//! A hidden layer is scored by how far the Gram matrix of its outputs, taken
//! under the *next* layer's kernel, sits from the ideal kernel matrix. The
//! output layer is scored by a classification risk. Both add `tau'` times the
//! largest RKHS norm over the layer's outputs.
//!
//! Gradients only reach the layer's own coefficients and biases; everything
//! upstream is frozen, so the input-center Gram block is a constant.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{KmlpError, Result};
use crate::kernel::KernelSpec;
use crate::network::{rkhs_norms_with, KernelLayer};
use crate::targets::{dissimilarity_grad, IdealGram, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLoss {
    Hinge,
    CrossEntropy,
}

impl OutputLoss {
    /// Output width needed for `n_classes` classes.
    pub fn width(self, n_classes: usize) -> Result<usize> {
        match self {
            OutputLoss::Hinge if n_classes <= 2 => Ok(1),
            OutputLoss::Hinge => Err(KmlpError::invalid(format!(
                "hinge output needs a binary task, got {n_classes} classes"
            ))),
            OutputLoss::CrossEntropy => Ok(n_classes.max(2)),
        }
    }
}

/// What a layer is trained to minimize, apart from the norm penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Dissimilarity between the next kernel's Gram matrix of this layer's
    /// outputs and the ideal kernel matrix built with that kernel's `(a, c)`.
    Hidden { next_kernel: KernelSpec, metric: Metric },
    Output { loss: OutputLoss },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub alpha: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Mean hinge loss `max(0, 1 - y s)` for labels `y` in `{+1, -1}`.
pub fn hinge_risk(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(KmlpError::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, y)| (1.0 - y * s).max(0.0))
        .sum();
    Ok(total / scores.len() as f64)
}

/// Mean negative log-softmax of the true class.
pub fn cross_entropy_risk(logits: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_ce(logits, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            lse - row[y]
        })
        .sum();
    Ok(total / labels.len() as f64)
}

fn check_ce(logits: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if logits.ncols() < 2 {
        return Err(KmlpError::invalid("cross-entropy needs at least two outputs"));
    }
    if logits.nrows() != labels.len() {
        return Err(KmlpError::invalid(format!(
            "{} rows of logits but {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.ncols()) {
        return Err(KmlpError::invalid(format!(
            "label {bad} out of range for {} outputs",
            logits.ncols()
        )));
    }
    Ok(())
}

/// Class index to hinge sign: class 1 is `+1`, class 0 is `-1`.
pub fn binary_sign(label: usize) -> Result<f64> {
    match label {
        0 => Ok(-1.0),
        1 => Ok(1.0),
        other => Err(KmlpError::invalid(format!(
            "hinge loss expects binary labels, got class {other}"
        ))),
    }
}

/// Parameters plus the constant pieces needed to evaluate an objective.
pub(crate) struct Problem<'a> {
    pub objective: Objective,
    /// Gram block between the examples and the layer's centers.
    pub k: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    /// Gram matrix of the centers, required when `tau > 0`.
    pub center_gram: Option<&'a Array2<f64>>,
    pub tau: f64,
}

impl Problem<'_> {
    pub fn evaluate(
        &self,
        alpha: &Array2<f64>,
        bias: &Array1<f64>,
        want_grad: bool,
    ) -> Result<(f64, Option<Gradients>)> {
        if self.k.nrows() != self.labels.len() {
            return Err(KmlpError::invalid(format!(
                "{} examples but {} labels",
                self.k.nrows(),
                self.labels.len()
            )));
        }
        let mut z = self.k.dot(alpha);
        z += &bias.view().insert_axis(Axis(0));

        let (risk, dz) = match self.objective {
            Objective::Hidden {
                next_kernel,
                metric,
            } => hidden_risk(&z, self.labels, &next_kernel, metric, want_grad)?,
            Objective::Output { loss } => output_risk(&z, self.labels, loss, want_grad)?,
        };

        let mut value = risk;
        let mut grads = dz.map(|dz| Gradients {
            alpha: self.k.t().dot(&dz),
            bias: dz.sum_axis(Axis(0)),
        });

        if self.tau > 0.0 {
            let gcc = self.center_gram.ok_or_else(|| {
                KmlpError::InvalidState("norm penalty needs the center gram matrix".into())
            })?;
            let norms = rkhs_norms_with(alpha, gcc);
            let (jmax, nmax) = argmax_lowest(&norms);
            value += self.tau * nmax;
            if let Some(g) = grads.as_mut() {
                // d|w_j|/d alpha_j = G_cc alpha_j / |w_j|; zero at the origin.
                if nmax > 0.0 {
                    let ga = gcc.dot(&alpha.column(jmax));
                    let mut col = g.alpha.column_mut(jmax);
                    col.scaled_add(self.tau / nmax, &ga);
                }
            }
        }
        Ok((value, grads))
    }
}

/// Index and value of the largest entry; ties go to the lowest index.
pub(crate) fn argmax_lowest(v: &Array1<f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (j, x);
        }
    }
    best
}

fn hidden_risk(
    z: &Array2<f64>,
    labels: &[usize],
    next_kernel: &KernelSpec,
    metric: Metric,
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>)> {
    let g = next_kernel.gram(z.view(), z.view())?.values;
    let target = IdealGram::new(labels, next_kernel.a, next_kernel.c)?;
    let (value, dg) = dissimilarity_grad(g.view(), target.values.view(), metric);
    if !want_grad {
        return Ok((value, None));
    }
    // G_mn depends on z_m through |z_m - z_n|^2, so
    // dD/dz_m = sum_n 2 (dG_mn + dG_nm) k'(d2_mn) (z_m - z_n).
    let mut w = &dg + &dg.t();
    Zip::from(&mut w)
        .and(&g)
        .for_each(|w, &gv| *w *= 2.0 * next_kernel.dk_dsq_dist(gv));
    let row_sums = w.sum_axis(Axis(1));
    let mut dz = z * &row_sums.insert_axis(Axis(1));
    dz -= &w.dot(z);
    Ok((value, Some(dz)))
}

fn output_risk(
    z: &Array2<f64>,
    labels: &[usize],
    loss: OutputLoss,
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>)> {
    let n = labels.len();
    match loss {
        OutputLoss::Hinge => {
            if z.ncols() != 1 {
                return Err(KmlpError::invalid(format!(
                    "hinge output layer must have width 1, got {}",
                    z.ncols()
                )));
            }
            let signs = labels
                .iter()
                .map(|&y| binary_sign(y))
                .collect::<Result<Vec<_>>>()?;
            let scores: Vec<f64> = z.column(0).to_vec();
            let value = hinge_risk(&scores, &signs)?;
            let dz = want_grad.then(|| {
                Array2::from_shape_fn((n, 1), |(i, _)| {
                    // exactly on the margin counts as satisfied
                    if 1.0 - signs[i] * scores[i] > 0.0 {
                        -signs[i] / n as f64
                    } else {
                        0.0
                    }
                })
            });
            Ok((value, dz))
        }
        OutputLoss::CrossEntropy => {
            let value = cross_entropy_risk(z.view(), labels)?;
            let dz = want_grad.then(|| {
                let mut p = z.clone();
                for (mut row, &y) in p.axis_iter_mut(Axis(0)).zip(labels) {
                    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - max).exp());
                    let s = row.sum();
                    row /= s;
                    row[y] -= 1.0;
                }
                p / n as f64
            });
            Ok((value, dz))
        }
    }
}

fn problem<'a>(
    objective: Objective,
    k: &'a Array2<f64>,
    labels: &'a [usize],
    gcc: Option<&'a Array2<f64>>,
    tau: f64,
) -> Problem<'a> {
    Problem {
        objective,
        k: k.view(),
        labels,
        center_gram: gcc,
        tau,
    }
}

fn center_gram_if(layer: &KernelLayer, tau: f64) -> Result<Option<Array2<f64>>> {
    if tau > 0.0 {
        Ok(Some(
            layer
                .kernel
                .gram(layer.centers.view(), layer.centers.view())?
                .values,
        ))
    } else {
        Ok(None)
    }
}

/// Objective value of `layer` on `input`, including `tau` times the max RKHS norm.
pub fn objective_value(
    objective: Objective,
    layer: &KernelLayer,
    input: ArrayView2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<f64> {
    let k = layer.center_gram(input)?;
    let gcc = center_gram_if(layer, tau)?;
    let p = problem(objective, &k, labels, gcc.as_ref(), tau);
    Ok(p.evaluate(&layer.alpha, &layer.bias, false)?.0)
}

/// Analytic gradient of [`objective_value`] with respect to the layer's
/// coefficients and biases.
pub fn gradients(
    objective: Objective,
    layer: &KernelLayer,
    input: ArrayView2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<Gradients> {
    let k = layer.center_gram(input)?;
    let gcc = center_gram_if(layer, tau)?;
    let p = problem(objective, &k, labels, gcc.as_ref(), tau);
    let (_, g) = p.evaluate(&layer.alpha, &layer.bias, true)?;
    Ok(g.expect("gradient requested"))
}

pub fn hidden_objective(
    layer: &KernelLayer,
    input: ArrayView2<f64>,
    labels: &[usize],
    next_kernel: KernelSpec,
    metric: Metric,
    tau: f64,
) -> Result<f64> {
    objective_value(
        Objective::Hidden {
            next_kernel,
            metric,
        },
        layer,
        input,
        labels,
        tau,
    )
}

pub fn output_objective(
    layer: &KernelLayer,
    input: ArrayView2<f64>,
    labels: &[usize],
    loss: OutputLoss,
    tau: f64,
) -> Result<f64> {
    objective_value(Objective::Output { loss }, layer, input, labels, tau)
}
