//! Ideal kernel matrices and kernel-target dissimilarities.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{KmlpError, Result};
use crate::kernel::GramMatrix;

/// Target Gram matrix: `c` for same-class pairs, `a` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealGram {
    pub values: Array2<f64>,
    pub labels: Vec<usize>,
}

impl IdealGram {
    pub fn new(labels: &[usize], a: f64, c: f64) -> Result<Self> {
        if labels.is_empty() {
            return Err(KmlpError::invalid("ideal gram needs at least one label"));
        }
        if c.is_nan() || a.is_nan() || c <= a {
            return Err(KmlpError::invalid(format!(
                "ideal gram requires c > a, got c = {c}, a = {a}"
            )));
        }
        let n = labels.len();
        let values = Array2::from_shape_fn((n, n), |(m, k)| {
            if labels[m] == labels[k] {
                c
            } else {
                a
            }
        });
        Ok(IdealGram {
            values,
            labels: labels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn ideal_gram(labels: &[usize], a: f64, c: f64) -> Result<IdealGram> {
    IdealGram::new(labels, a, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L1,
    L2,
    Alignment,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L1, Metric::L2, Metric::Alignment];

    pub fn name(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::Alignment => "alignment",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = KmlpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            "alignment" => Ok(Metric::Alignment),
            other => Err(KmlpError::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// Dissimilarity between a symmetric Gram matrix and the ideal target.
///
/// `l1` and `l2` average over all `N^2` ordered pairs, diagonal included.
/// `alignment` is one minus the empirical kernel-target alignment.
pub fn dissimilarity(g: &GramMatrix, target: &IdealGram, metric: Metric) -> Result<f64> {
    check_sizes(g.values.view(), target)?;
    Ok(dissimilarity_raw(g.values.view(), target.values.view(), metric))
}

fn check_sizes(g: ArrayView2<f64>, target: &IdealGram) -> Result<()> {
    let n = target.len();
    if g.dim() != (n, n) {
        return Err(KmlpError::invalid(format!(
            "gram matrix is {}x{} but the target is {n}x{n}",
            g.nrows(),
            g.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn dissimilarity_raw(g: ArrayView2<f64>, t: ArrayView2<f64>, metric: Metric) -> f64 {
    let n2 = (g.len()) as f64;
    match metric {
        Metric::L1 => Zip::from(g).and(t).fold(0.0, |acc, &gv, &tv| acc + (tv - gv).abs()) / n2,
        Metric::L2 => {
            Zip::from(g).and(t).fold(0.0, |acc, &gv, &tv| acc + (tv - gv) * (tv - gv)) / n2
        }
        Metric::Alignment => {
            let (inner, gg, tt) = alignment_parts(g, t);
            let denom = (gg * tt).sqrt();
            if denom == 0.0 {
                1.0
            } else {
                // Rounding can push the ratio a hair past 1.
                (1.0 - inner / denom).max(0.0)
            }
        }
    }
}

fn alignment_parts(g: ArrayView2<f64>, t: ArrayView2<f64>) -> (f64, f64, f64) {
    Zip::from(g)
        .and(t)
        .fold((0.0, 0.0, 0.0), |(i, gg, tt), &gv, &tv| {
            (i + gv * tv, gg + gv * gv, tt + tv * tv)
        })
}

/// Value and gradient with respect to every entry of `g`.
///
/// Subgradient of `|r|` at `r = 0` is taken as 0.
pub(crate) fn dissimilarity_grad(
    g: ArrayView2<f64>,
    t: ArrayView2<f64>,
    metric: Metric,
) -> (f64, Array2<f64>) {
    let n2 = g.len() as f64;
    let value = dissimilarity_raw(g, t, metric);
    let grad = match metric {
        Metric::L1 => Zip::from(g).and(t).map_collect(|&gv, &tv| {
            let r = gv - tv;
            if r > 0.0 {
                1.0 / n2
            } else if r < 0.0 {
                -1.0 / n2
            } else {
                0.0
            }
        }),
        Metric::L2 => Zip::from(g).and(t).map_collect(|&gv, &tv| 2.0 * (gv - tv) / n2),
        Metric::Alignment => {
            let (inner, gg, tt) = alignment_parts(g, t);
            let gn = gg.sqrt();
            let tn = tt.sqrt();
            if gn == 0.0 || tn == 0.0 {
                Array2::zeros(g.dim())
            } else {
                let s = inner / (gn * gn * gn * tn);
                Zip::from(g)
                    .and(t)
                    .map_collect(|&gv, &tv| -tv / (gn * tn) + s * gv)
            }
        }
    };
    (value, grad)
}

/// Fraction of labels equal to `positive`.
pub fn class_balance(labels: &[usize], positive: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&y| y == positive).count() as f64 / labels.len() as f64
}

/// Fraction of ordered pairs `(m, n)` with different labels.
pub fn between_class_fraction(labels: &[usize]) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::new();
    for &y in labels {
        *counts.entry(y).or_insert(0usize) += 1;
    }
    let same: usize = counts.values().map(|&c| c * c).sum();
    (n * n - same) as f64 / (n * n) as f64
}
