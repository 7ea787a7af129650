//! Datasets: loaders, synthetic generators, normalization and splits.

mod idx;
mod synth;
mod table;

use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KmlpError, Result};

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx};
pub use synth::{gen_blobs, gen_rectangles, rectangle_image, Rectangle};
pub use table::{load_csv, write_csv, LabelColumn};

/// Relative data paths are resolved against this directory when it is set.
pub const DATA_DIR_ENV: &str = "KMLP_DATA_DIR";

pub fn resolve_data_path(path: impl AsRef<Path>) -> PathBuf {
    let path = path.as_ref();
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Validation, SplitTag::Test];
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// One tag per row; everything starts in the training split.
    pub tags: Vec<SplitTag>,
}

impl LabeledDataset {
    /// Class count is one past the largest label.
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(KmlpError::invalid(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(KmlpError::invalid("dataset has no rows"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(KmlpError::invalid("features contain non-finite values"));
        }
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        let tags = vec![SplitTag::Train; labels.len()];
        Ok(LabeledDataset {
            features,
            labels,
            n_classes,
            tags,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tags[i] == tag).collect()
    }

    pub fn count(&self, tag: SplitTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    /// Rows carrying `tag`, as a standalone dataset tagged train.
    pub fn part(&self, tag: SplitTag) -> LabeledDataset {
        self.select(&self.indices(tag))
    }

    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            tags: vec![SplitTag::Train; rows.len()],
        }
    }

    /// Stack datasets, keeping each one's tags.
    pub fn concat(parts: &[LabeledDataset]) -> Result<LabeledDataset> {
        let first = parts
            .first()
            .ok_or_else(|| KmlpError::invalid("nothing to concatenate"))?;
        if parts.iter().any(|p| p.dim() != first.dim()) {
            return Err(KmlpError::invalid("datasets differ in feature width"));
        }
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| KmlpError::invalid(e.to_string()))?;
        Ok(LabeledDataset {
            features,
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            n_classes: parts.iter().map(|p| p.n_classes).max().unwrap_or(0),
            tags: parts.iter().flat_map(|p| p.tags.iter().copied()).collect(),
        })
    }

    /// Retag `self` as one split.
    pub fn tagged(mut self, tag: SplitTag) -> Self {
        self.tags.iter_mut().for_each(|t| *t = tag);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tags.len() != self.len() || self.features.nrows() != self.len() {
            return Err(KmlpError::invalid("rows, labels and tags disagree in length"));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(KmlpError::invalid("features contain non-finite values"));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(KmlpError::invalid(format!(
                "label {bad} outside 0..{}",
                self.n_classes
            )));
        }
        let mut seen = vec![false; self.n_classes];
        for (y, t) in self.labels.iter().zip(&self.tags) {
            if *t == SplitTag::Train {
                seen[*y] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(KmlpError::invalid(format!(
                "class {missing} has no training rows"
            )));
        }
        Ok(())
    }

    /// Stratified assignment of rows to (train, validation, test).
    ///
    /// Per class, validation and test receive `round(n_c * f)` rows and
    /// training keeps the rest. Rows are drawn in a seeded random order.
    pub fn split(mut self, fractions: [f64; 3], seed: u64) -> Result<Self> {
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| f.is_nan() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(KmlpError::invalid(format!(
                "split fractions must be nonnegative and sum to 1, got {fractions:?}"
            )));
        }
        let used = fractions.iter().filter(|&&f| f > 0.0).count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for class in 0..self.n_classes {
            let mut rows: Vec<usize> = (0..self.len())
                .filter(|&i| self.labels[i] == class)
                .collect();
            if rows.is_empty() {
                continue;
            }
            if rows.len() < used {
                return Err(KmlpError::invalid(format!(
                    "class {class} has {} rows, fewer than the {used} requested splits",
                    rows.len()
                )));
            }
            rows.shuffle(&mut rng);
            let n = rows.len() as f64;
            let n_val = (n * fractions[1]).round() as usize;
            let n_test = (n * fractions[2]).round() as usize;
            if n_val + n_test > rows.len() || (fractions[0] > 0.0 && n_val + n_test == rows.len())
            {
                return Err(KmlpError::invalid(format!(
                    "class {class} is too small for split {fractions:?}"
                )));
            }
            for (k, &i) in rows.iter().enumerate() {
                self.tags[i] = if k < n_val {
                    SplitTag::Validation
                } else if k < n_val + n_test {
                    SplitTag::Test
                } else {
                    SplitTag::Train
                };
            }
        }
        Ok(self)
    }

    /// Min-max scale every column into [0, 1].
    ///
    /// Ranges come from the training rows; other rows are clipped. Constant
    /// columns map to 0.
    pub fn normalize(&mut self) -> Result<()> {
        let train = self.indices(SplitTag::Train);
        if train.is_empty() {
            return Err(KmlpError::invalid("normalization needs training rows"));
        }
        for mut col in self.features.axis_iter_mut(Axis(1)) {
            let (lo, hi) = train.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(col[i]), hi.max(col[i]))
            });
            let span = hi - lo;
            col.mapv_inplace(|v| {
                if span > 0.0 {
                    ((v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            });
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| KmlpError::io(path, e))
}
