//! Synthetic benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::error::{KmlpError, Result};

/// Axis-aligned rectangle outline; `x` and `w` run along image columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rectangle {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rectangle {
    pub fn label(&self) -> usize {
        usize::from(self.w > self.h)
    }
}

/// `side x side` image, row-major, with the 1-pixel outline of `r` at 1.0.
pub fn rectangle_image(side: usize, r: &Rectangle) -> Vec<f64> {
    let mut img = vec![0.0; side * side];
    for c in r.x..r.x + r.w {
        img[r.y * side + c] = 1.0;
        img[(r.y + r.h - 1) * side + c] = 1.0;
    }
    for row in r.y..r.y + r.h {
        img[row * side + r.x] = 1.0;
        img[row * side + r.x + r.w - 1] = 1.0;
    }
    img
}

fn sample_rectangle<R: Rng>(rng: &mut R, side: usize) -> Rectangle {
    let (w, h) = loop {
        let w = rng.random_range(3..=side - 2);
        let h = rng.random_range(3..=side - 2);
        if w != h {
            break (w, h);
        }
    };
    Rectangle {
        x: rng.random_range(0..=side - w),
        y: rng.random_range(0..=side - h),
        w,
        h,
    }
}

/// Images of one rectangle outline each; label 1 when wider than tall.
pub fn gen_rectangles(n: usize, side: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(KmlpError::invalid("gen_rectangles needs n >= 1"));
    }
    if side < 6 {
        return Err(KmlpError::invalid(format!("image side {side} is below 6")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, side * side));
    let mut labels = Vec::with_capacity(n);
    for mut row in features.rows_mut() {
        let r = sample_rectangle(&mut rng, side);
        for (dst, v) in row.iter_mut().zip(rectangle_image(side, &r)) {
            *dst = v;
        }
        labels.push(r.label());
    }
    let mut ds = LabeledDataset::new(features, labels)?;
    ds.n_classes = 2;
    Ok(ds)
}

/// Two unit-variance Gaussian clusters centered at `-/+ separation/2` on the
/// first axis. Rows alternate between class 0 and class 1.
pub fn gen_blobs(n: usize, d: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(KmlpError::invalid(format!("gen_blobs needs a positive even n, got {n}")));
    }
    if d == 0 {
        return Err(KmlpError::invalid("gen_blobs needs d >= 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(KmlpError::invalid("separation must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, d));
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let shift = separation / 2.0;
        row[0] += if labels[i] == 1 { shift } else { -shift };
    }
    let mut ds = LabeledDataset::new(features, labels)?;
    ds.n_classes = 2;
    Ok(ds)
}
