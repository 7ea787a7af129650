//! Kernel layers and their composition into a kernel MLP.
//!
//! A layer holds `M` centers (the already-mapped representations of retained
//! training examples), an `M x d_out` coefficient matrix and a bias vector.
//! Output `j` on input `x` is `sum_m alpha[m, j] k(x, center_m) + bias[j]`.

use std::collections::HashSet;

use nalgebra::{Cholesky, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KmlpError, Result};
use crate::kernel::{to_nalgebra, KernelSpec};
use crate::targets::Metric;

/// Rows are examples, columns are the features of one layer's output.
pub type Representation = Array2<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelLayer {
    pub centers: Array2<f64>,
    pub alpha: Array2<f64>,
    pub bias: Array1<f64>,
    pub kernel: KernelSpec,
    /// Dissimilarity the layer was trained against, if it is a hidden layer.
    pub metric: Option<Metric>,
}

/// Shape of a layer before its centers are known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerTemplate {
    pub kernel: KernelSpec,
    pub width: usize,
}

impl KernelLayer {
    pub fn new(
        kernel: KernelSpec,
        centers: Array2<f64>,
        alpha: Array2<f64>,
        bias: Array1<f64>,
    ) -> Result<Self> {
        let layer = KernelLayer {
            centers,
            alpha,
            bias,
            kernel,
            metric: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Coefficients drawn from `U(-1/sqrt(M), 1/sqrt(M))`, zero bias.
    pub fn random_init<R: Rng>(
        kernel: KernelSpec,
        centers: Array2<f64>,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let m = centers.nrows();
        if m == 0 {
            return Err(KmlpError::invalid("a layer needs at least one center"));
        }
        let bound = 1.0 / (m as f64).sqrt();
        let alpha = Array2::from_shape_simple_fn((m, width), || rng.random_range(-bound..bound));
        Self::new(kernel, centers, alpha, Array1::zeros(width))
    }

    /// Layer that reproduces `input` on its own rows.
    ///
    /// Solves `(G + ridge I) alpha = input` with `G` the Gram matrix of
    /// `input`, so that `forward(input) ~ input`. Returns the layer and the
    /// max-abs reconstruction residual.
    pub fn identity_init(
        kernel: KernelSpec,
        input: ArrayView2<f64>,
        ridge: f64,
    ) -> Result<(Self, f64)> {
        if input.nrows() == 0 {
            return Err(KmlpError::invalid("identity init needs at least one row"));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(KmlpError::invalid(format!("ridge must be nonnegative, got {ridge}")));
        }
        if has_duplicate_rows(input) {
            if ridge == 0.0 {
                return Err(KmlpError::Singular {
                    context: "identity init on input with duplicate rows".into(),
                    condition: f64::INFINITY,
                });
            }
            log::warn!("identity init: input has duplicate rows, relying on ridge {ridge}");
        }
        let n = input.nrows();
        let g = kernel.gram(input, input)?.values;
        let mut system = to_nalgebra(&g);
        for i in 0..n {
            system[(i, i)] += ridge;
        }
        let rhs = to_nalgebra(&input.to_owned());
        let chol = Cholesky::new(system.clone()).ok_or_else(|| KmlpError::Singular {
            context: "identity init: gram matrix not positive definite".into(),
            condition: condition_estimate(&system),
        })?;
        let sol = chol.solve(&rhs);
        let alpha = Array2::from_shape_fn((n, input.ncols()), |(i, j)| sol[(i, j)]);
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(KmlpError::Singular {
                context: "identity init produced non-finite coefficients".into(),
                condition: condition_estimate(&system),
            });
        }
        let layer = Self::new(kernel, input.to_owned(), alpha, Array1::zeros(input.ncols()))?;
        let out = layer.forward(input)?;
        let residual = (&out - &input)
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        Ok((layer, residual))
    }

    /// `1e-8 * trace(G) / N`, the jitter used when no ridge is given.
    pub fn default_ridge(kernel: &KernelSpec) -> f64 {
        1e-8 * kernel.c
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let m = self.centers.nrows();
        if m == 0 {
            return Err(KmlpError::invalid("a layer needs at least one center"));
        }
        if self.alpha.nrows() != m {
            return Err(KmlpError::invalid(format!(
                "coefficient matrix has {} rows for {m} centers",
                self.alpha.nrows()
            )));
        }
        if self.alpha.ncols() != self.bias.len() {
            return Err(KmlpError::invalid(format!(
                "coefficient matrix has {} columns but bias has {} entries",
                self.alpha.ncols(),
                self.bias.len()
            )));
        }
        if !self.is_finite() {
            return Err(KmlpError::invalid("layer parameters contain non-finite values"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
            && self.centers.iter().all(|v| v.is_finite())
    }

    pub fn in_width(&self) -> usize {
        self.centers.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.bias.len()
    }

    pub fn n_centers(&self) -> usize {
        self.centers.nrows()
    }

    /// Gram matrix between `input` rows and this layer's centers.
    pub fn center_gram(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.in_width() {
            return Err(KmlpError::invalid(format!(
                "layer expects inputs of width {}, got {}",
                self.in_width(),
                input.ncols()
            )));
        }
        Ok(self.kernel.gram(input, self.centers.view())?.values)
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Representation> {
        let k = self.center_gram(input)?;
        Ok(self.forward_from_gram(k.view()))
    }

    /// `K alpha + 1 b^T` for a precomputed input-center Gram block `K`.
    pub fn forward_from_gram(&self, k: ArrayView2<f64>) -> Representation {
        let mut out = k.dot(&self.alpha);
        out += &self.bias.view().insert_axis(Axis(0));
        out
    }

    /// RKHS norm of every output's weight vector, `sqrt(alpha_j' G_cc alpha_j)`.
    pub fn rkhs_norms(&self) -> Array1<f64> {
        let gcc = self
            .kernel
            .gram(self.centers.view(), self.centers.view())
            .expect("centers share one width")
            .values;
        rkhs_norms_with(&self.alpha, &gcc)
    }

    /// Largest l1 norm over the coefficient columns.
    pub fn max_alpha_l1(&self) -> f64 {
        self.alpha
            .axis_iter(Axis(1))
            .map(|col| col.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn rkhs_norms_with(alpha: &Array2<f64>, gcc: &Array2<f64>) -> Array1<f64> {
    let ga = gcc.dot(alpha);
    Array1::from_iter(
        alpha
            .axis_iter(Axis(1))
            .zip(ga.axis_iter(Axis(1)))
            .map(|(a, g)| a.dot(&g).max(0.0).sqrt()),
    )
}

fn has_duplicate_rows(x: ArrayView2<f64>) -> bool {
    let mut seen = HashSet::with_capacity(x.nrows());
    x.rows()
        .into_iter()
        .any(|row| !seen.insert(row.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<_>>()))
}

fn condition_estimate(m: &nalgebra::DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Indices of the rows kept as centers, in their original order.
///
/// Draws `ceil(fraction * N)` rows uniformly without replacement, redrawing
/// until every class present in `labels` is represented.
pub fn subsample_centers(
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = labels.len();
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(KmlpError::invalid(format!(
            "center fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if n == 0 {
        return Err(KmlpError::invalid("cannot subsample an empty representation"));
    }
    let classes: HashSet<usize> = labels.iter().copied().collect();
    let keep = ((fraction * n as f64).ceil() as usize).min(n);
    if keep < classes.len() {
        return Err(KmlpError::invalid(format!(
            "keeping {keep} of {n} centers cannot cover {} classes",
            classes.len()
        )));
    }
    if keep == n {
        return Ok((0..n).collect());
    }
    const MAX_DRAWS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS {
        let mut idx = index::sample(&mut rng, n, keep).into_vec();
        let covered: HashSet<usize> = idx.iter().map(|&i| labels[i]).collect();
        if covered.len() == classes.len() {
            idx.sort_unstable();
            return Ok(idx);
        }
    }
    Err(KmlpError::invalid(format!(
        "no class-covering draw of {keep} centers found in {MAX_DRAWS} attempts"
    )))
}

/// Untrained layer whose centers are a class-covering random subset of `input`.
pub fn subsample_layer(
    template: &LayerTemplate,
    input: ArrayView2<f64>,
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<KernelLayer> {
    if input.nrows() != labels.len() {
        return Err(KmlpError::invalid(format!(
            "{} rows but {} labels",
            input.nrows(),
            labels.len()
        )));
    }
    let idx = subsample_centers(labels, fraction, seed)?;
    let centers = input.select(Axis(0), &idx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    KernelLayer::random_init(template.kernel, centers, template.width, &mut rng)
}

/// Layers applied in order; `frozen_upto` counts the leading trained layers.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelNetwork {
    pub layers: Vec<KernelLayer>,
    pub frozen_upto: usize,
}

impl KernelNetwork {
    pub fn new(layers: Vec<KernelLayer>) -> Result<Self> {
        let net = KernelNetwork {
            layers,
            frozen_upto: 0,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(KmlpError::invalid(format!(
                    "layer {} outputs width {} but layer {} expects {}",
                    i + 1,
                    pair[0].out_width(),
                    i + 2,
                    pair[1].in_width()
                )));
            }
        }
        if self.frozen_upto > self.layers.len() {
            return Err(KmlpError::invalid("frozen_upto exceeds the number of layers"));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> Option<usize> {
        self.layers.first().map(KernelLayer::in_width)
    }

    pub fn output_width(&self) -> Option<usize> {
        self.layers.last().map(KernelLayer::out_width)
    }

    /// Representation after the first `upto` layers; `upto = 0` is the input.
    pub fn forward(&self, x: ArrayView2<f64>, upto: usize) -> Result<Representation> {
        if upto > self.layers.len() {
            return Err(KmlpError::invalid(format!(
                "cannot forward through {upto} layers of a {}-layer network",
                self.layers.len()
            )));
        }
        let mut rep = x.to_owned();
        for layer in &self.layers[..upto] {
            rep = layer.forward(rep.view())?;
        }
        Ok(rep)
    }
}
