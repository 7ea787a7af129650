//! Kernel functions and Gram matrices.
//!
//! Every kernel carries the constants the layer-wise theory relies on: the
//! diagonal value `c = k(x, x)`, the target floor `a` used for between-class
//! entries of the ideal kernel matrix, and an optional Lipschitz constant.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{KmlpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
}

/// A bounded, Lipschitz kernel together with its assumed constants.
///
/// For the Gaussian kernel `k(x, y) = exp(-|x - y|^2 / sigma^2)` the diagonal
/// is exactly `c = 1`. Its analytic infimum (0) is never attained, so `a` is a
/// configuration value in `[0, 1)` naming what between-class entries of the
/// target matrix should be.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: f64,
    pub a: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Distance beyond which the kernel is taken to sit at its floor `a`.
    /// Informational only; the Gaussian never reaches its floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl KernelSpec {
    /// Gaussian kernel with width `sigma`, `a = 0` and `c = 1`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let spec = KernelSpec {
            kind: KernelKind::Gaussian,
            sigma,
            a: 0.0,
            c: 1.0,
            lipschitz: None,
            eta: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Replace the target floor `a`.
    pub fn with_floor(mut self, a: f64) -> Result<Self> {
        self.a = a;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(KmlpError::invalid(format!(
                "kernel width must be positive and finite, got {}",
                self.sigma
            )));
        }
        if self.c.is_nan() || self.a.is_nan() || self.c <= self.a {
            return Err(KmlpError::invalid(format!(
                "kernel constants require c > a, got c = {}, a = {}",
                self.c, self.a
            )));
        }
        match self.kind {
            KernelKind::Gaussian => {
                if self.c != 1.0 {
                    return Err(KmlpError::invalid("gaussian kernel has c = 1"));
                }
                if !(0.0..1.0).contains(&self.a) {
                    return Err(KmlpError::invalid(format!(
                        "gaussian target floor must lie in [0, 1), got {}",
                        self.a
                    )));
                }
            }
        }
        if let Some(l) = self.lipschitz {
            if l.is_nan() || l < 0.0 {
                return Err(KmlpError::invalid("lipschitz constant must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Kernel value as a function of squared Euclidean distance.
    #[inline]
    pub fn from_sq_dist(&self, d2: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-d2.max(0.0) / (self.sigma * self.sigma)).exp().min(1.0),
        }
    }

    /// Derivative of the kernel value with respect to squared distance,
    /// expressed through the kernel value itself.
    #[inline]
    pub(crate) fn dk_dsq_dist(&self, k: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => -k / (self.sigma * self.sigma),
        }
    }

    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        if x.len() != y.len() {
            return Err(KmlpError::invalid(format!(
                "kernel arguments differ in dimension: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.from_sq_dist(d2))
    }

    /// Gram matrix between the rows of `x` and the rows of `z`.
    ///
    /// Uses `|x|^2 + |z|^2 - 2 x.z` on top of a blocked matrix product. When
    /// `x` and `z` hold the same content the result is flagged symmetric, its
    /// diagonal is set to exactly `c` and the lower triangle mirrors the upper.
    pub fn gram(&self, x: ArrayView2<f64>, z: ArrayView2<f64>) -> Result<GramMatrix> {
        if x.ncols() != z.ncols() {
            return Err(KmlpError::invalid(format!(
                "gram inputs differ in width: {} vs {}",
                x.ncols(),
                z.ncols()
            )));
        }
        let symmetric = x.shape() == z.shape() && (x.as_ptr() == z.as_ptr() || x == z);
        let xn = sq_norms(x);
        let zn = if symmetric { xn.clone() } else { sq_norms(z) };
        let mut values = x.dot(&z.t());
        for ((m, n), v) in values.indexed_iter_mut() {
            let d2 = xn[m] + zn[n] - 2.0 * *v;
            *v = self.from_sq_dist(d2).clamp(0.0, 1.0);
        }
        if symmetric {
            let n = values.nrows();
            for m in 0..n {
                values[[m, m]] = self.c;
                for k in (m + 1)..n {
                    values[[k, m]] = values[[m, k]];
                }
            }
        }
        Ok(GramMatrix { values, symmetric })
    }

    /// Supremum over distances `t >= 0` of the kernel's slope.
    ///
    /// For the Gaussian the slope is `2 t exp(-t^2 / sigma^2) / sigma^2`,
    /// maximized at `t = sigma / sqrt(2)`. The estimate is stored on `self`.
    pub fn lipschitz_estimate(&mut self) -> f64 {
        let l = match self.kind {
            KernelKind::Gaussian => {
                let s = self.sigma;
                let t = s / std::f64::consts::SQRT_2;
                2.0 * t * (-t * t / (s * s)).exp() / (s * s)
            }
        };
        self.lipschitz = Some(l);
        l
    }

    /// Lipschitz constant, estimating it if it has not been set.
    pub fn lipschitz(&self) -> f64 {
        match self.lipschitz {
            Some(l) => l,
            None => {
                let mut spec = *self;
                spec.lipschitz_estimate()
            }
        }
    }
}

fn sq_norms(x: ArrayView2<f64>) -> Array1<f64> {
    x.map_axis(Axis(1), |row| row.dot(&row))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Array2<f64>,
    pub symmetric: bool,
}

impl GramMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Smallest eigenvalue of a symmetric Gram matrix.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        if !self.symmetric {
            return Err(KmlpError::InvalidState(
                "eigenvalues requested for a non-symmetric gram matrix".into(),
            ));
        }
        let eig = SymmetricEigen::new(to_nalgebra(&self.values));
        Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// PSD within `-1e-8 * N`.
    pub fn is_psd(&self) -> Result<bool> {
        let tol = -1e-8 * self.nrows() as f64;
        Ok(self.min_eigenvalue()? >= tol)
    }
}

pub(crate) fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}
