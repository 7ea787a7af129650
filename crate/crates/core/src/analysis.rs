//! Read-only diagnostics: capacity and generalization bounds, error
//! propagation between layers, and how close a representation is to ideal.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{KmlpError, Result};
use crate::network::KernelNetwork;
use crate::targets::{between_class_fraction, class_balance, dissimilarity, IdealGram, Metric};

/// Gaussian complexity bound `2 A sqrt(c / N)` of one layer's function class.
pub fn complexity_bound_layer(a_norm: f64, c: f64, n: usize) -> f64 {
    2.0 * a_norm * (c / n as f64).sqrt()
}

/// `d_1 * prod_{i >= 2} (A_i L_i d_i) * base`.
///
/// `a_l1[i]` bounds the l1 norm of layer `i`'s coefficient vectors and
/// `lipschitz[i]` is its kernel's Lipschitz constant; entries for the first
/// layer are ignored. `base` is the complexity of the first layer's class,
/// which has no closed form, so the result is a relative figure.
pub fn complexity_bound_network(
    a_l1: &[f64],
    lipschitz: &[f64],
    widths: &[usize],
    base: f64,
) -> Result<f64> {
    let l = widths.len();
    if l == 0 || a_l1.len() != l || lipschitz.len() != l {
        return Err(KmlpError::invalid(format!(
            "per-layer lists must be aligned and non-empty ({} norms, {} constants, {} widths)",
            a_l1.len(),
            lipschitz.len(),
            l
        )));
    }
    let mut bound = widths[0] as f64 * base;
    for i in 1..l {
        bound *= a_l1[i] * lipschitz[i] * widths[i] as f64;
    }
    Ok(bound)
}

/// Network bound from trained layers: `A_i` is the largest coefficient l1
/// norm, `L_i` the kernel's Lipschitz constant, `d_i` the output width.
pub fn network_complexity(net: &KernelNetwork, base: f64) -> Result<f64> {
    let a: Vec<f64> = net.layers.iter().map(|l| l.max_alpha_l1()).collect();
    let lip: Vec<f64> = net.layers.iter().map(|l| l.kernel.lipschitz()).collect();
    let d: Vec<usize> = net.layers.iter().map(|l| l.out_width()).collect();
    complexity_bound_network(&a, &lip, &d, base)
}

/// Upper bound on the misclassification probability at margin 1: empirical
/// hinge risk plus `2 * complexity + 9 sqrt(log(4 / delta) / 2N)`.
pub fn generalization_bound(empirical_hinge: f64, a_norm: f64, c: f64, n: usize, delta: f64) -> f64 {
    let tail = ((4.0 / delta).ln() / (2.0 * n as f64)).sqrt();
    empirical_hinge + 2.0 * complexity_bound_layer(a_norm, c, n) + 9.0 * tail
}

/// Layer `i`'s error when its input carries layer `i-1`'s error:
/// `eps_i + sqrt(eps_prev) * sqrt(2 L sum_j norms_j^2)`.
pub fn propagation_bound(eps_i: f64, eps_prev: f64, lipschitz: f64, norms: &[f64]) -> f64 {
    let sq: f64 = norms.iter().map(|w| w * w).sum();
    eps_i + eps_prev.sqrt() * (2.0 * lipschitz * sq).sqrt()
}

/// Largest norm penalty for which the ideal representation stays optimal for
/// a binary output layer: `sqrt(2(c - a)) min(kappa, 1 - kappa)`, with kappa
/// the fraction of class-1 labels.
pub fn tau_bound_output(labels: &[usize], c: f64, a: f64) -> f64 {
    let kappa = class_balance(labels, 1);
    (2.0 * (c - a)).sqrt() * kappa.min(1.0 - kappa)
}

/// Norm penalty range for hidden layers: `sqrt(2 d (c - a)) psi iota`, with
/// psi the fraction of between-class ordered pairs and `iota` the caller's
/// lower bound on the kernel's slope in distance.
pub fn tau_bound_hidden(labels: &[usize], c: f64, a: f64, d: usize, iota: f64) -> f64 {
    (2.0 * d as f64 * (c - a)).sqrt() * between_class_fraction(labels) * iota
}

/// Dissimilarity of one representation under each metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissimilarities {
    pub l1: f64,
    pub l2: f64,
    pub alignment: f64,
}

impl Dissimilarities {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::L1 => self.l1,
            Metric::L2 => self.l2,
            Metric::Alignment => self.alignment,
        }
    }
}

/// Quality of representation `S_i` as seen by the kernel of layer `i + 1`.
///
/// Kernel statistics run over ordered pairs of distinct rows; they are NaN
/// when no such pair exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    /// Representation index: 0 is the raw input, `i` is layer `i`'s output.
    pub representation: usize,
    pub n: usize,
    pub dissimilarity_to_ideal: Dissimilarities,
    pub within_class_kernel_mean: f64,
    pub within_class_kernel_min: f64,
    pub between_class_kernel_mean: f64,
    pub between_class_kernel_max: f64,
    /// Largest RKHS norm among layer `i + 1`'s outputs.
    pub max_rkhs_norm: f64,
    /// `2 A sqrt(c / n)` for layer `i + 1`.
    pub complexity_bound: f64,
    /// Lipschitz constant of layer `i + 1`'s kernel.
    pub lipschitz: f64,
}

/// Diagnostics for representation `index` (0 = input) of `x`.
///
/// Valid indices are `0..depth`: the last layer's output has no kernel after
/// it to judge it with.
pub fn representation_report(
    net: &KernelNetwork,
    x: ArrayView2<f64>,
    labels: &[usize],
    index: usize,
) -> Result<LayerDiagnostics> {
    if index >= net.depth() {
        return Err(KmlpError::invalid(format!(
            "representation {index} out of range for a {}-layer network (valid 0..{})",
            net.depth(),
            net.depth()
        )));
    }
    if x.nrows() != labels.len() || labels.is_empty() {
        return Err(KmlpError::invalid(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let rep = net.forward(x, index)?;
    let layer = &net.layers[index];
    let kernel = layer.kernel;
    let g = kernel.gram(rep.view(), rep.view())?;
    let target = IdealGram::new(labels, kernel.a, kernel.c)?;
    let dissimilarity_to_ideal = Dissimilarities {
        l1: dissimilarity(&g, &target, Metric::L1)?,
        l2: dissimilarity(&g, &target, Metric::L2)?,
        alignment: dissimilarity(&g, &target, Metric::Alignment)?,
    };

    let n = labels.len();
    let (mut w_sum, mut w_n, mut w_min) = (0.0, 0usize, f64::INFINITY);
    let (mut b_sum, mut b_n, mut b_max) = (0.0, 0usize, f64::NEG_INFINITY);
    for m in 0..n {
        for k in 0..n {
            if m == k {
                continue;
            }
            let v = g.values[[m, k]];
            if labels[m] == labels[k] {
                w_sum += v;
                w_n += 1;
                w_min = w_min.min(v);
            } else {
                b_sum += v;
                b_n += 1;
                b_max = b_max.max(v);
            }
        }
    }
    let mean = |s: f64, c: usize| if c == 0 { f64::NAN } else { s / c as f64 };
    let max_rkhs_norm = layer.rkhs_norms().iter().copied().fold(0.0, f64::max);
    Ok(LayerDiagnostics {
        representation: index,
        n,
        dissimilarity_to_ideal,
        within_class_kernel_mean: mean(w_sum, w_n),
        within_class_kernel_min: if w_n == 0 { f64::NAN } else { w_min },
        between_class_kernel_mean: mean(b_sum, b_n),
        between_class_kernel_max: if b_n == 0 { f64::NAN } else { b_max },
        max_rkhs_norm,
        complexity_bound: complexity_bound_layer(max_rkhs_norm, kernel.c, n),
        lipschitz: kernel.lipschitz(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::network::KernelLayer;
    use approx::assert_relative_eq;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;

    #[test]
    fn layer_complexity() {
        assert_eq!(complexity_bound_layer(1.0, 1.0, 100), 0.2);
        assert_eq!(complexity_bound_layer(0.0, 1.0, 100), 0.0);
        assert_relative_eq!(
            complexity_bound_layer(1.7, 1.0, 400),
            complexity_bound_layer(1.7, 1.0, 100) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn network_complexity_examples() {
        let b = complexity_bound_network(&[9.0, 2.0], &[9.0, 0.5], &[3, 1], 1.0).unwrap();
        assert_eq!(b, 3.0);
        let z = complexity_bound_network(&[1.0, 0.0, 2.0], &[1.0, 1.0, 1.0], &[2, 2, 2], 1.0);
        assert_eq!(z.unwrap(), 0.0);
        let one = complexity_bound_network(&[1.0, 2.0], &[1.0, 0.5], &[3, 1], 0.7).unwrap();
        let two = complexity_bound_network(&[1.0, 2.0], &[1.0, 0.5], &[6, 1], 0.7).unwrap();
        assert_relative_eq!(two, 2.0 * one);
        assert!(complexity_bound_network(&[1.0], &[1.0, 1.0], &[1, 1], 1.0).is_err());
        // two layers: A L d_1 base
        let (a, l, d1, base) = (1.3, 0.4, 5usize, 0.9);
        let b = complexity_bound_network(&[0.0, a], &[0.0, l], &[d1, 1], base).unwrap();
        assert_relative_eq!(b, a * l * d1 as f64 * base, epsilon = 1e-15);
    }

    #[test]
    fn generalization_example() {
        // 0.04 + 9 sqrt(ln 80 / 20000), recomputed outside the crate
        let b = generalization_bound(0.0, 1.0, 1.0, 10000, 0.05);
        assert!((b - 0.17321864685707186).abs() < 1e-9);
        assert!(generalization_bound(0.0, 1.0, 1.0, 100, 0.01) > generalization_bound(0.0, 1.0, 1.0, 100, 0.1));
        let huge = generalization_bound(0.3, 1.0, 1.0, usize::MAX / 2, 0.05);
        assert!((huge - 0.3).abs() < 1e-8);
    }

    #[test]
    fn propagation_examples() {
        assert_eq!(propagation_bound(0.3, 0.0, 0.5, &[1.0, 2.0]), 0.3);
        assert_eq!(propagation_bound(0.3, 0.2, 0.5, &[0.0, 0.0]), 0.3);
        let b = propagation_bound(0.1, 0.04, 0.5, &[1.0, 1.0]);
        assert!((b - 0.3828427124746191).abs() < 1e-9);
    }

    #[test]
    fn tau_bounds() {
        assert_relative_eq!(tau_bound_output(&[0, 1, 1, 0], 1.0, 0.0), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_eq!(tau_bound_output(&[1, 1, 1], 1.0, 0.0), 0.0);
        assert_relative_eq!(
            tau_bound_hidden(&[1, 0], 1.0, 0.0, 4, 0.1),
            0.14142135623730953,
            epsilon = 1e-12
        );
    }

    proptest! {
        #[test]
        fn bounds_nonnegative_and_monotone(
            a in 0.0f64..10.0, c in 0.0f64..4.0, n in 1usize..100_000,
            r in 0.0f64..1.0, delta in 0.001f64..0.999,
            eps in 0.0f64..1.0, prev in 0.0f64..1.0, lip in 0.0f64..3.0,
            norms in prop::collection::vec(0.0f64..5.0, 0..6),
        ) {
            let cb = complexity_bound_layer(a, c, n);
            prop_assert!(cb >= 0.0);
            prop_assert!(complexity_bound_layer(a * 2.0, c, n) >= cb);
            prop_assert!(complexity_bound_layer(a, c, n + 1) <= cb);
            let g = generalization_bound(r, a, c, n, delta);
            prop_assert!(g >= r);
            prop_assert!(generalization_bound(r, a, c, n, delta / 2.0) >= g);
            let p = propagation_bound(eps, prev, lip, &norms);
            prop_assert!(p >= eps);
            prop_assert!(propagation_bound(eps, prev + 0.1, lip, &norms) >= p);
        }
    }

    fn layer(kernel: KernelSpec, centers: Array2<f64>, width: usize) -> KernelLayer {
        let m = centers.nrows();
        let alpha = Array2::from_shape_fn((m, width), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        KernelLayer::new(kernel, centers, alpha, Array1::zeros(width)).unwrap()
    }

    #[test]
    fn ideal_representation_statistics() {
        // one point per class, far apart: the Gram is G* up to exp(-36)
        let x = array![[0.0, 0.0], [0.0, 0.0], [6.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        let labels = [0, 0, 1, 1, 2];
        let k = KernelSpec::gaussian(1.0).unwrap();
        let net = KernelNetwork::new(vec![layer(k, x.clone(), 3)]).unwrap();
        let d = representation_report(&net, x.view(), &labels, 0).unwrap();
        assert!(d.dissimilarity_to_ideal.l1 < 1e-12);
        assert!(d.dissimilarity_to_ideal.l2 < 1e-12);
        assert!(d.dissimilarity_to_ideal.alignment < 1e-12);
        assert!((d.within_class_kernel_min - 1.0).abs() < 1e-12);
        assert!((d.within_class_kernel_mean - 1.0).abs() < 1e-12);
        assert!(d.between_class_kernel_max.abs() < 1e-12);
        assert_eq!(d.n, 5);
        assert_relative_eq!(d.lipschitz, 0.8577638849607069, epsilon = 1e-12);
        assert_relative_eq!(
            d.complexity_bound,
            complexity_bound_layer(d.max_rkhs_norm, 1.0, 5),
            epsilon = 1e-15
        );
        assert!(representation_report(&net, x.view(), &labels, 1).is_err());
    }

    #[test]
    fn random_layer_is_not_ideal() {
        let x = array![[0.0, 0.1], [0.3, -0.2], [1.0, 1.0], [0.9, 1.2]];
        let labels = [0, 0, 1, 1];
        let k = KernelSpec::gaussian(1.0).unwrap();
        let l1 = layer(k, x.clone(), 2);
        let l2 = layer(k, l1.forward(x.view()).unwrap(), 1);
        let net = KernelNetwork::new(vec![l1, l2]).unwrap();
        let d = representation_report(&net, x.view(), &labels, 1).unwrap();
        for m in Metric::ALL {
            assert!(d.dissimilarity_to_ideal.get(m) > 1e-12);
        }
    }
}
