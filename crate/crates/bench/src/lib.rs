//! Shared fixtures for the benchmarks in `benches/`.

use kmlp_core::data::gen_blobs;
use kmlp_core::network::KernelLayer;
use kmlp_core::{KernelSpec, LabeledDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two well separated clusters in `d` dimensions.
pub fn blobs(n: usize, d: usize) -> LabeledDataset {
    gen_blobs(n, d, 4.0, 17).expect("valid blob parameters")
}

/// Randomly initialized layer using every row of `ds` as a center.
pub fn layer(ds: &LabeledDataset, width: usize, sigma: f64) -> KernelLayer {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kernel = KernelSpec::gaussian(sigma).expect("positive sigma");
    KernelLayer::random_init(kernel, ds.features.clone(), width, &mut rng).expect("valid layer")
}
