//! Kernel multilayer perceptrons: networks whose units are kernel machines,
//! trained one layer at a time against ideal kernel matrices.

pub mod analysis;
pub mod data;
pub mod error;
pub mod kernel;
pub mod model;
pub mod network;
pub mod seed;
pub mod targets;
pub mod training;

pub use data::{LabeledDataset, SplitTag};
pub use error::{KmlpError, Result};
pub use kernel::{GramMatrix, KernelKind, KernelSpec};
pub use network::{KernelLayer, KernelNetwork, Representation};
pub use targets::{IdealGram, Metric};
pub use training::{
    LayerData, LayerInit, LayerSpec, NetSpec, Objective, OutputLoss, TrainConfig, TrainReport,
};
