//! Model files: pretty-printed JSON tagged `"format": "KMLP1"`.
//!
//! Matrices are stored as row lists. Floats are written in shortest
//! round-trip form, so save followed by load reproduces every bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{KmlpError, Result};
use crate::kernel::KernelSpec;
use crate::network::{KernelLayer, KernelNetwork};
use crate::targets::Metric;

pub const FORMAT_TAG: &str = "KMLP1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    frozen_upto: usize,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    kernel: KernelSpec,
    in_width: usize,
    out_width: usize,
    metric: Option<Metric>,
    centers: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>, width: usize, what: &str, layer: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(KmlpError::format(
            format!("layers[{layer}].{what}[{bad}]"),
            format!("row has {} entries, expected {width}", rows[bad].len()),
        ));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, width), flat).expect("row lengths checked"))
}

pub fn to_json(net: &KernelNetwork) -> Result<String> {
    net.validate()?;
    if net.layers.iter().any(|l| !l.is_finite()) {
        return Err(KmlpError::invalid("cannot save a network with non-finite parameters"));
    }
    let file = ModelFile {
        format: FORMAT_TAG.to_string(),
        frozen_upto: net.frozen_upto,
        layers: net
            .layers
            .iter()
            .map(|l| LayerRecord {
                kernel: l.kernel,
                in_width: l.in_width(),
                out_width: l.out_width(),
                metric: l.metric,
                centers: rows(&l.centers),
                alpha: rows(&l.alpha),
                bias: l.bias.to_vec(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model structs serialize");
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str, source: &str) -> Result<KernelNetwork> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        KmlpError::format(format!("{source} line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    if file.format != FORMAT_TAG {
        return Err(KmlpError::format(
            format!("{source} format"),
            format!("unsupported format tag `{}`, expected `{FORMAT_TAG}`", file.format),
        ));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, rec) in file.layers.into_iter().enumerate() {
        let centers = matrix(rec.centers, rec.in_width, "centers", i)?;
        let alpha = matrix(rec.alpha, rec.out_width, "alpha", i)?;
        let mut layer = KernelLayer::new(rec.kernel, centers, alpha, Array1::from(rec.bias))
            .map_err(|e| KmlpError::format(format!("{source} layers[{i}]"), e.to_string()))?;
        layer.metric = rec.metric;
        layers.push(layer);
    }
    let net = KernelNetwork {
        layers,
        frozen_upto: file.frozen_upto,
    };
    net.validate()
        .map_err(|e| KmlpError::format(source.to_string(), e.to_string()))?;
    Ok(net)
}

pub fn save_model(net: &KernelNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_json(net)?;
    std::fs::write(path, text).map_err(|e| KmlpError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<KernelNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| KmlpError::io(path, e))?;
    from_json(&text, &path.display().to_string())
}
