//! Comma-separated files: one example per row, numeric features plus an
//! integer label column.

use std::path::Path;

use ndarray::Array2;

use super::LabeledDataset;
use crate::error::{KmlpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    First,
    #[default]
    Last,
    Index(usize),
}

impl LabelColumn {
    fn resolve(self, width: usize) -> Option<usize> {
        match self {
            LabelColumn::First => Some(0),
            LabelColumn::Last => width.checked_sub(1),
            LabelColumn::Index(i) if i < width => Some(i),
            LabelColumn::Index(_) => None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, label: LabelColumn, has_header: bool) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => KmlpError::io(path, io),
            other => KmlpError::format(path.display().to_string(), format!("{other:?}")),
        })?;
    let at = |line: u64| format!("{} line {line}", path.display());

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            KmlpError::format(at(line), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(KmlpError::format(
                at(line),
                format!("{} fields, expected {w}", record.len()),
            ));
        }
        let col = label
            .resolve(w)
            .filter(|_| w >= 2)
            .ok_or_else(|| KmlpError::format(at(line), "no room for a label column"))?;
        for (j, field) in record.iter().enumerate() {
            if j == col {
                let y = field.parse::<usize>().map_err(|_| {
                    KmlpError::format(at(line), format!("label `{field}` is not a class index"))
                })?;
                labels.push(y);
            } else {
                let v = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        KmlpError::format(
                            at(line),
                            format!("field {} `{field}` is not a finite number", j + 1),
                        )
                    })?;
                values.push(v);
            }
        }
    }
    let Some(w) = width else {
        return Err(KmlpError::format(at(1), "no data rows"));
    };
    let features =
        Array2::from_shape_vec((labels.len(), w - 1), values).expect("row widths checked");
    LabeledDataset::new(features, labels)
}

/// Features then the label in the last column, floats in shortest
/// round-trip form.
pub fn write_csv(ds: &LabeledDataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => KmlpError::io(path, io),
        other => KmlpError::format(path.display().to_string(), format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    if header {
        let mut names: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
        names.push("label".into());
        w.write_record(&names).map_err(io)?;
    }
    for (row, y) in ds.features.rows().into_iter().zip(&ds.labels) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(y.to_string());
        w.write_record(&fields).map_err(io)?;
    }
    w.flush().map_err(|e| KmlpError::io(path, e))
}
