use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use kmlp_core::analysis::{representation_report, LayerDiagnostics};
use kmlp_core::data::{
    gen_blobs, gen_rectangles, load_csv, load_idx, resolve_data_path, write_csv, write_idx,
    LabelColumn,
};
use kmlp_core::model::{load_model, save_model};
use kmlp_core::seed::Seeds;
use kmlp_core::training::{evaluate, train_network, LayerData};
use kmlp_core::{KernelNetwork, KmlpError, LabeledDataset, SplitTag, TrainReport};

use crate::config::Experiment;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenFormat {
    Csv,
    Idx,
}

#[derive(Debug, Clone)]
pub struct GenArgs {
    pub name: String,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub side: usize,
    pub dim: usize,
    pub separation: f64,
    pub format: GenFormat,
}

/// Generate a synthetic dataset and return the files written.
pub fn cmd_gen(args: &GenArgs) -> Result<Vec<PathBuf>, CliError> {
    let ds = match args.name.as_str() {
        "rectangles" => gen_rectangles(args.n, args.side, args.seed)?,
        "blobs" => gen_blobs(args.n, args.dim, args.separation, args.seed)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown generator `{other}` (expected rectangles or blobs)"
            )))
        }
    };
    std::fs::create_dir_all(&args.out).map_err(|e| KmlpError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    match args.format {
        GenFormat::Csv => {
            let p = args.out.join(format!("{}.csv", args.name));
            write_csv(&ds, &p, true)?;
            Ok(vec![p])
        }
        GenFormat::Idx => {
            if args.name != "rectangles" {
                return Err(CliError::Usage("IDX output holds square images only (rectangles)".into()));
            }
            let images = args.out.join(format!("{}-images.idx", args.name));
            let labels = args.out.join(format!("{}-labels.idx", args.name));
            write_idx(&ds, args.side, args.side, &images, &labels)?;
            Ok(vec![images, labels])
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub model_path: PathBuf,
    pub train_error: f64,
    pub validation_error: Option<f64>,
    pub test_error: Option<f64>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| {
        CliError::Core(KmlpError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

fn write_reports(dir: &Path, reports: &[TrainReport]) -> Result<Vec<String>, CliError> {
    let mut names = Vec::new();
    for r in reports {
        let name = format!("report_layer{}.jsonl", r.layer);
        let path = dir.join(&name);
        let f = File::create(&path).map_err(io_err(&path))?;
        r.write_jsonl(BufWriter::new(f)).map_err(io_err(&path))?;
        names.push(name);
    }
    Ok(names)
}

fn split_error(net: &KernelNetwork, ds: &LabeledDataset, tag: SplitTag) -> Result<Option<f64>, CliError> {
    let part = ds.part(tag);
    if part.is_empty() {
        return Ok(None);
    }
    Ok(Some(evaluate(net, part.features.view(), &part.labels)?))
}

/// Train the network an experiment file describes and write the model,
/// per-layer reports and a manifest into its output directory.
pub fn cmd_train(config_path: &Path) -> Result<TrainOutcome, CliError> {
    let exp = Experiment::load(config_path)?;
    let ds = exp.dataset()?;
    let out = exp.output_dir();
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;

    let train = ds.part(SplitTag::Train);
    let val = ds.part(SplitTag::Validation);
    let train_data = LayerData::new(train.features.view(), &train.labels)?;
    let val_data = if val.is_empty() {
        None
    } else {
        Some(LayerData::new(val.features.view(), &val.labels)?)
    };
    log::info!(
        "training {} layers on {} rows ({} validation)",
        exp.net.layers.len(),
        train.len(),
        val.len()
    );
    let (net, reports) = match train_network(&exp.net, train_data, val_data, &exp.train) {
        Ok(r) => r,
        Err(failed) => {
            write_reports(&out, &failed.reports)?;
            return Err(failed.error.into());
        }
    };
    let report_files = write_reports(&out, &reports)?;
    let model_path = out.join("model.json");
    save_model(&net, &model_path)?;

    let train_error = evaluate(&net, train.features.view(), &train.labels)?;
    let validation_error = split_error(&net, &ds, SplitTag::Validation)?;
    let test_error = split_error(&net, &ds, SplitTag::Test)?;
    let seeds = Seeds::from_root(exp.config.seed);
    let manifest = serde_json::json!({
        "format": kmlp_core::model::FORMAT_TAG,
        "config_sha256": exp.config_sha256,
        "seed": exp.config.seed,
        "sub_seeds": { "data": seeds.data, "init": seeds.init, "batching": seeds.batching },
        "model": "model.json",
        "reports": report_files,
        "rows": {
            "train": train.len(),
            "validation": val.len(),
            "test": ds.count(SplitTag::Test),
        },
        "train_error": train_error,
        "validation_error": validation_error,
        "test_error": test_error,
    });
    let manifest_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(TrainOutcome {
        output_dir: out,
        model_path,
        train_error,
        validation_error,
        test_error,
    })
}

/// Labeled data for `eval` and `inspect`: an IDX image file (recognized by
/// its magic number, labels file required) or a CSV file.
pub fn load_data(
    data: &Path,
    labels: Option<&Path>,
    label_column: LabelColumn,
    header: bool,
) -> Result<LabeledDataset, CliError> {
    let data = resolve_data_path(data);
    let mut magic = [0u8; 4];
    let is_idx = File::open(&data)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|_| u32::from_be_bytes(magic) == 0x0000_0803)
        .unwrap_or(false);
    if is_idx {
        let labels = labels.ok_or_else(|| {
            CliError::Usage(format!("{} is an IDX image file; pass --labels", data.display()))
        })?;
        return Ok(load_idx(&data, resolve_data_path(labels))?);
    }
    if labels.is_some() {
        return Err(CliError::Usage("--labels only applies to IDX image files".into()));
    }
    Ok(load_csv(&data, label_column, header)?)
}

fn trained_model(path: &Path) -> Result<KernelNetwork, CliError> {
    let net = load_model(path)?;
    if net.depth() == 0 || net.frozen_upto < net.depth() {
        return Err(KmlpError::InvalidState(format!(
            "{} holds an untrained network ({} of {} layers trained)",
            path.display(),
            net.frozen_upto,
            net.depth()
        ))
        .into());
    }
    Ok(net)
}

fn check_width(net: &KernelNetwork, ds: &LabeledDataset) -> Result<(), CliError> {
    if net.input_width() != Some(ds.dim()) {
        return Err(KmlpError::InvalidArgument(format!(
            "model expects {} input features, data has {}",
            net.input_width().unwrap_or(0),
            ds.dim()
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_eval(model: &Path, ds: &LabeledDataset) -> Result<f64, CliError> {
    let net = trained_model(model)?;
    check_width(&net, ds)?;
    Ok(evaluate(&net, ds.features.view(), &ds.labels)?)
}

/// One diagnostics row per layer: row `j` describes the representation
/// layer `j` receives, judged with layer `j`'s kernel.
pub fn cmd_inspect(model: &Path, ds: &LabeledDataset) -> Result<Vec<LayerDiagnostics>, CliError> {
    let net = trained_model(model)?;
    check_width(&net, ds)?;
    (0..net.depth())
        .map(|i| Ok(representation_report(&net, ds.features.view(), &ds.labels, i)?))
        .collect()
}

pub fn format_inspect_table(rows: &[LayerDiagnostics]) -> String {
    let mut s = format!(
        "{:>5} {:>12} {:>12} {:>12} {:>14} {:>16}\n",
        "layer", "l1", "l2", "alignment", "max_rkhs_norm", "complexity_bound"
    );
    for r in rows {
        let d = r.dissimilarity_to_ideal;
        s += &format!(
            "{:>5} {:>12.6} {:>12.6} {:>12.6} {:>14.6} {:>16.6}\n",
            r.representation + 1,
            d.l1,
            d.l2,
            d.alignment,
            r.max_rkhs_norm,
            r.complexity_bound
        );
    }
    s
}

/// JSON lines keyed by one-based layer index.
pub fn format_inspect_jsonl(rows: &[LayerDiagnostics]) -> String {
    rows.iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("diagnostics serialize");
            v["layer"] = (r.representation + 1).into();
            v.to_string() + "\n"
        })
        .collect()
}
