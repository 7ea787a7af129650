//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances and budgets are pinned in the constants below.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kmlp_core::analysis::{
    complexity_bound_layer, generalization_bound, propagation_bound, representation_report,
};
use kmlp_core::data::{gen_blobs, gen_rectangles, load_idx, read_idx_images, write_idx};
use kmlp_core::network::KernelLayer;
use kmlp_core::training::{
    evaluate, gradients, objective_value, train_layer, train_network, LayerData, LayerInit,
    LayerSpec, NetSpec,
};
use kmlp_core::{KernelNetwork, KernelSpec, LabeledDataset, Metric, Objective, OutputLoss, TrainConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_INSTANCES: usize = 50;
const GRAD_REL_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
/// Instances with a margin, residual or norm tie closer than this to a kink
/// are redrawn.
const KINK_GUARD: f64 = 1e-3;
const IDENTITY_SETS: usize = 50;
const IDENTITY_TOL: f64 = 1e-6;
const IDEAL_L1_TOL: f64 = 0.01;
const BLOBS_TEST_ERROR: f64 = 0.02;
const BLOBS_L1_DROP: f64 = 0.60;
const RETENTION_GAP: f64 = 0.02;
const RECTANGLES_TEST_ERROR: f64 = 0.10;
const BOUND_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = out.pass && in_time;
    println!(
        "criterion {id} [{name}]: {} ({}; {:.1}s of {}s budget)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.5..1.5))
}

#[derive(Clone, Copy, Debug)]
enum GradCase {
    Hinge,
    CrossEntropy,
    Hidden(Metric),
}

type Instance = (Objective, KernelLayer, Array2<f64>, Vec<usize>, f64);

/// A random instance away from every kink of `case`, or `None` to redraw.
fn grad_instance(
    rng: &mut ChaCha8Rng,
    case: GradCase,
) -> Option<Instance> {
    let n = rng.random_range(2..=8);
    let d = rng.random_range(1..=4);
    let m = rng.random_range(1..=5);
    let kernel = KernelSpec::gaussian(rng.random_range(0.5..2.0)).unwrap();
    let (objective, width, classes) = match case {
        GradCase::Hinge => (
            Objective::Output {
                loss: OutputLoss::Hinge,
            },
            1,
            2,
        ),
        GradCase::CrossEntropy => {
            let k = rng.random_range(2..=3);
            (
                Objective::Output {
                    loss: OutputLoss::CrossEntropy,
                },
                k,
                k,
            )
        }
        GradCase::Hidden(metric) => (
            Objective::Hidden {
                next_kernel: KernelSpec::gaussian(rng.random_range(0.5..2.0)).unwrap(),
                metric,
            },
            rng.random_range(1..=3),
            rng.random_range(2..=3),
        ),
    };
    let x = uniform_matrix(rng, n, d);
    let centers = uniform_matrix(rng, m, d);
    let alpha = uniform_matrix(rng, m, width);
    let bias = Array1::from_shape_simple_fn(width, || rng.random_range(-0.5..0.5));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let tau = rng.random_range(0.01..0.5);
    let layer = KernelLayer::new(kernel, centers, alpha, bias).unwrap();

    let z = layer.forward(x.view()).unwrap();
    match objective {
        Objective::Output {
            loss: OutputLoss::Hinge,
        } => {
            let near = z.column(0).iter().zip(&labels).any(|(&s, &y)| {
                let sign = if y == 1 { 1.0 } else { -1.0 };
                (1.0 - sign * s).abs() < KINK_GUARD
            });
            if near {
                return None;
            }
        }
        Objective::Hidden {
            next_kernel,
            metric: Metric::L1,
        } => {
            let g = next_kernel.gram(z.view(), z.view()).unwrap().values;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let t = if labels[i] == labels[j] { next_kernel.c } else { next_kernel.a };
                    if (g[[i, j]] - t).abs() < KINK_GUARD {
                        return None;
                    }
                }
            }
        }
        _ => {}
    }
    let mut norms = layer.rkhs_norms().to_vec();
    norms.sort_by(|a, b| b.total_cmp(a));
    if norms[0] < KINK_GUARD || (norms.len() > 1 && norms[0] - norms[1] < KINK_GUARD) {
        return None;
    }
    Some((objective, layer, x, labels, tau))
}

fn fd_gradient(
    objective: Objective,
    layer: &KernelLayer,
    x: &Array2<f64>,
    labels: &[usize],
    tau: f64,
) -> (Array2<f64>, Array1<f64>) {
    let f = |l: &KernelLayer| objective_value(objective, l, x.view(), labels, tau).unwrap();
    let mut ga = Array2::zeros(layer.alpha.dim());
    for idx in ndarray::indices(layer.alpha.dim()) {
        let mut p = layer.clone();
        p.alpha[idx] += FD_STEP;
        let mut q = layer.clone();
        q.alpha[idx] -= FD_STEP;
        ga[idx] = (f(&p) - f(&q)) / (2.0 * FD_STEP);
    }
    let mut gb = Array1::zeros(layer.bias.len());
    for j in 0..layer.bias.len() {
        let mut p = layer.clone();
        p.bias[j] += FD_STEP;
        let mut q = layer.clone();
        q.bias[j] -= FD_STEP;
        gb[j] = (f(&p) - f(&q)) / (2.0 * FD_STEP);
    }
    (ga, gb)
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn criterion_gradients() -> Outcome {
    let cases = [
        GradCase::Hinge,
        GradCase::CrossEntropy,
        GradCase::Hidden(Metric::L1),
        GradCase::Hidden(Metric::L2),
        GradCase::Hidden(Metric::Alignment),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut redraws = 0;
    for case in cases {
        let mut done = 0;
        while done < GRAD_INSTANCES {
            let Some((obj, layer, x, labels, tau)) = grad_instance(&mut rng, case) else {
                redraws += 1;
                continue;
            };
            let g = gradients(obj, &layer, x.view(), &labels, tau).unwrap();
            let (fa, fb) = fd_gradient(obj, &layer, &x, &labels, tau);
            let analytic: Vec<f64> = g.alpha.iter().chain(g.bias.iter()).copied().collect();
            let numeric: Vec<f64> = fa.iter().chain(fb.iter()).copied().collect();
            let diff = l2(analytic.iter().zip(&numeric).map(|(a, b)| a - b));
            let scale = l2(analytic.iter().copied()).max(l2(numeric.iter().copied())).max(1e-8);
            let rel = diff / scale;
            if rel > worst.0 || worst.1.is_empty() {
                worst = (rel, format!("{case:?}"));
            }
            done += 1;
        }
    }
    Outcome {
        pass: worst.0 < GRAD_REL_TOL,
        detail: format!(
            "{} instances x 5 objectives, worst relative error {:.2e} ({}) vs {GRAD_REL_TOL:e}, {redraws} kink redraws",
            GRAD_INSTANCES, worst.0, worst.1
        ),
    }
}

fn distinct_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
}

fn criterion_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_residual = 0.0f64;
    let mut monotone = true;
    let mut worst_increase = f64::NEG_INFINITY;
    for set in 0..IDENTITY_SETS {
        let d = rng.random_range(2..=4);
        let x = distinct_points(&mut rng, 20, d);
        let kernel = KernelSpec::gaussian(0.5).unwrap();
        let (layer, residual) = KernelLayer::identity_init(kernel, x.view(), 0.0).unwrap();
        worst_residual = worst_residual.max(residual);

        let labels: Vec<usize> = (0..20).map(|i| (i + set) % 2).collect();
        let objective = Objective::Hidden {
            next_kernel: KernelSpec::gaussian(1.0).unwrap(),
            metric: Metric::ALL[set % 3],
        };
        let config = TrainConfig {
            epochs: 15,
            batch_size: 8,
            learning_rate: 0.05,
            patience: 0,
            ..TrainConfig::default()
        };
        let before = objective_value(objective, &layer, x.view(), &labels, 0.0).unwrap();
        let data = LayerData::new(x.view(), &labels).unwrap();
        let (trained, _) = train_layer(layer, objective, data, None, &config, 1, set as u64).unwrap();
        let after = objective_value(objective, &trained, x.view(), &labels, 0.0).unwrap();
        worst_increase = worst_increase.max(after - before);
        if after > before {
            monotone = false;
        }
    }
    Outcome {
        pass: worst_residual < IDENTITY_TOL && monotone,
        detail: format!(
            "worst reconstruction error {worst_residual:.2e} vs {IDENTITY_TOL:e}; max loss change after training {worst_increase:.3e} (must be <= 0)"
        ),
    }
}

fn criterion_ideal_fixed_point() -> Outcome {
    let sigma = 1.0;
    let k_classes = 3;
    let labels: Vec<usize> = (0..30).map(|i| i % k_classes).collect();
    // one point per class, pairwise 6 sigma * sqrt(2) apart
    let s = Array2::from_shape_fn((30, k_classes), |(i, j)| {
        if labels[i] == j {
            6.0 * sigma
        } else {
            0.0
        }
    });
    let kernel = KernelSpec::gaussian(sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layer = KernelLayer::random_init(kernel, s.clone(), k_classes, &mut rng).unwrap();
    let mut net = KernelNetwork::new(vec![layer.clone()]).unwrap();
    let report = representation_report(&net, s.view(), &labels, 0).unwrap();
    let l1 = report.dissimilarity_to_ideal.l1;

    let config = TrainConfig {
        epochs: 50,
        learning_rate: 0.05,
        batch_size: 10,
        patience: 0,
        ..TrainConfig::default()
    };
    let (trained, _) = train_layer(
        layer,
        Objective::Output {
            loss: OutputLoss::CrossEntropy,
        },
        LayerData::new(s.view(), &labels).unwrap(),
        None,
        &config,
        1,
        9,
    )
    .unwrap();
    net.layers[0] = trained;
    net.frozen_upto = 1;
    let err = evaluate(&net, s.view(), &labels).unwrap();
    Outcome {
        pass: l1 < IDEAL_L1_TOL && err == 0.0,
        detail: format!("l1 to ideal {l1:.2e} vs {IDEAL_L1_TOL}; output-layer training error {err}"),
    }
}

fn blobs_spec() -> NetSpec {
    NetSpec {
        layers: vec![
            LayerSpec {
                width: Some(4),
                sigma: 1.0,
                init: LayerInit::Random,
            },
            LayerSpec {
                width: None,
                sigma: 1.0,
                init: LayerInit::Random,
            },
        ],
        target_floor: 0.0,
    }
}

fn blobs_config(seed: u64, retention: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        epochs: 100,
        batch_size: 64,
        patience: 0,
        metric: Metric::L1,
        seed,
        retention: vec![1.0, retention],
        ..TrainConfig::default()
    }
}

fn criterion_blobs() -> Outcome {
    let train = gen_blobs(200, 2, 6.0, 100).unwrap();
    let test = gen_blobs(1000, 2, 6.0, 900).unwrap();
    let data = LayerData::new(train.features.view(), &train.labels).unwrap();
    let (net, reports) = train_network(&blobs_spec(), data, None, &blobs_config(0, 1.0)).unwrap();
    let err = evaluate(&net, test.features.view(), &test.labels).unwrap();
    let hidden = &reports[0];
    let initial = hidden.records[0].validation_metric;
    let chosen = hidden.final_dissimilarity.unwrap();
    let check = representation_report(&net, train.features.view(), &train.labels, 1)
        .unwrap()
        .dissimilarity_to_ideal
        .l1;
    let drop = 1.0 - chosen / initial;
    Outcome {
        pass: err <= BLOBS_TEST_ERROR && drop >= BLOBS_L1_DROP && (check - chosen).abs() < 1e-12,
        detail: format!(
            "test error {err:.4} vs {BLOBS_TEST_ERROR}; hidden l1 {initial:.4} -> {chosen:.4} (epoch {}), drop {:.1}% vs {:.0}%",
            hidden.chosen_epoch,
            100.0 * drop,
            100.0 * BLOBS_L1_DROP
        ),
    }
}

fn criterion_retention() -> Outcome {
    let mut worst = 0.0f64;
    let mut same_first_layer = true;
    let mut pairs = Vec::new();
    for seed in 0..5u64 {
        let train = gen_blobs(200, 2, 6.0, 100 + seed).unwrap();
        let test = gen_blobs(1000, 2, 6.0, 900 + seed).unwrap();
        let data = LayerData::new(train.features.view(), &train.labels).unwrap();
        let (full, _) = train_network(&blobs_spec(), data, None, &blobs_config(seed, 1.0)).unwrap();
        let (fast, _) = train_network(&blobs_spec(), data, None, &blobs_config(seed, 0.1)).unwrap();
        same_first_layer &= full.layers[0] == fast.layers[0];
        let e_full = evaluate(&full, test.features.view(), &test.labels).unwrap();
        let e_fast = evaluate(&fast, test.features.view(), &test.labels).unwrap();
        worst = worst.max((e_full - e_fast).abs());
        pairs.push(format!("{e_full:.3}/{e_fast:.3}"));
    }
    Outcome {
        pass: worst <= RETENTION_GAP && same_first_layer,
        detail: format!(
            "test error full/0.1 per seed [{}], worst gap {:.1} points vs {:.0}",
            pairs.join(" "),
            100.0 * worst,
            100.0 * RETENTION_GAP
        ),
    }
}

fn criterion_rectangles() -> Outcome {
    let train = gen_rectangles(1000, 28, 1).unwrap();
    let val = gen_rectangles(200, 28, 2).unwrap();
    let test = gen_rectangles(5000, 28, 3).unwrap();
    let spec = NetSpec {
        layers: vec![
            LayerSpec {
                width: Some(50),
                sigma: 4.25,
                init: LayerInit::Random,
            },
            LayerSpec {
                width: None,
                sigma: 5.0,
                init: LayerInit::Random,
            },
        ],
        target_floor: 0.0,
    };
    let config = TrainConfig {
        learning_rate: 1e-3,
        epochs: 200,
        batch_size: 256,
        patience: 0,
        metric: Metric::L1,
        output_loss: OutputLoss::CrossEntropy,
        seed: 0,
        ..TrainConfig::default()
    };
    let (net, _) = train_network(
        &spec,
        LayerData::new(train.features.view(), &train.labels).unwrap(),
        Some(LayerData::new(val.features.view(), &val.labels).unwrap()),
        &config,
    )
    .unwrap();
    let err = evaluate(&net, test.features.view(), &test.labels).unwrap();
    Outcome {
        pass: err <= RECTANGLES_TEST_ERROR,
        detail: format!(
            "two-layer network (50 hidden units) test error {err:.4} on 5000 images vs {RECTANGLES_TEST_ERROR}"
        ),
    }
}

fn criterion_bounds() -> Outcome {
    let c = complexity_bound_layer(1.0, 1.0, 100);
    let g = generalization_bound(0.0, 1.0, 1.0, 10000, 0.05);
    let g_ref = 0.04 + 9.0 * ((80.0f64).ln() / 20000.0).sqrt();
    let p = propagation_bound(0.1, 0.04, 0.5, &[1.0, 1.0]);
    let p_ref = 0.1 + 0.2 * 2.0f64.sqrt();
    let pass = c == 0.2 && (g - g_ref).abs() < BOUND_TOL && (p - p_ref).abs() < BOUND_TOL;
    Outcome {
        pass,
        detail: format!("complexity {c}; generalization {g:.9} vs {g_ref:.9}; propagation {p:.9} vs {p_ref:.9}"),
    }
}

fn bbox(img: &[f64], side: usize) -> (usize, usize) {
    let lit: Vec<(usize, usize)> = (0..side * side)
        .filter(|&i| img[i] != 0.0)
        .map(|i| (i / side, i % side))
        .collect();
    let r = lit.iter().map(|p| p.0);
    let c = lit.iter().map(|p| p.1);
    let h = r.clone().max().unwrap() - r.min().unwrap() + 1;
    let w = c.clone().max().unwrap() - c.min().unwrap() + 1;
    (w, h)
}

fn criterion_data(dir: &Path) -> Outcome {
    let mut problems = Vec::new();

    // hand-built IDX pair: 3 images of 2x3 pixels
    let pixels: [u8; 18] = [0, 1, 2, 3, 4, 5, 255, 254, 128, 127, 0, 9, 10, 11, 12, 200, 100, 50];
    let mut img = vec![0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 3];
    img.extend(pixels);
    let lab = vec![0, 0, 8, 1, 0, 0, 0, 3, 2, 0, 1];
    let (ip, lp) = (dir.join("img.idx"), dir.join("lab.idx"));
    std::fs::write(&ip, &img).unwrap();
    std::fs::write(&lp, &lab).unwrap();
    let ds = load_idx(&ip, &lp).unwrap();
    let exact = ds.features.iter().zip(pixels).all(|(&v, p)| v == f64::from(p) / 255.0);
    if !exact || ds.labels != vec![2, 0, 1] {
        problems.push("IDX values".to_string());
    }
    let (ip2, lp2) = (dir.join("img2.idx"), dir.join("lab2.idx"));
    write_idx(&ds, 2, 3, &ip2, &lp2).unwrap();
    if std::fs::read(&ip2).unwrap() != img || std::fs::read(&lp2).unwrap() != lab {
        problems.push("IDX round trip".to_string());
    }
    if read_idx_images(&img[..img.len() - 1], "truncated").is_ok() {
        problems.push("truncated IDX accepted".to_string());
    }

    let n = 10000;
    let rects: LabeledDataset = gen_rectangles(n, 28, 0).unwrap();
    let mut bad_perimeter = 0;
    let mut squares = 0;
    let mut bad_label = 0;
    for (row, &y) in rects.features.rows().into_iter().zip(&rects.labels) {
        let img = row.to_vec();
        let (w, h) = bbox(&img, 28);
        let lit = img.iter().filter(|&&v| v == 1.0).count();
        if lit != 2 * w + 2 * h - 4 || img.iter().any(|&v| v != 0.0 && v != 1.0) {
            bad_perimeter += 1;
        }
        if w == h {
            squares += 1;
        }
        if usize::from(w > h) != y {
            bad_label += 1;
        }
    }
    let balance = rects.labels.iter().filter(|&&y| y == 1).count() as f64 / n as f64;
    if bad_perimeter + squares + bad_label > 0 {
        problems.push(format!("{bad_perimeter} perimeter, {squares} square, {bad_label} label violations"));
    }
    if !(0.49..=0.51).contains(&balance) {
        problems.push(format!("class balance {balance}"));
    }
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("IDX bit-exact; {n} rectangles valid, class-1 fraction {balance:.4}")
        } else {
            problems.join("; ")
        },
    }
}

const DETERMINISM_CONFIG: &str = r#"
seed = 11
output_dir = "OUT"

[data]
source = "blobs"
n = 120
separation = 5.0

[split]
train = 0.7
validation = 0.15
test = 0.15

[[layers]]
width = 3
sigma = 1.0

[[layers]]
sigma = 1.0
retention = 0.5

[train]
learning_rate = 0.01
epochs = 20
batch_size = 16
metric = "alignment"
tau_prime = 0.01
"#;

fn criterion_determinism(dir: &Path) -> Outcome {
    let mut models = Vec::new();
    for run in ["a", "b"] {
        let cfg = dir.join(format!("{run}.toml"));
        std::fs::write(&cfg, DETERMINISM_CONFIG.replace("OUT", run)).unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_kmlp"))
            .args(["train", "--config"])
            .arg(&cfg)
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome {
                pass: false,
                detail: format!("train failed: {}", String::from_utf8_lossy(&status.stderr)),
            };
        }
        models.push(std::fs::read(dir.join(run).join("model.json")).unwrap());
    }
    let same = models[0] == models[1];
    Outcome {
        pass: same && !models[0].is_empty(),
        detail: format!(
            "two runs of `kmlp train` produced {} model files ({} bytes)",
            if same { "byte-identical" } else { "different" },
            models[0].len()
        ),
    }
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let secs = Duration::from_secs;
    let results = [
        run(1, "gradient suite", secs(10), criterion_gradients),
        run(2, "identity initialization", secs(30), criterion_identity),
        run(3, "ideal representation fixed point", secs(10), criterion_ideal_fixed_point),
        run(4, "toy end-to-end", secs(120), criterion_blobs),
        run(5, "center retention", secs(300), criterion_retention),
        run(6, "rectangles", secs(900), criterion_rectangles),
        run(7, "bound arithmetic", secs(1), criterion_bounds),
        run(8, "data integrity", secs(60), || criterion_data(tmp.path())),
        run(9, "determinism", secs(120), || criterion_determinism(tmp.path())),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
