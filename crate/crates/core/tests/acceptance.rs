//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use unic_kit::datagen::synthetic_corpus;
use unic_kit::io::{self, AnnotationFile, FileKind, PredictionFile};
use unic_kit::labels::{quality_guided_label, EmaState, LabelSchedule, LabelStrategy, QualityGuidanceConfig};
use unic_kit::losses::{focal_loss, giou_loss, loss_gradients, pair_cost};
use unic_kit::metrics::{evaluate, ImageAnnotations, ImagePredictions, MetricsConfig};
use unic_kit::set_match::{composite_loss, cost_matrix, optimal_assignment, pad_ground_truth, MatchAssignment};
use unic_kit::tinynet::{self, channel_reduce, encoder_forward, ForwardTrace, ModelWeights, Stage, TinyNetConfig};
use unic_kit::{geometry, AnnotatedView, CompBox, GtSlot, LossWeights, PredictedView};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unic-kit"))
}

fn cb(cx: f64, cy: f64, w: f64, h: f64) -> CompBox {
    CompBox::new(cx, cy, w, h).unwrap()
}

fn random_box(rng: &mut ChaCha8Rng, center: (f64, f64), size: (f64, f64)) -> CompBox {
    cb(
        rng.random_range(center.0..center.1),
        rng.random_range(center.0..center.1),
        rng.random_range(size.0..size.1),
        rng.random_range(size.0..size.1),
    )
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exhaustive minimum over permutations, summing in row order.
fn brute_force_min(costs: &[Vec<f64>]) -> f64 {
    let mut perm: Vec<usize> = (0..costs.len()).collect();
    let mut best = f64::INFINITY;
    loop {
        let mut total = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            total += costs[i][j];
        }
        best = best.min(total);
        if !next_permutation(&mut perm) {
            return best;
        }
    }
}

fn matching_optimality() -> Outcome {
    let start = Instant::now();
    let w = LossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=7);
        let g = rng.random_range(0..=n);
        let gt: Vec<AnnotatedView> = (0..g)
            .map(|_| {
                AnnotatedView::new(
                    random_box(&mut rng, (-0.5, 1.5), (0.05, 1.2)),
                    rng.random_range(1.0..5.0),
                )
                .unwrap()
            })
            .collect();
        let mut preds: Vec<PredictedView> = (0..n)
            .map(|_| {
                PredictedView::new(
                    random_box(&mut rng, (-0.5, 1.5), (0.05, 1.2)),
                    rng.random_range(0.0..=1.0),
                )
                .unwrap()
            })
            .collect();
        if rng.random_bool(0.2) {
            preds[1] = preds[0];
        }
        let slots = pad_ground_truth(&gt, n).unwrap();
        let costs = cost_matrix(&preds, &slots, &w).unwrap();
        let found = optimal_assignment(&preds, &slots, &w).unwrap();
        if found.total_cost != brute_force_min(&costs) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{mismatches} mismatches in 1000 instances (limit 10s)"),
    )
}

const RASTER: usize = 4000;
const RASTER_LO: f64 = -1.0;
const RASTER_HI: f64 = 2.0;

/// Cell-center counts along one axis for two intervals: (in a, in b, in both).
fn axis_classes(a: (f64, f64), b: (f64, f64), cells: usize) -> (u64, u64, u64) {
    let step = (RASTER_HI - RASTER_LO) / cells as f64;
    let (mut na, mut nb, mut nab) = (0, 0, 0);
    for k in 0..cells {
        let c = RASTER_LO + (k as f64 + 0.5) * step;
        let ia = a.0 <= c && c < a.1;
        let ib = b.0 <= c && c < b.1;
        na += ia as u64;
        nb += ib as u64;
        nab += (ia && ib) as u64;
    }
    (na, nb, nab)
}

/// IoU on a `cells x cells` grid over [-1, 2]^2. Boxes are axis-aligned, so
/// a cell lies in a box exactly when its column and its row do; cells are
/// grouped into classes by column membership and row membership and counted
/// per class.
fn raster_iou(a: &CompBox, b: &CompBox, cells: usize) -> f64 {
    let (ca, cb) = (a.to_corners(), b.to_corners());
    let (xa, xb, xab) = axis_classes((ca.x0(), ca.x1()), (cb.x0(), cb.x1()), cells);
    let (ya, yb, yab) = axis_classes((ca.y0(), ca.y1()), (cb.y0(), cb.y1()), cells);
    let (area_a, area_b, inter) = (xa * ya, xb * yb, xab * yab);
    if area_a + area_b == 0 {
        return 0.0;
    }
    inter as f64 / (area_a + area_b - inter) as f64
}

/// Box with both corners uniform in [-1, 2]^2.
fn box_in_domain(rng: &mut ChaCha8Rng) -> CompBox {
    loop {
        let (xa, xb) = (
            rng.random_range(RASTER_LO..RASTER_HI),
            rng.random_range(RASTER_LO..RASTER_HI),
        );
        let (ya, yb) = (
            rng.random_range(RASTER_LO..RASTER_HI),
            rng.random_range(RASTER_LO..RASTER_HI),
        );
        if let Ok(b) = CompBox::new((xa + xb) / 2.0, (ya + yb) / 2.0, (xa - xb).abs(), (ya - yb).abs()) {
            return b;
        }
    }
}

fn geometry_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut worst = (0.0f64, None);
    let mut over = 0;
    let mut giou_range = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let a = box_in_domain(&mut rng);
        let b = box_in_domain(&mut rng);
        let err = (geometry::iou(&a, &b) - raster_iou(&a, &b, RASTER)).abs();
        if err >= 1e-3 {
            over += 1;
        }
        if err > worst.0 {
            worst = (err, Some((a, b)));
        }
        let g = giou_loss(&a, &b);
        giou_range = (giou_range.0.min(g), giou_range.1.max(g));
    }
    // the worst pair again on a 10x finer grid, to separate raster error from iou error
    let fine = worst.1.map_or(0.0, |(a, b)| {
        (geometry::iou(&a, &b) - raster_iou(&a, &b, 10 * RASTER)).abs()
    });
    Outcome::new(
        worst.0 < 1e-3 && giou_range.0 >= 0.0 && giou_range.1 <= 2.0,
        format!(
            "max |iou - raster| = {:.2e} ({over} of 1000 pairs at or above 1e-3; worst pair on a {}^2 grid: {fine:.2e}), giou loss in [{:.4}, {:.4}]",
            worst.0,
            10 * RASTER,
            giou_range.0,
            giou_range.1
        ),
    )
}

fn separated(pred: &CompBox, slot: &GtSlot, gap: f64) -> bool {
    let Some(gt) = slot.bbox() else { return true };
    let (p, g) = (pred.to_corners(), gt.to_corners());
    let far = |xs: [f64; 2], ys: [f64; 2]| xs.iter().all(|x| ys.iter().all(|y| (x - y).abs() > gap));
    far([p.x0(), p.x1()], [g.x0(), g.x1()])
        && far([p.y0(), p.y1()], [g.y0(), g.y1()])
        && pred.params().iter().zip(gt.params()).all(|(a, b)| (a - b).abs() > gap)
}

fn gradient_check() -> Outcome {
    const STEP: f64 = 1e-5;
    let w = LossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let mut worst = 0.0f64;
    let (mut checked, mut flagged) = (0, 0);
    while checked < 1000 {
        let pred_box = random_box(&mut rng, (-0.5, 1.5), (0.1, 1.2));
        let slot = if rng.random_bool(0.8) {
            GtSlot::valid(random_box(&mut rng, (-0.5, 1.5), (0.1, 1.2)), None)
        } else {
            GtSlot::Empty
        };
        if !separated(&pred_box, &slot, 1e-3) {
            continue;
        }
        let conf = rng.random_range(0.02..0.98);
        let pred = PredictedView::new(pred_box, conf).unwrap();
        let grad = loss_gradients(&pred, &slot, &w).unwrap();
        if grad.at_kink {
            flagged += 1;
        }
        let f = |b: [f64; 4], c: f64| {
            pair_cost(&PredictedView::new(cb(b[0], b[1], b[2], b[3]), c).unwrap(), &slot, &w).unwrap()
        };
        let params = pred_box.params();
        let mut analytic = grad.d_box.to_vec();
        analytic.push(grad.d_confidence);
        for (k, &a) in analytic.iter().enumerate() {
            let (mut up, mut down) = (params, params);
            let (mut cu, mut cd) = (conf, conf);
            if k < 4 {
                up[k] += STEP;
                down[k] -= STEP;
            } else {
                cu += STEP;
                cd -= STEP;
            }
            let numeric = (f(up, cu) - f(down, cd)) / (2.0 * STEP);
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-8 {
                worst = worst.max((a - numeric).abs() / scale);
            }
        }
        checked += 1;
    }
    Outcome::new(
        worst < 1e-4 && flagged == 0,
        format!("max relative error {worst:.2e} over {checked} points, {flagged} flagged as kinks"),
    )
}

fn loss_identities() -> Outcome {
    let w = LossWeights::default();
    let gt = [
        AnnotatedView::new(cb(0.3, 0.4, 0.5, 0.6), 4.0).unwrap(),
        AnnotatedView::new(cb(1.2, -0.1, 0.4, 0.4), 2.0).unwrap(),
    ];
    let slots = pad_ground_truth(&gt, 4).unwrap();
    let preds = vec![
        PredictedView::new(cb(0.0, 0.0, 0.1, 0.1), 0.0).unwrap(),
        PredictedView::new(gt[1].bbox, 1.0).unwrap(),
        PredictedView::new(gt[0].bbox, 1.0).unwrap(),
        PredictedView::new(cb(0.7, 0.7, 0.1, 0.1), 0.0).unwrap(),
    ];
    let a = optimal_assignment(&preds, &slots, &w).unwrap();
    let perfect = composite_loss(&preds, &slots, &a, &w, None).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let empties = vec![GtSlot::Empty; 5];
    let noisy: Vec<PredictedView> = (0..5)
        .map(|_| {
            PredictedView::new(
                random_box(&mut rng, (-0.5, 1.5), (0.1, 1.0)),
                rng.random_range(0.0..1.0),
            )
            .unwrap()
        })
        .collect();
    let identity = MatchAssignment {
        sigma: (0..5).collect(),
        total_cost: 0.0,
    };
    let all_empty = composite_loss(&noisy, &empties, &identity, &w, None).unwrap();

    let f0 = focal_loss(0.0, 0.0, 2.0).unwrap();
    let f1 = focal_loss(1.0, 1.0, 2.0).unwrap();
    let pass = perfect.total == 0.0 && all_empty.reg == 0.0 && all_empty.giou == 0.0 && f0 == 0.0 && f1 == 0.0;
    Outcome::new(
        pass,
        format!(
            "perfect total {}, all-empty reg {} giou {}, focal(0,0) {f0}, focal(1,1) {f1}",
            perfect.total, all_empty.reg, all_empty.giou
        ),
    )
}

fn metrics_fixtures() -> Outcome {
    let ann: AnnotationFile = io::load(&fixture("two_image_annotations.json"), FileKind::Annotations).unwrap();
    let pred: PredictionFile = io::load(&fixture("two_image_predictions.json"), FileKind::Predictions).unwrap();
    let cfg = MetricsConfig::default();
    let report = evaluate(&ann.to_eval(), &pred.images, &cfg).unwrap();
    // hand-computed: hits over T*K slots; IoUs of near misses are 15/17 and 7/9
    let expected = [
        (1, 5, 0.85, 0.5),
        (1, 5, 0.90, 0.5),
        (1, 10, 0.85, 0.5),
        (1, 10, 0.90, 0.5),
        (5, 5, 0.85, 0.5),
        (5, 5, 0.90, 0.3),
        (5, 10, 0.85, 0.6),
        (5, 10, 0.90, 0.3),
    ];
    let mut worst = 0.0f64;
    for (k, n, eps, value) in expected {
        worst = worst.max((report.acc(k, n, eps).unwrap() - value).abs());
    }
    let disp_err = (report.mean_disp - 1.0 / 64.0).abs();
    let iou_err = (report.mean_iou - 8.0 / 9.0).abs();

    let clone: Vec<ImagePredictions> = ann
        .images
        .iter()
        .filter(|r| r.views.len() >= 5)
        .map(|r| ImagePredictions {
            id: r.id.clone(),
            views: r
                .views
                .iter()
                .map(|v| PredictedView::new(v.bbox, v.score.clamp(0.0, 1.0)).unwrap())
                .collect(),
        })
        .collect();
    let cr = evaluate(&ann.to_eval(), &clone, &cfg).unwrap();
    let clone_ok = cr.acc.iter().all(|e| e.value == 1.0) && cr.mean_iou == 1.0 && cr.mean_disp == 0.0;

    Outcome::new(
        worst < 1e-9 && disp_err < 1e-9 && iou_err < 1e-9 && clone_ok,
        format!("max acc error {worst:.1e}, disp error {disp_err:.1e}, iou error {iou_err:.1e}, clone fixture exact: {clone_ok}"),
    )
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let ks = vec![1, 3, 5];
    let ns: Vec<usize> = (1..=12).collect();
    let eps = vec![0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95];
    let cfg = MetricsConfig {
        k_values: ks.clone(),
        n_values: ns.clone(),
        thresholds: eps.clone(),
    };
    let mut violations = 0;
    for _ in 0..100 {
        let t = rng.random_range(1..=5);
        let mut anns = Vec::new();
        let mut preds = Vec::new();
        for i in 0..t {
            let id = format!("img{i}");
            let gts: Vec<AnnotatedView> = (0..rng.random_range(1..=15))
                .map(|_| {
                    AnnotatedView::new(random_box(&mut rng, (0.0, 1.0), (0.2, 0.9)), rng.random_range(1.0..5.0))
                        .unwrap()
                })
                .collect();
            let views: Vec<PredictedView> = (0..rng.random_range(5..=10))
                .map(|_| {
                    let g = gts[rng.random_range(0..gts.len())].bbox;
                    let jitter = rng.random_range(0.0..0.08);
                    let b = cb(
                        g.cx() + rng.random_range(-jitter..=jitter),
                        g.cy() + rng.random_range(-jitter..=jitter),
                        g.w() * rng.random_range(0.9..1.1),
                        g.h() * rng.random_range(0.9..1.1),
                    );
                    PredictedView::new(b, rng.random_range(0.0..=1.0)).unwrap()
                })
                .collect();
            anns.push(ImageAnnotations {
                id: id.clone(),
                views: gts,
            });
            preds.push(ImagePredictions { id, views });
        }
        let r = evaluate(&anns, &preds, &cfg).unwrap();
        for &k in &ks {
            for &e in &eps {
                for pair in ns.windows(2) {
                    if r.acc(k, pair[1], e).unwrap() < r.acc(k, pair[0], e).unwrap() {
                        violations += 1;
                    }
                }
            }
            for &n in &ns {
                for pair in eps.windows(2) {
                    if r.acc(k, n, pair[1]).unwrap() > r.acc(k, n, pair[0]).unwrap() {
                        violations += 1;
                    }
                }
            }
        }
    }
    Outcome::new(violations == 0, format!("{violations} violations over 100 sets"))
}

/// Top-view visible fraction recomputed from raw JSON numbers.
fn recomputed_fraction(views: &[Value]) -> f64 {
    let mut top = 0;
    for (i, v) in views.iter().enumerate() {
        if v["score"].as_f64().unwrap() > views[top]["score"].as_f64().unwrap() {
            top = i;
        }
    }
    let b: Vec<f64> = views[top]["box"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let (x0, x1, y0, y1) = (
        b[0] - b[2] / 2.0,
        b[0] + b[2] / 2.0,
        b[1] - b[3] / 2.0,
        b[1] + b[3] / 2.0,
    );
    let overlap = |lo: f64, hi: f64| (hi.min(1.0) - lo.max(0.0)).max(0.0);
    overlap(x0, x1) * overlap(y0, y1) / (b[2] * b[3])
}

fn dataset_generator() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let corpus = dir.path().join("corpus.json");
    io::write_bytes(
        &corpus,
        &io::to_json_bytes(&AnnotationFile::from_full_views(&synthetic_corpus(500, 77))).unwrap(),
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args([
                "gen-uic",
                "--annotations",
                corpus.to_str().unwrap(),
                "--seed",
                "42",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap()
            .status;
        (status.code(), std::fs::read(&out).unwrap_or_default())
    };
    let (c1, first) = run("a.json");
    let (c2, second) = run("b.json");
    let validated = bin()
        .args(["validate", dir.path().join("a.json").to_str().unwrap()])
        .output()
        .unwrap();
    let doc: Value = serde_json::from_slice(&first).unwrap_or(Value::Null);
    let frac = doc["header"]["params"]["visible_frac"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let (lo, hi) = (
        frac[0].as_f64().unwrap_or(f64::NAN),
        frac[1].as_f64().unwrap_or(f64::NAN),
    );
    let samples = doc["samples"].as_array().cloned().unwrap_or_default();
    let skipped = doc["skipped"].as_array().map_or(0, Vec::len);
    let mut bad = 0;
    for s in &samples {
        let views = s["gt_views"].as_array().unwrap();
        let f = recomputed_fraction(views);
        let outside = views.iter().any(|v| {
            let b: Vec<f64> = v["box"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .collect();
            b[0] - b[2] / 2.0 < 0.0 || b[0] + b[2] / 2.0 > 1.0 || b[1] - b[3] / 2.0 < 0.0 || b[1] + b[3] / 2.0 > 1.0
        });
        let stored = s["visible_fraction"].as_f64().unwrap();
        if !outside || f < lo - 1e-6 || f > hi + 1e-6 || (f - stored).abs() > 1e-6 {
            bad += 1;
        }
    }
    let pass = c1 == Some(0)
        && c2 == Some(0)
        && first == second
        && validated.status.code() == Some(0)
        && bad == 0
        && samples.len() + skipped == 500;
    Outcome::new(
        pass,
        format!(
            "{} samples, {skipped} skipped, {bad} failing independent checks, byte-identical: {}, validate exit {:?}",
            samples.len(),
            first == second,
            validated.status.code()
        ),
    )
}

fn tinynet_invariants() -> Outcome {
    let start = Instant::now();
    let cfg = TinyNetConfig::default();
    let weights = ModelWeights::seeded(&cfg, 7).unwrap();
    let grid = tinynet::synth_features(256, 384, 7).unwrap();
    let out = tinynet::forward(&grid, &weights, true).unwrap();
    let row_err = out.trace.max_row_sum_error();
    let memory = grid.positions() + cfg.pad_tokens;
    let lengths_ok = out
        .trace
        .stage(Stage::FemCross)
        .chain(out.trace.stage(Stage::DecoderCross))
        .all(|r| r.key_len == memory)
        && out.trace.stage(Stage::FemCross).count() == cfg.fem_layers
        && out.trace.stage(Stage::DecoderCross).count() == cfg.decoder_layers;
    let views_ok = out.predictions.len() == cfg.queries
        && out
            .predictions
            .iter()
            .all(|p| p.bbox.w() > 0.0 && p.bbox.h() > 0.0 && (0.0..=1.0).contains(&p.confidence()));

    let z = channel_reduce(&grid, &weights).unwrap();
    let base = encoder_forward(&z, None, &weights, &mut ForwardTrace::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let mut equiv_err = 0.0f64;
    for _ in 0..50 {
        let mut perm: Vec<usize> = (0..z.nrows()).collect();
        perm.shuffle(&mut rng);
        let permuted =
            encoder_forward(&z.select(Axis(0), &perm), None, &weights, &mut ForwardTrace::default()).unwrap();
        let expected = base.select(Axis(0), &perm);
        equiv_err = permuted
            .iter()
            .zip(expected.iter())
            .fold(equiv_err, |m, (a, b)| m.max((a - b).abs()));
    }

    let dir = tempfile::TempDir::new().unwrap();
    let pred = dir.path().join("pred.json");
    let gt = dir.path().join("gt.json");
    let demo = bin()
        .args([
            "demo-forward",
            "--height",
            "256",
            "--width",
            "384",
            "--seed",
            "7",
            "--image-id",
            "desk",
        ])
        .args(["--out", pred.to_str().unwrap()])
        .output()
        .unwrap();
    let gt_doc = json!({"images": [{"id": "desk", "width": 384, "height": 256, "views": [
        {"box": [0.5, 0.5, 0.7, 0.8], "score": 4.5},
        {"box": [0.9, 0.45, 0.8, 0.7], "score": 3.9},
        {"box": [0.2, 0.6, 0.6, 0.9], "score": 2.1}
    ]}]});
    std::fs::write(&gt, serde_json::to_vec(&gt_doc).unwrap()).unwrap();
    let matched = bin()
        .args(["match", "--gt", gt.to_str().unwrap(), "--pred", pred.to_str().unwrap()])
        .output()
        .unwrap();
    let evaluated = bin()
        .args([
            "eval",
            "--annotations",
            gt.to_str().unwrap(),
            "--predictions",
            pred.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    let codes = (demo.status.code(), matched.status.code(), evaluated.status.code());
    let elapsed = start.elapsed();

    let pass = row_err < 1e-6
        && equiv_err < 1e-6
        && lengths_ok
        && views_ok
        && codes == (Some(0), Some(0), Some(0))
        && elapsed < Duration::from_secs(30);
    Outcome::new(
        pass,
        format!(
            "row-sum error {row_err:.1e}, equivariance error {equiv_err:.1e} over 50 permutations, memory length {memory} ok: {lengths_ok}, views ok: {views_ok}, exit codes {codes:?}"
        ),
    )
}

fn label_utilities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    let mut failures = Vec::new();
    for _ in 0..100 {
        let len = rng.random_range(1..=64);
        let decay = rng.random_range(0.0..=1.0);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fixed = EmaState::new(x.clone(), decay).unwrap().updated(&x).unwrap();
        if fixed.values().iter().zip(&x).any(|(a, b)| (a - b).abs() > 1e-12) {
            failures.push("ema fixed point");
        }
        let a = EmaState::new(x.clone(), decay).unwrap().updated(&c).unwrap();
        let b = EmaState::new(y.clone(), decay).unwrap().updated(&c).unwrap();
        let before = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        let after = a
            .values()
            .iter()
            .zip(b.values())
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        if after > decay * before + 1e-12 {
            failures.push("ema contraction");
        }
    }
    for _ in 0..100 {
        let views: Vec<AnnotatedView> = (0..rng.random_range(2..=12))
            .map(|_| {
                AnnotatedView::new(random_box(&mut rng, (0.0, 1.0), (0.1, 0.8)), rng.random_range(1.0..5.0)).unwrap()
            })
            .collect();
        let cfg = QualityGuidanceConfig::from_observed(&views).unwrap();
        let hi = views.iter().position(|v| v.score == cfg.s_hi()).unwrap();
        let lo = views.iter().position(|v| v.score == cfg.s_lo()).unwrap();
        if quality_guided_label(&views[hi].bbox, &views, &cfg).unwrap() != 1.0
            || quality_guided_label(&views[lo].bbox, &views, &cfg).unwrap() != 0.0
        {
            failures.push("quality endpoints");
        }
        let (alpha, beta) = (rng.random_range(0.1..10.0), rng.random_range(-20.0..20.0));
        let moved: Vec<AnnotatedView> = views
            .iter()
            .map(|v| AnnotatedView::new(v.bbox, alpha * v.score + beta).unwrap())
            .collect();
        let moved_cfg = QualityGuidanceConfig::new(alpha * cfg.s_lo() + beta, alpha * cfg.s_hi() + beta).unwrap();
        let probe = random_box(&mut rng, (0.0, 1.0), (0.1, 0.8));
        let l0 = quality_guided_label(&probe, &views, &cfg).unwrap();
        let l1 = quality_guided_label(&probe, &moved, &moved_cfg).unwrap();
        if (l0 - l1).abs() > 1e-9 {
            failures.push("quality affine invariance");
        }
    }
    for switch in [0u64, 1, 17, 5000, u64::MAX] {
        let s = LabelSchedule {
            switch_iteration: switch,
        };
        if s.strategy_for_iteration(switch) != LabelStrategy::SelfDistillation
            || (switch > 0 && s.strategy_for_iteration(switch - 1) != LabelStrategy::QualityGuidance)
        {
            failures.push("schedule boundary");
        }
    }
    failures.dedup();
    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            "ema, quality map and schedule properties hold".to_string()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("matching optimality", matching_optimality),
        ("geometry oracle", geometry_oracle),
        ("gradient check", gradient_check),
        ("loss identities", loss_identities),
        ("metrics fixtures", metrics_fixtures),
        ("monotonicity", monotonicity),
        ("dataset generator", dataset_generator),
        ("tinynet invariants", tinynet_invariants),
        ("label utilities", label_utilities),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {} {:<20} {} ({}; {:.2?})",
            i + 1,
            name,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
