//! Acc_K/N, IoU and boundary displacement over a small evaluation set.
//!
//! `cargo run --example metrics`

use unic_kit::metrics::{evaluate, ImageAnnotations, ImagePredictions, MetricsConfig};
use unic_kit::{AnnotatedView, CompBox, PredictedView};

fn view(cx: f64, cy: f64, w: f64, h: f64, score: f64) -> unic_kit::Result<AnnotatedView> {
    AnnotatedView::new(CompBox::new(cx, cy, w, h)?, score)
}

fn pred(cx: f64, cy: f64, w: f64, h: f64, conf: f64) -> unic_kit::Result<PredictedView> {
    PredictedView::new(CompBox::new(cx, cy, w, h)?, conf)
}

fn main() -> unic_kit::Result<()> {
    let annotations = vec![ImageAnnotations {
        id: "street".into(),
        views: vec![
            view(0.5, 0.5, 1.2, 1.0, 4.4)?,
            view(0.9, 0.5, 0.9, 0.8, 3.8)?,
            view(0.3, 0.6, 0.7, 0.9, 3.1)?,
        ],
    }];
    let predictions = vec![ImagePredictions {
        id: "street".into(),
        views: vec![
            pred(0.52, 0.5, 1.18, 1.0, 0.92)?,
            pred(0.9, 0.52, 0.85, 0.8, 0.7)?,
            pred(0.1, 0.1, 0.3, 0.3, 0.2)?,
        ],
    }];
    let cfg = MetricsConfig {
        k_values: vec![1, 3],
        n_values: vec![1, 3],
        thresholds: vec![0.85, 0.9],
    };
    let report = evaluate(&annotations, &predictions, &cfg)?;
    for entry in &report.acc {
        println!("Acc {:<10} {:.4}", entry.key(), entry.value);
    }
    println!("mean IoU {:.4}, mean Disp {:.4}", report.mean_iou, report.mean_disp);
    Ok(())
}
