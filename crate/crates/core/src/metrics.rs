//! Composition evaluation: `Acc_K/N`, boundary displacement and IoU.
//!
//! `Acc_K/N` counts, over the `K` most confident predictions of each image,
//! how many reach IoU `>= eps` with at least one of the `N` best-scored
//! annotated views, normalized by `T * K`. A view hit by two predictions is
//! counted twice. Images with fewer than `N` views use all of them.
//!
//! Mean IoU and mean displacement pair the top-confidence prediction with
//! the top-quality view of each image.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, CompBox};
use crate::views::{rank_by_confidence, rank_by_score, AnnotatedView, PredictedView};

/// Annotated views of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotations {
    pub id: String,
    pub views: Vec<AnnotatedView>,
}

/// Predicted views of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePredictions {
    pub id: String,
    pub views: Vec<PredictedView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub k_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub thresholds: Vec<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 5],
            n_values: vec![5, 10],
            thresholds: vec![0.85, 0.90],
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.n_values.is_empty() || self.thresholds.is_empty() {
            return Err(Error::Config("K, N and threshold lists must be non-empty".into()));
        }
        if self.k_values.contains(&0) || self.n_values.contains(&0) {
            return Err(Error::Config("K and N must be at least 1".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Config(format!("threshold {t} is outside (0, 1]")));
        }
        Ok(())
    }
}

/// One `Acc_K/N` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccEntry {
    pub k: usize,
    pub n: usize,
    pub eps: f64,
    pub value: f64,
}

impl AccEntry {
    /// Table key, `"K/N@eps"`.
    pub fn key(&self) -> String {
        format!("{}/{}@{}", self.k, self.n, self.eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// One entry per `(K, N, eps)` in config order.
    pub acc: Vec<AccEntry>,
    pub mean_iou: f64,
    pub mean_disp: f64,
    pub image_count: usize,
}

impl MetricsReport {
    pub fn acc(&self, k: usize, n: usize, eps: f64) -> Option<f64> {
        self.acc
            .iter()
            .find(|e| e.k == k && e.n == n && e.eps == eps)
            .map(|e| e.value)
    }
}

/// Mean absolute difference of the four normalized boundaries
/// (left, right, top, bottom).
pub fn disp(pred: &CompBox, gt: &CompBox) -> f64 {
    let (a, b) = (pred.to_corners(), gt.to_corners());
    ((a.x0() - b.x0()).abs() + (a.x1() - b.x1()).abs() + (a.y0() - b.y0()).abs() + (a.y1() - b.y1()).abs()) / 4.0
}

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Predictions and annotations of one image, borrowed for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalImage<'a> {
    pub id: &'a str,
    pub preds: &'a [PredictedView],
    pub gts: &'a [AnnotatedView],
}

/// Per-image quantities everything else is aggregated from.
struct ImageStats {
    /// `best_iou[n_idx][k]`: max IoU of the k-th most confident prediction
    /// against the top-`n_values[n_idx]` views.
    best_iou: Vec<Vec<f64>>,
    top1_iou: f64,
    top1_disp: f64,
}

fn image_stats(img: &EvalImage<'_>, max_k: usize, n_values: &[usize]) -> Result<ImageStats> {
    if img.preds.len() < max_k {
        return Err(Error::Evaluation(format!(
            "image `{}` has {} predictions, K = {max_k} required",
            img.id,
            img.preds.len()
        )));
    }
    if img.gts.is_empty() {
        return Err(Error::Evaluation(format!("image `{}` has no annotated views", img.id)));
    }
    let pred_order = rank_by_confidence(img.preds);
    let gt_order = rank_by_score(img.gts);

    let best_iou = n_values
        .iter()
        .map(|&n| {
            let candidates = &gt_order[..n.min(gt_order.len())];
            pred_order[..max_k]
                .iter()
                .map(|&p| {
                    candidates
                        .iter()
                        .map(|&g| iou(&img.preds[p].bbox, &img.gts[g].bbox))
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();

    let top_pred = &img.preds[pred_order[0]].bbox;
    let top_gt = &img.gts[gt_order[0]].bbox;
    Ok(ImageStats {
        best_iou,
        top1_iou: iou(top_pred, top_gt),
        top1_disp: disp(top_pred, top_gt),
    })
}

/// Stats for every image, in the order given.
fn collect_stats(images: &[EvalImage<'_>], max_k: usize, n_values: &[usize]) -> Result<Vec<ImageStats>> {
    images.par_iter().map(|img| image_stats(img, max_k, n_values)).collect()
}

fn acc_from_stats(stats: &[ImageStats], n_idx: usize, k: usize, eps: f64) -> f64 {
    let hits: usize = stats
        .iter()
        .map(|s| s.best_iou[n_idx][..k].iter().filter(|&&v| v >= eps).count())
        .sum();
    hits as f64 / (stats.len() * k) as f64
}

/// `Acc_K/N` at threshold `eps` over `images`.
pub fn acc_k_n(images: &[EvalImage<'_>], k: usize, n: usize, eps: f64) -> Result<f64> {
    MetricsConfig {
        k_values: vec![k],
        n_values: vec![n],
        thresholds: vec![eps],
    }
    .validate()?;
    if images.is_empty() {
        return Err(Error::Evaluation("no images to evaluate".into()));
    }
    let stats = collect_stats(images, k, &[n])?;
    Ok(acc_from_stats(&stats, 0, k, eps))
}

/// Full evaluation of `predictions` against `annotations`.
///
/// The evaluated images are those present in `predictions`; every one of
/// them must have annotations. Images are processed in id order so the
/// result does not depend on input order.
pub fn evaluate(
    annotations: &[ImageAnnotations],
    predictions: &[ImagePredictions],
    cfg: &MetricsConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    if predictions.is_empty() {
        return Err(Error::Evaluation("prediction set is empty".into()));
    }
    let by_id: HashMap<&str, &ImageAnnotations> = annotations.iter().map(|a| (a.id.as_str(), a)).collect();

    let mut preds: Vec<&ImagePredictions> = predictions.iter().collect();
    preds.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = preds.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::Evaluation(format!(
            "image `{}` has predictions listed twice",
            w[0].id
        )));
    }

    let images = preds
        .iter()
        .map(|p| {
            let ann = by_id.get(p.id.as_str()).ok_or_else(|| Error::Reference(p.id.clone()))?;
            Ok(EvalImage {
                id: &p.id,
                preds: &p.views,
                gts: &ann.views,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_k = *cfg.k_values.iter().max().expect("validated non-empty");
    let stats = collect_stats(&images, max_k, &cfg.n_values)?;

    let mut acc = Vec::new();
    for &k in &cfg.k_values {
        for (n_idx, &n) in cfg.n_values.iter().enumerate() {
            for &eps in &cfg.thresholds {
                acc.push(AccEntry {
                    k,
                    n,
                    eps,
                    value: acc_from_stats(&stats, n_idx, k, eps),
                });
            }
        }
    }

    let t = stats.len() as f64;
    let ious: Vec<f64> = stats.iter().map(|s| s.top1_iou).collect();
    let disps: Vec<f64> = stats.iter().map(|s| s.top1_disp).collect();
    Ok(MetricsReport {
        acc,
        mean_iou: pairwise_sum(&ious) / t,
        mean_disp: pairwise_sum(&disps) / t,
        image_count: stats.len(),
    })
}
