//! Smooth confidence labels for predictions matched to padding.
//!
//! Two sources are supported. Quality guidance borrows the annotated score
//! of the most-overlapping labelled view and maps it linearly into `[0, 1]`.
//! Self-distillation reads the confidence an EMA teacher assigns to the same
//! query. Training starts with quality guidance and switches to
//! self-distillation at a fixed iteration.
//!
//! Nothing here runs a network: teacher confidences are plain inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, CompBox};
use crate::views::{AnnotatedView, PredictedView};

pub const DEFAULT_EMA_DECAY: f64 = 0.999;

/// Endpoints of the linear score-to-label map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityGuidanceConfig {
    s_lo: f64,
    s_hi: f64,
}

impl QualityGuidanceConfig {
    pub fn new(s_lo: f64, s_hi: f64) -> Result<Self> {
        if !(s_lo.is_finite() && s_hi.is_finite()) || s_hi <= s_lo {
            return Err(Error::Config(format!(
                "quality map endpoints must satisfy s_lo < s_hi, got [{s_lo}, {s_hi}]"
            )));
        }
        Ok(Self { s_lo, s_hi })
    }

    /// Endpoints from the observed score range of `views`.
    pub fn from_observed<'a>(views: impl IntoIterator<Item = &'a AnnotatedView>) -> Result<Self> {
        let (lo, hi) = views
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.score), hi.max(v.score))
            });
        Self::new(lo, hi)
    }

    pub fn s_lo(&self) -> f64 {
        self.s_lo
    }

    pub fn s_hi(&self) -> f64 {
        self.s_hi
    }

    /// `clamp((s - s_lo) / (s_hi - s_lo), 0, 1)`.
    pub fn map(&self, score: f64) -> f64 {
        ((score - self.s_lo) / (self.s_hi - self.s_lo)).clamp(0.0, 1.0)
    }
}

/// Soft label of `pred_box` from its maximum-IoU annotated neighbour.
/// Equal IoUs resolve to the lowest annotation index.
pub fn quality_guided_label(
    pred_box: &CompBox,
    annotated: &[AnnotatedView],
    cfg: &QualityGuidanceConfig,
) -> Result<f64> {
    let mut best: Option<(f64, &AnnotatedView)> = None;
    for view in annotated {
        if !view.score.is_finite() {
            return Err(Error::Numeric(format!("quality score {}", view.score)));
        }
        let overlap = iou(pred_box, &view.bbox);
        if best.is_none_or(|(b, _)| overlap > b) {
            best = Some((overlap, view));
        }
    }
    let (_, neighbour) = best.ok_or_else(|| Error::domain("quality guidance needs at least one annotated view"))?;
    Ok(cfg.map(neighbour.score))
}

/// Quality-guided labels for the predictions listed in `unmatched`.
pub fn quality_guided_labels(
    preds: &[PredictedView],
    unmatched: &[usize],
    annotated: &[AnnotatedView],
    cfg: &QualityGuidanceConfig,
) -> Result<BTreeMap<usize, f64>> {
    unmatched
        .iter()
        .map(|&i| {
            let pred = preds
                .get(i)
                .ok_or_else(|| Error::domain(format!("prediction index {i} out of range")))?;
            Ok((i, quality_guided_label(&pred.bbox, annotated, cfg)?))
        })
        .collect()
}

/// Exponential moving average of a flat parameter vector.
///
/// Updates take `&mut self`, so there is exactly one writer at a time;
/// [`EmaState::values`] or a clone gives a consistent snapshot between
/// updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaState {
    values: Vec<f64>,
    decay: f64,
}

impl EmaState {
    pub fn new(values: Vec<f64>, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::Config(format!("EMA decay must lie in [0, 1], got {decay}")));
        }
        Ok(Self { values, decay })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// `values = decay * values + (1 - decay) * current`.
    pub fn update(&mut self, current: &[f64]) -> Result<()> {
        if current.len() != self.values.len() {
            return Err(Error::shape(format!(
                "EMA holds {} values, update has {}",
                self.values.len(),
                current.len()
            )));
        }
        let d = self.decay;
        for (v, &c) in self.values.iter_mut().zip(current) {
            *v = d * *v + (1.0 - d) * c;
        }
        Ok(())
    }

    /// Non-mutating form of [`EmaState::update`].
    pub fn updated(&self, current: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.update(current)?;
        Ok(next)
    }
}

/// Teacher confidence of each unmatched query, keyed by query index.
pub fn self_distilled_labels(teacher_confidences: &[f64], unmatched: &[usize]) -> Result<BTreeMap<usize, f64>> {
    if let Some(c) = teacher_confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::domain(format!("teacher confidence {c} is outside [0, 1]")));
    }
    unmatched
        .iter()
        .map(|&i| {
            teacher_confidences
                .get(i)
                .map(|&c| (i, c))
                .ok_or_else(|| Error::domain(format!("query index {i} out of range")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelStrategy {
    QualityGuidance,
    SelfDistillation,
}

/// Quality guidance for iterations `< switch_iteration`, self-distillation
/// from then on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchedule {
    pub switch_iteration: u64,
}

impl LabelSchedule {
    pub fn strategy_for_iteration(&self, iter: u64) -> LabelStrategy {
        if iter < self.switch_iteration {
            LabelStrategy::QualityGuidance
        } else {
            LabelStrategy::SelfDistillation
        }
    }
}
