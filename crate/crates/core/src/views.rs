//! Annotated and predicted views.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CompBox;

/// A ground-truth view with its annotated quality score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedView {
    #[serde(rename = "box")]
    pub bbox: CompBox,
    pub score: f64,
}

impl AnnotatedView {
    pub fn new(bbox: CompBox, score: f64) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::Numeric(format!("quality score {score}")));
        }
        Ok(Self { bbox, score })
    }
}

/// A predicted view with its confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrediction")]
pub struct PredictedView {
    #[serde(rename = "box")]
    pub bbox: CompBox,
    confidence: f64,
}

impl PredictedView {
    pub fn new(bbox: CompBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::domain(format!("confidence {confidence} is outside [0, 1]")));
        }
        Ok(Self { bbox, confidence })
    }

    #[inline]
    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

#[derive(Deserialize)]
struct RawPrediction {
    #[serde(rename = "box")]
    bbox: CompBox,
    confidence: f64,
}

impl TryFrom<RawPrediction> for PredictedView {
    type Error = Error;

    fn try_from(raw: RawPrediction) -> Result<Self> {
        PredictedView::new(raw.bbox, raw.confidence)
    }
}

/// Indices of `items` ordered by `key` descending; equal keys keep the lower
/// index first.
pub(crate) fn ranked_desc<T>(items: &[T], key: impl Fn(&T) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| key(&items[b]).total_cmp(&key(&items[a])).then(a.cmp(&b)));
    order
}

/// Prediction indices sorted by confidence, highest first.
pub fn rank_by_confidence(preds: &[PredictedView]) -> Vec<usize> {
    ranked_desc(preds, PredictedView::confidence)
}

/// Annotation indices sorted by quality score, highest first.
pub fn rank_by_score(views: &[AnnotatedView]) -> Vec<usize> {
    ranked_desc(views, |v| v.score)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_range_enforced() {
        let b = CompBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        assert!(PredictedView::new(b, 1.5).is_err());
        assert!(PredictedView::new(b, f64::NAN).is_err());
        assert!(serde_json::from_str::<PredictedView>(r#"{"box":[0.5,0.5,0.2,0.2],"confidence":-0.1}"#).is_err());
        let ok: PredictedView = serde_json::from_str(r#"{"box":[0.5,0.5,0.2,0.2],"confidence":0.25}"#).unwrap();
        assert_eq!(ok.confidence(), 0.25);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let b = CompBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        let preds: Vec<_> = [0.3, 0.9, 0.3, 0.9]
            .iter()
            .map(|&c| PredictedView::new(b, c).unwrap())
            .collect();
        assert_eq!(rank_by_confidence(&preds), vec![1, 3, 0, 2]);
    }
}
