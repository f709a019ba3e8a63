//! Ground-truth padding, optimal one-to-one matching and the composite
//! set-prediction loss.
//!
//! The network emits `N` views while an image carries `N_gt <= N` annotated
//! ones. The ground truth is padded with empty slots up to `N`, every
//! prediction is paired with exactly one slot by minimizing the summed
//! [`pair_cost`], and the loss is evaluated on that pairing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::geometry::CompBox;
use crate::losses::{pair_breakdown, pair_cost, LossBreakdown, LossWeights};
use crate::views::{AnnotatedView, PredictedView};

/// Default number of prediction slots.
pub const DEFAULT_SLOTS: usize = 90;

/// One entry of the padded ground-truth set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GtSlot {
    /// A real view (label 1), optionally with its annotated quality.
    Valid { bbox: CompBox, quality: Option<f64> },
    /// Padding (label 0).
    Empty,
}

impl GtSlot {
    pub fn valid(bbox: CompBox, quality: Option<f64>) -> Self {
        GtSlot::Valid { bbox, quality }
    }

    /// Validity label: 1 for a real view, 0 for padding.
    pub fn label(&self) -> f64 {
        match self {
            GtSlot::Valid { .. } => 1.0,
            GtSlot::Empty => 0.0,
        }
    }

    pub fn bbox(&self) -> Option<&CompBox> {
        match self {
            GtSlot::Valid { bbox, .. } => Some(bbox),
            GtSlot::Empty => None,
        }
    }

    pub fn quality(&self) -> Option<f64> {
        match self {
            GtSlot::Valid { quality, .. } => *quality,
            GtSlot::Empty => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, GtSlot::Empty)
    }
}

/// The optimal pairing: `sigma[prediction] = slot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchAssignment {
    pub sigma: Vec<usize>,
    pub total_cost: f64,
}

impl MatchAssignment {
    /// Predictions whose matched slot is padding.
    pub fn unmatched(&self, slots: &[GtSlot]) -> Vec<usize> {
        self.sigma
            .iter()
            .enumerate()
            .filter(|(_, &s)| slots[s].is_empty())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Pads `gt` with empty slots up to `n`, keeping annotation order.
pub fn pad_ground_truth(gt: &[AnnotatedView], n: usize) -> Result<Vec<GtSlot>> {
    if n < gt.len() {
        return Err(Error::Capacity {
            have: gt.len(),
            slots: n,
        });
    }
    let mut slots: Vec<GtSlot> = gt.iter().map(|v| GtSlot::valid(v.bbox, Some(v.score))).collect();
    slots.resize(n, GtSlot::Empty);
    Ok(slots)
}

fn check_sizes(preds: &[PredictedView], slots: &[GtSlot]) -> Result<()> {
    if preds.len() != slots.len() {
        return Err(Error::shape(format!(
            "{} predictions cannot be matched one-to-one with {} slots",
            preds.len(),
            slots.len()
        )));
    }
    Ok(())
}

/// `cost[i][j] = pair_cost(preds[i], slots[j])`.
pub fn cost_matrix(preds: &[PredictedView], slots: &[GtSlot], w: &LossWeights) -> Result<Vec<Vec<f64>>> {
    preds
        .iter()
        .map(|p| slots.iter().map(|s| pair_cost(p, s, w)).collect())
        .collect()
}

/// Minimum-cost bijection between predictions and padded slots.
///
/// Ties resolve to the lexicographically smallest `sigma`.
pub fn optimal_assignment(preds: &[PredictedView], slots: &[GtSlot], w: &LossWeights) -> Result<MatchAssignment> {
    check_sizes(preds, slots)?;
    let costs = cost_matrix(preds, slots, w)?;
    let sigma = assignment::solve_square(&costs)?;
    let total_cost = assignment::assignment_cost(&costs, &sigma);
    Ok(MatchAssignment { sigma, total_cost })
}

/// Composite loss over an assignment.
///
/// Geometry terms only count for predictions matched to real views. The
/// focal term counts for every prediction with target 1 on real views and 0
/// on padding, or the smooth label from `soft_labels` (keyed by prediction
/// index) when one is supplied for a padded match.
pub fn composite_loss(
    preds: &[PredictedView],
    slots: &[GtSlot],
    assignment: &MatchAssignment,
    w: &LossWeights,
    soft_labels: Option<&BTreeMap<usize, f64>>,
) -> Result<LossBreakdown> {
    check_sizes(preds, slots)?;
    if assignment.sigma.len() != preds.len() {
        return Err(Error::shape(format!(
            "assignment covers {} predictions, expected {}",
            assignment.sigma.len(),
            preds.len()
        )));
    }
    let mut seen = vec![false; slots.len()];
    for &s in &assignment.sigma {
        if s >= slots.len() || std::mem::replace(&mut seen[s], true) {
            return Err(Error::domain(format!(
                "assignment {:?} is not a permutation",
                assignment.sigma
            )));
        }
    }

    let mut acc = LossBreakdown::default();
    for (i, (pred, &s)) in preds.iter().zip(&assignment.sigma).enumerate() {
        let slot = &slots[s];
        let target = match slot {
            GtSlot::Empty => soft_labels.and_then(|m| m.get(&i).copied()),
            GtSlot::Valid { .. } => None,
        };
        acc.accumulate(&pair_breakdown(pred, slot, w, target)?, w);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::focal_loss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cb(cx: f64, cy: f64, w: f64, h: f64) -> CompBox {
        CompBox::new(cx, cy, w, h).unwrap()
    }

    fn av(b: CompBox, s: f64) -> AnnotatedView {
        AnnotatedView::new(b, s).unwrap()
    }

    fn pv(b: CompBox, c: f64) -> PredictedView {
        PredictedView::new(b, c).unwrap()
    }

    #[test]
    fn padding_examples() {
        let g = [av(cb(0.5, 0.5, 0.3, 0.3), 4.0), av(cb(1.1, 0.2, 0.5, 0.4), 3.5)];
        let slots = pad_ground_truth(&g, 4).unwrap();
        assert_eq!(
            slots.iter().map(GtSlot::label).collect::<Vec<_>>(),
            vec![1.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(slots[0].bbox(), Some(&g[0].bbox));
        assert_eq!(slots[1].quality(), Some(3.5));
        assert!(slots[3].bbox().is_none() && slots[3].quality().is_none());

        assert!(pad_ground_truth(&[], 3).unwrap().iter().all(GtSlot::is_empty));
        assert_eq!(pad_ground_truth(&g, 2).unwrap().len(), 2);
        assert!(matches!(
            pad_ground_truth(&g, 1),
            Err(Error::Capacity { have: 2, slots: 1 })
        ));
    }

    #[test]
    fn single_slot_assignment() {
        let w = LossWeights::default();
        let a = optimal_assignment(&[pv(cb(0.5, 0.5, 0.2, 0.2), 0.3)], &[GtSlot::Empty], &w).unwrap();
        assert_eq!(a.sigma, vec![0]);
    }

    #[test]
    fn exact_predictions_pair_with_their_views() {
        let w = LossWeights::default();
        let g1 = cb(0.2, 0.3, 0.3, 0.3);
        let g2 = cb(0.9, 0.7, 0.5, 0.4);
        let slots = vec![GtSlot::valid(g1, None), GtSlot::valid(g2, None)];
        let preds = vec![pv(g2, 1.0), pv(g1, 1.0)];
        let a = optimal_assignment(&preds, &slots, &w).unwrap();
        assert_eq!(a.sigma, vec![1, 0]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn size_mismatch_is_a_shape_error() {
        let w = LossWeights::default();
        let r = optimal_assignment(&[pv(cb(0.5, 0.5, 0.2, 0.2), 0.3)], &[GtSlot::Empty, GtSlot::Empty], &w);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn empty_slots_fill_lowest_indices_first() {
        let w = LossWeights::default();
        let preds: Vec<_> = (0..4).map(|i| pv(cb(0.1 * i as f64, 0.5, 0.2, 0.2), 0.2)).collect();
        let slots = vec![GtSlot::Empty; 4];
        let a = optimal_assignment(&preds, &slots, &w).unwrap();
        assert_eq!(a.sigma, vec![0, 1, 2, 3]);
    }

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let w = LossWeights::default();
        let gt = [av(cb(0.3, 0.4, 0.5, 0.6), 1.0), av(cb(1.2, -0.1, 0.4, 0.4), 2.0)];
        let slots = pad_ground_truth(&gt, 4).unwrap();
        let preds = vec![
            pv(cb(0.0, 0.0, 0.1, 0.1), 0.0),
            pv(gt[1].bbox, 1.0),
            pv(gt[0].bbox, 1.0),
            pv(cb(0.7, 0.7, 0.1, 0.1), 0.0),
        ];
        let a = optimal_assignment(&preds, &slots, &w).unwrap();
        assert_eq!(a.total_cost, 0.0);
        let loss = composite_loss(&preds, &slots, &a, &w, None).unwrap();
        assert_eq!(loss, LossBreakdown::default());
    }

    #[test]
    fn all_empty_slots_leave_only_focal() {
        let w = LossWeights::default();
        let preds: Vec<_> = [0.1, 0.6, 0.35]
            .iter()
            .map(|&c| pv(cb(0.5, 0.5, 0.2, 0.2), c))
            .collect();
        let slots = vec![GtSlot::Empty; 3];
        let a = optimal_assignment(&preds, &slots, &w).unwrap();
        let loss = composite_loss(&preds, &slots, &a, &w, None).unwrap();
        assert_eq!(loss.reg, 0.0);
        assert_eq!(loss.giou, 0.0);
        let focal: f64 = preds
            .iter()
            .map(|p| focal_loss(p.confidence(), 0.0, 2.0).unwrap())
            .sum();
        assert!((loss.total - w.lambda_focal * focal).abs() < 1e-12);
    }

    #[test]
    fn composite_loss_recomputes_from_pair_costs() {
        // N = 4, N_gt = 2, hand-set values
        let w = LossWeights::new(1.5, 3.0, 2.0).unwrap();
        let gt = [av(cb(0.5, 0.5, 0.6, 0.4), 3.0), av(cb(1.3, 0.2, 0.5, 0.5), 2.0)];
        let slots = pad_ground_truth(&gt, 4).unwrap();
        let preds = vec![
            pv(cb(0.55, 0.45, 0.5, 0.5), 0.8),
            pv(cb(1.1, 0.1, 0.4, 0.6), 0.6),
            pv(cb(-0.2, 0.9, 0.3, 0.3), 0.3),
            pv(cb(0.4, 0.4, 0.2, 0.2), 0.1),
        ];
        let a = optimal_assignment(&preds, &slots, &w).unwrap();
        let loss = composite_loss(&preds, &slots, &a, &w, None).unwrap();
        let recomputed: f64 = a
            .sigma
            .iter()
            .enumerate()
            .map(|(i, &s)| pair_cost(&preds[i], &slots[s], &w).unwrap())
            .sum();
        assert!((loss.total - recomputed).abs() < 1e-12);
        assert!((a.total_cost - recomputed).abs() < 1e-12);
        assert_eq!(a.sigma[0], 0);
        assert_eq!(a.sigma[1], 1);
    }

    #[test]
    fn soft_labels_replace_padding_targets() {
        let w = LossWeights::default();
        let preds = vec![pv(cb(0.5, 0.5, 0.2, 0.2), 0.4)];
        let slots = vec![GtSlot::Empty];
        let a = optimal_assignment(&preds, &slots, &w).unwrap();
        let labels = BTreeMap::from([(0, 0.4)]);
        let soft = composite_loss(&preds, &slots, &a, &w, Some(&labels)).unwrap();
        assert_eq!(soft.total, 0.0);
        let hard = composite_loss(&preds, &slots, &a, &w, None).unwrap();
        assert!(hard.total > 0.0);
    }

    #[test]
    fn rejects_non_permutation() {
        let w = LossWeights::default();
        let preds = vec![pv(cb(0.5, 0.5, 0.2, 0.2), 0.4); 2];
        let slots = vec![GtSlot::Empty; 2];
        let bad = MatchAssignment {
            sigma: vec![0, 0],
            total_cost: 0.0,
        };
        assert!(composite_loss(&preds, &slots, &bad, &w, None).is_err());
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, n_gt: usize) -> (Vec<PredictedView>, Vec<GtSlot>) {
        let gt: Vec<_> = (0..n_gt)
            .map(|_| {
                av(
                    cb(
                        rng.random_range(-0.5..1.5),
                        rng.random_range(-0.5..1.5),
                        rng.random_range(0.1..1.0),
                        rng.random_range(0.1..1.0),
                    ),
                    rng.random_range(1.0..5.0),
                )
            })
            .collect();
        let preds = (0..n)
            .map(|_| {
                pv(
                    cb(
                        rng.random_range(-0.5..1.5),
                        rng.random_range(-0.5..1.5),
                        rng.random_range(0.1..1.0),
                        rng.random_range(0.1..1.0),
                    ),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        (preds, pad_ground_truth(&gt, n).unwrap())
    }

    #[test]
    fn optimum_restricted_to_valid_slots_matches_rectangular_solve() {
        let w = LossWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let n_gt = rng.random_range(1..n);
            let (preds, slots) = random_instance(&mut rng, n, n_gt);
            let full = optimal_assignment(&preds, &slots, &w).unwrap();

            // Relative to sending every prediction to padding, taking real
            // view j with prediction i changes the cost by c(i, j) - c(i, ∅).
            let empty_cost: Vec<f64> = preds
                .iter()
                .map(|p| pair_cost(p, &GtSlot::Empty, &w).unwrap())
                .collect();
            let rect: Vec<Vec<f64>> = (0..n_gt)
                .map(|j| {
                    (0..n)
                        .map(|i| pair_cost(&preds[i], &slots[j], &w).unwrap() - empty_cost[i])
                        .collect()
                })
                .collect();
            let gt_to_pred = assignment::solve_rectangular(&rect).unwrap();
            for (j, &i) in gt_to_pred.iter().enumerate() {
                assert_eq!(full.sigma[i], j);
            }
        }
    }

    #[test]
    fn loss_is_invariant_to_permuting_padding() {
        let w = LossWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let (preds, slots) = random_instance(&mut rng, 6, 2);
            let a = optimal_assignment(&preds, &slots, &w).unwrap();
            let base = composite_loss(&preds, &slots, &a, &w, None).unwrap();
            // rotate which padded slot each unmatched prediction holds
            let pads: Vec<usize> = a.sigma.iter().copied().filter(|&s| slots[s].is_empty()).collect();
            let mut rotated = a.clone();
            let mut k = 0;
            for s in rotated.sigma.iter_mut() {
                if slots[*s].is_empty() {
                    *s = pads[(k + 1) % pads.len()];
                    k += 1;
                }
            }
            let moved = composite_loss(&preds, &slots, &rotated, &w, None).unwrap();
            assert_eq!(base, moved);
        }
    }
}
