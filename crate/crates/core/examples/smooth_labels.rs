//! Soft confidence targets for predictions that were matched to padding.
//!
//! `cargo run --example smooth_labels`

use std::collections::BTreeMap;

use unic_kit::labels::{
    quality_guided_labels, self_distilled_labels, EmaState, LabelSchedule, LabelStrategy, QualityGuidanceConfig,
    DEFAULT_EMA_DECAY,
};
use unic_kit::set_match::{composite_loss, optimal_assignment, pad_ground_truth};
use unic_kit::{AnnotatedView, CompBox, LossWeights, PredictedView};

fn main() -> unic_kit::Result<()> {
    // Unmatched predictions near good crops should not be pushed to zero.
    let annotated = vec![
        AnnotatedView::new(CompBox::new(0.5, 0.5, 0.8, 0.8)?, 4.6)?,
        AnnotatedView::new(CompBox::new(0.3, 0.6, 0.5, 0.6)?, 3.2)?,
        AnnotatedView::new(CompBox::new(0.8, 0.3, 0.4, 0.4)?, 1.4)?,
    ];
    let gt = &annotated[..1];
    let preds = vec![
        PredictedView::new(CompBox::new(0.5, 0.5, 0.8, 0.8)?, 0.9)?,
        PredictedView::new(CompBox::new(0.32, 0.58, 0.5, 0.6)?, 0.4)?,
        PredictedView::new(CompBox::new(0.78, 0.3, 0.4, 0.4)?, 0.4)?,
    ];
    let weights = LossWeights::default();
    let slots = pad_ground_truth(gt, preds.len())?;
    let assignment = optimal_assignment(&preds, &slots, &weights)?;
    let unmatched = assignment.unmatched(&slots);

    let cfg = QualityGuidanceConfig::from_observed(&annotated)?;
    let quality = quality_guided_labels(&preds, &unmatched, &annotated, &cfg)?;
    println!("quality-guided labels: {quality:?}");

    let hard = composite_loss(&preds, &slots, &assignment, &weights, None)?;
    let soft = composite_loss(&preds, &slots, &assignment, &weights, Some(&quality))?;
    println!(
        "focal term with hard labels {:.4}, with smooth labels {:.4}",
        hard.focal, soft.focal
    );

    // Later in training the teacher's own confidences take over.
    let mut teacher = EmaState::new(vec![0.5; preds.len()], DEFAULT_EMA_DECAY)?;
    let student: Vec<f64> = preds.iter().map(PredictedView::confidence).collect();
    for _ in 0..2000 {
        teacher.update(&student)?;
    }
    let distilled: BTreeMap<usize, f64> = self_distilled_labels(teacher.values(), &unmatched)?;
    println!("self-distilled labels after 2000 EMA steps: {distilled:?}");

    let schedule = LabelSchedule {
        switch_iteration: 10_000,
    };
    for iter in [0, 9_999, 10_000] {
        let s = schedule.strategy_for_iteration(iter);
        let name = if s == LabelStrategy::QualityGuidance {
            "quality guidance"
        } else {
            "self-distillation"
        };
        println!("iteration {iter:>6}: {name}");
    }
    Ok(())
}
