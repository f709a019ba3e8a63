//! Pad ground truth with empty slots, match predictions to it and break the
//! loss into its terms.
//!
//! `cargo run --example set_matching`

use unic_kit::set_match::{composite_loss, optimal_assignment, pad_ground_truth};
use unic_kit::{AnnotatedView, CompBox, LossWeights, PredictedView};

fn main() -> unic_kit::Result<()> {
    let gt = vec![
        AnnotatedView::new(CompBox::new(0.45, 0.5, 0.7, 0.6)?, 4.1)?,
        AnnotatedView::new(CompBox::new(1.05, 0.4, 0.6, 0.7)?, 3.3)?,
    ];
    let preds = vec![
        PredictedView::new(CompBox::new(0.2, 0.2, 0.2, 0.2)?, 0.15)?,
        PredictedView::new(CompBox::new(1.0, 0.42, 0.55, 0.7)?, 0.8)?,
        PredictedView::new(CompBox::new(0.5, 0.5, 0.7, 0.55)?, 0.9)?,
        PredictedView::new(CompBox::new(0.8, 0.9, 0.3, 0.2)?, 0.3)?,
    ];

    let weights = LossWeights::default();
    let slots = pad_ground_truth(&gt, preds.len())?;
    let assignment = optimal_assignment(&preds, &slots, &weights)?;
    for (i, &s) in assignment.sigma.iter().enumerate() {
        let target = if slots[s].is_empty() {
            "empty".to_string()
        } else {
            format!("view {s}")
        };
        println!("prediction {i} -> {target}");
    }
    println!("unmatched predictions: {:?}", assignment.unmatched(&slots));

    let loss = composite_loss(&preds, &slots, &assignment, &weights, None)?;
    println!(
        "reg {:.4}  giou {:.4}  focal {:.4}  total {:.4} (matching cost {:.4})",
        loss.reg, loss.giou, loss.focal, loss.total, assignment.total_cost
    );
    Ok(())
}
