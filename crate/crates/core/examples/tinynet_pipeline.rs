//! Seeded forward pass from a feature grid to predicted views, then straight
//! into matching.
//!
//! `cargo run --release --example tinynet_pipeline`

use std::time::Instant;

use unic_kit::set_match::{optimal_assignment, pad_ground_truth};
use unic_kit::tinynet::{forward, synth_features, ModelWeights, Stage, TinyNetConfig};
use unic_kit::{AnnotatedView, CompBox, LossWeights};

fn main() -> unic_kit::Result<()> {
    let cfg = TinyNetConfig::default();
    let start = Instant::now();
    let weights = ModelWeights::seeded(&cfg, 7)?;
    let grid = synth_features(256, 384, 7)?;
    let out = forward(&grid, &weights, true)?;
    println!(
        "features {}x{}x{} -> {} visible tokens, {} padded tokens, {} views in {:.2?}",
        grid.channels(),
        grid.height(),
        grid.width(),
        out.z_vis.nrows(),
        out.z_pad.nrows(),
        out.predictions.len(),
        start.elapsed()
    );
    for stage in [Stage::FemCross, Stage::DecoderCross] {
        for r in out.trace.stage(stage) {
            println!(
                "{stage:?} layer {}: {} queries over {} keys",
                r.layer, r.query_len, r.key_len
            );
        }
    }
    println!("largest attention row-sum error {:.1e}", out.trace.max_row_sum_error());

    let gt = vec![
        AnnotatedView::new(CompBox::new(0.5, 0.5, 0.7, 0.8)?, 4.0)?,
        AnnotatedView::new(CompBox::new(1.1, 0.4, 0.6, 0.6)?, 3.0)?,
    ];
    let slots = pad_ground_truth(&gt, out.predictions.len())?;
    let assignment = optimal_assignment(&out.predictions, &slots, &LossWeights::default())?;
    println!(
        "untrained network's matching cost against two views: {:.4}",
        assignment.total_cost
    );
    Ok(())
}
