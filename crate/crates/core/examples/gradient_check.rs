//! Analytic gradients of the pair cost against central differences.
//!
//! `cargo run --example gradient_check`

use unic_kit::losses::{loss_gradients, pair_cost};
use unic_kit::{CompBox, GtSlot, LossWeights, PredictedView};

fn main() -> unic_kit::Result<()> {
    let w = LossWeights::default();
    let slot = GtSlot::valid(CompBox::new(0.6, 0.45, 0.7, 0.5)?, None);
    let params = [0.52, 0.4, 0.55, 0.62];
    let conf = 0.35;
    let pred = PredictedView::new(CompBox::new(params[0], params[1], params[2], params[3])?, conf)?;
    let grad = loss_gradients(&pred, &slot, &w)?;

    let cost = |p: [f64; 4], c: f64| -> unic_kit::Result<f64> {
        pair_cost(
            &PredictedView::new(CompBox::new(p[0], p[1], p[2], p[3])?, c)?,
            &slot,
            &w,
        )
    };
    let h = 1e-5;
    let names = ["cx", "cy", "w", "h"];
    for (k, name) in names.iter().enumerate() {
        let (mut up, mut down) = (params, params);
        up[k] += h;
        down[k] -= h;
        let numeric = (cost(up, conf)? - cost(down, conf)?) / (2.0 * h);
        println!("d/d{name:<10} analytic {:+.8}  numeric {numeric:+.8}", grad.d_box[k]);
    }
    let numeric = (cost(params, conf + h)? - cost(params, conf - h)?) / (2.0 * h);
    println!(
        "d/dconfidence analytic {:+.8}  numeric {numeric:+.8}",
        grad.d_confidence
    );
    println!("at a kink: {}", grad.at_kink);
    Ok(())
}
