//! Turn full-image crop annotations into unbounded-composition samples.
//!
//! `cargo run --example uic_dataset [-- corpus.json]`
//!
//! With a path argument the synthetic corpus is also written as an
//! annotation file, ready for `unic-kit gen-uic --annotations corpus.json`.

use std::path::Path;

use unic_kit::datagen::{generate_dataset, synthetic_corpus, GenParams};
use unic_kit::io::{self, AnnotationFile};

fn main() -> unic_kit::Result<()> {
    let corpus = synthetic_corpus(200, 11);
    if let Some(path) = std::env::args().nth(1) {
        io::write_bytes(
            Path::new(&path),
            &io::to_json_bytes(&AnnotationFile::from_full_views(&corpus))?,
        )?;
        println!("wrote {} images to {path}", corpus.len());
    }

    let params = GenParams::default();
    let (samples, skipped) = generate_dataset(&corpus, &params, 42)?;
    println!("{} samples, {} skipped", samples.len(), skipped.len());

    let sample = &samples[0];
    let top = sample.top_view().expect("samples carry views");
    println!(
        "{}: initial view {:?}, top view {:?} is {:.1}% visible",
        sample.image_id,
        sample.init_view.coords(),
        sample.gt_views[top].bbox.params(),
        100.0 * sample.visible_fraction
    );
    let outside = sample.gt_views.iter().filter(|v| !v.bbox.within_unit_square()).count();
    println!(
        "{outside} of {} views reach outside the initial view",
        sample.gt_views.len()
    );

    let mean: f64 = samples.iter().map(|s| s.visible_fraction).sum::<f64>() / samples.len() as f64;
    println!("mean visible fraction {mean:.3} (window {:?})", params.visible_frac);
    Ok(())
}
