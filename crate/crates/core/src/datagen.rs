//! Unbounded-composition samples from densely annotated crop datasets.
//!
//! Source datasets annotate many in-frame crops of a full image, each with
//! a quality score. A sample is made by pretending the camera only saw a
//! smaller *initial view* of that image: every annotated crop is re-expressed
//! in the initial view's coordinates, where the good compositions now reach
//! past its borders.
//!
//! Generation rule: the initial view is an aspect-preserving sub-window of
//! relative scale `s ∈ [s_min, s_max]`, placed uniformly at random inside
//! the full image. A placement is accepted when the fraction of the
//! top-quality view's area that stays visible lies in `[f_lo, f_hi]`;
//! otherwise it is redrawn, up to `max_attempts` times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{CompBox, CornerBox};
use crate::views::{rank_by_score, AnnotatedView};

pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// How far a view must reach past the initial view for a generated sample
/// to count as unbounded. Keeps the property intact after output rounding.
pub const OUTSIDE_MARGIN: f64 = 1e-7;

/// A full image with its in-frame annotated crops (full-image-normalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullViewAnnotation {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub views: Vec<AnnotatedView>,
}

impl FullViewAnnotation {
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::Schema(format!("image `{}` has no views", self.image_id)));
        }
        if let Some(i) = self.views.iter().position(|v| !v.bbox.within_unit_square()) {
            return Err(Error::Schema(format!(
                "image `{}` view {i}: full-image boxes must lie within [0, 1]^2",
                self.image_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Relative side length of the initial view, `[s_min, s_max] ⊂ (0, 1)`.
    pub scale_range: (f64, f64),
    /// Accepted visible fraction of the top view, `[f_lo, f_hi] ⊂ (0, 1)`.
    pub visible_frac: (f64, f64),
    pub max_attempts: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            scale_range: (0.5, 0.8),
            visible_frac: (0.5, 0.9),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |(lo, hi): (f64, f64)| lo > 0.0 && hi < 1.0 && lo <= hi;
        if !open_unit(self.scale_range) {
            return Err(Error::Config(format!(
                "scale range {:?} must satisfy 0 < lo <= hi < 1",
                self.scale_range
            )));
        }
        if !open_unit(self.visible_frac) {
            return Err(Error::Config(format!(
                "visible-fraction range {:?} must satisfy 0 < lo <= hi < 1",
                self.visible_frac
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

/// One unbounded-composition sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UicSample {
    pub image_id: String,
    /// Initial view in full-image-normalized corners.
    pub init_view: CornerBox,
    /// Visible fraction of the top-quality view.
    pub visible_fraction: f64,
    /// Annotated views in initial-view-normalized coordinates.
    pub gt_views: Vec<AnnotatedView>,
}

impl UicSample {
    /// Index of the highest-scored view (lowest index on ties).
    pub fn top_view(&self) -> Option<usize> {
        rank_by_score(&self.gt_views).first().copied()
    }

    /// Whether at least one view reaches outside the initial view.
    pub fn is_unbounded(&self) -> bool {
        self.gt_views.iter().any(|v| !v.bbox.within_unit_square())
    }

    /// Whether some view extends more than `margin` past the initial view.
    pub fn reaches_outside(&self, margin: f64) -> bool {
        self.gt_views.iter().any(|v| {
            let c = v.bbox.to_corners();
            c.x0() < -margin || c.y0() < -margin || c.x1() > 1.0 + margin || c.y1() > 1.0 + margin
        })
    }
}

/// Maps a full-image box into the coordinates of `init`.
pub fn renormalize_box(b: &CompBox, init: &CornerBox) -> CompBox {
    let (iw, ih) = (init.width(), init.height());
    CompBox::new(
        (b.cx() - init.x0()) / iw,
        (b.cy() - init.y0()) / ih,
        b.w() / iw,
        b.h() / ih,
    )
    .expect("positive scale keeps the box valid")
}

/// Inverse of [`renormalize_box`].
pub fn denormalize_box(b: &CompBox, init: &CornerBox) -> CompBox {
    let (iw, ih) = (init.width(), init.height());
    CompBox::new(b.cx() * iw + init.x0(), b.cy() * ih + init.y0(), b.w() * iw, b.h() * ih)
        .expect("positive scale keeps the box valid")
}

/// Share of the box's area inside the unit square.
pub fn visible_fraction(b: &CompBox) -> f64 {
    let unit = CornerBox::new(0.0, 0.0, 1.0, 1.0).expect("unit square");
    let c = b.to_corners();
    c.intersection_area(&unit) / c.area()
}

/// Re-expresses every view of `full` relative to `init`.
///
/// Fails when no view leaves the initial view, since such a sample has
/// nothing unbounded about it.
pub fn build_sample(full: &FullViewAnnotation, init: CornerBox) -> Result<UicSample> {
    let gt_views: Vec<AnnotatedView> = full
        .views
        .iter()
        .map(|v| AnnotatedView {
            bbox: renormalize_box(&v.bbox, &init),
            score: v.score,
        })
        .collect();
    let top = rank_by_score(&gt_views)
        .first()
        .copied()
        .ok_or_else(|| Error::Generation {
            image: full.image_id.clone(),
            reason: "no annotated views".into(),
        })?;
    let sample = UicSample {
        image_id: full.image_id.clone(),
        init_view: init,
        visible_fraction: visible_fraction(&gt_views[top].bbox),
        gt_views,
    };
    if !sample.reaches_outside(OUTSIDE_MARGIN) {
        return Err(Error::Generation {
            image: full.image_id.clone(),
            reason: "every view lies inside the initial view".into(),
        });
    }
    Ok(sample)
}

/// Per-image seed derived from the master seed and the image id, so that
/// results do not depend on processing order.
pub fn image_seed(master: u64, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(image_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Draws initial views until one satisfies the visible-fraction window.
pub fn generate_sample(full: &FullViewAnnotation, params: &GenParams, seed: u64) -> Result<UicSample> {
    params.validate()?;
    full.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(seed, &full.image_id));
    let (s_lo, s_hi) = params.scale_range;
    let (f_lo, f_hi) = params.visible_frac;
    let top = rank_by_score(&full.views)[0];

    for _ in 0..params.max_attempts {
        let s = rng.random_range(s_lo..=s_hi);
        let x0 = rng.random_range(0.0..=1.0 - s);
        let y0 = rng.random_range(0.0..=1.0 - s);
        let init = CornerBox::new(x0, y0, (x0 + s).min(1.0), (y0 + s).min(1.0))?;
        let frac = visible_fraction(&renormalize_box(&full.views[top].bbox, &init));
        if frac < f_lo || frac > f_hi {
            continue;
        }
        if let Ok(sample) = build_sample(full, init) {
            return Ok(sample);
        }
    }
    Err(Error::Generation {
        image: full.image_id.clone(),
        reason: format!("no admissible initial view in {} attempts", params.max_attempts),
    })
}

/// An image the generator gave up on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

/// Runs [`generate_sample`] over a corpus. Images are processed in parallel
/// and results keep corpus order.
pub fn generate_dataset(
    corpus: &[FullViewAnnotation],
    params: &GenParams,
    seed: u64,
) -> Result<(Vec<UicSample>, Vec<Skipped>)> {
    params.validate()?;
    let results: Vec<Result<UicSample>> = corpus
        .par_iter()
        .map(|full| generate_sample(full, params, seed))
        .collect();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (full, r) in corpus.iter().zip(results) {
        match r {
            Ok(s) => samples.push(s),
            Err(Error::Generation { reason, .. }) => skipped.push(Skipped {
                id: full.image_id.clone(),
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok((samples, skipped))
}

/// A seeded stand-in for a densely annotated crop dataset.
///
/// Each image gets 8 to 24 large in-frame crops. Scores in `[1, 5]` peak
/// around a per-image "ideal" crop, loosely like mean opinion scores.
pub fn synthetic_corpus(count: usize, seed: u64) -> Vec<FullViewAnnotation> {
    const SIZES: [(u32, u32); 4] = [(1024, 768), (768, 1024), (1280, 720), (800, 800)];
    (0..count)
        .map(|i| {
            let image_id = format!("synth_{i:05}");
            let mut rng = ChaCha8Rng::seed_from_u64(image_seed(seed, &image_id));
            let (width, height) = SIZES[rng.random_range(0..SIZES.len())];
            let ideal = (
                rng.random_range(0.35..0.65),
                rng.random_range(0.35..0.65),
                rng.random_range(0.6..0.9),
            );
            let n_views = rng.random_range(8..=24);
            let views = (0..n_views)
                .map(|_| {
                    let w: f64 = rng.random_range(0.45..0.95);
                    let h: f64 = rng.random_range(0.45..0.95);
                    let cx = rng.random_range(w / 2.0..=1.0 - w / 2.0);
                    let cy = rng.random_range(h / 2.0..=1.0 - h / 2.0);
                    let d2 = (cx - ideal.0).powi(2) + (cy - ideal.1).powi(2) + ((w * h).sqrt() - ideal.2).powi(2);
                    let noise: f64 = rng.random_range(-0.3..0.3);
                    let score = (1.0 + 4.0 * (-d2 / 0.05).exp() + noise).clamp(1.0, 5.0);
                    AnnotatedView {
                        bbox: CompBox::new(cx, cy, w, h).expect("positive size"),
                        score,
                    }
                })
                .collect();
            FullViewAnnotation {
                image_id,
                width,
                height,
                views,
            }
        })
        .collect()
}
