//! Loss terms for one prediction/ground-truth pair.
//!
//! The composite cost of a pair is
//!
//! ```text
//! L = L_reg + lambda_iou * L_giou + lambda_focal * L_focal
//! ```
//!
//! where the two geometry terms only apply when the slot holds a real view.
//! The same function doubles as the matching cost for the assignment step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CompBox, AREA_FLOOR};
use crate::set_match::GtSlot;
use crate::views::PredictedView;

/// Confidences are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-6;

/// Coordinate differences at or below this are treated as coincident when
/// flagging non-differentiable points.
const KINK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_iou: f64,
    pub lambda_focal: f64,
    /// Focal exponent.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_iou: 2.0,
            lambda_focal: 2.0,
            beta: 2.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_iou: f64, lambda_focal: f64, beta: f64) -> Result<Self> {
        for (name, v) in [
            ("lambda_iou", lambda_iou),
            ("lambda_focal", lambda_focal),
            ("beta", beta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self {
            lambda_iou,
            lambda_focal,
            beta,
        })
    }
}

/// Unweighted loss terms plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reg: f64,
    pub giou: f64,
    pub focal: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(reg: f64, giou: f64, focal: f64, w: &LossWeights) -> Self {
        Self {
            reg,
            giou,
            focal,
            total: reg + w.lambda_iou * giou + w.lambda_focal * focal,
        }
    }

    /// Adds the terms of `other`, recomputing the total from the summed terms.
    pub fn accumulate(&mut self, other: &LossBreakdown, w: &LossWeights) {
        *self = Self::from_terms(
            self.reg + other.reg,
            self.giou + other.giou,
            self.focal + other.focal,
            w,
        );
    }
}

/// L1 distance between the `(cx, cy, w, h)` parameter vectors.
pub fn reg_loss(pred: &CompBox, gt: &CompBox) -> f64 {
    pred.params().iter().zip(gt.params()).map(|(p, g)| (p - g).abs()).sum()
}

/// Generalized IoU loss, `1 - (IoU - |C \ (A ∪ B)| / |C|)` with `C` the
/// smallest enclosing box. Lies in `[0, 2]`.
pub fn giou_loss(pred: &CompBox, gt: &CompBox) -> f64 {
    let (a, b) = (pred.to_corners(), gt.to_corners());
    let inter = a.intersection_area(&b);
    let union = a.area() + b.area() - inter;
    let enclosing = a.enclosing(&b).area();
    let iou = inter / union.max(AREA_FLOOR);
    let uncovered = (enclosing - union).max(0.0) / enclosing.max(AREA_FLOOR);
    1.0 - (iou - uncovered)
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// Focal loss `-|p - q|^beta * (p ln q + (1 - p) ln(1 - q))`.
///
/// `q` is the predicted confidence clamped to `[PROB_EPS, 1 - PROB_EPS]`
/// inside the logarithms; the modulating factor uses the raw prediction so
/// that a perfect prediction costs exactly zero. `target` may be a soft
/// label.
pub fn focal_loss(p_pred: f64, target: f64, beta: f64) -> Result<f64> {
    check_probability("predicted confidence", p_pred)?;
    check_probability("target", target)?;
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Config(format!("focal exponent must be >= 0, got {beta}")));
    }
    Ok(focal_value(p_pred, target, beta))
}

fn focal_value(p_pred: f64, target: f64, beta: f64) -> f64 {
    let modulating = (target - p_pred).abs().powf(beta);
    if modulating == 0.0 {
        return 0.0;
    }
    let q = p_pred.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -modulating * (target * q.ln() + (1.0 - target) * (1.0 - q).ln())
}

/// The focal expression with the prediction and target swapped inside the
/// logarithms, `-|q - p|^beta ((1 - q) ln(1 - p) + q ln p)`.
///
/// Kept only as a reference point: for hard targets `p ∈ {0, 1}` it is
/// infinite (or NaN) for any prediction strictly inside `(0, 1)`. Nothing in
/// the crate uses it.
pub fn focal_loss_as_printed(p_pred: f64, target: f64, beta: f64) -> f64 {
    -(p_pred - target).abs().powf(beta) * ((1.0 - p_pred) * (1.0 - target).ln() + p_pred * target.ln())
}

/// Loss terms of one pair, with an explicit confidence target.
///
/// The target defaults to the slot's validity label (1 for a real view, 0
/// for padding); pass `Some(label)` to use a smooth label instead.
pub fn pair_breakdown(
    pred: &PredictedView,
    slot: &GtSlot,
    w: &LossWeights,
    target: Option<f64>,
) -> Result<LossBreakdown> {
    let target = target.unwrap_or(slot.label());
    let focal = focal_loss(pred.confidence(), target, w.beta)?;
    let (reg, giou) = match slot.bbox() {
        Some(gt) => (reg_loss(&pred.bbox, gt), giou_loss(&pred.bbox, gt)),
        None => (0.0, 0.0),
    };
    Ok(LossBreakdown::from_terms(reg, giou, focal, w))
}

/// Matching cost of assigning `pred` to `slot`.
pub fn pair_cost(pred: &PredictedView, slot: &GtSlot, w: &LossWeights) -> Result<f64> {
    Ok(pair_breakdown(pred, slot, w, None)?.total)
}

/// Partial derivatives of [`pair_cost`] with respect to the predicted
/// `(cx, cy, w, h)` and confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGradient {
    pub d_box: [f64; 4],
    pub d_confidence: f64,
    /// Set when the point sits on a non-differentiable seam (coincident or
    /// touching edges, equal parameters, the probability clamp boundary).
    /// The returned values are then one valid subgradient.
    pub at_kink: bool,
}

/// Analytic gradient of the pair cost.
pub fn loss_gradients(pred: &PredictedView, slot: &GtSlot, w: &LossWeights) -> Result<LossGradient> {
    let p_pred = pred.confidence();
    let target = slot.label();
    // validates the inputs
    focal_loss(p_pred, target, w.beta)?;

    let (d_focal, mut at_kink) = focal_derivative(p_pred, target, w.beta);
    let mut d_box = [0.0; 4];

    if let Some(gt) = slot.bbox() {
        let pp = pred.bbox.params();
        for (i, (p, g)) in pp.iter().zip(gt.params()).enumerate() {
            let diff = p - g;
            if diff.abs() <= KINK_TOL {
                at_kink = true;
            } else {
                d_box[i] += diff.signum();
            }
        }
        let (d_giou, giou_kink) = giou_derivative(&pred.bbox, gt);
        at_kink |= giou_kink;
        for (acc, d) in d_box.iter_mut().zip(d_giou) {
            *acc += w.lambda_iou * d;
        }
    }

    Ok(LossGradient {
        d_box,
        d_confidence: w.lambda_focal * d_focal,
        at_kink,
    })
}

fn focal_derivative(q_raw: f64, p: f64, beta: f64) -> (f64, bool) {
    let mut kink = false;
    let gap = q_raw - p;
    let m = gap.abs().powf(beta);
    let dm = if gap == 0.0 {
        if beta <= 1.0 {
            kink = true;
        }
        0.0
    } else {
        beta * gap.abs().powf(beta - 1.0) * gap.signum()
    };

    let (ce, dce) = if q_raw > PROB_EPS && q_raw < 1.0 - PROB_EPS {
        (
            p * q_raw.ln() + (1.0 - p) * (1.0 - q_raw).ln(),
            p / q_raw - (1.0 - p) / (1.0 - q_raw),
        )
    } else {
        if q_raw == PROB_EPS || q_raw == 1.0 - PROB_EPS {
            kink = true;
        }
        let q = q_raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
        (p * q.ln() + (1.0 - p) * (1.0 - q).ln(), 0.0)
    };
    (-(dm * ce + m * dce), kink)
}

/// Derivative of `giou_loss(pred, gt)` with respect to the predicted center
/// parameters. Written as `L = 2 - I/U - U/C`.
fn giou_derivative(pred: &CompBox, gt: &CompBox) -> ([f64; 4], bool) {
    let a = pred.to_corners();
    let b = gt.to_corners();
    let (x0, y0, x1, y1) = (a.x0(), a.y0(), a.x1(), a.y1());
    let (gx0, gy0, gx1, gy1) = (b.x0(), b.y0(), b.x1(), b.y1());

    let kink = [
        x0 - gx0,
        x1 - gx1,
        x1 - gx0,
        x0 - gx1,
        y0 - gy0,
        y1 - gy1,
        y1 - gy0,
        y0 - gy1,
    ]
    .iter()
    .any(|d| d.abs() <= KINK_TOL);

    let iw = x1.min(gx1) - x0.max(gx0);
    let ih = y1.min(gy1) - y0.max(gy0);
    let overlap = iw > 0.0 && ih > 0.0;
    let inter = if overlap { iw * ih } else { 0.0 };
    let pw = x1 - x0;
    let ph = y1 - y0;
    let union = pw * ph + b.area() - inter;
    let ew = x1.max(gx1) - x0.min(gx0);
    let eh = y1.max(gy1) - y0.min(gy0);
    let enc = ew * eh;

    // Partials with respect to the corners [x0, y0, x1, y1].
    let d_inter = if overlap {
        [
            if x0 > gx0 { -ih } else { 0.0 },
            if y0 > gy0 { -iw } else { 0.0 },
            if x1 < gx1 { ih } else { 0.0 },
            if y1 < gy1 { iw } else { 0.0 },
        ]
    } else {
        [0.0; 4]
    };
    let d_area = [-ph, -pw, ph, pw];
    let d_enc = [
        if x0 < gx0 { -eh } else { 0.0 },
        if y0 < gy0 { -ew } else { 0.0 },
        if x1 > gx1 { eh } else { 0.0 },
        if y1 > gy1 { ew } else { 0.0 },
    ];

    let mut d_corner = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        d_corner[k] = -(d_inter[k] * union - inter * d_union) / (union * union)
            - (d_union * enc - union * d_enc[k]) / (enc * enc);
    }

    // x0 = cx - w/2, x1 = cx + w/2 (same for y).
    let d_params = [
        d_corner[0] + d_corner[2],
        d_corner[1] + d_corner[3],
        (d_corner[2] - d_corner[0]) / 2.0,
        (d_corner[3] - d_corner[1]) / 2.0,
    ];
    (d_params, kink)
}
