//! Axis-aligned view boxes for unbounded composition.
//!
//! All coordinates are normalized to the initial view: `(0, 0)` is its
//! top-left corner and `(1, 1)` its bottom-right. Boxes are free to leave
//! that square, which is the whole point of unbounded composition, so
//! nothing here clamps to `[0, 1]`.
//!
//! Areas are always computed from corner coordinates. That keeps
//! `iou(a, a) == 1.0` and `giou_loss(a, a) == 0.0` exact in floating point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard for denominators of area ratios. Positive-area boxes never get
/// near it; it only matters on float underflow.
pub const AREA_FLOOR: f64 = 1e-12;

/// A view box in center format `(cx, cy, w, h)`.
///
/// Width and height are strictly positive and every field is finite;
/// construction rejects anything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct CompBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl CompBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::domain(format!(
                "box [{cx}, {cy}, {w}, {h}] has a non-finite coordinate"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::domain(format!(
                "box [{cx}, {cy}, {w}, {h}] must have positive width and height"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn from_corners(corners: &CornerBox) -> Self {
        Self {
            cx: (corners.x0 + corners.x1) / 2.0,
            cy: (corners.y0 + corners.y1) / 2.0,
            w: corners.x1 - corners.x0,
            h: corners.y1 - corners.y0,
        }
    }

    #[inline]
    pub fn cx(&self) -> f64 {
        self.cx
    }

    #[inline]
    pub fn cy(&self) -> f64 {
        self.cy
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `[cx, cy, w, h]`.
    #[inline]
    pub fn params(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn to_corners(&self) -> CornerBox {
        CornerBox {
            x0: self.cx - self.w / 2.0,
            y0: self.cy - self.h / 2.0,
            x1: self.cx + self.w / 2.0,
            y1: self.cy + self.h / 2.0,
        }
    }

    /// Area of the corner representation.
    pub fn area(&self) -> f64 {
        self.to_corners().area()
    }

    /// True when the box lies entirely inside the unit square.
    pub fn within_unit_square(&self) -> bool {
        let c = self.to_corners();
        c.x0 >= 0.0 && c.y0 >= 0.0 && c.x1 <= 1.0 && c.y1 <= 1.0
    }
}

impl TryFrom<[f64; 4]> for CompBox {
    type Error = Error;

    fn try_from(p: [f64; 4]) -> Result<Self> {
        CompBox::new(p[0], p[1], p[2], p[3])
    }
}

impl From<CompBox> for [f64; 4] {
    fn from(b: CompBox) -> Self {
        b.params()
    }
}

/// A box given by its min/max corners, `x0 < x1` and `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct CornerBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl CornerBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
            return Err(Error::domain(format!(
                "corners [{x0}, {y0}, {x1}, {y1}] contain a non-finite value"
            )));
        }
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::domain(format!(
                "corners [{x0}, {y0}, {x1}, {y1}] must satisfy x0 < x1 and y0 < y1"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    #[inline]
    pub fn x0(&self) -> f64 {
        self.x0
    }

    #[inline]
    pub fn y0(&self) -> f64 {
        self.y0
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }

    #[inline]
    pub fn y1(&self) -> f64 {
        self.y1
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// `[x0, y0, x1, y1]`.
    pub fn coords(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    /// Whether `other` lies inside `self` (boundaries included).
    pub fn contains(&self, other: &CornerBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    /// Area of the overlap with `other`, zero when disjoint or touching.
    pub fn intersection_area(&self, other: &CornerBox) -> f64 {
        let iw = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let ih = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        iw * ih
    }

    /// Componentwise min/max of the two corner sets.
    pub fn enclosing(&self, other: &CornerBox) -> CornerBox {
        CornerBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

impl TryFrom<[f64; 4]> for CornerBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        CornerBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<CornerBox> for [f64; 4] {
    fn from(c: CornerBox) -> Self {
        c.coords()
    }
}

pub fn intersection_area(a: &CompBox, b: &CompBox) -> f64 {
    a.to_corners().intersection_area(&b.to_corners())
}

/// `area(a) + area(b) - intersection`.
pub fn union_area(a: &CompBox, b: &CompBox) -> f64 {
    let (ca, cb) = (a.to_corners(), b.to_corners());
    ca.area() + cb.area() - ca.intersection_area(&cb)
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &CompBox, b: &CompBox) -> f64 {
    let (ca, cb) = (a.to_corners(), b.to_corners());
    let inter = ca.intersection_area(&cb);
    let union = ca.area() + cb.area() - inter;
    inter / union.max(AREA_FLOOR)
}

/// Smallest axis-aligned box containing both inputs.
pub fn enclosing_box(a: &CompBox, b: &CompBox) -> CompBox {
    CompBox::from_corners(&a.to_corners().enclosing(&b.to_corners()))
}
