//! Axis-aligned box arithmetic.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate in box ({x1}, {y1}, {x2}, {y2})")]
    NonFinite { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("degenerate box ({x1}, {y1}, {x2}, {y2}): requires x1 < x2 and y1 < y2")]
    Degenerate { x1: f64, y1: f64, x2: f64, y2: f64 },
}

/// Index of each coordinate inside [`BoundingBox::coords`].
pub const X1: usize = 0;
pub const Y1: usize = 1;
pub const X2: usize = 2;
pub const Y2: usize = 3;

/// An axis-aligned rectangle in pixel space with `x1 < x2` and `y1 < y2`.
///
/// Coordinates are continuous; the refiner moves them by gradient steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(GeometryError::NonFinite { x1, y1, x2, y2 });
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(GeometryError::Degenerate { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_coords(c: [f64; 4]) -> Result<Self, GeometryError> {
        Self::new(c[X1], c[Y1], c[X2], c[Y2])
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    /// `[x1, y1, x2, y2]`
    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// True when `other` lies inside `self` (edges may coincide).
    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Signed x-extent overlap: `min(a.x2, b.x2) - max(a.x1, b.x1)`.
///
/// Positive values are overlap lengths, zero means touching edges and negative
/// values measure the gap between the boxes.
pub fn extent_overlap_x(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.x2.min(b.x2) - a.x1.max(b.x1)
}

/// Signed y-extent overlap, see [`extent_overlap_x`].
pub fn extent_overlap_y(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.y2.min(b.y2) - a.y1.max(b.y1)
}

pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = extent_overlap_x(a, b);
    let h = extent_overlap_y(a, b);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
