//! Axis-aligned boxes in absolute pixel coordinates.

use serde::{Deserialize, Serialize};

/// Pixel-space corner box. Coordinates are continuous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Builds a box, rejecting inverted or non-finite corners.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Option<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.is_valid().then_some(b)
    }

    /// Box from normalized center-size coordinates (YOLO convention).
    pub fn from_normalized_cxcywh(cx: f64, cy: f64, w: f64, h: f64, width: f64, height: f64) -> Self {
        BBox {
            x1: (cx - w / 2.0) * width,
            y1: (cy - h / 2.0) * height,
            x2: (cx + w / 2.0) * width,
            y2: (cy + h / 2.0) * height,
        }
    }

    /// Inverse of [`BBox::from_normalized_cxcywh`].
    pub fn to_normalized_cxcywh(&self, width: f64, height: f64) -> [f64; 4] {
        [
            (self.x1 + self.x2) / 2.0 / width,
            (self.y1 + self.y2) / 2.0 / height,
            (self.x2 - self.x1) / width,
            (self.y2 - self.y1) / height,
        ]
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Lexicographic total order on the corners, used as a tie-break key.
    pub(crate) fn total_cmp(&self, other: &BBox) -> std::cmp::Ordering {
        self.x1
            .total_cmp(&other.x1)
            .then(self.y1.total_cmp(&other.y1))
            .then(self.x2.total_cmp(&other.x2))
            .then(self.y2.total_cmp(&other.y2))
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
