//! Square letterbox transform between original-image and network-input space.
//!
//! Content is scaled by `min(target/w, target/h)`, rounded to whole pixels,
//! and centered; odd leftover padding goes to the bottom/right edge.

use serde::Serialize;

use crate::bbox::BBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LetterboxTransform {
    pub scale: f64,
    /// Left padding in pixels.
    pub pad_x: u32,
    /// Top padding in pixels.
    pub pad_y: u32,
    pub target: u32,
    #[serde(skip)]
    pub scaled_width: u32,
    #[serde(skip)]
    pub scaled_height: u32,
}

impl LetterboxTransform {
    pub fn identity(target: u32) -> Self {
        LetterboxTransform {
            scale: 1.0,
            pad_x: 0,
            pad_y: 0,
            target,
            scaled_width: target,
            scaled_height: target,
        }
    }

    pub fn pad_right(&self) -> u32 {
        self.target - self.scaled_width - self.pad_x
    }

    pub fn pad_bottom(&self) -> u32 {
        self.target - self.scaled_height - self.pad_y
    }
}

pub fn letterbox(width: u32, height: u32, target: u32) -> Result<LetterboxTransform> {
    if width == 0 || height == 0 || target == 0 {
        return Err(Error::InvalidGeometry(format!(
            "letterbox needs positive sizes, got {width}x{height} -> {target}"
        )));
    }
    let (w, h, t) = (f64::from(width), f64::from(height), f64::from(target));
    let scale = (t / w).min(t / h);
    let scaled_width = ((w * scale).round() as u32).clamp(1, target);
    let scaled_height = ((h * scale).round() as u32).clamp(1, target);
    Ok(LetterboxTransform {
        scale,
        pad_x: (target - scaled_width) / 2,
        pad_y: (target - scaled_height) / 2,
        target,
        scaled_width,
        scaled_height,
    })
}

pub fn box_to_input_space(b: &BBox, t: &LetterboxTransform) -> BBox {
    let (px, py) = (f64::from(t.pad_x), f64::from(t.pad_y));
    BBox {
        x1: b.x1 * t.scale + px,
        y1: b.y1 * t.scale + py,
        x2: b.x2 * t.scale + px,
        y2: b.y2 * t.scale + py,
    }
}

pub fn box_from_input_space(b: &BBox, t: &LetterboxTransform) -> Result<BBox> {
    if !(t.scale.is_finite() && t.scale > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "cannot invert a transform with scale {}",
            t.scale
        )));
    }
    let (px, py) = (f64::from(t.pad_x), f64::from(t.pad_y));
    Ok(BBox {
        x1: (b.x1 - px) / t.scale,
        y1: (b.y1 - py) / t.scale,
        x2: (b.x2 - px) / t.scale,
        y2: (b.y2 - py) / t.scale,
    })
}
