//! YOLO-format label text: one `<class_id> <cx> <cy> <w> <h>` line per object,
//! coordinates normalized to the image size.

use crate::bbox::BBox;
use crate::error::{Error, Result};

use super::Annotation;

/// Slack allowed when a denormalized box pokes past the image border.
pub const BOUNDS_TOLERANCE_PX: f64 = 1e-6;

/// Parses a label file's contents into annotations for `image_id`.
///
/// Line order is preserved; blank lines are skipped. `source` is only used
/// to name the file in error messages.
pub fn parse_label_file(
    text: &str,
    image_id: &str,
    (width, height): (u32, u32),
    source: &str,
) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::LabelParse {
            path: source.to_string(),
            line: idx + 1,
            message,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", tokens.len())));
        }
        let class_id: u32 = tokens[0]
            .parse()
            .map_err(|_| err(format!("class id '{}' is not a non-negative integer", tokens[0])))?;
        let mut coords = [0.0f64; 4];
        for (slot, tok) in coords.iter_mut().zip(&tokens[1..]) {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(format!("'{tok}' is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err(format!("coordinate {v} outside [0, 1]")));
            }
            *slot = v;
        }
        let [cx, cy, w, h] = coords;
        let (wf, hf) = (f64::from(width), f64::from(height));
        let raw_box = BBox::from_normalized_cxcywh(cx, cy, w, h, wf, hf);
        let box_ = clamp_to_image(raw_box, wf, hf).ok_or_else(|| {
            err(format!(
                "box [{}, {}, {}, {}] leaves the {width}x{height} image",
                raw_box.x1, raw_box.y1, raw_box.x2, raw_box.y2
            ))
        })?;
        out.push(Annotation {
            image_id: image_id.to_string(),
            class_id,
            bbox: box_,
        });
    }
    Ok(out)
}

fn clamp_to_image(b: BBox, width: f64, height: f64) -> Option<BBox> {
    let t = BOUNDS_TOLERANCE_PX;
    if b.x1 < -t || b.y1 < -t || b.x2 > width + t || b.y2 > height + t {
        return None;
    }
    Some(BBox {
        x1: b.x1.max(0.0),
        y1: b.y1.max(0.0),
        x2: b.x2.min(width),
        y2: b.y2.min(height),
    })
}

/// Writes annotations back to YOLO label text (shortest round-trip float form).
pub fn serialize_annotations(annotations: &[Annotation], (width, height): (u32, u32)) -> String {
    let mut out = String::new();
    for a in annotations {
        let [cx, cy, w, h] = a
            .bbox
            .to_normalized_cxcywh(f64::from(width), f64::from(height));
        out.push_str(&format!("{} {cx} {cy} {w} {h}\n", a.class_id));
    }
    out
}
