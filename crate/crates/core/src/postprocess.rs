//! Confidence filtering and class-wise greedy NMS.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bbox::{iou, BBox};
use crate::error::{Error, Result};

/// Conventional evaluation defaults (deep, low-threshold detection lists).
pub const DEFAULT_CONFIDENCE: f64 = 0.001;
pub const DEFAULT_NMS_IOU: f64 = 0.45;

/// A scored box in original-image pixel space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, class_id: u32, bbox: BBox, score: f64) -> Self {
        Detection {
            image_id: image_id.into(),
            class_id,
            bbox,
            score,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.bbox.is_valid() && (0.0..=1.0).contains(&self.score)
    }
}

/// Total order: score descending, then class, then box corners.
pub(crate) fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.total_cmp(&b.bbox))
}

pub fn filter_by_confidence(dets: Vec<Detection>, threshold: f64) -> Vec<Detection> {
    dets.into_iter().filter(|d| d.score >= threshold).collect()
}

/// Greedy NMS run independently per class for one image. A candidate is kept
/// iff its IoU with every kept box of its class is below `iou_threshold`.
/// Output is in rank order, so it does not depend on input order.
pub fn nms_classwise(dets: Vec<Detection>, iou_threshold: f64) -> Result<Vec<Detection>> {
    if let Some(first) = dets.first() {
        if let Some(other) = dets.iter().find(|d| d.image_id != first.image_id) {
            return Err(Error::MixedImages {
                first: first.image_id.clone(),
                second: other.image_id.clone(),
            });
        }
    }
    let mut by_class: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        by_class.entry(d.class_id).or_default().push(d);
    }
    let mut kept = Vec::new();
    for (_, mut candidates) in by_class {
        candidates.sort_by(rank_order);
        let mut class_kept: Vec<Detection> = Vec::new();
        for c in candidates {
            if class_kept.iter().all(|k| iou(&k.bbox, &c.bbox) < iou_threshold) {
                class_kept.push(c);
            }
        }
        kept.extend(class_kept);
    }
    kept.sort_by(rank_order);
    Ok(kept)
}

/// Filter + NMS applied per image. Output is grouped by image id (sorted),
/// each group in rank order.
pub fn postprocess_all(
    dets: Vec<Detection>,
    confidence: f64,
    iou_threshold: f64,
) -> Vec<Detection> {
    let mut by_image: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for d in filter_by_confidence(dets, confidence) {
        by_image.entry(d.image_id.clone()).or_default().push(d);
    }
    by_image
        .into_values()
        .flat_map(|group| nms_classwise(group, iou_threshold).expect("grouped by image"))
        .collect()
}
