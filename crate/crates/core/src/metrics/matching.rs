use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::bbox::iou;
use crate::dataset::Annotation;
use crate::error::{Error, Result};
use crate::postprocess::Detection;

use super::IoUThresholdGrid;

/// Matching outcome for one class of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassMatches {
    pub gt_count: usize,
    /// Indices into the image's detection slice, in processing order.
    pub order: Vec<usize>,
    /// `matched[t][k]`: ground-truth index (into the image's annotation slice)
    /// claimed by detection `order[k]` at threshold `t`.
    pub matched: Vec<Vec<Option<usize>>>,
}

impl ClassMatches {
    pub fn is_tp(&self, threshold_idx: usize, k: usize) -> bool {
        self.matched[threshold_idx][k].is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub image_id: String,
    /// Every class with at least one ground truth or detection in the image.
    pub classes: BTreeMap<u32, ClassMatches>,
}

/// Processing order inside one image: score descending, then box corners,
/// then position in the input.
pub(crate) fn image_order(dets: &[Detection], a: usize, b: usize) -> Ordering {
    dets[b]
        .score
        .total_cmp(&dets[a].score)
        .then(dets[a].bbox.total_cmp(&dets[b].bbox))
        .then(a.cmp(&b))
}

/// Greedy score-ordered matching for one image. At each threshold a detection
/// claims the unmatched same-class ground truth with the highest IoU (lowest
/// index on ties), provided that IoU reaches the threshold.
pub fn match_detections(
    gts: &[Annotation],
    dets: &[Detection],
    grid: &IoUThresholdGrid,
) -> Result<MatchResult> {
    let mut ids = gts
        .iter()
        .map(|g| g.image_id.as_str())
        .chain(dets.iter().map(|d| d.image_id.as_str()));
    let image_id = ids.next().unwrap_or_default().to_string();
    if let Some(other) = ids.find(|id| *id != image_id) {
        return Err(Error::MixedImages {
            first: image_id,
            second: other.to_string(),
        });
    }

    let mut gt_by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        gt_by_class.entry(g.class_id).or_default().push(i);
    }
    let mut det_by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        det_by_class.entry(d.class_id).or_default().push(i);
    }
    let class_ids: std::collections::BTreeSet<u32> =
        gt_by_class.keys().chain(det_by_class.keys()).copied().collect();

    let mut classes = BTreeMap::new();
    for class_id in class_ids {
        let gt_idx = gt_by_class.remove(&class_id).unwrap_or_default();
        let mut order = det_by_class.remove(&class_id).unwrap_or_default();
        order.sort_by(|&a, &b| image_order(dets, a, b));

        let ious: Vec<Vec<f64>> = order
            .iter()
            .map(|&d| gt_idx.iter().map(|&g| iou(&dets[d].bbox, &gts[g].bbox)).collect())
            .collect();

        let matched = grid
            .thresholds()
            .iter()
            .map(|&t| {
                let mut taken = vec![false; gt_idx.len()];
                ious.iter()
                    .map(|row| {
                        let mut best: Option<(usize, f64)> = None;
                        for (j, &v) in row.iter().enumerate() {
                            if taken[j] || v < t {
                                continue;
                            }
                            if best.is_none_or(|(_, bv)| v > bv) {
                                best = Some((j, v));
                            }
                        }
                        best.map(|(j, _)| {
                            taken[j] = true;
                            gt_idx[j]
                        })
                    })
                    .collect()
            })
            .collect();

        classes.insert(
            class_id,
            ClassMatches {
                gt_count: gt_idx.len(),
                order,
                matched,
            },
        );
    }
    Ok(MatchResult { image_id, classes })
}
