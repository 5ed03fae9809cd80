//! Detection accuracy: per-class AP over IoU 0.50:0.05:0.95, mAP 50,
//! mAP 50-95 and the best macro-F1 confidence sweep.
//!
//! Classes without ground truth in the evaluated subset are left out of every
//! mean. Detections are ranked across images by score (descending), then
//! image id, then box corners, then input position, so results do not depend
//! on the order detections arrive in.

mod ap;
mod f1;
mod matching;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::dataset::DatasetIndex;
use crate::error::{Error, Result};
use crate::postprocess::Detection;

pub use ap::{PrCurve, PrPoint, RECALL_POINTS};
pub use f1::{cutoff, f1_sweep, ClassHits, F1Best, CUTOFF_STEPS, F1_TIE_EPS};
pub use matching::{match_detections, ClassMatches, MatchResult};

pub const N_THRESHOLDS: usize = 10;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
#[derive(Debug, Clone, PartialEq)]
pub struct IoUThresholdGrid {
    thresholds: [f64; N_THRESHOLDS],
}

impl IoUThresholdGrid {
    pub fn standard() -> Self {
        let mut thresholds = [0.0; N_THRESHOLDS];
        for (i, t) in thresholds.iter_mut().enumerate() {
            *t = (50 + 5 * i) as f64 / 100.0;
        }
        IoUThresholdGrid { thresholds }
    }

    pub fn thresholds(&self) -> &[f64; N_THRESHOLDS] {
        &self.thresholds
    }
}

impl Default for IoUThresholdGrid {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub images: usize,
    pub ground_truths: usize,
    pub detections: usize,
}

/// All fractions are in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// AP at each grid threshold, for classes with ground truth.
    pub per_class_ap: BTreeMap<u32, [f64; N_THRESHOLDS]>,
    pub map50: f64,
    pub map5095: f64,
    pub f1_best: f64,
    pub f1_best_confidence: f64,
    pub counts: EvalCounts,
}

/// One detection after matching, carrying the keys of the global ranking.
#[derive(Debug, Clone)]
struct Ranked<'a> {
    score: f64,
    image_id: &'a str,
    bbox: BBox,
    position: usize,
    tp: [bool; N_THRESHOLDS],
}

fn global_order(a: &Ranked<'_>, b: &Ranked<'_>) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.image_id.cmp(b.image_id))
        .then(a.bbox.total_cmp(&b.bbox))
        .then(a.position.cmp(&b.position))
}

#[derive(Debug, Default)]
struct ClassPool<'a> {
    gt_count: usize,
    ranked: Vec<Ranked<'a>>,
}

/// Mean written as `x0 + mean(x - x0)`: exact when all values are equal and
/// never above `x0` when no value is.
fn mean_from_first(xs: &[f64; N_THRESHOLDS]) -> f64 {
    xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / N_THRESHOLDS as f64
}

/// Scores `dets` against the ground truth of the images in `subset`.
pub fn evaluate(
    index: &DatasetIndex,
    subset: &[String],
    dets: &[Detection],
    grid: &IoUThresholdGrid,
) -> Result<EvalReport> {
    if subset.is_empty() {
        return Err(Error::Evaluation("evaluation subset is empty".into()));
    }
    let subset: BTreeSet<&str> = subset.iter().map(String::as_str).collect();
    if let Some(id) = subset.iter().find(|id| !index.contains(id)) {
        return Err(Error::UnknownImage(id.to_string()));
    }

    let mut dets_by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (pos, d) in dets.iter().enumerate() {
        if !subset.contains(d.image_id.as_str()) {
            return Err(if index.contains(&d.image_id) {
                Error::Evaluation(format!(
                    "detection for '{}', which is outside the evaluated subset",
                    d.image_id
                ))
            } else {
                Error::UnknownImage(d.image_id.clone())
            });
        }
        if !index.class_table().contains(d.class_id) {
            return Err(Error::Evaluation(format!(
                "detection on '{}' has class id {} outside the class table",
                d.image_id, d.class_id
            )));
        }
        if !d.is_valid() {
            return Err(Error::Evaluation(format!(
                "detection on '{}' has an invalid box or score",
                d.image_id
            )));
        }
        dets_by_image.entry(d.image_id.as_str()).or_default().push(pos);
    }

    let mut pools: BTreeMap<u32, ClassPool<'_>> = BTreeMap::new();
    let mut n_gt = 0;
    // Fixed reduction order: images sorted by id.
    for &image_id in &subset {
        let rec = index.get(image_id).expect("checked above");
        n_gt += rec.annotations.len();
        let positions = dets_by_image.remove(image_id).unwrap_or_default();
        let image_dets: Vec<Detection> = positions.iter().map(|&p| dets[p].clone()).collect();
        let m = match_detections(&rec.annotations, &image_dets, grid)?;
        for (class_id, cm) in m.classes {
            let pool = pools.entry(class_id).or_default();
            pool.gt_count += cm.gt_count;
            for (k, &local) in cm.order.iter().enumerate() {
                let d = &dets[positions[local]];
                let mut tp = [false; N_THRESHOLDS];
                for (t, flag) in tp.iter_mut().enumerate() {
                    *flag = cm.is_tp(t, k);
                }
                pool.ranked.push(Ranked {
                    score: d.score,
                    image_id: rec.image_id.as_str(),
                    bbox: d.bbox,
                    position: positions[local],
                    tp,
                });
            }
        }
    }

    let mut per_class_ap = BTreeMap::new();
    let mut hits = Vec::new();
    for (class_id, mut pool) in pools {
        if pool.gt_count == 0 {
            continue;
        }
        pool.ranked.sort_by(global_order);
        let mut aps = [0.0; N_THRESHOLDS];
        for (t, ap) in aps.iter_mut().enumerate() {
            *ap = PrCurve::from_ranked(pool.ranked.iter().map(|r| (r.score, r.tp[t])), pool.gt_count)
                .average_precision();
        }
        per_class_ap.insert(class_id, aps);
        hits.push(ClassHits {
            gt_count: pool.gt_count,
            ranked: pool.ranked.iter().map(|r| (r.score, r.tp[0])).collect(),
        });
    }
    if per_class_ap.is_empty() {
        return Err(Error::Evaluation(
            "no ground truth in the evaluated subset".into(),
        ));
    }

    let n_classes = per_class_ap.len() as f64;
    let map50 = per_class_ap.values().map(|aps| aps[0]).sum::<f64>() / n_classes;
    let map5095 = per_class_ap
        .values()
        .map(mean_from_first)
        .sum::<f64>()
        / n_classes;
    let best = f1_sweep(&hits)?;

    Ok(EvalReport {
        per_class_ap,
        map50,
        map5095,
        f1_best: best.f1,
        f1_best_confidence: best.confidence,
        counts: EvalCounts {
            images: subset.len(),
            ground_truths: n_gt,
            detections: dets.len(),
        },
    })
}
