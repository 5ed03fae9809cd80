//! Best-F1 confidence sweep.

use crate::error::{Error, Result};

/// Means closer than this count as tied (the smaller cutoff wins).
pub const F1_TIE_EPS: f64 = 1e-12;

/// Number of cutoffs in the sweep: `0.001, 0.002, ..., 1.000`.
pub const CUTOFF_STEPS: u32 = 1000;

pub fn cutoff(k: u32) -> f64 {
    f64::from(k) / f64::from(CUTOFF_STEPS)
}

/// Ranked detections of one class at IoU 0.50.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHits {
    pub gt_count: usize,
    /// `(score, is_true_positive)`, score descending.
    pub ranked: Vec<(f64, bool)>,
}

impl ClassHits {
    /// Precision, recall and F1 counting detections with score >= `c`.
    pub fn at_cutoff(&self, c: f64) -> (f64, f64, f64) {
        let n = self.ranked.partition_point(|(s, _)| *s >= c);
        let tp = self.ranked[..n].iter().filter(|(_, hit)| *hit).count();
        let precision = if n == 0 { 0.0 } else { tp as f64 / n as f64 };
        let recall = tp as f64 / self.gt_count as f64;
        // 2PR/(P+R) in a single rounding, so equal counts give equal F1.
        let f1 = 2.0 * tp as f64 / (n + self.gt_count) as f64;
        (precision, recall, f1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Best {
    pub f1: f64,
    pub confidence: f64,
}

/// Maximizes the macro (per-class mean) F1 over the cutoff grid. Ties go to
/// the smallest cutoff, means within [`F1_TIE_EPS`] counting as ties.
/// Classes with no ground truth must not be passed.
pub fn f1_sweep(classes: &[ClassHits]) -> Result<F1Best> {
    if classes.is_empty() || classes.iter().any(|c| c.gt_count == 0) {
        return Err(Error::Evaluation(
            "F1 sweep needs at least one ground truth per evaluated class".into(),
        ));
    }
    let mut best = F1Best {
        f1: f64::NEG_INFINITY,
        confidence: cutoff(1),
    };
    for k in 1..=CUTOFF_STEPS {
        let c = cutoff(k);
        let sum: f64 = classes.iter().map(|h| h.at_cutoff(c).2).sum();
        let mean = sum / classes.len() as f64;
        if mean > best.f1 + F1_TIE_EPS {
            best = F1Best {
                f1: mean,
                confidence: c,
            };
        }
    }
    Ok(best)
}
