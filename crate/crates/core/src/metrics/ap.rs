//! Precision/recall curves and 101-point interpolated AP.

/// Recall sampling points `0.00, 0.01, ..., 1.00`.
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    /// Score of the detection that closes this rank.
    pub score: f64,
}

/// One point per ranked detection, walking from the highest score down.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub gt_count: usize,
    pub points: Vec<PrPoint>,
    /// Cumulative true positives per rank, kept for exact recall tests.
    tp_cum: Vec<usize>,
}

impl PrCurve {
    /// `ranked` is `(score, is_true_positive)` in rank order.
    pub fn from_ranked(ranked: impl IntoIterator<Item = (f64, bool)>, gt_count: usize) -> Self {
        let mut tp = 0usize;
        let mut points = Vec::new();
        let mut tp_cum = Vec::new();
        for (k, (score, hit)) in ranked.into_iter().enumerate() {
            tp += usize::from(hit);
            tp_cum.push(tp);
            points.push(PrPoint {
                recall: if gt_count == 0 { 0.0 } else { tp as f64 / gt_count as f64 },
                precision: tp as f64 / (k + 1) as f64,
                score,
            });
        }
        PrCurve {
            gt_count,
            points,
            tp_cum,
        }
    }

    /// Mean over the 101 recall points of the monotone precision envelope;
    /// recall points past the curve's maximum recall contribute 0.
    ///
    /// Whether rank `k` reaches recall point `i/100` is decided exactly on
    /// integers (`100 * tp_k >= i * gt_count`).
    pub fn average_precision(&self) -> f64 {
        if self.gt_count == 0 || self.points.is_empty() {
            return 0.0;
        }
        let mut envelope: Vec<f64> = self.points.iter().map(|p| p.precision).collect();
        for k in (0..envelope.len().saturating_sub(1)).rev() {
            envelope[k] = envelope[k].max(envelope[k + 1]);
        }
        let mut k = 0;
        let mut sum = 0.0;
        for i in 0..RECALL_POINTS {
            let need = i * self.gt_count;
            while k < self.tp_cum.len() && self.tp_cum[k] * (RECALL_POINTS - 1) < need {
                k += 1;
            }
            if k == self.tp_cum.len() {
                break;
            }
            sum += envelope[k];
        }
        sum / RECALL_POINTS as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ap(flags: &[bool], gt: usize) -> f64 {
        PrCurve::from_ranked(flags.iter().enumerate().map(|(i, &f)| (1.0 - i as f64 * 0.01, f)), gt)
            .average_precision()
    }

    #[test]
    fn perfect_single_detection() {
        assert_eq!(ap(&[true], 1), 1.0);
    }

    #[test]
    fn trailing_false_positive_is_free() {
        assert_eq!(ap(&[true, false], 1), 1.0);
    }

    #[test]
    fn leading_false_positive_halves_precision() {
        // envelope is 0.5 at every recall point
        assert!((ap(&[false, true], 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partial_recall_stops_at_max() {
        // recall reaches 0.5: points 0..=50 get precision 1, the rest 0
        assert!((ap(&[true], 2) - 51.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn no_detections_or_no_ground_truth() {
        assert_eq!(ap(&[], 3), 0.0);
        assert_eq!(ap(&[false], 0), 0.0);
    }

    #[test]
    fn curve_recall_non_decreasing() {
        let c = PrCurve::from_ranked([(0.9, true), (0.8, false), (0.7, true)], 4);
        assert!(c.points.windows(2).all(|w| w[0].recall <= w[1].recall));
        assert_eq!(c.points[2].recall, 0.5);
        assert!((c.points[2].precision - 2.0 / 3.0).abs() < 1e-15);
    }
}
