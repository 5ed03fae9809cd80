use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Wall-clock milliseconds of the three pipeline stages for one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSample {
    pub preprocess_ms: f64,
    pub inference_ms: f64,
    pub postprocess_ms: f64,
}

impl StageSample {
    pub fn total_ms(&self) -> f64 {
        self.preprocess_ms + self.inference_ms + self.postprocess_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePercentiles {
    pub preprocess: Percentiles,
    pub inference: Percentiles,
    pub postprocess: Percentiles,
    pub total: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub preprocess_ms: f64,
    pub inference_ms: f64,
    pub postprocess_ms: f64,
    /// Always the sum of the three stage means.
    pub total_ms: f64,
    pub n_images: usize,
    pub n_warmup: usize,
    pub repeats: usize,
    pub percentiles: StagePercentiles,
    pub warnings: Vec<String>,
}

/// Nearest-rank percentile of unsorted values.
fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn percentiles(values: &[f64]) -> Percentiles {
    Percentiles {
        p50: percentile(values, 0.50),
        p95: percentile(values, 0.95),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl TimingBreakdown {
    /// `samples` are the measured (post-warmup) images over all repeats.
    pub fn from_samples(
        samples: &[StageSample],
        n_images: usize,
        n_warmup: usize,
        repeats: usize,
        warnings: Vec<String>,
    ) -> Self {
        let preprocess_ms = mean(samples.iter().map(|s| s.preprocess_ms));
        let inference_ms = mean(samples.iter().map(|s| s.inference_ms));
        let postprocess_ms = mean(samples.iter().map(|s| s.postprocess_ms));
        let col = |f: fn(&StageSample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
        TimingBreakdown {
            preprocess_ms,
            inference_ms,
            postprocess_ms,
            total_ms: preprocess_ms + inference_ms + postprocess_ms,
            n_images,
            n_warmup,
            repeats,
            percentiles: StagePercentiles {
                preprocess: percentiles(&col(|s| s.preprocess_ms)),
                inference: percentiles(&col(|s| s.inference_ms)),
                postprocess: percentiles(&col(|s| s.postprocess_ms)),
                total: percentiles(&col(StageSample::total_ms)),
            },
            warnings,
        }
    }
}

pub fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Smallest observable step of the monotonic clock over a few probes.
pub fn timer_resolution() -> Duration {
    (0..16)
        .map(|_| {
            let start = Instant::now();
            loop {
                let d = start.elapsed();
                if d > Duration::ZERO {
                    break d;
                }
            }
        })
        .min()
        .unwrap_or(Duration::ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_stage_sum() {
        let s = [
            StageSample { preprocess_ms: 0.1, inference_ms: 2.3, postprocess_ms: 0.7 },
            StageSample { preprocess_ms: 0.3, inference_ms: 1.9, postprocess_ms: 0.2 },
        ];
        let t = TimingBreakdown::from_samples(&s, 2, 0, 1, vec![]);
        assert_eq!(t.total_ms, t.preprocess_ms + t.inference_ms + t.postprocess_ms);
        assert!((t.inference_ms - 2.1).abs() < 1e-12);
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 10.0);
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&[4.0], 0.95), 4.0);
    }

    #[test]
    fn clock_resolves_below_a_millisecond() {
        assert!(timer_resolution() < Duration::from_millis(1));
    }
}
