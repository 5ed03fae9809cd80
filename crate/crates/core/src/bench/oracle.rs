//! Synthetic detector: ground truth perturbed by a noise model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bbox::{iou, BBox};
use crate::dataset::DatasetIndex;
use crate::error::{Error, Result};
use crate::postprocess::Detection;

/// Maps a perturbed box's IoU with its source box to a confidence:
/// `iou.powf(exponent)`. Spurious boxes draw a score in `[0, spurious_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreLaw {
    pub exponent: f64,
    pub spurious_max: f64,
}

impl Default for ScoreLaw {
    fn default() -> Self {
        ScoreLaw {
            exponent: 1.0,
            spurious_max: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Std-dev of the Gaussian added to each box corner, in pixels.
    pub coordinate_jitter_sigma: f64,
    /// Probability that a ground-truth object is missed.
    pub drop_rate: f64,
    /// Expected number of false boxes per image (Poisson mean).
    pub spurious_rate: f64,
    #[serde(default)]
    pub score_law: ScoreLaw,
}

impl NoiseModel {
    /// Echoes ground truth with score 1.
    pub fn none() -> Self {
        NoiseModel {
            coordinate_jitter_sigma: 0.0,
            drop_rate: 0.0,
            spurious_rate: 0.0,
            score_law: ScoreLaw::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.coordinate_jitter_sigma.is_finite()
            && self.coordinate_jitter_sigma >= 0.0
            && (0.0..=1.0).contains(&self.drop_rate)
            && self.spurious_rate.is_finite()
            && self.spurious_rate >= 0.0
            && self.score_law.exponent.is_finite()
            && self.score_law.exponent > 0.0
            && (0.0..=1.0).contains(&self.score_law.spurious_max);
        if ok {
            Ok(())
        } else {
            Err(Error::Bench(format!("invalid noise model {self:?}")))
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

/// FNV-1a, used to derive per-image streams from the run seed.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn stream(seed: u64, image_id: &str, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(image_id));
    rng.set_stream(lane);
    rng
}

/// Detections for one image. Object perturbation and spurious boxes use
/// separate streams, and every object consumes the same draws whether or not
/// it is dropped, so raising `drop_rate` only ever removes detections.
pub fn oracle_detect(
    index: &DatasetIndex,
    image_id: &str,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<Detection>> {
    noise.validate()?;
    let rec = index
        .get(image_id)
        .ok_or_else(|| Error::UnknownImage(image_id.to_string()))?;
    let (w, h) = (f64::from(rec.width), f64::from(rec.height));
    let mut objects = stream(seed, image_id, 1);
    let mut extras = stream(seed, image_id, 2);
    let sigma = noise.coordinate_jitter_sigma;

    let mut out = Vec::new();
    for ann in &rec.annotations {
        let drop_draw: f64 = objects.random();
        let mut jitter = [0.0f64; 4];
        for j in &mut jitter {
            let z: f64 = StandardNormal.sample(&mut objects);
            *j = z * sigma;
        }
        if drop_draw < noise.drop_rate {
            continue;
        }
        let b = ann.bbox;
        let (ax, bx) = ((b.x1 + jitter[0]).clamp(0.0, w), (b.x2 + jitter[2]).clamp(0.0, w));
        let (ay, by) = ((b.y1 + jitter[1]).clamp(0.0, h), (b.y2 + jitter[3]).clamp(0.0, h));
        let moved = BBox {
            x1: ax.min(bx),
            y1: ay.min(by),
            x2: ax.max(bx),
            y2: ay.max(by),
        };
        let score = if moved == b {
            1.0
        } else {
            iou(&moved, &b).powf(noise.score_law.exponent).clamp(0.0, 1.0)
        };
        out.push(Detection::new(image_id, ann.class_id, moved, score));
    }

    if noise.spurious_rate > 0.0 {
        let n_classes = index.class_table().len() as u32;
        let count = Poisson::new(noise.spurious_rate)
            .map_err(|e| Error::Bench(e.to_string()))?
            .sample(&mut extras) as usize;
        for _ in 0..count {
            let bw = w * extras.random_range(0.05..0.5);
            let bh = h * extras.random_range(0.05..0.5);
            let x1 = extras.random_range(0.0..=(w - bw));
            let y1 = extras.random_range(0.0..=(h - bh));
            let class_id = extras.random_range(0..n_classes);
            let score = extras.random::<f64>() * noise.score_law.spurious_max;
            out.push(Detection::new(
                image_id,
                class_id,
                BBox {
                    x1,
                    y1,
                    x2: x1 + bw,
                    y2: y1 + bh,
                },
                score,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth::{generate_synthetic_index, SyntheticSpec};

    fn idx() -> DatasetIndex {
        generate_synthetic_index(&SyntheticSpec {
            n_images: 6,
            n_classes: 3,
            boxes_per_image: (1, 4),
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_noise_echoes_ground_truth() {
        let idx = idx();
        for rec in idx.images() {
            let d = oracle_detect(&idx, &rec.image_id, &NoiseModel::none(), 7).unwrap();
            assert_eq!(d.len(), rec.annotations.len());
            for (d, a) in d.iter().zip(&rec.annotations) {
                assert_eq!((d.class_id, d.bbox, d.score), (a.class_id, a.bbox, 1.0));
            }
        }
    }

    #[test]
    fn full_drop_leaves_spurious_only() {
        let idx = idx();
        let noise = NoiseModel {
            drop_rate: 1.0,
            spurious_rate: 3.0,
            ..NoiseModel::none()
        };
        for rec in idx.images() {
            let d = oracle_detect(&idx, &rec.image_id, &noise, 1).unwrap();
            assert!(d.iter().all(|d| d.score < noise.score_law.spurious_max));
        }
        let only_drop = NoiseModel { drop_rate: 1.0, ..NoiseModel::none() };
        assert!(oracle_detect(&idx, idx.images()[0].image_id.as_str(), &only_drop, 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn seeded_and_valid() {
        let idx = idx();
        let noise = NoiseModel {
            coordinate_jitter_sigma: 3.0,
            drop_rate: 0.3,
            spurious_rate: 1.5,
            score_law: ScoreLaw::default(),
        };
        let id = idx.images()[2].image_id.clone();
        let a = oracle_detect(&idx, &id, &noise, 99).unwrap();
        assert_eq!(a, oracle_detect(&idx, &id, &noise, 99).unwrap());
        assert!(a.iter().all(Detection::is_valid));
    }

    #[test]
    fn unknown_image_and_bad_noise() {
        let idx = idx();
        assert!(matches!(
            oracle_detect(&idx, "nope", &NoiseModel::none(), 0),
            Err(Error::UnknownImage(_))
        ));
        let bad = NoiseModel { drop_rate: 1.5, ..NoiseModel::none() };
        assert!(oracle_detect(&idx, &idx.images()[0].image_id, &bad, 0).is_err());
    }
}
