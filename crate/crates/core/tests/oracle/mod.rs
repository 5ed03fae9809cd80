//! Brute-force reference scorer and random instance generator shared by the
//! integration tests. Written without reusing any of the library's metric code.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use detbench::bbox::BBox;
use detbench::dataset::{Annotation, ClassTable, DatasetIndex, ImageRecord};
use detbench::postprocess::Detection;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub per_class_ap: BTreeMap<u32, Vec<f64>>,
    pub map50: f64,
    pub map5095: f64,
    pub f1_best: f64,
    pub f1_confidence: f64,
}

pub fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = f64::max(0.0, f64::min(a[2], b[2]) - f64::max(a[0], b[0]));
    let iy = f64::max(0.0, f64::min(a[3], b[3]) - f64::max(a[1], b[1]));
    let inter = ix * iy;
    let area_a = (a[2] - a[0]) * (a[3] - a[1]);
    let area_b = (b[2] - b[0]) * (b[3] - b[1]);
    let union = area_a + area_b - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn corners(b: &BBox) -> [f64; 4] {
    [b.x1, b.y1, b.x2, b.y2]
}

/// Score desc, image id, box corners, input position.
fn rank_cmp(a: &(f64, &str, [f64; 4], usize), b: &(f64, &str, [f64; 4], usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap()
        .then_with(|| a.1.cmp(b.1))
        .then_with(|| {
            for i in 0..4 {
                match a.2[i].partial_cmp(&b.2[i]).unwrap() {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        })
        .then_with(|| a.3.cmp(&b.3))
}

/// True-positive flags at threshold `t` for the ranked detections of `class`.
fn tp_flags(gts: &[Annotation], ranked: &[(f64, &str, [f64; 4], usize)], class: u32, t: f64) -> Vec<bool> {
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut flags = Vec::new();
    for det in ranked {
        let mut best: Option<usize> = None;
        let mut best_iou = -1.0;
        for (gi, g) in gts.iter().enumerate() {
            if g.class_id != class || g.image_id != det.1 || used.contains(&gi) {
                continue;
            }
            let v = box_iou(det.2, corners(&g.bbox));
            if v >= t && v > best_iou {
                best_iou = v;
                best = Some(gi);
            }
        }
        if let Some(gi) = best {
            used.insert(gi);
        }
        flags.push(best.is_some());
    }
    flags
}

/// 101-point interpolated AP computed by scanning all ranks per recall point.
fn ap_brute(flags: &[bool], gt: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..=100usize {
        let mut best = 0.0f64;
        let mut tp = 0usize;
        for (k, &f) in flags.iter().enumerate() {
            if f {
                tp += 1;
            }
            if 100 * tp >= i * gt {
                best = best.max(tp as f64 / (k + 1) as f64);
            }
        }
        total += best;
    }
    total / 101.0
}

/// Scores detections over the images in `subset`. Returns `None` when the
/// subset holds no ground truth.
pub fn brute_force_eval(index: &DatasetIndex, subset: &[String], dets: &[Detection]) -> Option<OracleReport> {
    let ids: BTreeSet<&str> = subset.iter().map(String::as_str).collect();
    let gts: Vec<Annotation> = index
        .images()
        .iter()
        .filter(|r| ids.contains(r.image_id.as_str()))
        .flat_map(|r| r.annotations.iter().cloned())
        .collect();
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.class_id).collect();
    if classes.is_empty() {
        return None;
    }

    let mut per_class_ap = BTreeMap::new();
    let mut f1_inputs: Vec<(usize, Vec<(f64, bool)>)> = Vec::new();
    for &c in &classes {
        let gt = gts.iter().filter(|g| g.class_id == c).count();
        let mut ranked: Vec<(f64, &str, [f64; 4], usize)> = dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == c)
            .map(|(p, d)| (d.score, d.image_id.as_str(), corners(&d.bbox), p))
            .collect();
        ranked.sort_by(rank_cmp);
        let mut aps = Vec::new();
        for &t in &THRESHOLDS {
            aps.push(ap_brute(&tp_flags(&gts, &ranked, c, t), gt));
        }
        let at50 = tp_flags(&gts, &ranked, c, 0.5);
        f1_inputs.push((gt, ranked.iter().zip(at50).map(|(r, f)| (r.0, f)).collect()));
        per_class_ap.insert(c, aps);
    }

    let n = classes.len() as f64;
    let map50 = per_class_ap.values().map(|a| a[0]).sum::<f64>() / n;
    let map5095 = per_class_ap.values().map(|a| a.iter().sum::<f64>() / 10.0).sum::<f64>() / n;

    // Macro F1 sums kept as exact fractions so ties are decided exactly.
    let mut best: Option<(i128, i128)> = None;
    let mut f1_confidence = 0.0;
    for k in 1..=1000u32 {
        let c = k as f64 / 1000.0;
        let (mut num, mut den) = (0i128, 1i128);
        for (gt, hits) in &f1_inputs {
            let kept: Vec<bool> = hits.iter().filter(|h| h.0 >= c).map(|h| h.1).collect();
            let tp = kept.iter().filter(|&&h| h).count() as i128;
            // 2PR/(P+R) reduces to 2tp/(kept+gt).
            let (n2, d2) = (2 * tp, (kept.len() + gt) as i128);
            num = num * d2 + n2 * den;
            den *= d2;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        if best.is_none_or(|(bn, bd)| num * bd > bn * den) {
            best = Some((num, den));
            f1_confidence = c;
        }
    }
    let (num, den) = best.unwrap();
    let f1_best = num as f64 / den as f64 / f1_inputs.len() as f64;

    Some(OracleReport {
        per_class_ap,
        map50,
        map5095,
        f1_best,
        f1_confidence,
    })
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs().max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Small scoring instance: ground truth plus detections.
pub struct Instance {
    pub index: DatasetIndex,
    pub subset: Vec<String>,
    pub dets: Vec<Detection>,
}

fn grid_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BBox {
    loop {
        let x1 = rng.random_range(0..w - 2) as f64;
        let y1 = rng.random_range(0..h - 2) as f64;
        let x2 = rng.random_range(x1 as u32 + 1..=w) as f64;
        let y2 = rng.random_range(y1 as u32 + 1..=h) as f64;
        if let Some(b) = BBox::new(x1, y1, x2, y2) {
            return b;
        }
    }
}

fn nudged(rng: &mut ChaCha8Rng, b: &BBox, w: u32, h: u32) -> BBox {
    let d = |rng: &mut ChaCha8Rng| rng.random_range(-3i32..=3) as f64;
    let x1 = (b.x1 + d(rng)).clamp(0.0, w as f64 - 1.0);
    let y1 = (b.y1 + d(rng)).clamp(0.0, h as f64 - 1.0);
    let x2 = (b.x2 + d(rng)).clamp(x1 + 1.0, w as f64);
    let y2 = (b.y2 + d(rng)).clamp(y1 + 1.0, h as f64);
    BBox::new(x1, y1, x2, y2).unwrap()
}

/// At most 5 images, 4 classes and 6 boxes per image (ground truth and
/// detections each). Scores come from a coarse grid so ties are common.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = rng.random_range(1..=4usize);
    let table = ClassTable::new((0..n_classes).map(|c| format!("c{c}")).collect()).unwrap();
    let n_images = rng.random_range(1..=5usize);
    let mut records = Vec::new();
    let mut dets = Vec::new();
    for i in 0..n_images {
        let id = format!("img{i}");
        let (w, h) = (rng.random_range(8..=40u32), rng.random_range(8..=40u32));
        let mut rec = ImageRecord::new(id.clone(), w, h);
        for _ in 0..rng.random_range(0..=6usize) {
            rec.annotations.push(Annotation {
                image_id: id.clone(),
                class_id: rng.random_range(0..n_classes as u32),
                bbox: grid_box(&mut rng, w, h),
            });
        }
        for _ in 0..rng.random_range(0..=6usize) {
            let use_gt = !rec.annotations.is_empty() && rng.random_bool(0.6);
            let (class_id, bbox) = if use_gt {
                let g = rec.annotations.choose(&mut rng).unwrap();
                let class_id = if rng.random_bool(0.85) {
                    g.class_id
                } else {
                    rng.random_range(0..n_classes as u32)
                };
                let bbox = if rng.random_bool(0.3) { g.bbox } else { nudged(&mut rng, &g.bbox, w, h) };
                (class_id, bbox)
            } else {
                (rng.random_range(0..n_classes as u32), grid_box(&mut rng, w, h))
            };
            let score = if rng.random_bool(0.5) {
                [0.05, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5)]
            } else {
                rng.random_range(0.0..=1.0)
            };
            dets.push(Detection::new(id.clone(), class_id, bbox, score));
        }
        records.push(rec);
    }
    dets.shuffle(&mut rng);
    let index = DatasetIndex::new(table, records).unwrap();
    let subset = index.image_ids().map(String::from).collect();
    Instance { index, subset, dets }
}
