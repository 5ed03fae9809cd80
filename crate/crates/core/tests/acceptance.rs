//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails.

mod oracle;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use detbench::augment::{adjust_contrast_luminance, apply_params, AugmentParams, ImageBuffer};
use detbench::bbox::{iou, BBox};
use detbench::bench::{
    generate_synthetic_index, oracle_detect, run_bench, BenchConfig, DetectorBackend, NoiseModel,
    SyntheticSpec, TimingBreakdown,
};
use detbench::dataset::{split_dataset, ClassTable, DatasetIndex, ImageRecord, SplitMode, SplitRatios, Subset};
use detbench::geometry::{box_from_input_space, box_to_input_space, letterbox};
use detbench::metrics::{evaluate, IoUThresholdGrid};
use detbench::postprocess::{nms_classwise, Detection};
use detbench::report::{parse_comparison_table, parse_models, render_comparison_table, ModelRow, TableFormat};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn all_ids(index: &DatasetIndex) -> Vec<String> {
    index.image_ids().map(String::from).collect()
}

fn oracle_equivalence() -> Outcome {
    let grid = IoUThresholdGrid::standard();
    let mut compared = 0;
    for seed in 0..1000u64 {
        let inst = oracle::random_instance(seed);
        let lib = evaluate(&inst.index, &inst.subset, &inst.dets, &grid);
        let Some(want) = oracle::brute_force_eval(&inst.index, &inst.subset, &inst.dets) else {
            ensure(lib.is_err(), || format!("seed {seed}: no ground truth but evaluate succeeded"))?;
            continue;
        };
        let got = lib.map_err(|e| format!("seed {seed}: {e}"))?;
        compared += 1;
        ensure(got.per_class_ap.len() == want.per_class_ap.len(), || format!("seed {seed}: class sets differ"))?;
        for (c, aps) in &want.per_class_ap {
            let g = got.per_class_ap.get(c).ok_or(format!("seed {seed}: class {c} missing"))?;
            for (t, (a, b)) in g.iter().zip(aps).enumerate() {
                ensure(close(*a, *b), || format!("seed {seed}: class {c} threshold {t}: {a} vs {b}"))?;
            }
        }
        for (name, a, b) in [
            ("map50", got.map50, want.map50),
            ("map5095", got.map5095, want.map5095),
            ("f1_best", got.f1_best, want.f1_best),
            ("f1_confidence", got.f1_best_confidence, want.f1_confidence),
        ] {
            ensure(close(a, b), || format!("seed {seed}: {name} {a} vs {b}"))?;
        }
    }
    ensure(compared >= 900, || format!("only {compared} instances had ground truth"))
}

fn echo_ground_truth(index: &DatasetIndex) -> Vec<Detection> {
    index
        .images()
        .iter()
        .flat_map(|r| r.annotations.iter())
        .map(|a| Detection::new(a.image_id.clone(), a.class_id, a.bbox, 1.0))
        .collect()
}

fn perfect_and_empty() -> Outcome {
    let index = generate_synthetic_index(&SyntheticSpec::default()).map_err(|e| e.to_string())?;
    ensure(index.len() == 50, || format!("{} images", index.len()))?;
    let ids = all_ids(&index);
    let grid = IoUThresholdGrid::standard();

    let r = evaluate(&index, &ids, &echo_ground_truth(&index), &grid).map_err(|e| e.to_string())?;
    ensure(r.map50 == 1.0 && r.map5095 == 1.0 && r.f1_best == 1.0, || {
        format!("perfect: map50 {} map5095 {} f1 {}", r.map50, r.map5095, r.f1_best)
    })?;

    let noiseless: Vec<Detection> = ids
        .iter()
        .flat_map(|id| oracle_detect(&index, id, &NoiseModel::none(), 7).unwrap())
        .collect();
    let r = evaluate(&index, &ids, &noiseless, &grid).map_err(|e| e.to_string())?;
    ensure(r.map5095 == 1.0, || format!("noiseless oracle: map5095 {}", r.map5095))?;

    let r = evaluate(&index, &ids, &[], &grid).map_err(|e| e.to_string())?;
    ensure(r.map50 == 0.0 && r.map5095 == 0.0 && r.f1_best == 0.0, || {
        format!("empty: map50 {} map5095 {} f1 {}", r.map50, r.map5095, r.f1_best)
    })
}

fn monotonicity() -> Outcome {
    let grid = IoUThresholdGrid::standard();
    for seed in 0..1000u64 {
        let inst = oracle::random_instance(seed);
        if let Ok(r) = evaluate(&inst.index, &inst.subset, &inst.dets, &grid) {
            ensure(r.map5095 <= r.map50, || format!("seed {seed}: {} > {}", r.map5095, r.map50))?;
        }
    }

    let spec = SyntheticSpec {
        n_images: 240,
        boxes_per_image: (1, 5),
        seed: 11,
        ..SyntheticSpec::default()
    };
    let index = generate_synthetic_index(&spec).map_err(|e| e.to_string())?;
    let ids = all_ids(&index);
    let mut previous = (f64::INFINITY, f64::INFINITY);
    for drop_rate in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let noise = NoiseModel {
            coordinate_jitter_sigma: 1.5,
            drop_rate,
            spurious_rate: 0.5,
            ..NoiseModel::none()
        };
        let dets: Vec<Detection> = ids
            .iter()
            .flat_map(|id| oracle_detect(&index, id, &noise, 2024).unwrap())
            .collect();
        let r = evaluate(&index, &ids, &dets, &grid).map_err(|e| e.to_string())?;
        ensure(r.map5095 <= r.map50, || format!("drop {drop_rate}: map5095 > map50"))?;
        ensure(r.map50 <= previous.0 && r.map5095 <= previous.1, || {
            format!(
                "drop {drop_rate}: mAP rose to ({}, {}) from ({}, {})",
                r.map50, r.map5095, previous.0, previous.1
            )
        })?;
        previous = (r.map50, r.map5095);
    }
    let all_dropped = NoiseModel { drop_rate: 1.0, ..NoiseModel::none() };
    let dets: Vec<Detection> = ids
        .iter()
        .flat_map(|id| oracle_detect(&index, id, &all_dropped, 2024).unwrap())
        .collect();
    let r = evaluate(&index, &ids, &dets, &grid).map_err(|e| e.to_string())?;
    ensure(dets.is_empty() && r.map50 == 0.0, || format!("drop 1.0 without spurious: {} dets", dets.len()))
}

fn split_arithmetic() -> Outcome {
    let table = ClassTable::new(vec!["fracture".into()]).unwrap();
    let records = (0..20_327).map(|i| ImageRecord::new(format!("img_{i:05}"), 100, 80)).collect();
    let index = DatasetIndex::new(table, records).map_err(|e| e.to_string())?;
    let ratios = SplitRatios::new(0.7, 0.2, 0.1).unwrap();
    let a = split_dataset(&index, ratios, 42, SplitMode::Image).map_err(|e| e.to_string())?;
    ensure(a.sizes() == (14228, 4065, 2034), || format!("sizes {:?}", a.sizes()))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p1 = dir.path().join("split1.csv");
    let p2 = dir.path().join("split2.csv");
    std::fs::write(&p1, a.to_csv()).unwrap();
    let b = split_dataset(&index, ratios, 42, SplitMode::Image).map_err(|e| e.to_string())?;
    std::fs::write(&p2, b.to_csv()).unwrap();
    ensure(std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap(), || "split.csv bytes differ".into())?;
    let c = split_dataset(&index, ratios, 43, SplitMode::Image).map_err(|e| e.to_string())?;
    ensure(c.to_csv() != a.to_csv(), || "seed has no effect".into())?;
    ensure(a.count(Subset::Test) == 2034, || "test count".into())
}

fn augmentation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for channels in [1u8, 3] {
        let data: Vec<u8> = (0..37 * 23 * channels as usize).map(|_| rng.random()).collect();
        let img = ImageBuffer::new(37, 23, channels, data).map_err(|e| e.to_string())?;
        let out = apply_params(&img, &AugmentParams::new(1.0, 0.0, 0.0).unwrap()).map_err(|e| e.to_string())?;
        ensure(out == img, || format!("identity changed a {channels}-channel image"))?;
    }
    let px = |v: u8, alpha: f64, gamma: f64| -> Result<u8, String> {
        let img = ImageBuffer::filled(1, 1, 1, v).unwrap();
        Ok(adjust_contrast_luminance(&img, alpha, gamma).map_err(|e| e.to_string())?.data()[0])
    };
    for (v, alpha, gamma, want) in [
        (128u8, 1.5, 10.0, 202u8),
        (200, 1.5, 0.0, 255),
        (255, 1.2, 30.0, 255),
        (10, 1.0, -30.0, 0),
        (101, 0.5, 0.0, 50),
        (103, 0.5, 0.0, 52),
    ] {
        let got = px(v, alpha, gamma)?;
        ensure(got == want, || format!("({v}, a={alpha}, g={gamma}) -> {got}, want {want}"))?;
    }
    Ok(())
}

fn random_image_dets(rng: &mut ChaCha8Rng, image: &str) -> Vec<Detection> {
    let n = rng.random_range(0..=40);
    (0..n)
        .map(|_| {
            let x1 = rng.random_range(0..60) as f64;
            let y1 = rng.random_range(0..60) as f64;
            let w = rng.random_range(1..30) as f64;
            let h = rng.random_range(1..30) as f64;
            let score = if rng.random_bool(0.3) {
                [0.3, 0.6, 0.9][rng.random_range(0..3)]
            } else {
                rng.random()
            };
            Detection::new(image, rng.random_range(0..3), BBox::new(x1, y1, x1 + w, y1 + h).unwrap(), score)
        })
        .collect()
}

fn nms_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let thr = [0.3, 0.45, 0.5, 0.7][case % 4];
        let dets = random_image_dets(&mut rng, "img");
        let once = nms_classwise(dets.clone(), thr).map_err(|e| e.to_string())?;
        let twice = nms_classwise(once.clone(), thr).map_err(|e| e.to_string())?;
        ensure(once == twice, || format!("case {case}: not idempotent"))?;
        let mut shuffled = dets.clone();
        shuffled.shuffle(&mut rng);
        let permuted = nms_classwise(shuffled, thr).map_err(|e| e.to_string())?;
        ensure(permuted == once, || format!("case {case}: depends on input order"))?;
        for (i, a) in once.iter().enumerate() {
            for b in &once[i + 1..] {
                if a.class_id == b.class_id {
                    let v = iou(&a.bbox, &b.bbox);
                    ensure(v < thr, || format!("case {case}: kept pair with IoU {v} >= {thr}"))?;
                }
            }
        }
    }
    Ok(())
}

fn letterbox_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for target in [640u32, 1024] {
        for _ in 0..2000 {
            let (w, h) = (rng.random_range(1..=3000u32), rng.random_range(1..=3000u32));
            let t = letterbox(w, h, target).map_err(|e| e.to_string())?;
            let x1 = rng.random_range(0.0..w as f64);
            let y1 = rng.random_range(0.0..h as f64);
            let b = BBox::new(x1, y1, rng.random_range(x1..=w as f64), rng.random_range(y1..=h as f64))
                .unwrap_or(BBox { x1, y1, x2: x1, y2: y1 });
            let back = box_from_input_space(&box_to_input_space(&b, &t), &t).map_err(|e| e.to_string())?;
            let err = b
                .as_array()
                .iter()
                .zip(back.as_array())
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            ensure(err <= 1e-6, || format!("{w}x{h}@{target}: error {err}"))?;
        }
    }
    Ok(())
}

fn fixture(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn table_fixture() -> Outcome {
    let rows = parse_models(&fixture("models.json")).map_err(|e| e.to_string())?;
    ensure(rows.len() == 16, || format!("{} rows", rows.len()))?;
    let mut sizes: BTreeMap<u32, Vec<ModelRow>> = BTreeMap::new();
    for r in rows {
        sizes.entry(r.input_size).or_default().push(r);
    }
    ensure(sizes.keys().copied().collect::<Vec<_>>() == [640, 1024], || "sizes".into())?;
    for (size, rows) in &sizes {
        let rendered = render_comparison_table(rows, TableFormat::Csv).map_err(|e| e.to_string())?;
        let expected = fixture(&format!("table_{size}.csv"));
        let got: Vec<Vec<&str>> = rendered.lines().map(|l| l.split(',').collect()).collect();
        let want: Vec<Vec<&str>> = expected.lines().map(|l| l.split(',').collect()).collect();
        ensure(got.len() == want.len(), || format!("{size}: {} lines vs {}", got.len(), want.len()))?;
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            ensure(g == w, || format!("{size} line {i}: {g:?} vs {w:?}"))?;
        }
        let md = render_comparison_table(rows, TableFormat::Markdown).map_err(|e| e.to_string())?;
        let back = parse_comparison_table(&md, TableFormat::Markdown, *size).map_err(|e| e.to_string())?;
        for (a, b) in rows.iter().zip(&back) {
            ensure(
                (a.map50_pct - b.map50_pct).abs() <= 0.005 && (a.map5095_pct - b.map5095_pct).abs() <= 0.005,
                || format!("{}: lossy markdown", a.model_name),
            )?;
        }
    }
    let e1024 = render_comparison_table(&sizes[&1024], TableFormat::Csv).unwrap();
    let e_row = e1024.lines().find(|l| l.starts_with("YOLOv9-E,")).unwrap_or_default();
    let cells: Vec<&str> = e_row.split(',').collect();
    ensure(cells.len() == 7 && cells[3] == "66" && cells[4] == "65.62" && cells[5] == "43.73", || {
        format!("YOLOv9-E@1024 row {e_row}")
    })?;
    let e640 = render_comparison_table(&sizes[&640], TableFormat::Csv).unwrap();
    ensure(e640.lines().any(|l| l.starts_with("YOLOv9-E,") && l.split(',').nth(5) == Some("43.32")), || {
        "YOLOv9-E@640 mAP 50-95 cell".into()
    })
}

fn timing_identity() -> Outcome {
    let index = generate_synthetic_index(&SyntheticSpec::default()).map_err(|e| e.to_string())?;
    let ids = all_ids(&index);
    let noise = NoiseModel {
        coordinate_jitter_sigma: 1.0,
        drop_rate: 0.1,
        spurious_rate: 0.3,
        ..NoiseModel::none()
    };
    let backend = DetectorBackend::oracle("oracle", noise, 1);
    let cfg = BenchConfig {
        warmup: 2,
        repeats: 2,
        ..BenchConfig::default()
    };
    let out = run_bench(&index, &backend, &ids, &cfg).map_err(|e| e.to_string())?;
    let t = &out.timing;
    ensure(t.total_ms == t.preprocess_ms + t.inference_ms + t.postprocess_ms, || {
        format!("total {} != stage sum", t.total_ms)
    })?;
    ensure(t.n_images == 50 && t.n_warmup == 2 && t.repeats == 2, || format!("counts {t:?}"))?;

    let synthetic = TimingBreakdown::from_samples(
        &[
            detbench::bench::StageSample { preprocess_ms: 0.1, inference_ms: 0.2, postprocess_ms: 0.3 },
            detbench::bench::StageSample { preprocess_ms: 0.7, inference_ms: 1e-9, postprocess_ms: 3.3 },
        ],
        2,
        0,
        1,
        Vec::new(),
    );
    ensure(
        synthetic.total_ms == synthetic.preprocess_ms + synthetic.inference_ms + synthetic.postprocess_ms,
        || "synthetic breakdown sum".into(),
    )?;

    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/bench.schema.json")).unwrap())
            .unwrap();
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let instance = serde_json::to_value(&out).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    ensure(errors.is_empty(), || format!("bench JSON invalid: {errors:?}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence over 1000 random instances", oracle_equivalence),
        ("perfect detector scores 1.0, empty detector 0.0", perfect_and_empty),
        ("mAP 50-95 <= mAP 50; mAP non-increasing in drop_rate", monotonicity),
        ("split of 20327 images is 14228/4065/2034 and reproducible", split_arithmetic),
        ("augmentation is bit-exact", augmentation),
        ("NMS idempotent, order-invariant, pairwise IoU below threshold", nms_properties),
        ("letterbox round-trip within 1e-6 px at 640 and 1024", letterbox_round_trip),
        ("models.json fixture renders both tables cell-for-cell", table_fixture),
        ("timing total equals stage sum; bench JSON schema-valid", timing_identity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("PASS  {name} ({secs:.2}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
