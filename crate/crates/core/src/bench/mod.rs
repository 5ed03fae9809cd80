//! Stage-resolved speed measurement around a pluggable detector backend.
//!
//! Per image: letterbox (preprocess), backend call (inference), inverse
//! mapping + confidence filter + NMS (postprocess). Runs are sequential, one
//! image at a time.

mod oracle;
pub mod synth;
mod timing;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetIndex;
use crate::error::{Error, IoContext, Result};
use crate::geometry::{box_from_input_space, box_to_input_space, letterbox, LetterboxTransform};
use crate::postprocess::{filter_by_confidence, nms_classwise, Detection, DEFAULT_CONFIDENCE, DEFAULT_NMS_IOU};
use crate::report::interchange::{read_dets_v1, TimingFile, DETS_FORMAT};

pub use oracle::{oracle_detect, NoiseModel, ScoreLaw};
pub use synth::{generate_synthetic_dataset, generate_synthetic_index, SyntheticSpec};
pub use timing::{elapsed_ms, timer_resolution, Percentiles, StagePercentiles, StageSample, TimingBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Command,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    /// External executable honoring the backend contract:
    /// `<program> <args..> --images <dir> --out <dets.jsonl> --timing <timing.json> --imgsz <n>`.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        /// Interchange version the program emits.
        interchange: String,
    },
    /// In-process synthetic detector.
    Oracle { noise: NoiseModel, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBackend {
    pub name: String,
    #[serde(flatten)]
    pub config: BackendConfig,
}

impl DetectorBackend {
    pub fn oracle(name: impl Into<String>, noise: NoiseModel, seed: u64) -> Self {
        DetectorBackend {
            name: name.into(),
            config: BackendConfig::Oracle { noise, seed },
        }
    }

    pub fn command(name: impl Into<String>, program: impl Into<String>, args: Vec<String>) -> Self {
        DetectorBackend {
            name: name.into(),
            config: BackendConfig::Command {
                program: program.into(),
                args,
                interchange: DETS_FORMAT.to_string(),
            },
        }
    }

    pub fn kind(&self) -> BackendKind {
        match self.config {
            BackendConfig::Command { .. } => BackendKind::Command,
            BackendConfig::Oracle { .. } => BackendKind::Oracle,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.config {
            BackendConfig::Command { interchange, program, .. } => {
                if interchange != DETS_FORMAT {
                    return Err(self.fail(format!(
                        "declares interchange '{interchange}', only {DETS_FORMAT} is supported"
                    )));
                }
                if program.trim().is_empty() {
                    return Err(self.fail("empty program".into()));
                }
                Ok(())
            }
            BackendConfig::Oracle { noise, .. } => noise.validate(),
        }
    }

    fn fail(&self, message: String) -> Error {
        Error::Backend {
            backend: self.name.clone(),
            message,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub target_size: u32,
    pub warmup: usize,
    pub repeats: usize,
    pub confidence: f64,
    pub iou_threshold: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            target_size: 640,
            warmup: 0,
            repeats: 1,
            confidence: DEFAULT_CONFIDENCE,
            iou_threshold: DEFAULT_NMS_IOU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageTiming {
    pub image: String,
    pub transform: LetterboxTransform,
    #[serde(flatten)]
    pub times: StageSample,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchOutcome {
    pub backend: String,
    pub kind: BackendKind,
    pub imgsz: u32,
    pub timing: TimingBreakdown,
    /// Per-image times of the last repeat, warmup images included.
    pub per_image: Vec<ImageTiming>,
    pub device: Option<String>,
    pub model: Option<String>,
    pub timer_resolution_ns: u64,
    /// Post-processed detections of the last repeat.
    #[serde(skip)]
    pub detections: Vec<Detection>,
}

/// Output of one backend pass over all images.
struct BackendPass {
    /// Raw detections per image, in input (letterboxed) space when
    /// `input_space` is set, otherwise original-image pixels.
    raw: BTreeMap<String, Vec<Detection>>,
    input_space: bool,
    /// Backend-reported inference time; `None` means measure in-process.
    reported_ms: Option<BTreeMap<String, f64>>,
    device: Option<String>,
    model: Option<String>,
}

pub fn run_bench(
    index: &DatasetIndex,
    backend: &DetectorBackend,
    images: &[String],
    cfg: &BenchConfig,
) -> Result<BenchOutcome> {
    backend.validate()?;
    if images.is_empty() {
        return Err(Error::Bench("no images to benchmark".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::Bench("repeats must be at least 1".into()));
    }
    if cfg.warmup >= images.len() {
        return Err(Error::Bench(format!(
            "warmup of {} leaves none of the {} images to measure",
            cfg.warmup,
            images.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for id in images {
        if !index.contains(id) {
            return Err(Error::UnknownImage(id.clone()));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Bench(format!("image '{id}' listed twice")));
        }
    }

    let resolution = timer_resolution();
    let mut warnings = Vec::new();
    if resolution > Duration::from_micros(1) {
        warnings.push(format!(
            "monotonic clock resolution is {} ns, coarser than 1 us",
            resolution.as_nanos()
        ));
    }

    let mut samples = Vec::with_capacity(cfg.repeats * (images.len() - cfg.warmup));
    let mut last_per_image = Vec::new();
    let mut last_dets = Vec::new();
    let (mut device, mut model) = (None, None);

    for _ in 0..cfg.repeats {
        let pass = match &backend.config {
            BackendConfig::Command { program, args, .. } => {
                run_command_backend(index, backend, program, args, images, cfg.target_size)?
            }
            BackendConfig::Oracle { .. } => BackendPass {
                raw: BTreeMap::new(),
                input_space: true,
                reported_ms: None,
                device: Some("cpu".into()),
                model: Some(backend.name.clone()),
            },
        };
        device = pass.device.clone();
        model = pass.model.clone();
        let mut raw = pass.raw;

        last_per_image.clear();
        last_dets.clear();
        for (i, id) in images.iter().enumerate() {
            let rec = index.get(id).expect("checked above");

            let t0 = Instant::now();
            let transform = letterbox(rec.width, rec.height, cfg.target_size)?;
            let preprocess_ms = elapsed_ms(t0);

            let (image_raw, inference_ms) = match (&backend.config, &pass.reported_ms) {
                (BackendConfig::Oracle { noise, seed }, _) => {
                    let t1 = Instant::now();
                    let dets: Vec<Detection> = oracle_detect(index, id, noise, *seed)?
                        .into_iter()
                        .map(|mut d| {
                            d.bbox = box_to_input_space(&d.bbox, &transform);
                            d
                        })
                        .collect();
                    (dets, elapsed_ms(t1))
                }
                (_, Some(reported)) => (raw.remove(id).unwrap_or_default(), reported[id]),
                (_, None) => unreachable!("command passes always report times"),
            };

            let t2 = Instant::now();
            let mut dets = image_raw;
            if pass.input_space {
                for d in &mut dets {
                    d.bbox = box_from_input_space(&d.bbox, &transform)?;
                }
            }
            let kept = nms_classwise(filter_by_confidence(dets, cfg.confidence), cfg.iou_threshold)?;
            let postprocess_ms = elapsed_ms(t2);

            let times = StageSample {
                preprocess_ms,
                inference_ms,
                postprocess_ms,
            };
            if i >= cfg.warmup {
                samples.push(times);
            }
            last_per_image.push(ImageTiming {
                image: id.clone(),
                transform,
                times,
            });
            last_dets.extend(kept);
        }
    }

    Ok(BenchOutcome {
        backend: backend.name.clone(),
        kind: backend.kind(),
        imgsz: cfg.target_size,
        timing: TimingBreakdown::from_samples(&samples, images.len(), cfg.warmup, cfg.repeats, warnings),
        per_image: last_per_image,
        device,
        model,
        timer_resolution_ns: resolution.as_nanos() as u64,
        detections: last_dets,
    })
}

fn stage_images(index: &DatasetIndex, images: &[String], dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir).at(dir)?;
    let mut stems = Vec::with_capacity(images.len());
    for id in images {
        let rec = index.get(id).expect("checked by caller");
        let src = rec.image_path.as_ref().ok_or_else(|| {
            Error::Bench(format!("image '{id}' has no file on disk for a command backend"))
        })?;
        let src = src.canonicalize().at(src)?;
        let dst: PathBuf = dir.join(src.file_name().expect("image path has a file name"));
        #[cfg(unix)]
        std::os::unix::fs::symlink(&src, &dst).at(&dst)?;
        #[cfg(not(unix))]
        fs::copy(&src, &dst).map(|_| ()).at(&dst)?;
        stems.push(id.clone());
    }
    stems.sort();
    Ok(stems)
}

fn run_command_backend(
    index: &DatasetIndex,
    backend: &DetectorBackend,
    program: &str,
    args: &[String],
    images: &[String],
    imgsz: u32,
) -> Result<BackendPass> {
    let work = tempfile::tempdir().map_err(|e| Error::Bench(format!("cannot create staging dir: {e}")))?;
    let images_dir = work.path().join("images");
    let stems = stage_images(index, images, &images_dir)?;
    let out_path = work.path().join("detections.jsonl");
    let timing_path = work.path().join("timing.json");

    let output = Command::new(program)
        .args(args)
        .arg("--images")
        .arg(&images_dir)
        .arg("--out")
        .arg(&out_path)
        .arg("--timing")
        .arg(&timing_path)
        .arg("--imgsz")
        .arg(imgsz.to_string())
        .output()
        .map_err(|e| backend.fail(format!("cannot start '{program}': {e}")))?;
    if !output.status.success() {
        return Err(backend.fail(format!(
            "exited with {}; stderr:\n{}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim_end()
        )));
    }

    let dets_text = fs::read_to_string(&out_path)
        .map_err(|e| backend.fail(format!("no detections file: {e}")))?;
    let dets = read_dets_v1(&dets_text).map_err(|e| backend.fail(e.to_string()))?;
    let timing_text = fs::read_to_string(&timing_path)
        .map_err(|e| backend.fail(format!("no timing file: {e}")))?;
    let timing = TimingFile::parse(&timing_text).map_err(|e| backend.fail(e.to_string()))?;
    let reported = timing.per_image(&stems).map_err(|e| backend.fail(e.to_string()))?;

    let mut raw: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        if !reported.contains_key(&d.image_id) {
            return Err(backend.fail(format!(
                "emitted a detection for '{}', which was not among its inputs",
                d.image_id
            )));
        }
        raw.entry(d.image_id.clone()).or_default().push(d);
    }
    Ok(BackendPass {
        raw,
        input_space: false,
        reported_ms: Some(reported),
        device: Some(timing.device).filter(|s| !s.is_empty()),
        model: Some(timing.model).filter(|s| !s.is_empty()),
    })
}
