//! `detbench` command line.
//!
//! Exit codes: 0 on success, 1 on any runtime error, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::augment::{materialize_augmentation, parse_manifest, AugmentParams};
use crate::bench::{
    generate_synthetic_dataset, run_bench, BenchConfig, BenchOutcome, DetectorBackend, NoiseModel, ScoreLaw,
    SyntheticSpec, TimingBreakdown,
};
use crate::dataset::{load_dataset_root, split_dataset, DatasetIndex, SplitAssignment, SplitMode, SplitRatios, Subset};
use crate::error::{Error, IoContext, Result};
use crate::metrics::{evaluate, EvalReport, IoUThresholdGrid};
use crate::postprocess::{postprocess_all, DEFAULT_CONFIDENCE, DEFAULT_NMS_IOU};
use crate::report::interchange::{read_dets_v1, validate_dets_v1, write_dets_v1};
use crate::report::{
    parse_models, render_comparison_table, render_tables_by_size, scatter_data, ModelField, ModelRow,
    ReportDocument, TableFormat, TrainingConfig,
};

pub const SPLIT_FILE: &str = "split.csv";
pub const REPORT_FILE: &str = "report.json";
pub const BENCH_FILE: &str = "bench.json";
pub const AUGMENTED_SPLIT_FILE: &str = "split_augmented.csv";

#[derive(Debug, Parser)]
#[command(name = "detbench", version, about = "Detection evaluation and benchmarking engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign every image of a dataset to train/valid/test.
    Split(SplitArgs),
    /// Add photometric copies of the train subset.
    Augment(AugmentArgs),
    /// Score a detections file against ground truth.
    Eval(EvalArgs),
    /// Measure per-stage latency of a detector backend.
    Bench(BenchArgs),
    /// Render comparison tables or scatter data from models.json.
    Report(ReportArgs),
    /// Write a deterministic synthetic dataset.
    Synth(SynthArgs),
    /// Emit a key=value training configuration.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, num_args = 3, value_names = ["TRAIN", "VALID", "TEST"], default_values_t = [0.7, 0.2, 0.1])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep all images of a patient in one subset.
    #[arg(long)]
    pub by_patient: bool,
    /// Output path; defaults to `<root>/split.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// JSON list of {alpha, beta, gamma}; defaults to the built-in three-entry manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Extended split; defaults to `<root>/split_augmented.csv`.
    #[arg(long)]
    pub out_split: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "test")]
    pub subset: Subset,
    /// dets-v1 JSON Lines in original-image pixels.
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub conf: f64,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    pub nms_iou: f64,
    /// Score detections as given, without confidence filtering or NMS.
    #[arg(long)]
    pub raw: bool,
    /// Input size the detections were produced at (recorded in the report).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub imgsz: Option<u32>,
    #[arg(long, default_value = REPORT_FILE)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// Restrict to one subset of this split.
    #[arg(long, requires = "subset")]
    pub split: Option<PathBuf>,
    #[arg(long, requires = "split")]
    pub subset: Option<Subset>,
    #[arg(long, default_value_t = 640, value_parser = clap::value_parser!(u32).range(1..))]
    pub imgsz: u32,
    #[arg(long, default_value_t = 0)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub conf: f64,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    pub nms_iou: f64,
    /// External detector honoring the backend contract; the oracle is used otherwise.
    #[arg(long)]
    pub command: Option<String>,
    /// Extra argument passed to the command before the contract flags.
    #[arg(long = "command-arg", allow_hyphen_values = true, requires = "command")]
    pub command_args: Vec<String>,
    #[arg(long, default_value = "oracle")]
    pub name: String,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = BENCH_FILE)]
    pub out: PathBuf,
    /// Also write the post-processed detections (dets-v1).
    #[arg(long)]
    pub dets_out: Option<PathBuf>,
    /// Also score the detections and write a report.json.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    pub drop_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub spurious_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub score_exponent: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required_unless_present = "check_dets")]
    pub models: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    pub format: TableFormat,
    /// Only render the table for this input size.
    #[arg(long)]
    pub imgsz: Option<u32>,
    /// Emit `label,x,y` CSV over these two fields instead of tables.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    pub scatter: Option<Vec<ModelField>>,
    /// Append a measured row named NAME (params/FLOPs from --params/--flops).
    #[arg(long, requires_all = ["eval_report", "bench_report"])]
    pub add_row: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub params: f64,
    #[arg(long, default_value_t = 0.0)]
    pub flops: f64,
    #[arg(long)]
    pub eval_report: Option<PathBuf>,
    #[arg(long)]
    pub bench_report: Option<PathBuf>,
    /// Check a dets-v1 file and print its detection count.
    #[arg(long, exclusive = true)]
    pub check_dets: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub images: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub min_boxes: usize,
    #[arg(long, default_value_t = 4)]
    pub max_boxes: usize,
    #[arg(long, default_value_t = 64)]
    pub min_dim: u32,
    #[arg(long, default_value_t = 160)]
    pub max_dim: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Validate an existing config file instead of emitting one.
    #[arg(long, conflicts_with = "overrides")]
    pub check: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings recorded under `config` in report.json.
#[derive(Debug, Serialize)]
pub struct EvalRunConfig {
    pub subset: Subset,
    pub images: usize,
    pub iou_thresholds: Vec<f64>,
    pub confidence: Option<f64>,
    pub nms_iou: Option<f64>,
    pub imgsz: Option<u32>,
    pub source: String,
}

/// Parses `argv` (program name first) and runs it; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Split(a) => cmd_split(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Config(a) => cmd_config(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).at(path)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(path, text).at(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn load_split(index: &DatasetIndex, path: &Path) -> Result<SplitAssignment> {
    let split = SplitAssignment::from_csv(&read(path)?)?;
    split.check_covers(index)?;
    Ok(split)
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let index = load_dataset_root(&a.root)?;
    let ratios = SplitRatios::new(a.ratios[0], a.ratios[1], a.ratios[2])?;
    let mode = if a.by_patient { SplitMode::Patient } else { SplitMode::Image };
    let split = split_dataset(&index, ratios, a.seed, mode)?;
    let out = a.out.unwrap_or_else(|| a.root.join(SPLIT_FILE));
    write(&out, &split.to_csv())?;
    let (tr, va, te) = split.sizes();
    println!("train={tr} valid={va} test={te} -> {}", out.display());
    Ok(())
}

fn cmd_augment(a: AugmentArgs) -> Result<()> {
    let index = load_dataset_root(&a.root)?;
    let split = load_split(&index, &a.split)?;
    let params: Vec<AugmentParams> = match &a.manifest {
        Some(p) => parse_manifest(&read(p)?)?,
        None => AugmentParams::example_manifest(),
    };
    let (_, new_split, log) = materialize_augmentation(&a.root, &index, &split, &params)?;
    let out = a.out_split.unwrap_or_else(|| a.root.join(AUGMENTED_SPLIT_FILE));
    write(&out, &new_split.to_csv())?;
    println!("{} augmented images; split -> {}", log.len(), out.display());
    Ok(())
}

fn score(
    index: &DatasetIndex,
    subset_ids: &[String],
    dets: Vec<crate::postprocess::Detection>,
    post: Option<(f64, f64)>,
) -> Result<EvalReport> {
    let dets = match post {
        Some((conf, nms)) => postprocess_all(dets, conf, nms),
        None => dets,
    };
    evaluate(index, subset_ids, &dets, &IoUThresholdGrid::standard())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let index = load_dataset_root(&a.root)?;
    let split = load_split(&index, &a.split)?;
    let ids = split.ids(a.subset);
    let dets = read_dets_v1(&read(&a.dets)?)?;
    let post = (!a.raw).then_some((a.conf, a.nms_iou));
    let report = score(&index, &ids, dets, post)?;
    let config = EvalRunConfig {
        subset: a.subset,
        images: ids.len(),
        iou_thresholds: IoUThresholdGrid::standard().thresholds().to_vec(),
        confidence: post.map(|p| p.0),
        nms_iou: post.map(|p| p.1),
        imgsz: a.imgsz,
        source: a.dets.display().to_string(),
    };
    write_json(&a.out, &ReportDocument::new(&report, index.class_table(), config))?;
    println!(
        "mAP50={:.4} mAP50-95={:.4} F1={:.4}@{} -> {}",
        report.map50,
        report.map5095,
        report.f1_best,
        report.f1_best_confidence,
        a.out.display()
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let index = load_dataset_root(&a.root)?;
    let (ids, subset) = match (&a.split, a.subset) {
        (Some(p), Some(s)) => (load_split(&index, p)?.ids(s), Some(s)),
        _ => (index.image_ids().map(String::from).collect::<Vec<_>>(), None),
    };
    let backend = match &a.command {
        Some(program) => DetectorBackend::command(a.name.clone(), program.clone(), a.command_args.clone()),
        None => {
            let noise = NoiseModel {
                coordinate_jitter_sigma: a.noise.jitter,
                drop_rate: a.noise.drop_rate,
                spurious_rate: a.noise.spurious_rate,
                score_law: ScoreLaw {
                    exponent: a.noise.score_exponent,
                    ..ScoreLaw::default()
                },
            };
            DetectorBackend::oracle(a.name.clone(), noise, a.seed)
        }
    };
    let cfg = BenchConfig {
        target_size: a.imgsz,
        warmup: a.warmup,
        repeats: a.repeats,
        confidence: a.conf,
        iou_threshold: a.nms_iou,
    };
    let outcome: BenchOutcome = run_bench(&index, &backend, &ids, &cfg)?;
    write_json(&a.out, &outcome)?;
    if let Some(p) = &a.dets_out {
        write(p, &write_dets_v1(&outcome.detections))?;
    }
    if let Some(p) = &a.report {
        let report = evaluate(&index, &ids, &outcome.detections, &IoUThresholdGrid::standard())?;
        let config = EvalRunConfig {
            subset: subset.unwrap_or(Subset::Test),
            images: ids.len(),
            iou_thresholds: IoUThresholdGrid::standard().thresholds().to_vec(),
            confidence: Some(a.conf),
            nms_iou: Some(a.nms_iou),
            imgsz: Some(a.imgsz),
            source: format!("bench:{}", a.name),
        };
        write_json(p, &ReportDocument::new(&report, index.class_table(), config))?;
    }
    let t = &outcome.timing;
    println!(
        "{}: pre {:.3} + inf {:.3} + post {:.3} = {:.3} ms/image over {} images -> {}",
        outcome.backend,
        t.preprocess_ms,
        t.inference_ms,
        t.postprocess_ms,
        t.total_ms,
        t.n_images,
        a.out.display()
    );
    for w in &t.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn measured_row(a: &ReportArgs, name: &str) -> Result<ModelRow> {
    let eval: serde_json::Value = serde_json::from_str(&read(a.eval_report.as_ref().expect("required by clap"))?)?;
    let bench: serde_json::Value = serde_json::from_str(&read(a.bench_report.as_ref().expect("required by clap"))?)?;
    let num = |v: &serde_json::Value, key: &str| {
        v.get(key)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| Error::Report(format!("missing numeric '{key}'")))
    };
    let timing: TimingBreakdown = serde_json::from_value(
        bench
            .get("timing")
            .cloned()
            .ok_or_else(|| Error::Report("bench report has no 'timing'".into()))?,
    )?;
    let report = EvalReport {
        per_class_ap: Default::default(),
        map50: num(&eval, "map50")?,
        map5095: num(&eval, "map5095")?,
        f1_best: num(&eval, "f1_best")?,
        f1_best_confidence: num(&eval, "f1_confidence")?,
        counts: serde_json::from_value(eval.get("counts").cloned().unwrap_or_default())?,
    };
    let imgsz = num(&bench, "imgsz")? as u32;
    let row = ModelRow::from_measurements(name, a.params, a.flops, &report, &timing, imgsz);
    row.validate()?;
    Ok(row)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    if let Some(p) = &a.check_dets {
        let n = validate_dets_v1(&read(p)?)?;
        println!("{}: valid dets-v1, {n} detections", p.display());
        return Ok(());
    }
    let mut rows = parse_models(&read(a.models.as_ref().expect("required by clap"))?)?;
    if let Some(name) = &a.add_row {
        rows.push(measured_row(&a, name)?);
    }
    if let Some(size) = a.imgsz {
        rows.retain(|r| r.input_size == size);
    }
    let text = match &a.scatter {
        Some(fields) => scatter_data(&rows, fields[0], fields[1])?,
        None if a.imgsz.is_some() => render_comparison_table(&rows, a.format)?,
        None => {
            let tables = render_tables_by_size(&rows, a.format)?;
            let mut out = String::new();
            for (i, (size, table)) in tables.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                match a.format {
                    TableFormat::Markdown => out.push_str(&format!("Input size {size}\n\n")),
                    TableFormat::Csv => out.push_str(&format!("# input_size={size}\n")),
                }
                out.push_str(table);
            }
            out
        }
    };
    match &a.out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_images: a.images,
        n_classes: a.classes,
        boxes_per_image: (a.min_boxes, a.max_boxes),
        dims: (a.min_dim, a.max_dim),
        seed: a.seed,
    };
    let index = generate_synthetic_dataset(&spec, &a.out)?;
    let stats = index.stats();
    println!(
        "{} images ({} labeled, {} objects) -> {}",
        stats.images,
        stats.labeled_images,
        stats.objects,
        a.out.display()
    );
    Ok(())
}

fn cmd_config(a: ConfigArgs) -> Result<()> {
    if let Some(p) = &a.check {
        let cfg = TrainingConfig::parse(&read(p)?)?;
        println!("{}: valid ({} epochs, batch {})", p.display(), cfg.epochs, cfg.batch_size);
        return Ok(());
    }
    let cfg = TrainingConfig::reference_default().with_overrides(a.overrides.iter().map(String::as_str))?;
    match &a.out {
        Some(p) => write(p, &cfg.to_text()),
        None => {
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["detbench", "frobnicate"]), 2);
        assert_eq!(run(["detbench", "split", "--bogus"]), 2);
        assert_eq!(run(["detbench", "eval", "--imgsz", "0"]), 2);
    }

    #[test]
    fn runtime_errors_exit_1() {
        assert_eq!(run(["detbench", "split", "--root", "/nonexistent/dataset"]), 1);
        assert_eq!(run(["detbench", "config", "--set", "batch_size=0"]), 1);
    }
}
