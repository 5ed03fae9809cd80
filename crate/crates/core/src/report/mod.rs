//! Comparison tables, scatter data, training-config emission and the JSON
//! documents written by the CLI.

pub mod interchange;
mod training;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::TimingBreakdown;
use crate::dataset::ClassTable;
use crate::error::{Error, Result};
use crate::metrics::{EvalCounts, EvalReport, N_THRESHOLDS};

pub use training::{TrainingConfig, TRAINING_KEYS};

/// One model's line in a comparison table. Percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRow {
    pub model_name: String,
    pub params_millions: f64,
    pub flops_g: f64,
    pub f1_pct: f64,
    pub map50_pct: f64,
    pub map5095_pct: f64,
    pub speed_ms: f64,
    pub input_size: u32,
}

impl ModelRow {
    pub fn validate(&self) -> Result<()> {
        let pct = [self.f1_pct, self.map50_pct, self.map5095_pct];
        if pct.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return Err(Error::Report(format!(
                "'{}': percentages must lie in [0, 100]",
                self.model_name
            )));
        }
        let nonneg = [self.params_millions, self.flops_g, self.speed_ms];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Report(format!(
                "'{}': params, FLOPs and speed must be non-negative",
                self.model_name
            )));
        }
        if self.input_size == 0 {
            return Err(Error::Report(format!("'{}': input size is 0", self.model_name)));
        }
        Ok(())
    }

    /// Row for a measured model; params/FLOPs are external metadata.
    pub fn from_measurements(
        model_name: impl Into<String>,
        params_millions: f64,
        flops_g: f64,
        eval: &EvalReport,
        timing: &TimingBreakdown,
        input_size: u32,
    ) -> Self {
        ModelRow {
            model_name: model_name.into(),
            params_millions,
            flops_g,
            f1_pct: eval.f1_best * 100.0,
            map50_pct: eval.map50 * 100.0,
            map5095_pct: eval.map5095 * 100.0,
            speed_ms: timing.total_ms,
            input_size,
        }
    }
}

/// Parses and validates a `models.json` list.
pub fn parse_models(text: &str) -> Result<Vec<ModelRow>> {
    let rows: Vec<ModelRow> = serde_json::from_str(text)?;
    for r in &rows {
        r.validate()?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            other => Err(Error::Report(format!("unknown table format '{other}'"))),
        }
    }
}

pub const TABLE_HEADER: [&str; 7] = [
    "Model",
    "Params (M)",
    "FLOPs (G)",
    "F1 (%)",
    "mAP 50 (%)",
    "mAP 50-95 (%)",
    "Speed (ms)",
];

/// Integer percent, halves rounded away from zero.
pub fn format_f1(pct: f64) -> String {
    format!("{}", pct.round() as i64)
}

fn cells(r: &ModelRow) -> [String; 7] {
    [
        r.model_name.clone(),
        format!("{:.2}", r.params_millions),
        format!("{:.1}", r.flops_g),
        format_f1(r.f1_pct),
        format!("{:.2}", r.map50_pct),
        format!("{:.2}", r.map5095_pct),
        format!("{:.1}", r.speed_ms),
    ]
}

/// Renders rows (order kept) sharing a single input size.
pub fn render_comparison_table(rows: &[ModelRow], format: TableFormat) -> Result<String> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Report("no rows to render".into()))?;
    if let Some(r) = rows.iter().find(|r| r.input_size != first.input_size) {
        return Err(Error::Report(format!(
            "mixed input sizes {} and {} in one table",
            first.input_size, r.input_size
        )));
    }
    for r in rows {
        r.validate()?;
    }
    match format {
        TableFormat::Markdown => {
            let mut out = format!("| {} |\n", TABLE_HEADER.join(" | "));
            out.push_str("|:---|---:|---:|---:|---:|---:|---:|\n");
            for r in rows {
                out.push_str(&format!("| {} |\n", cells(r).join(" | ")));
            }
            Ok(out)
        }
        TableFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(TABLE_HEADER)?;
            for r in rows {
                w.write_record(cells(r))?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Report(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv of utf-8 cells"))
        }
    }
}

/// One table per input size, sizes ascending, row order kept within each.
pub fn render_tables_by_size(rows: &[ModelRow], format: TableFormat) -> Result<Vec<(u32, String)>> {
    let mut groups: BTreeMap<u32, Vec<ModelRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.input_size).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(size, rows)| Ok((size, render_comparison_table(&rows, format)?)))
        .collect()
}

/// Reads a rendered table back. Values carry the rendering's precision.
pub fn parse_comparison_table(text: &str, format: TableFormat, input_size: u32) -> Result<Vec<ModelRow>> {
    let records: Vec<Vec<String>> = match format {
        TableFormat::Csv => {
            let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
            r.records()
                .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
                .collect::<std::result::Result<_, _>>()?
        }
        TableFormat::Markdown => text
            .lines()
            .skip(2)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .trim_start_matches('|')
                    .trim_end_matches('|')
                    .split('|')
                    .map(|c| c.trim().to_string())
                    .collect()
            })
            .collect(),
    };
    records
        .into_iter()
        .map(|cells| {
            if cells.len() != TABLE_HEADER.len() {
                return Err(Error::Report(format!("row has {} cells, expected 7", cells.len())));
            }
            let num = |i: usize| {
                cells[i]
                    .parse::<f64>()
                    .map_err(|_| Error::Report(format!("cell '{}' is not a number", cells[i])))
            };
            Ok(ModelRow {
                model_name: cells[0].clone(),
                params_millions: num(1)?,
                flops_g: num(2)?,
                f1_pct: num(3)?,
                map50_pct: num(4)?,
                map5095_pct: num(5)?,
                speed_ms: num(6)?,
                input_size,
            })
        })
        .collect()
}

/// Numeric columns usable as scatter axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelField {
    ParamsMillions,
    FlopsG,
    F1Pct,
    Map50Pct,
    Map5095Pct,
    SpeedMs,
    InputSize,
}

impl ModelField {
    pub fn get(self, r: &ModelRow) -> f64 {
        match self {
            ModelField::ParamsMillions => r.params_millions,
            ModelField::FlopsG => r.flops_g,
            ModelField::F1Pct => r.f1_pct,
            ModelField::Map50Pct => r.map50_pct,
            ModelField::Map5095Pct => r.map5095_pct,
            ModelField::SpeedMs => r.speed_ms,
            ModelField::InputSize => f64::from(r.input_size),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelField::ParamsMillions => "params_millions",
            ModelField::FlopsG => "flops_g",
            ModelField::F1Pct => "f1_pct",
            ModelField::Map50Pct => "map50_pct",
            ModelField::Map5095Pct => "map5095_pct",
            ModelField::SpeedMs => "speed_ms",
            ModelField::InputSize => "input_size",
        }
    }
}

impl FromStr for ModelField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "params_millions" => ModelField::ParamsMillions,
            "flops_g" => ModelField::FlopsG,
            "f1_pct" => ModelField::F1Pct,
            "map50_pct" => ModelField::Map50Pct,
            "map5095_pct" => ModelField::Map5095Pct,
            "speed_ms" => ModelField::SpeedMs,
            "input_size" => ModelField::InputSize,
            other => return Err(Error::Report(format!("unknown model field '{other}'"))),
        })
    }
}

impl fmt::Display for ModelField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `label,x,y` CSV, one line per row; the label carries the input size.
pub fn scatter_data(rows: &[ModelRow], x: ModelField, y: ModelField) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["label", x.name(), y.name()])?;
    for r in rows {
        w.write_record([
            format!("{}@{}", r.model_name, r.input_size),
            x.get(r).to_string(),
            y.get(r).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 cells"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub ap_per_threshold: Vec<f64>,
}

/// `report.json` written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument<C: Serialize> {
    pub map50: f64,
    pub map5095: f64,
    pub f1_best: f64,
    pub f1_confidence: f64,
    pub per_class: BTreeMap<String, ClassAp>,
    pub counts: EvalCounts,
    pub config: C,
}

impl<C: Serialize> ReportDocument<C> {
    pub fn new(report: &EvalReport, classes: &ClassTable, config: C) -> Self {
        let per_class = report
            .per_class_ap
            .iter()
            .map(|(id, aps)| {
                let name = classes
                    .name(*id)
                    .map(String::from)
                    .unwrap_or_else(|| id.to_string());
                (
                    name,
                    ClassAp {
                        ap_per_threshold: aps[..N_THRESHOLDS].to_vec(),
                    },
                )
            })
            .collect();
        ReportDocument {
            map50: report.map50,
            map5095: report.map5095,
            f1_best: report.f1_best,
            f1_confidence: report.f1_best_confidence,
            per_class,
            counts: report.counts,
            config,
        }
    }
}
