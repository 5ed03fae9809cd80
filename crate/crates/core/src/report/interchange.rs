//! File formats shared with detector backends.
//!
//! `dets-v1` is JSON Lines: a header `{"format":"dets-v1"}` followed by one
//! `{"image","class_id","bbox":[x1,y1,x2,y2],"score"}` object per detection,
//! boxes in original-image pixels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::postprocess::Detection;

pub const DETS_FORMAT: &str = "dets-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetLine {
    image: String,
    class_id: u32,
    bbox: [f64; 4],
    score: f64,
}

pub fn write_dets_v1(dets: &[Detection]) -> String {
    let mut out = serde_json::to_string(&Header {
        format: DETS_FORMAT.to_string(),
    })
    .expect("header serializes");
    out.push('\n');
    for d in dets {
        let line = DetLine {
            image: d.image_id.clone(),
            class_id: d.class_id,
            bbox: d.bbox.as_array(),
            score: d.score,
        };
        out.push_str(&serde_json::to_string(&line).expect("finite values serialize"));
        out.push('\n');
    }
    out
}

/// Parses and validates a `dets-v1` document.
pub fn read_dets_v1(text: &str) -> Result<Vec<Detection>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: String| Error::Interchange { line, message };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty file; expected a dets-v1 header".into()))?;
    let header: Header = serde_json::from_str(header)
        .map_err(|e| err(hline, format!("bad header: {e}")))?;
    if header.format != DETS_FORMAT {
        return Err(err(
            hline,
            format!("format '{}' is not {DETS_FORMAT}", header.format),
        ));
    }

    let mut dets = Vec::new();
    for (n, line) in lines {
        let d: DetLine = serde_json::from_str(line).map_err(|e| err(n, e.to_string()))?;
        if d.image.is_empty() {
            return Err(err(n, "empty image stem".into()));
        }
        let [x1, y1, x2, y2] = d.bbox;
        let bbox = BBox::new(x1, y1, x2, y2)
            .ok_or_else(|| err(n, format!("invalid box {:?}: need x1<=x2, y1<=y2", d.bbox)))?;
        if !(0.0..=1.0).contains(&d.score) {
            return Err(err(n, format!("score {} outside [0, 1]", d.score)));
        }
        dets.push(Detection::new(d.image, d.class_id, bbox, d.score));
    }
    Ok(dets)
}

/// Number of detections in a valid document.
pub fn validate_dets_v1(text: &str) -> Result<usize> {
    read_dets_v1(text).map(|d| d.len())
}

/// Per-image inference milliseconds, either aligned with the sorted image
/// stems or keyed by stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerImageMs {
    List(Vec<f64>),
    ByImage(BTreeMap<String, f64>),
}

/// `timing.json` written by a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingFile {
    pub per_image_ms: PerImageMs,
    #[serde(default)]
    pub device: String,
    #[serde(default)]
    pub model: String,
}

impl TimingFile {
    pub fn parse(text: &str) -> Result<Self> {
        let t: TimingFile = serde_json::from_str(text)?;
        let values: Vec<f64> = match &t.per_image_ms {
            PerImageMs::List(v) => v.clone(),
            PerImageMs::ByImage(m) => m.values().copied().collect(),
        };
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Bench(
                "timing.json has negative or non-finite per-image times".into(),
            ));
        }
        Ok(t)
    }

    /// Resolves times for `stems` (sorted, as passed to the backend).
    pub fn per_image(&self, stems: &[String]) -> Result<BTreeMap<String, f64>> {
        match &self.per_image_ms {
            PerImageMs::List(v) => {
                if v.len() != stems.len() {
                    return Err(Error::Bench(format!(
                        "timing.json lists {} times for {} images",
                        v.len(),
                        stems.len()
                    )));
                }
                Ok(stems.iter().cloned().zip(v.iter().copied()).collect())
            }
            PerImageMs::ByImage(m) => stems
                .iter()
                .map(|s| {
                    m.get(s)
                        .map(|ms| (s.clone(), *ms))
                        .ok_or_else(|| Error::Bench(format!("timing.json has no entry for '{s}'")))
                })
                .collect(),
        }
    }
}
