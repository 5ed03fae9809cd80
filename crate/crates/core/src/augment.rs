//! Photometric contrast/luminance augmentation.
//!
//! Every output sample is `clamp(round_half_even(alpha*a + beta*b + gamma), 0, 255)`
//! computed in f64. The rounding rule is fixed so augmented files are
//! byte-reproducible.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetIndex, ImageRecord, SplitAssignment, Subset, META_FILE};
use crate::error::{Error, IoContext, Result};

pub const AUGMENT_LOG_FILE: &str = "augment_log.csv";

/// Coefficients of one augmented copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl AugmentParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = AugmentParams { alpha, beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidAugment(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() || !self.gamma.is_finite() {
            return Err(Error::InvalidAugment("beta and gamma must be finite".into()));
        }
        Ok(())
    }

    /// Example manifest shipped with the tool. These are not tuned values.
    pub fn example_manifest() -> Vec<AugmentParams> {
        vec![
            AugmentParams { alpha: 1.2, beta: 0.0, gamma: 0.0 },
            AugmentParams { alpha: 0.8, beta: 0.0, gamma: 0.0 },
            AugmentParams { alpha: 1.0, beta: 0.0, gamma: 30.0 },
        ]
    }
}

/// Parses a JSON manifest: a list of `{alpha, beta, gamma}` objects.
pub fn parse_manifest(text: &str) -> Result<Vec<AugmentParams>> {
    let list: Vec<AugmentParams> = serde_json::from_str(text)?;
    if list.is_empty() {
        return Err(Error::InvalidAugment("manifest lists no parameter sets".into()));
    }
    for p in &list {
        p.validate()?;
    }
    Ok(list)
}

/// Row-major 8-bit image with 1 or 3 interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidAugment(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::InvalidAugment(format!(
                "buffer holds {} samples, {width}x{height}x{channels} needs {expected}",
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Grayscale images stay single-channel; everything else becomes RGB.
    pub fn from_dynamic(img: image::DynamicImage) -> Self {
        let (width, height) = (img.width(), img.height());
        match img {
            image::DynamicImage::ImageLuma8(g) => ImageBuffer {
                width,
                height,
                channels: 1,
                data: g.into_raw(),
            },
            other => ImageBuffer {
                width,
                height,
                channels: 3,
                data: other.to_rgb8().into_raw(),
            },
        }
    }

    pub fn to_dynamic(&self) -> image::DynamicImage {
        let data = self.data.clone();
        match self.channels {
            1 => image::DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width, self.height, data)
                    .expect("length checked at construction"),
            ),
            _ => image::DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width, self.height, data)
                    .expect("length checked at construction"),
            ),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_dynamic(image::open(path)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_dynamic().save(path)?;
        Ok(())
    }
}

#[inline]
fn saturate(v: f64) -> u8 {
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

/// Per-sample `alpha*a + beta*b + gamma`, rounded half-to-even and saturated.
pub fn weighted_blend(
    a: &ImageBuffer,
    alpha: f64,
    b: &ImageBuffer,
    beta: f64,
    gamma: f64,
) -> Result<ImageBuffer> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| saturate(alpha * f64::from(x) + beta * f64::from(y) + gamma))
        .collect();
    Ok(ImageBuffer { data, ..*a })
}

/// Contrast (`alpha`) and luminance offset (`gamma`) on a single image.
pub fn adjust_contrast_luminance(img: &ImageBuffer, alpha: f64, gamma: f64) -> Result<ImageBuffer> {
    AugmentParams::new(alpha, 0.0, gamma)?;
    weighted_blend(img, alpha, img, 0.0, gamma)
}

/// Applies one parameter set; the second blend source is the image itself.
pub fn apply_params(img: &ImageBuffer, params: &AugmentParams) -> Result<ImageBuffer> {
    params.validate()?;
    weighted_blend(img, params.alpha, img, params.beta, params.gamma)
}

/// Id of the `k`-th (1-based) augmented copy of `image_id`.
pub fn augmented_id(image_id: &str, k: usize) -> String {
    format!("{image_id}_aug{k}")
}

/// One line of `augment_log.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentLogRow {
    pub source_id: String,
    pub new_id: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

struct PlannedCopy<'a> {
    source: &'a ImageRecord,
    new_id: String,
    params: AugmentParams,
}

fn plan<'a>(
    index: &'a DatasetIndex,
    split: &SplitAssignment,
    params_list: &[AugmentParams],
) -> Result<Vec<PlannedCopy<'a>>> {
    if params_list.is_empty() {
        return Err(Error::InvalidAugment("no augmentation parameters given".into()));
    }
    for p in params_list {
        p.validate()?;
    }
    split.check_covers(index)?;
    let mut planned = Vec::new();
    for rec in index.images() {
        if split.get(&rec.image_id) != Some(Subset::Train) {
            continue;
        }
        for (k, params) in params_list.iter().enumerate() {
            let new_id = augmented_id(&rec.image_id, k + 1);
            if index.contains(&new_id) || split.get(&new_id).is_some() {
                return Err(Error::InvalidAugment(format!(
                    "augmented id '{new_id}' already exists"
                )));
            }
            planned.push(PlannedCopy {
                source: rec,
                new_id,
                params: *params,
            });
        }
    }
    Ok(planned)
}

fn copy_record(src: &ImageRecord, new_id: &str) -> ImageRecord {
    let mut rec = src.clone();
    rec.image_id = new_id.to_string();
    for a in &mut rec.annotations {
        a.image_id = new_id.to_string();
    }
    rec.image_path = src.image_path.as_ref().map(|p| sibling(p, new_id));
    rec.label_path = src.label_path.as_ref().map(|p| sibling(p, new_id));
    rec
}

fn sibling(path: &Path, new_stem: &str) -> PathBuf {
    let mut name = new_stem.to_string();
    if let Some(ext) = path.extension().and_then(|e| e.to_str()) {
        name.push('.');
        name.push_str(ext);
    }
    path.with_file_name(name)
}

/// Extends the train subset with one copy per parameter set (in memory only).
///
/// Copies keep the source's boxes and patient id; valid/test are untouched.
pub fn augment_split(
    index: &DatasetIndex,
    split: &SplitAssignment,
    params_list: &[AugmentParams],
) -> Result<(DatasetIndex, SplitAssignment, Vec<AugmentLogRow>)> {
    let planned = plan(index, split, params_list)?;
    let mut records = index.images().to_vec();
    let mut new_split = split.clone();
    let mut log = Vec::with_capacity(planned.len());
    for p in &planned {
        records.push(copy_record(p.source, &p.new_id));
        new_split.insert(p.new_id.clone(), Subset::Train);
        log.push(AugmentLogRow {
            source_id: p.source.image_id.clone(),
            new_id: p.new_id.clone(),
            alpha: p.params.alpha,
            beta: p.params.beta,
            gamma: p.params.gamma,
        });
    }
    let augmented = DatasetIndex::new(index.class_table().clone(), records)?;
    Ok((augmented, new_split, log))
}

/// Like [`augment_split`], and also writes the augmented images beside their
/// sources, copies label files byte-for-byte, appends `meta.csv` rows when
/// that file exists and writes `augment_log.csv` under `root`.
pub fn materialize_augmentation(
    root: &Path,
    index: &DatasetIndex,
    split: &SplitAssignment,
    params_list: &[AugmentParams],
) -> Result<(DatasetIndex, SplitAssignment, Vec<AugmentLogRow>)> {
    let (augmented, new_split, log) = augment_split(index, split, params_list)?;
    let planned = plan(index, split, params_list)?;
    let meta_path = root.join(META_FILE);
    let mut meta_rows = String::new();

    for p in &planned {
        let src_image = p.source.image_path.as_ref().ok_or_else(|| {
            Error::InvalidAugment(format!("'{}' has no image file", p.source.image_id))
        })?;
        let dst_image = sibling(src_image, &p.new_id);
        if dst_image.exists() {
            return Err(Error::InvalidAugment(format!(
                "{} already exists",
                dst_image.display()
            )));
        }
        let pixels = ImageBuffer::load(src_image)?;
        apply_params(&pixels, &p.params)?.save(&dst_image)?;
        if let Some(src_label) = &p.source.label_path {
            let dst_label = sibling(src_label, &p.new_id);
            fs::copy(src_label, &dst_label).at(&dst_label)?;
        }
        meta_rows.push_str(&format!(
            "{},{},{},{}\n",
            p.new_id,
            p.source.width,
            p.source.height,
            p.source.patient_id.as_deref().unwrap_or("")
        ));
    }

    if meta_path.is_file() && !meta_rows.is_empty() {
        let existing = fs::read_to_string(&meta_path).at(&meta_path)?;
        let mut f = OpenOptions::new().append(true).open(&meta_path).at(&meta_path)?;
        if !existing.is_empty() && !existing.ends_with('\n') {
            f.write_all(b"\n").at(&meta_path)?;
        }
        f.write_all(meta_rows.as_bytes()).at(&meta_path)?;
    }

    let log_path = root.join(AUGMENT_LOG_FILE);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&log_path)?;
    for row in &log {
        w.serialize(row)?;
    }
    w.flush().at(&log_path)?;
    Ok((augmented, new_split, log))
}
