//! Deterministic synthetic datasets for desk-scale runs.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::ImageBuffer;
use crate::bbox::BBox;
use crate::dataset::{
    load_dataset_root, serialize_annotations, Annotation, ClassTable, DatasetIndex, ImageRecord,
    CLASSES_FILE, META_FILE,
};
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_images: usize,
    pub n_classes: usize,
    /// Inclusive range of objects per image.
    pub boxes_per_image: (usize, usize),
    /// Inclusive range for both width and height, in pixels.
    pub dims: (u32, u32),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_images: 50,
            n_classes: 4,
            boxes_per_image: (0, 4),
            dims: (64, 160),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let (bmin, bmax) = self.boxes_per_image;
        let (dmin, dmax) = self.dims;
        if self.n_images == 0 || self.n_classes == 0 {
            return Err(Error::InvalidDataset(
                "synthetic dataset needs at least one image and one class".into(),
            ));
        }
        if bmin > bmax || dmin > dmax || dmin < 8 {
            return Err(Error::InvalidDataset(format!(
                "bad synthetic ranges: boxes {bmin}..={bmax}, dims {dmin}..={dmax} (min side 8)"
            )));
        }
        Ok(())
    }

    pub fn image_id(i: usize) -> String {
        format!("synth_{i:05}")
    }
}

/// Builds the index in memory. Boxes have integer pixel corners and at least
/// 4 px per side.
pub fn generate_synthetic_index(spec: &SyntheticSpec) -> Result<DatasetIndex> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let table = ClassTable::new((0..spec.n_classes).map(|c| format!("class_{c}")).collect())?;
    let mut records = Vec::with_capacity(spec.n_images);
    for i in 0..spec.n_images {
        let id = SyntheticSpec::image_id(i);
        let width = rng.random_range(spec.dims.0..=spec.dims.1);
        let height = rng.random_range(spec.dims.0..=spec.dims.1);
        let n_boxes = rng.random_range(spec.boxes_per_image.0..=spec.boxes_per_image.1);
        let mut rec = ImageRecord::new(id.clone(), width, height);
        rec.patient_id = Some(format!("patient_{:04}", i / 3));
        for _ in 0..n_boxes {
            let bw = rng.random_range(4..=(width / 2).max(4));
            let bh = rng.random_range(4..=(height / 2).max(4));
            let x1 = rng.random_range(0..=width - bw);
            let y1 = rng.random_range(0..=height - bh);
            let class_id = rng.random_range(0..spec.n_classes as u32);
            rec.annotations.push(Annotation {
                image_id: id.clone(),
                class_id,
                bbox: BBox {
                    x1: f64::from(x1),
                    y1: f64::from(y1),
                    x2: f64::from(x1 + bw),
                    y2: f64::from(y1 + bh),
                },
            });
        }
        records.push(rec);
    }
    DatasetIndex::new(table, records)
}

/// Flat background with one solid patch per box, intensity keyed by class.
pub fn render_image(rec: &ImageRecord, background: u8) -> ImageBuffer {
    let mut img = ImageBuffer::filled(rec.width, rec.height, 1, background)
        .expect("positive dimensions");
    let w = rec.width as usize;
    for a in &rec.annotations {
        let value = 110 + 30 * (a.class_id % 5) as u8;
        let (x1, y1) = (a.bbox.x1 as usize, a.bbox.y1 as usize);
        let (x2, y2) = (a.bbox.x2 as usize, a.bbox.y2 as usize);
        for y in y1..y2 {
            img.data_mut()[y * w + x1..y * w + x2].fill(value);
        }
    }
    img
}

/// Writes the dataset under `root` (images, labels, classes.txt, meta.csv) and
/// loads it back. Images with no objects get no label file.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, root: &Path) -> Result<DatasetIndex> {
    let index = generate_synthetic_index(spec)?;
    let images_dir = root.join("images");
    let labels_dir = root.join("labels");
    fs::create_dir_all(&images_dir).at(&images_dir)?;
    fs::create_dir_all(&labels_dir).at(&labels_dir)?;
    let classes = root.join(CLASSES_FILE);
    fs::write(&classes, index.class_table().to_text()).at(&classes)?;

    let mut meta = String::from("image_id,width,height,patient_id\n");
    for (i, rec) in index.images().iter().enumerate() {
        let background = 30 + (i % 7) as u8 * 5;
        let path = images_dir.join(format!("{}.png", rec.image_id));
        render_image(rec, background).save(&path)?;
        if !rec.annotations.is_empty() {
            let label = labels_dir.join(format!("{}.txt", rec.image_id));
            fs::write(&label, serialize_annotations(&rec.annotations, rec.dims())).at(&label)?;
        }
        meta.push_str(&format!(
            "{},{},{},{}\n",
            rec.image_id,
            rec.width,
            rec.height,
            rec.patient_id.as_deref().unwrap_or("")
        ));
    }
    let meta_path = root.join(META_FILE);
    fs::write(&meta_path, meta).at(&meta_path)?;
    load_dataset_root(root)
}
