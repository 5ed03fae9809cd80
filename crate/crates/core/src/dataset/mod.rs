//! Dataset ingestion: class table, YOLO labels, image inventory and splits.
//!
//! Root layout:
//!
//! ```text
//! root/
//!   classes.txt        one class name per line, id = zero-based line index
//!   images/            image files (any depth)
//!   labels/<stem>.txt  YOLO labels; missing file = image with no objects
//!   meta.csv           optional: image_id,width,height,patient_id
//! ```

mod labels;
mod split;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use walkdir::WalkDir;

use crate::bbox::BBox;
use crate::error::{Error, IoContext, Result};

pub use labels::{parse_label_file, serialize_annotations, BOUNDS_TOLERANCE_PX};
pub use split::{split_dataset, SplitAssignment, SplitMode, SplitRatios, Subset};

pub const IMAGE_EXTENSIONS: [&str; 7] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff", "webp"];
pub const CLASSES_FILE: &str = "classes.txt";
pub const META_FILE: &str = "meta.csv";

/// Ordered class names; a class id is the name's position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidDataset("class table is empty".into()));
        }
        let mut seen = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(Error::InvalidDataset(format!("class {i} has an empty name")));
            }
            if let Some(prev) = seen.insert(n.as_str(), i) {
                return Err(Error::InvalidDataset(format!(
                    "class name '{n}' appears at ids {prev} and {i}"
                )));
            }
        }
        Ok(ClassTable { names })
    }

    /// Parses `classes.txt` contents. Trailing blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut names: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
        while names.last().is_some_and(|n| n.is_empty()) {
            names.pop();
        }
        Self::new(names)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: format!("cannot read class table: {e}"),
        })?;
        Self::parse(&text)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class_id: u32) -> Option<&str> {
        self.names.get(class_id as usize).map(String::as_str)
    }

    pub fn contains(&self, class_id: u32) -> bool {
        (class_id as usize) < self.names.len()
    }

    pub fn to_text(&self) -> String {
        self.names.iter().map(|n| format!("{n}\n")).collect()
    }
}

/// One labeled object.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
    pub patient_id: Option<String>,
    /// Image file on disk, when the record was loaded from a dataset root.
    pub image_path: Option<PathBuf>,
    /// Label file on disk; `None` for negative samples.
    pub label_path: Option<PathBuf>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        ImageRecord {
            image_id: image_id.into(),
            width,
            height,
            annotations: Vec::new(),
            patient_id: None,
            image_path: None,
            label_path: None,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

/// Inventory of images and their labels, sorted by `image_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    class_table: ClassTable,
    images: Vec<ImageRecord>,
}

/// Summary counts. Labeled images and objects are reported side by side and
/// neither is assumed to bound the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct DatasetStats {
    pub images: usize,
    pub labeled_images: usize,
    pub objects: usize,
}

impl DatasetIndex {
    /// Validates and sorts the records.
    pub fn new(class_table: ClassTable, mut images: Vec<ImageRecord>) -> Result<Self> {
        images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        for pair in images.windows(2) {
            if pair[0].image_id == pair[1].image_id {
                return Err(Error::InvalidDataset(format!(
                    "duplicate image id '{}'",
                    pair[0].image_id
                )));
            }
        }
        for rec in &images {
            if rec.width == 0 || rec.height == 0 {
                return Err(Error::InvalidDataset(format!(
                    "image '{}' has zero size {}x{}",
                    rec.image_id, rec.width, rec.height
                )));
            }
            for a in &rec.annotations {
                if !class_table.contains(a.class_id) {
                    return Err(Error::InvalidDataset(format!(
                        "image '{}' uses class id {} but only {} classes are defined",
                        rec.image_id,
                        a.class_id,
                        class_table.len()
                    )));
                }
                if a.image_id != rec.image_id {
                    return Err(Error::InvalidDataset(format!(
                        "annotation for '{}' filed under '{}'",
                        a.image_id, rec.image_id
                    )));
                }
                if !a.bbox.is_valid() {
                    return Err(Error::InvalidDataset(format!(
                        "image '{}' has an invalid box {:?}",
                        rec.image_id, a.bbox
                    )));
                }
            }
        }
        Ok(DatasetIndex {
            class_table,
            images,
        })
    }

    pub fn class_table(&self) -> &ClassTable {
        &self.class_table
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images
            .binary_search_by(|r| r.image_id.as_str().cmp(image_id))
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.get(image_id).is_some()
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.iter().map(|r| r.image_id.as_str())
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            images: self.images.len(),
            labeled_images: self
                .images
                .iter()
                .filter(|r| !r.annotations.is_empty())
                .count(),
            objects: self.images.iter().map(|r| r.annotations.len()).sum(),
        }
    }

    pub fn into_parts(self) -> (ClassTable, Vec<ImageRecord>) {
        (self.class_table, self.images)
    }
}

#[derive(Debug, Deserialize)]
struct MetaRow {
    image_id: String,
    width: u32,
    height: u32,
    #[serde(default)]
    patient_id: Option<String>,
}

fn read_meta(path: &Path) -> Result<BTreeMap<String, MetaRow>> {
    let load_err = |message: String| Error::Load {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| load_err(e.to_string()))?;
    let mut rows = BTreeMap::new();
    for row in reader.deserialize::<MetaRow>() {
        let mut row = row.map_err(|e| load_err(e.to_string()))?;
        if row.patient_id.as_deref().is_some_and(|p| p.trim().is_empty()) {
            row.patient_id = None;
        }
        if rows.contains_key(&row.image_id) {
            return Err(load_err(format!("duplicate row for '{}'", row.image_id)));
        }
        rows.insert(row.image_id.clone(), row);
    }
    Ok(rows)
}

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn collect_by_stem(dir: &Path, exts: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out: BTreeMap<String, PathBuf> = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| Error::Load {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        if entry.file_type().is_file() && has_extension(entry.path(), exts) {
            files.push(entry.into_path());
        }
    }
    files.sort();
    for path in files {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Load {
                path: path.clone(),
                message: "file name is not valid UTF-8".into(),
            })?
            .to_string();
        if let Some(prev) = out.get(&stem) {
            return Err(Error::Load {
                path: path.clone(),
                message: format!("stem '{stem}' also used by {}", prev.display()),
            });
        }
        out.insert(stem, path);
    }
    Ok(out)
}

/// Loads the class table from `root/classes.txt`, then the dataset.
pub fn load_dataset_root(root: &Path) -> Result<DatasetIndex> {
    let classes = root.join(CLASSES_FILE);
    if !classes.is_file() {
        return Err(Error::Load {
            path: classes,
            message: "class table missing".into(),
        });
    }
    let table = ClassTable::from_file(&classes)?;
    load_dataset(root, table)
}

/// Scans `root` and builds the index. Dimensions come from `meta.csv` when it
/// has a row for the image, otherwise from the image header.
pub fn load_dataset(root: &Path, class_table: ClassTable) -> Result<DatasetIndex> {
    let images_dir = root.join("images");
    if !images_dir.is_dir() {
        return Err(Error::Load {
            path: images_dir,
            message: "images/ directory missing".into(),
        });
    }
    let image_files = collect_by_stem(&images_dir, &IMAGE_EXTENSIONS)?;
    let label_files = collect_by_stem(&root.join("labels"), &["txt"])?;
    let meta_path = root.join(META_FILE);
    let meta = if meta_path.is_file() {
        read_meta(&meta_path)?
    } else {
        BTreeMap::new()
    };

    if let Some((stem, path)) = label_files.iter().find(|(s, _)| !image_files.contains_key(*s)) {
        return Err(Error::Load {
            path: path.clone(),
            message: format!("label file has no image with stem '{stem}'"),
        });
    }

    let mut records = Vec::with_capacity(image_files.len());
    for (stem, image_path) in &image_files {
        let (width, height, patient_id) = match meta.get(stem) {
            Some(row) => (row.width, row.height, row.patient_id.clone()),
            None => {
                let (w, h) = image::image_dimensions(image_path).map_err(|e| Error::Load {
                    path: image_path.clone(),
                    message: format!("cannot read image dimensions: {e}"),
                })?;
                (w, h, None)
            }
        };
        if width == 0 || height == 0 {
            return Err(Error::Load {
                path: image_path.clone(),
                message: format!("image has zero size {width}x{height}"),
            });
        }
        let mut record = ImageRecord::new(stem.clone(), width, height);
        record.patient_id = patient_id;
        record.image_path = Some(image_path.clone());
        if let Some(label_path) = label_files.get(stem) {
            let text = fs::read_to_string(label_path).at(label_path)?;
            let anns = parse_label_file(
                &text,
                stem,
                (width, height),
                &label_path.display().to_string(),
            )?;
            if let Some(pos) = anns.iter().position(|a| !class_table.contains(a.class_id)) {
                let line = text
                    .lines()
                    .enumerate()
                    .filter(|(_, l)| !l.trim().is_empty())
                    .nth(pos)
                    .map_or(0, |(i, _)| i + 1);
                return Err(Error::LabelParse {
                    path: label_path.display().to_string(),
                    line,
                    message: format!(
                        "class id {} not in class table of {} names",
                        anns[pos].class_id,
                        class_table.len()
                    ),
                });
            }
            record.annotations = anns;
            record.label_path = Some(label_path.clone());
        }
        records.push(record);
    }
    DatasetIndex::new(class_table, records)
}
