//! Python bindings: `import detbench_py`.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use detbench::augment::{self, ImageBuffer};
use detbench::bbox;
use detbench::dataset::{self, Annotation, ClassTable, DatasetIndex, ImageRecord, SplitMode, SplitRatios};
use detbench::geometry;
use detbench::metrics::{self, IoUThresholdGrid};
use detbench::postprocess;
use detbench::report::{self, interchange, TableFormat, TrainingConfig};

fn err(e: detbench::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn make_box(c: [f64; 4]) -> PyResult<bbox::BBox> {
    bbox::BBox::new(c[0], c[1], c[2], c[3])
        .ok_or_else(|| PyValueError::new_err(format!("invalid box {c:?}: need x1 < x2, y1 < y2")))
}

/// Axis-aligned box in pixel xyxy.
#[pyclass(frozen, name = "BBox")]
struct PyBBox {
    inner: bbox::BBox,
}

#[pymethods]
impl PyBBox {
    #[new]
    fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> PyResult<Self> {
        Ok(PyBBox {
            inner: make_box([x1, y1, x2, y2])?,
        })
    }

    #[getter]
    fn corners(&self) -> [f64; 4] {
        self.inner.as_array()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn iou(&self, other: &PyBBox) -> f64 {
        bbox::iou(&self.inner, &other.inner)
    }

    fn __repr__(&self) -> String {
        let [x1, y1, x2, y2] = self.inner.as_array();
        format!("BBox({x1}, {y1}, {x2}, {y2})")
    }
}

/// Letterbox mapping between original and network-input pixels.
#[pyclass(frozen, name = "Letterbox")]
struct PyLetterbox {
    inner: geometry::LetterboxTransform,
}

#[pymethods]
impl PyLetterbox {
    #[new]
    fn new(width: u32, height: u32, target: u32) -> PyResult<Self> {
        Ok(PyLetterbox {
            inner: geometry::letterbox(width, height, target).map_err(err)?,
        })
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale
    }

    #[getter]
    fn pad(&self) -> (u32, u32) {
        (self.inner.pad_x, self.inner.pad_y)
    }

    fn to_input(&self, b: [f64; 4]) -> PyResult<[f64; 4]> {
        Ok(geometry::box_to_input_space(&make_box(b)?, &self.inner).as_array())
    }

    fn to_original(&self, b: [f64; 4]) -> PyResult<[f64; 4]> {
        let raw = bbox::BBox {
            x1: b[0],
            y1: b[1],
            x2: b[2],
            y2: b[3],
        };
        Ok(geometry::box_from_input_space(&raw, &self.inner).map_err(err)?.as_array())
    }
}

#[pyfunction]
fn iou(a: [f64; 4], b: [f64; 4]) -> PyResult<f64> {
    Ok(bbox::iou(&make_box(a)?, &make_box(b)?))
}

/// `clamp(round_half_even(alpha*a + beta*b + gamma))` over flat 8-bit buffers;
/// returns `bytes`.
#[pyfunction]
#[pyo3(signature = (a, alpha, b, beta, gamma, width, height, channels=1))]
#[allow(clippy::too_many_arguments)]
fn weighted_blend(
    a: Vec<u8>,
    alpha: f64,
    b: Vec<u8>,
    beta: f64,
    gamma: f64,
    width: u32,
    height: u32,
    channels: u8,
) -> PyResult<Vec<u8>> {
    let a = ImageBuffer::new(width, height, channels, a).map_err(err)?;
    let b = ImageBuffer::new(width, height, channels, b).map_err(err)?;
    Ok(augment::weighted_blend(&a, alpha, &b, beta, gamma).map_err(err)?.into_data())
}

#[pyfunction]
fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> PyResult<(usize, usize, usize)> {
    Ok(SplitRatios::new(ratios.0, ratios.1, ratios.2).map_err(err)?.sizes(n))
}

/// Seeded image-level split of `ids`; returns `{id: "train"|"valid"|"test"}`.
#[pyfunction]
#[pyo3(signature = (ids, ratios=(0.7, 0.2, 0.1), seed=0))]
fn split(ids: Vec<String>, ratios: (f64, f64, f64), seed: u64) -> PyResult<BTreeMap<String, String>> {
    let table = ClassTable::new(vec!["object".into()]).map_err(err)?;
    let records = ids.into_iter().map(|id| ImageRecord::new(id, 1, 1)).collect();
    let index = DatasetIndex::new(table, records).map_err(err)?;
    let ratios = SplitRatios::new(ratios.0, ratios.1, ratios.2).map_err(err)?;
    let a = dataset::split_dataset(&index, ratios, seed, SplitMode::Image).map_err(err)?;
    Ok(a.iter().map(|(id, s)| (id.to_string(), s.to_string())).collect())
}

type PyDet = (String, u32, [f64; 4], f64);

fn to_dets(dets: Vec<PyDet>) -> PyResult<Vec<postprocess::Detection>> {
    dets.into_iter()
        .map(|(image, class_id, b, score)| Ok(postprocess::Detection::new(image, class_id, make_box(b)?, score)))
        .collect()
}

fn from_dets(dets: Vec<postprocess::Detection>) -> Vec<PyDet> {
    dets.into_iter()
        .map(|d| (d.image_id, d.class_id, d.bbox.as_array(), d.score))
        .collect()
}

/// Confidence filter + class-wise NMS, per image.
#[pyfunction]
#[pyo3(signature = (dets, iou_threshold=0.45, confidence=0.0))]
fn nms(dets: Vec<PyDet>, iou_threshold: f64, confidence: f64) -> PyResult<Vec<PyDet>> {
    Ok(from_dets(postprocess::postprocess_all(to_dets(dets)?, confidence, iou_threshold)))
}

/// Scores detections `(image, class_id, [x1,y1,x2,y2], score)` against
/// ground truth `(image, class_id, [x1,y1,x2,y2])`. `images` maps id to
/// `(width, height)`; every image in it is evaluated.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    images: BTreeMap<String, (u32, u32)>,
    classes: Vec<String>,
    ground_truth: Vec<(String, u32, [f64; 4])>,
    dets: Vec<PyDet>,
) -> PyResult<Bound<'py, PyDict>> {
    let table = ClassTable::new(classes).map_err(err)?;
    let mut records: BTreeMap<String, ImageRecord> = images
        .iter()
        .map(|(id, &(w, h))| (id.clone(), ImageRecord::new(id.clone(), w, h)))
        .collect();
    for (image_id, class_id, b) in ground_truth {
        let rec = records
            .get_mut(&image_id)
            .ok_or_else(|| PyValueError::new_err(format!("ground truth for unknown image '{image_id}'")))?;
        rec.annotations.push(Annotation {
            image_id,
            class_id,
            bbox: make_box(b)?,
        });
    }
    let index = DatasetIndex::new(table.clone(), records.into_values().collect()).map_err(err)?;
    let ids: Vec<String> = images.into_keys().collect();
    let r = metrics::evaluate(&index, &ids, &to_dets(dets)?, &IoUThresholdGrid::standard()).map_err(err)?;

    let out = PyDict::new(py);
    out.set_item("map50", r.map50)?;
    out.set_item("map5095", r.map5095)?;
    out.set_item("f1_best", r.f1_best)?;
    out.set_item("f1_confidence", r.f1_best_confidence)?;
    let per_class: BTreeMap<String, Vec<f64>> = r
        .per_class_ap
        .iter()
        .map(|(c, aps)| (table.name(*c).unwrap_or_default().to_string(), aps.to_vec()))
        .collect();
    out.set_item("per_class", per_class)?;
    Ok(out)
}

/// Renders `models.json` text as one table per input size.
#[pyfunction]
#[pyo3(signature = (models_json, format="markdown"))]
fn render_tables(models_json: &str, format: &str) -> PyResult<BTreeMap<u32, String>> {
    let format: TableFormat = format.parse().map_err(err)?;
    let rows = report::parse_models(models_json).map_err(err)?;
    Ok(report::render_tables_by_size(&rows, format).map_err(err)?.into_iter().collect())
}

/// Number of detections in a dets-v1 document; raises on any defect.
#[pyfunction]
fn validate_dets(text: &str) -> PyResult<usize> {
    interchange::validate_dets_v1(text).map_err(err)
}

/// Training config text from the reference preset plus `key=value` overrides.
#[pyfunction]
#[pyo3(signature = (overrides=Vec::new()))]
fn training_config(overrides: Vec<String>) -> PyResult<String> {
    let cfg = TrainingConfig::reference_default()
        .with_overrides(overrides.iter().map(String::as_str))
        .map_err(err)?;
    Ok(cfg.to_text())
}

#[pymodule]
fn detbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBBox>()?;
    m.add_class::<PyLetterbox>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_blend, m)?)?;
    m.add_function(wrap_pyfunction!(split_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(render_tables, m)?)?;
    m.add_function(wrap_pyfunction!(validate_dets, m)?)?;
    m.add_function(wrap_pyfunction!(training_config, m)?)?;
    Ok(())
}
