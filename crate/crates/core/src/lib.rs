//! Evaluation and benchmarking engine for object-detection pipelines.
//!
//! Dataset indexing and splitting, photometric augmentation, letterbox
//! geometry, class-wise NMS, COCO-style mAP and F1 scoring, staged latency
//! measurement and report generation.

pub mod augment;
pub mod bbox;
pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod postprocess;
pub mod report;

pub use bbox::{iou, BBox};
pub use dataset::{Annotation, ClassTable, DatasetIndex, ImageRecord, SplitAssignment, Subset};
pub use error::{Error, Result};
pub use metrics::{evaluate, EvalReport, IoUThresholdGrid};
pub use postprocess::Detection;
