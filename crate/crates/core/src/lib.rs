//! Training-time label assignment for anchor-based and anchor-free detectors.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure
//! computation: box geometry, anchor/point grids, the static IoU matcher,
//! the prediction-guided matchers (localize-to-classify, classify-to-localize
//! and their combination), FCOS-style point assignment, a synthetic
//! training-trajectory simulator, and inference-side evaluation (NMS, AP,
//! misalignment rate). File formats and the command line live in the
//! `labelassign` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod anchors;
pub mod assignment;
mod error;
pub mod evaluation;
pub mod fcos;
pub mod geometry;
mod rank;
pub mod simulator;

pub use anchors::{generate_anchors, generate_points, AnchorGridSpec, AnchorSet, GridPoint, LevelSpec, PointSet};
pub use assignment::{
    amplified_iou, classify_to_localize, localize_to_classify, mutual_guidance_assign, static_assign, Assignment,
    Label, MatchingConfig, ObjectCounts, TaskLabels, Warning,
};
pub use error::Error;
pub use evaluation::{
    average_precision, misalignment_rate, nms, Detection, EvalParams, EvalResult, GroundTruth, Misalignment,
};
pub use fcos::{
    centerness, fcos_assign_original, fcos_classify_to_localize, fcos_localize_to_classify, fcos_mutual_assign,
    PointAssignment,
};
pub use geometry::{iou, iou_matrix, BBox, IouMatrix, UnitMatrix};
pub use simulator::{
    compare_misalignment, label_consistent_detections, run_trajectory, synth_predictions, synth_scene, DetectionModel,
    Gain, MisalignmentComparison, PredictionKind, Scene, SceneObject, SceneSpec, StepRecord, Strategy,
    TrajectoryConfig, TrajectoryReport, TrajectorySnapshot,
};

pub type Result<T, E = Error> = core::result::Result<T, E>;
