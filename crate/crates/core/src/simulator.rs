//! Synthetic scenes and training-trajectory predictions.
//!
//! The simulator stands in for a detector during training. At progress
//! `t = 0` every regressed box equals its anchor and every class score is
//! zero; as `t` grows, each anchor's box moves toward its target object
//! (the object it overlaps most, or the nearest one when it overlaps none)
//! and its scores rise toward values coupled to the regressed IoU.
//!
//! A configurable fraction of anchors can be made misaligned in either
//! direction: a confident score on a box that never improves, or an accurate
//! box with a near-zero score.
//!
//! How fast fixed-threshold positive counts grow under this model is a
//! property of the model, not a measurement of real training.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assignment::{
    classify_to_localize_with_budgets, localize_to_classify_with_budgets, mutual_guidance_assign, positives_per_object,
    static_assign, Assignment, Label, MatchingConfig,
};
use crate::evaluation::Detection;
use crate::geometry::{iou, iou_matrix, BBox, UnitMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct SceneSpec {
    pub image_width: u32,
    pub image_height: u32,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Side lengths are drawn independently from `[min_size, max_size]`.
    pub min_size: f64,
    pub max_size: f64,
    /// Upper bound on the IoU between any two generated objects.
    pub max_pairwise_iou: Option<f64>,
    pub num_classes: u32,
    pub seed: u64,
    /// Placement attempts per object before giving up.
    pub max_attempts: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_width: 320,
            image_height: 320,
            min_objects: 1,
            max_objects: 5,
            min_size: 24.0,
            max_size: 200.0,
            max_pairwise_iou: Some(0.2),
            num_classes: 20,
            seed: 0,
            max_attempts: 1000,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: alloc::string::String| Err(Error::InvalidScene(m));
        if self.image_width == 0 || self.image_height == 0 {
            return fail(format!("image size {}x{} must be positive", self.image_width, self.image_height));
        }
        if self.min_objects == 0 || self.max_objects < self.min_objects {
            return fail(format!("object count range [{}, {}] is invalid", self.min_objects, self.max_objects));
        }
        let limit = self.image_width.min(self.image_height) as f64;
        if !(self.min_size > 0.0 && self.min_size <= self.max_size && self.max_size <= limit) {
            return fail(format!(
                "size range [{}, {}] must be positive and fit in the image",
                self.min_size, self.max_size
            ));
        }
        if let Some(cap) = self.max_pairwise_iou {
            if !(0.0..=1.0).contains(&cap) {
                return fail(format!("max_pairwise_iou {cap} outside [0, 1]"));
            }
        }
        if self.num_classes == 0 || self.max_attempts == 0 {
            return fail("num_classes and max_attempts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneObject {
    pub bbox: BBox,
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn boxes(&self) -> Vec<BBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }
}

pub fn synth_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let count = rng.random_range(spec.min_objects..=spec.max_objects);
    let (w_img, h_img) = (spec.image_width as f64, spec.image_height as f64);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = None;
        for _ in 0..spec.max_attempts {
            let w = rng.random_range(spec.min_size..=spec.max_size);
            let h = rng.random_range(spec.min_size..=spec.max_size);
            let x = rng.random_range(0.0..=w_img - w);
            let y = rng.random_range(0.0..=h_img - h);
            let class_id = rng.random_range(0..spec.num_classes);
            let bbox = BBox::new(x, y, (x + w).min(w_img), (y + h).min(h_img))?;
            let separated = spec.max_pairwise_iou.is_none_or(|cap| objects.iter().all(|o| iou(&o.bbox, &bbox) <= cap));
            if separated {
                placed = Some(SceneObject { bbox, class_id });
                break;
            }
        }
        match placed {
            Some(o) => objects.push(o),
            None => return Err(Error::PlacementFailed { requested: count, attempts: spec.max_attempts }),
        }
    }
    Ok(Scene { width: spec.image_width, height: spec.image_height, objects })
}

/// Monotone map from training progress to `[0, 1]` with `gain(0) = 0`, `gain(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case")
)]
pub enum Gain {
    #[default]
    Linear,
    Power {
        exponent: f64,
    },
}

impl Gain {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Gain::Linear => t,
            Gain::Power { exponent } => libm::pow(t, exponent),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Gain::Power { exponent } if !(exponent.is_finite() && exponent > 0.0) => {
                Err(Error::InvalidConfig(format!("gain exponent must be positive, got {exponent}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct TrajectoryConfig {
    pub steps: usize,
    /// Interpolation weight from anchor box to target box.
    pub localization_gain: Gain,
    /// Ceiling on class scores.
    pub score_gain: Gain,
    /// Box jitter as a fraction of the target's size; never allowed to push
    /// a box below its anchor's IoU.
    pub noise: f64,
    /// Fraction of anchors given a confident score on a stalled box, and the
    /// same fraction given an accurate box with a near-zero score. At most 0.5.
    pub misalignment: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { steps: 10, localization_gain: Gain::Linear, score_gain: Gain::Linear, noise: 0.05, misalignment: 0.0 }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("trajectory needs at least one step".into()));
        }
        self.localization_gain.validate()?;
        self.score_gain.validate()?;
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise must be non-negative, got {}", self.noise)));
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(Error::InvalidConfig(format!("misalignment must be in [0, 0.5], got {}", self.misalignment)));
        }
        Ok(())
    }

    /// Progress values of the steps: evenly spaced from 0 to 1 inclusive.
    pub fn progress_points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return alloc::vec![0.0];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps).map(|k| k as f64 / last).collect()
    }
}

/// How a simulated anchor's two predictions relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum PredictionKind {
    Aligned,
    /// Confident class score, box stuck at the anchor.
    PoorBox,
    /// Accurate box, near-zero class score.
    PoorScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySnapshot {
    pub progress: f64,
    pub regressed_boxes: Vec<BBox>,
    /// Rows are anchors, columns objects.
    pub classif_scores: UnitMatrix,
    pub iou_anchor: UnitMatrix,
    pub iou_regressed: UnitMatrix,
    /// Object each anchor regresses toward.
    pub targets: Vec<usize>,
    pub kinds: Vec<PredictionKind>,
}

impl TrajectorySnapshot {
    /// Fraction of anchors whose regressed box overlaps the target at least
    /// as much as the anchor itself does.
    pub fn fraction_improved(&self) -> f64 {
        let n = self.targets.len();
        let ok = (0..n)
            .filter(|&i| self.iou_regressed.get(i, self.targets[i]) >= self.iou_anchor.get(i, self.targets[i]))
            .count();
        ok as f64 / n as f64
    }
}

fn target_object(iou_row: &[f64], anchor: &BBox, objects: &[BBox]) -> usize {
    let best = crate::rank::top_k(iou_row.iter().copied().enumerate().collect(), 1)[0];
    if iou_row[best] > 0.0 {
        return best;
    }
    let (ax, ay) = anchor.center();
    objects
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let (cx, cy) = o.center();
            (j, (cx - ax) * (cx - ax) + (cy - ay) * (cy - ay))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map_or(0, |(j, _)| j)
}

const ALIGNED_SCORE: f64 = 0.8;

fn jitter(base: &BBox, target: &BBox, offsets: &[f64; 4], amplitude: f64) -> Option<BBox> {
    let (w, h) = (target.width() * amplitude, target.height() * amplitude);
    BBox::new(
        base.x_min() + offsets[0] * w,
        base.y_min() + offsets[1] * h,
        base.x_max() + offsets[2] * w,
        base.y_max() + offsets[3] * h,
    )
    .ok()
}

/// Simulated predictions for every anchor at progress `t`.
///
/// The random draws depend only on `seed` and the anchor order, so the same
/// anchors stay misaligned and keep the same jitter direction along a
/// trajectory.
pub fn synth_predictions(
    scene: &Scene,
    anchors: &[BBox],
    cfg: &TrajectoryConfig,
    t: f64,
    seed: u64,
) -> Result<TrajectorySnapshot> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidConfig(format!("progress must be in [0, 1], got {t}")));
    }
    let objects = scene.boxes();
    let iou_anchor = iou_matrix(anchors, &objects)?;
    let weight = cfg.localization_gain.at(t);
    let ceiling = cfg.score_gain.at(t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut regressed_boxes = Vec::with_capacity(anchors.len());
    let mut targets = Vec::with_capacity(anchors.len());
    let mut kinds = Vec::with_capacity(anchors.len());
    let mut score_draws = Vec::with_capacity(anchors.len());
    for (i, anchor) in anchors.iter().enumerate() {
        let u_kind: f64 = rng.random();
        let offsets: [f64; 4] = core::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        score_draws.push(rng.random::<f64>());

        let target = target_object(iou_anchor.row(i), anchor, &objects);
        let gt = &objects[target];
        let kind = if u_kind < cfg.misalignment {
            PredictionKind::PoorBox
        } else if u_kind < 2.0 * cfg.misalignment {
            PredictionKind::PoorScore
        } else {
            PredictionKind::Aligned
        };
        let start = iou_anchor.get(i, target);
        let regressed = match kind {
            PredictionKind::PoorBox => *anchor,
            _ => {
                let base = anchor.lerp(gt, weight);
                let amplitude = cfg.noise * weight;
                // halve the jitter until the box is no worse than the anchor
                let noisy = (0..4)
                    .map(|k| amplitude / (1u32 << k) as f64)
                    .filter(|&a| a > 0.0)
                    .filter_map(|a| jitter(&base, gt, &offsets, a))
                    .find(|b| iou(b, gt) >= start);
                match noisy {
                    Some(b) => b,
                    None if iou(&base, gt) >= start => base,
                    None => *anchor,
                }
            }
        };
        regressed_boxes.push(regressed);
        targets.push(target);
        kinds.push(kind);
    }

    let iou_regressed = iou_matrix(&regressed_boxes, &objects)?;
    let classif_scores = iou_regressed.map(|i, j, reg| {
        let u = score_draws[i];
        let aligned = ceiling * ALIGNED_SCORE * reg * (0.9 + 0.2 * u);
        if j != targets[i] {
            return aligned;
        }
        match kinds[i] {
            PredictionKind::Aligned => aligned,
            PredictionKind::PoorBox => ceiling * (0.9 + 0.1 * u),
            PredictionKind::PoorScore => ceiling * 0.1 * u,
        }
    });

    Ok(TrajectorySnapshot { progress: t, regressed_boxes, classif_scores, iou_anchor, iou_regressed, targets, kinds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Strategy {
    Static,
    /// Dynamic thresholds: top `N_p` / `N_i` by regressed IoU.
    LocalizeToClassify,
    /// `t_pos` / `t_neg` applied directly to the regressed IoU.
    FixedThresholdLocalizeToClassify,
    ClassifyToLocalize,
    MutualGuidance,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StepRecord {
    pub progress: f64,
    /// Positives each object selected before the cross-object merge.
    pub selected_per_object: Vec<usize>,
    pub selected_total: usize,
    /// Distinct positive anchors after the merge.
    pub positive_total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub strategy: Strategy,
    pub steps: Vec<StepRecord>,
    /// One per step when requested, otherwise empty.
    pub assignments: Vec<Assignment>,
}

impl TrajectoryReport {
    pub fn selected_series(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.selected_total).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.steps.windows(2).all(|w| w[0].selected_total == w[1].selected_total)
    }

    /// Last selected total over the first.
    pub fn growth_factor(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) if a.selected_total > 0 => b.selected_total as f64 / a.selected_total as f64,
            _ => 0.0,
        }
    }
}

/// Runs one strategy over every step of a trajectory.
///
/// Counts refer to classification labels, except for
/// [`Strategy::ClassifyToLocalize`] which only produces localization labels.
pub fn run_trajectory(
    scene: &Scene,
    anchors: &[BBox],
    cfg: &TrajectoryConfig,
    matching: &MatchingConfig,
    strategy: Strategy,
    seed: u64,
    keep_assignments: bool,
) -> Result<TrajectoryReport> {
    cfg.validate()?;
    matching.validate()?;
    let objects = scene.objects.len();
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut assignments = Vec::new();
    let mut budgets = None;
    for t in cfg.progress_points() {
        let snap = synth_predictions(scene, anchors, cfg, t, seed)?;
        let reference = static_assign(&snap.iou_anchor, matching)?;
        let budgets = budgets.get_or_insert_with(|| reference.per_object_counts.clone());
        let n_p: Vec<usize> = budgets.iter().map(|c| c.positive).collect();

        let (assignment, selected) = match strategy {
            Strategy::Static => (reference, n_p),
            Strategy::FixedThresholdLocalizeToClassify => {
                let fixed = static_assign(&snap.iou_regressed, matching)?;
                let sel = fixed.per_object_counts.iter().map(|c| c.positive).collect();
                (fixed, sel)
            }
            Strategy::LocalizeToClassify => {
                let cls = localize_to_classify_with_budgets(&snap.iou_regressed, budgets);
                let sel = cls.selected.iter().map(|c| c.positive).collect();
                let a = Assignment {
                    classification_labels: cls.labels,
                    localization_labels: reference.localization_labels,
                    per_object_counts: budgets.clone(),
                    warnings: cls.warnings,
                };
                (a, sel)
            }
            Strategy::ClassifyToLocalize => {
                let loc =
                    classify_to_localize_with_budgets(&snap.iou_anchor, &snap.classif_scores, matching.sigma, budgets);
                let sel = loc.selected.iter().map(|c| c.positive).collect();
                let a = Assignment {
                    classification_labels: reference.classification_labels,
                    localization_labels: loc.labels,
                    per_object_counts: budgets.clone(),
                    warnings: loc.warnings,
                };
                (a, sel)
            }
            Strategy::MutualGuidance => {
                let m = mutual_guidance_assign(&snap.iou_anchor, &snap.iou_regressed, &snap.classif_scores, matching)?;
                (m, n_p)
            }
        };
        let counted = if strategy == Strategy::ClassifyToLocalize {
            &assignment.localization_labels
        } else {
            &assignment.classification_labels
        };
        let positive_total = positives_per_object(counted, objects).iter().sum();
        steps.push(StepRecord {
            progress: t,
            selected_total: selected.iter().sum(),
            selected_per_object: selected,
            positive_total,
        });
        if keep_assignments {
            assignments.push(assignment);
        }
    }
    Ok(TrajectoryReport { strategy, steps, assignments })
}

/// How training labels are assumed to shape a detector's final outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct DetectionModel {
    /// Pull of the classification label on the score: positives move this
    /// far toward 1, negatives this far toward 0, ignored anchors stay put.
    pub label_influence: f64,
    /// Fraction of the remaining gap to the object that a localization
    /// positive closes.
    pub box_refinement: f64,
    /// Detections scoring below this are dropped.
    pub min_score: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self { label_influence: 0.5, box_refinement: 0.25, min_score: 0.05 }
    }
}

/// Turns a snapshot plus training labels into one detection per anchor.
///
/// Each anchor reports the class of its positive object (or of its target
/// object when not positive).
pub fn label_consistent_detections(
    scene: &Scene,
    snapshot: &TrajectorySnapshot,
    assignment: &Assignment,
    model: &DetectionModel,
    image_id: u64,
) -> Vec<Detection> {
    let beta = model.label_influence;
    let mut out = Vec::new();
    for (i, reg) in snapshot.regressed_boxes.iter().enumerate() {
        let cls = assignment.classification_labels[i];
        let object = cls.object().unwrap_or(snapshot.targets[i]);
        let s = snapshot.classif_scores.get(i, object);
        let score = match cls {
            Label::Positive(_) => s + beta * (1.0 - s),
            Label::Negative => s * (1.0 - beta),
            Label::Ignored => s,
        };
        if score < model.min_score {
            continue;
        }
        let bbox = match assignment.localization_labels[i] {
            Label::Positive(k) => reg.lerp(&scene.objects[k].bbox, model.box_refinement),
            _ => *reg,
        };
        out.push(Detection { image_id, class_id: scene.objects[object].class_id, bbox, score });
    }
    out
}

/// Misalignment rates of detections shaped by static labels and by
/// prediction-guided labels on the same snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MisalignmentComparison {
    pub static_rate: f64,
    pub mutual_rate: f64,
}

/// Builds both detection sets from `snapshot`, applies NMS and measures
/// [`misalignment_rate`](crate::evaluation::misalignment_rate) on each.
pub fn compare_misalignment(
    scene: &Scene,
    snapshot: &TrajectorySnapshot,
    matching: &MatchingConfig,
    model: &DetectionModel,
    nms_threshold: f64,
    loc_threshold: f64,
    score_threshold: f64,
) -> Result<MisalignmentComparison> {
    use crate::evaluation::{misalignment_rate, nms, GroundTruth};
    let gts: Vec<GroundTruth> =
        scene.objects.iter().map(|o| GroundTruth { image_id: 0, class_id: o.class_id, bbox: o.bbox }).collect();
    let rate = |assignment: &Assignment| {
        let dets = label_consistent_detections(scene, snapshot, assignment, model, 0);
        let kept: Vec<Detection> = nms(&dets, nms_threshold).into_iter().map(|i| dets[i]).collect();
        misalignment_rate(&kept, &gts, loc_threshold, score_threshold).rate
    };
    let stat = static_assign(&snapshot.iou_anchor, matching)?;
    let mutual =
        mutual_guidance_assign(&snapshot.iou_anchor, &snapshot.iou_regressed, &snapshot.classif_scores, matching)?;
    Ok(MisalignmentComparison { static_rate: rate(&stat), mutual_rate: rate(&mutual) })
}
