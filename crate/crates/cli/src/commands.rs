//! The `assign`, `simulate` and `evaluate` subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use labelassign_core::assignment::{classify_to_localize, localize_to_classify, positives_per_object};
use labelassign_core::{
    average_precision, fcos_assign_original, fcos_mutual_assign, generate_anchors, generate_points,
    mutual_guidance_assign, run_trajectory, static_assign, synth_predictions, synth_scene, Assignment, GroundTruth,
    Label, ObjectCounts, Scene, SceneObject, SceneSpec, Strategy, TrajectorySnapshot, Warning,
};
use serde::Serialize;

use crate::coco::{self, Dataset};
use crate::config::{RunConfig, StrategyChoice};
use crate::svg;

pub const FORMAT_VERSION: u32 = 1;

/// A scene on the grid canvas, tagged with the image it came from.
#[derive(Debug, Clone)]
pub struct InputScene {
    pub image_id: u64,
    pub scene: Scene,
    /// Seed for simulated predictions.
    pub seed: u64,
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    coco::parse_dataset(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Scenes from the configured source. Annotated boxes are rescaled from
/// image pixels to the grid canvas; images without annotations are skipped.
pub fn load_scenes(cfg: &RunConfig, diag: &mut dyn Write) -> anyhow::Result<Vec<InputScene>> {
    let (cw, ch) = (cfg.grid.image_width, cfg.grid.image_height);
    if let Some(path) = &cfg.annotations {
        let data = load_dataset(path)?;
        let mut scenes = Vec::new();
        for (image_id, anns) in data.by_image() {
            if anns.is_empty() {
                writeln!(diag, "warning: image {image_id} has no annotations, skipped")?;
                continue;
            }
            let info = data.image(image_id).expect("grouped ids come from the image list");
            let (sx, sy) = (cw as f64 / info.width, ch as f64 / info.height);
            let objects = anns
                .iter()
                .map(|a| Ok(SceneObject { bbox: a.bbox.scaled(sx, sy)?, class_id: a.category_id }))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let seed = cfg.scene.seed.wrapping_add(image_id);
            scenes.push(InputScene { image_id, scene: Scene { width: cw, height: ch, objects }, seed });
        }
        return Ok(scenes);
    }
    (0..cfg.scenes as u64)
        .map(|k| {
            let seed = cfg.scene.seed.wrapping_add(k);
            let spec = SceneSpec { image_width: cw, image_height: ch, seed, ..cfg.scene.clone() };
            Ok(InputScene { image_id: k, scene: synth_scene(&spec)?, seed })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Counts {
    Anchors(Vec<ObjectCounts>),
    Points(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositiveCounts {
    pub classification: Vec<usize>,
    pub localization: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentFile {
    pub format_version: u32,
    pub image_id: u64,
    pub strategy: &'static str,
    /// `anchors` or `points`.
    pub mode: &'static str,
    pub progress: f64,
    /// Canvas coordinates, `[x_min, y_min, x_max, y_max]`.
    pub objects: Vec<[f64; 4]>,
    /// Object index when positive, -1 negative, -2 ignored.
    pub classification_labels: Vec<i64>,
    pub localization_labels: Vec<i64>,
    pub per_object_counts: Counts,
    pub positives_per_object: PositiveCounts,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskDiff {
    pub only_baseline: Vec<usize>,
    pub only_strategy: Vec<usize>,
    pub shared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffFile {
    pub format_version: u32,
    pub image_id: u64,
    pub baseline: &'static str,
    pub strategy: &'static str,
    pub classification: TaskDiff,
    pub localization: TaskDiff,
    pub baseline_positives: Vec<usize>,
    pub strategy_positives: PositiveCounts,
    /// Whether both tasks of the strategy give every object as many
    /// positives as the baseline.
    pub counts_equal: bool,
}

struct Labels {
    classification: Vec<Label>,
    localization: Vec<Label>,
    counts: Counts,
    warnings: Vec<Warning>,
}

impl From<Assignment> for Labels {
    fn from(a: Assignment) -> Self {
        Labels {
            classification: a.classification_labels,
            localization: a.localization_labels,
            counts: Counts::Anchors(a.per_object_counts),
            warnings: a.warnings,
        }
    }
}

fn codes(labels: &[Label]) -> Vec<i64> {
    labels.iter().map(Label::code).collect()
}

fn diff(baseline: &[Label], strategy: &[Label]) -> TaskDiff {
    let mut d = TaskDiff { only_baseline: Vec::new(), only_strategy: Vec::new(), shared: 0 };
    for (i, (b, s)) in baseline.iter().zip(strategy).enumerate() {
        match (b.is_positive(), s.is_positive()) {
            (true, true) => d.shared += 1,
            (true, false) => d.only_baseline.push(i),
            (false, true) => d.only_strategy.push(i),
            _ => {}
        }
    }
    d
}

fn point_side(cfg: &RunConfig, level: usize) -> f64 {
    cfg.grid.levels[level].scales.iter().copied().fold(f64::INFINITY, f64::min)
}

fn run_strategy(
    cfg: &RunConfig,
    choice: StrategyChoice,
    input: &InputScene,
    snap: &TrajectorySnapshot,
    points: Option<&labelassign_core::PointSet>,
) -> anyhow::Result<Labels> {
    let m = &cfg.matching;
    let objects = input.scene.boxes();
    Ok(match choice {
        StrategyChoice::Static => static_assign(&snap.iou_anchor, m)?.into(),
        StrategyChoice::Mutual => {
            mutual_guidance_assign(&snap.iou_anchor, &snap.iou_regressed, &snap.classif_scores, m)?.into()
        }
        StrategyChoice::L2c => {
            let mut base: Labels = static_assign(&snap.iou_anchor, m)?.into();
            let cls = localize_to_classify(&snap.iou_anchor, &snap.iou_regressed, m)?;
            base.classification = cls.labels;
            base.warnings = cls.warnings;
            base
        }
        StrategyChoice::C2l => {
            let mut base: Labels = static_assign(&snap.iou_anchor, m)?.into();
            let loc = classify_to_localize(&snap.iou_anchor, &snap.classif_scores, m)?;
            base.localization = loc.labels;
            base.warnings = loc.warnings;
            base
        }
        StrategyChoice::Fcos | StrategyChoice::FcosMutual => {
            let points = points.expect("point strategies get a point set");
            let a = if choice == StrategyChoice::Fcos {
                fcos_assign_original(points, &objects, cfg.center_sampling)?
            } else {
                fcos_mutual_assign(
                    points,
                    &objects,
                    &snap.iou_regressed,
                    &snap.classif_scores,
                    m.sigma,
                    cfg.center_sampling,
                )?
            };
            Labels {
                classification: a.classification_labels,
                localization: a.localization_labels,
                counts: Counts::Points(a.per_object_counts),
                warnings: a.warnings,
            }
        }
    })
}

/// Baseline and selected strategy for every scene; returns the files written.
pub fn cmd_assign(cfg: &RunConfig, diag: &mut dyn Write) -> anyhow::Result<Vec<std::path::PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let scenes = load_scenes(cfg, diag)?;
    let anchors = generate_anchors(&cfg.grid)?;
    let points = generate_points(&cfg.grid)?;
    let point_boxes = points.prior_boxes(|l| point_side(cfg, l))?;
    let point_xy: Vec<(f64, f64)> = points.points.iter().map(|p| (p.x, p.y)).collect();
    let choice = cfg.strategy;
    let baseline = choice.baseline();
    let (samples, mode) = if choice.uses_points() { (&point_boxes, "points") } else { (&anchors.boxes, "anchors") };
    let mut written = Vec::new();

    for input in &scenes {
        let snap = synth_predictions(&input.scene, samples, &cfg.trajectory, cfg.progress, input.seed)?;
        let n = input.scene.objects.len();
        let pts = choice.uses_points().then_some(&points);
        let base = run_strategy(cfg, baseline, input, &snap, pts)?;
        let chosen = if choice == baseline { None } else { Some(run_strategy(cfg, choice, input, &snap, pts)?) };
        let objects: Vec<[f64; 4]> = input.scene.objects.iter().map(|o| o.bbox.to_array()).collect();

        let positives = |l: &Labels| PositiveCounts {
            classification: positives_per_object(&l.classification, n),
            localization: positives_per_object(&l.localization, n),
        };
        for (which, labels) in [(baseline, &base)].into_iter().chain(chosen.as_ref().map(|c| (choice, c))) {
            let file = AssignmentFile {
                format_version: FORMAT_VERSION,
                image_id: input.image_id,
                strategy: which.name(),
                mode,
                progress: cfg.progress,
                objects: objects.clone(),
                classification_labels: codes(&labels.classification),
                localization_labels: codes(&labels.localization),
                per_object_counts: labels.counts.clone(),
                positives_per_object: positives(labels),
                warnings: labels.warnings.clone(),
            };
            let path = cfg.out.join(format!("{}.{}.json", input.image_id, which.name()));
            write_json(&path, &file)?;
            written.push(path);
        }

        let other = chosen.as_ref().unwrap_or(&base);
        let strategy_positives = positives(other);
        let baseline_positives = positives_per_object(&base.classification, n);
        let counts_equal = strategy_positives.classification == baseline_positives
            && strategy_positives.localization == baseline_positives;
        let summary = DiffFile {
            format_version: FORMAT_VERSION,
            image_id: input.image_id,
            baseline: baseline.name(),
            strategy: choice.name(),
            classification: diff(&base.classification, &other.classification),
            localization: diff(&base.localization, &other.localization),
            baseline_positives,
            strategy_positives,
            counts_equal,
        };
        let path = cfg.out.join(format!("{}.diff.json", input.image_id));
        write_json(&path, &summary)?;
        written.push(path);

        if cfg.svg {
            let boxes = input.scene.boxes();
            let shape =
                if choice.uses_points() { svg::Shape::Points(&point_xy) } else { svg::Shape::Boxes(&anchors.boxes) };
            let text = svg::render(&svg::Comparison {
                width: input.scene.width,
                height: input.scene.height,
                objects: &boxes,
                shape,
                baseline: &base.classification,
                classification: &other.classification,
                localization: &other.localization,
            });
            let path = cfg.out.join(format!("{}.svg", input.image_id));
            write_atomic(&path, text.as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSeries {
    pub image_id: u64,
    pub dynamic: Vec<usize>,
    pub fixed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryFile {
    pub format_version: u32,
    pub progress: Vec<f64>,
    pub scenes: Vec<SceneSeries>,
    /// Per-step positives summed over scenes.
    pub dynamic_total: Vec<usize>,
    pub fixed_total: Vec<usize>,
    pub dynamic_constant: bool,
    /// Last fixed-threshold total over the first.
    pub fixed_growth_factor: f64,
}

/// Dynamic and fixed-threshold localize-to-classify along a simulated
/// trajectory; prints the verdict lines on `stdout`.
pub fn cmd_simulate(cfg: &RunConfig, stdout: &mut dyn Write, diag: &mut dyn Write) -> anyhow::Result<TrajectoryFile> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let scenes = load_scenes(cfg, diag)?;
    if scenes.is_empty() {
        bail!("no scene with objects to simulate");
    }
    let anchors = generate_anchors(&cfg.grid)?;
    let steps = cfg.trajectory.progress_points();
    let mut dynamic_total = vec![0; steps.len()];
    let mut fixed_total = vec![0; steps.len()];
    let mut series = Vec::with_capacity(scenes.len());
    for input in &scenes {
        let run = |s| {
            run_trajectory(&input.scene, &anchors.boxes, &cfg.trajectory, &cfg.matching, s, input.seed, false)
                .map(|r| r.selected_series())
        };
        let dynamic = run(Strategy::LocalizeToClassify)?;
        let fixed = run(Strategy::FixedThresholdLocalizeToClassify)?;
        for k in 0..steps.len() {
            dynamic_total[k] += dynamic[k];
            fixed_total[k] += fixed[k];
        }
        series.push(SceneSeries { image_id: input.image_id, dynamic, fixed });
    }
    let dynamic_constant = dynamic_total.windows(2).all(|w| w[0] == w[1]);
    let fixed_growth_factor = match (fixed_total.first(), fixed_total.last()) {
        (Some(&a), Some(&b)) if a > 0 => b as f64 / a as f64,
        _ => 0.0,
    };
    let file = TrajectoryFile {
        format_version: FORMAT_VERSION,
        progress: steps,
        scenes: series,
        dynamic_total,
        fixed_total,
        dynamic_constant,
        fixed_growth_factor,
    };
    write_json(&cfg.out.join("trajectory.json"), &file)?;
    writeln!(stdout, "dynamic constant: {}", if dynamic_constant { "yes" } else { "no" })?;
    writeln!(stdout, "fixed growth factor: {fixed_growth_factor:.3}")?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalFile {
    pub format_version: u32,
    pub detections: usize,
    pub ground_truth: usize,
    pub result: labelassign_core::EvalResult,
}

fn table(file: &EvalFile) -> String {
    let r = &file.result;
    let mut rows = vec![("AP", Some(r.ap)), ("AP50", Some(r.ap50)), ("AP75", Some(r.ap75))];
    if let Some(a) = &r.area {
        rows.extend([("AP_s", a.small), ("AP_m", a.medium), ("AP_l", a.large)]);
    }
    let mut out = String::from("metric  value\n");
    for (name, v) in rows {
        let v = v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        out.push_str(&format!("{name:<6}  {v:>5}\n"));
    }
    out
}

/// AP of a COCO result list against the configured ground truth.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    detections: &Path,
    stdout: &mut dyn Write,
    diag: &mut dyn Write,
) -> anyhow::Result<EvalFile> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let (gts, known): (Vec<GroundTruth>, BTreeSet<u64>) = match &cfg.annotations {
        Some(path) => {
            let data = load_dataset(path)?;
            (data.ground_truth(), data.images.iter().map(|i| i.id).collect())
        }
        None => {
            let scenes = load_scenes(cfg, diag)?;
            let gts = scenes
                .iter()
                .flat_map(|s| {
                    s.scene.objects.iter().map(|o| GroundTruth {
                        image_id: s.image_id,
                        class_id: o.class_id,
                        bbox: o.bbox,
                    })
                })
                .collect();
            (gts, scenes.iter().map(|s| s.image_id).collect())
        }
    };
    let text = fs::read_to_string(detections).with_context(|| format!("reading {}", detections.display()))?;
    let dets = coco::parse_detections(&text, &known).with_context(|| format!("parsing {}", detections.display()))?;
    let result = average_precision(&dets, &gts, &cfg.eval.params())?;
    let file = EvalFile { format_version: FORMAT_VERSION, detections: dets.len(), ground_truth: gts.len(), result };
    write_json(&cfg.out.join("eval.json"), &file)?;
    stdout.write_all(table(&file).as_bytes())?;
    Ok(file)
}
