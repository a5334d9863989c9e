//! Inference-side evaluation: greedy NMS, COCO-style average precision and
//! a task-misalignment rate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{iou, BBox};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub class_id: u32,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: u64, class_id: u32, bbox: BBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidDetection(alloc::format!("score {score} outside [0, 1]")));
        }
        Ok(Self { image_id, class_id, bbox, score })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub image_id: u64,
    pub class_id: u32,
    pub bbox: BBox,
}

/// Indices of `dets` sorted by descending score, input order on ties.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy non-maximum suppression within each (image, class) group.
///
/// Returns the indices of the kept detections in descending score order.
/// A detection is dropped when its IoU with an already kept detection of the
/// same group is strictly greater than `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let mut kept_by_group: BTreeMap<(u64, u32), Vec<usize>> = BTreeMap::new();
    let mut kept = Vec::new();
    for i in score_order(dets) {
        let d = &dets[i];
        let group = kept_by_group.entry((d.image_id, d.class_id)).or_default();
        if group.iter().all(|&k| iou(&dets[k].bbox, &d.bbox) <= iou_threshold) {
            group.push(i);
            kept.push(i);
        }
    }
    kept
}

/// Object-area bands in pixels squared.
pub const AREA_SMALL: (f64, f64) = (0.0, 32.0 * 32.0);
pub const AREA_MEDIUM: (f64, f64) = (32.0 * 32.0, 96.0 * 96.0);
pub const AREA_LARGE: (f64, f64) = (96.0 * 96.0, f64::INFINITY);
const AREA_ALL: (f64, f64) = (0.0, f64::INFINITY);

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub iou_thresholds: Vec<f64>,
    /// Per image and class, only the top-scoring detections are evaluated.
    pub max_detections: Option<usize>,
    pub area_bands: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { iou_thresholds: coco_thresholds(), max_detections: Some(100), area_bands: false }
    }
}

/// `0.50, 0.55, ..., 0.95`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AreaAp {
    /// `None` when no ground truth falls in the band.
    pub small: Option<f64>,
    pub medium: Option<f64>,
    pub large: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EvalResult {
    /// Mean over `per_threshold`.
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// `(iou_threshold, ap)` pairs.
    pub per_threshold: Vec<(f64, f64)>,
    pub area: Option<AreaAp>,
}

struct Matched {
    score: f64,
    true_positive: bool,
}

/// Matches one (image, class) group and appends non-ignored outcomes to `out`.
/// Returns the number of non-ignored ground-truth boxes.
fn match_group(
    dets: &[&Detection],
    gts: &[&GroundTruth],
    threshold: f64,
    area: (f64, f64),
    out: &mut Vec<Matched>,
) -> usize {
    let outside = |b: &BBox| b.area() < area.0 || b.area() > area.1;
    // non-ignored ground truth first
    let mut order: Vec<usize> = (0..gts.len()).collect();
    order.sort_by_key(|&g| outside(&gts[g].bbox));
    let ignored: Vec<bool> = order.iter().map(|&g| outside(&gts[g].bbox)).collect();
    let mut taken = vec![false; gts.len()];

    for d in dets {
        let mut best: Option<usize> = None;
        let mut best_iou = threshold.min(1.0 - 1e-10);
        for (slot, &g) in order.iter().enumerate() {
            if taken[slot] {
                continue;
            }
            if let Some(b) = best {
                if !ignored[b] && ignored[slot] {
                    break;
                }
            }
            let v = iou(&d.bbox, &gts[g].bbox);
            if v < best_iou {
                continue;
            }
            best_iou = v;
            best = Some(slot);
        }
        match best {
            Some(slot) => {
                taken[slot] = true;
                if !ignored[slot] {
                    out.push(Matched { score: d.score, true_positive: true });
                }
            }
            None if !outside(&d.bbox) => out.push(Matched { score: d.score, true_positive: false }),
            None => {}
        }
    }
    ignored.iter().filter(|i| !**i).count()
}

/// 101-point interpolated precision for one class.
fn interpolated_ap(mut matched: Vec<Matched>, positives: usize) -> f64 {
    // stable: keeps image order, then per-image rank, on equal scores
    matched.sort_by(|a, b| b.score.total_cmp(&a.score));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(matched.len());
    let mut precision = Vec::with_capacity(matched.len());
    for m in &matched {
        if m.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for k in (1..precision.len()).rev() {
        if precision[k] > precision[k - 1] {
            precision[k - 1] = precision[k];
        }
    }
    let total: f64 = (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            let idx = recall.partition_point(|&v| v < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    total / 101.0
}

struct Grouped<'a> {
    classes: BTreeSet<u32>,
    images: BTreeSet<u64>,
    gts: BTreeMap<(u64, u32), Vec<&'a GroundTruth>>,
    dets: BTreeMap<(u64, u32), Vec<&'a Detection>>,
}

fn group<'a>(dets: &'a [Detection], gts: &'a [GroundTruth], max_detections: Option<usize>) -> Grouped<'a> {
    let mut g =
        Grouped { classes: BTreeSet::new(), images: BTreeSet::new(), gts: BTreeMap::new(), dets: BTreeMap::new() };
    for gt in gts {
        g.classes.insert(gt.class_id);
        g.images.insert(gt.image_id);
        g.gts.entry((gt.image_id, gt.class_id)).or_default().push(gt);
    }
    for i in score_order(dets) {
        let d = &dets[i];
        g.images.insert(d.image_id);
        g.dets.entry((d.image_id, d.class_id)).or_default().push(d);
    }
    if let Some(cap) = max_detections {
        for list in g.dets.values_mut() {
            list.truncate(cap);
        }
    }
    g
}

/// Mean AP over classes that have ground truth in the band, or `None`.
fn ap_at(g: &Grouped<'_>, threshold: f64, area: (f64, f64)) -> Option<f64> {
    let mut per_class = Vec::new();
    for &c in &g.classes {
        let mut matched = Vec::new();
        let mut positives = 0;
        for &img in &g.images {
            let gts = g.gts.get(&(img, c)).map_or(&[][..], Vec::as_slice);
            let dets = g.dets.get(&(img, c)).map_or(&[][..], Vec::as_slice);
            positives += match_group(dets, gts, threshold, area, &mut matched);
        }
        if positives > 0 {
            per_class.push(interpolated_ap(matched, positives));
        }
    }
    (!per_class.is_empty()).then(|| per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// COCO-style average precision.
///
/// Detections are matched greedily in descending score order to the
/// unmatched ground truth of the same image and class with the highest IoU
/// at or above the threshold. Precision is interpolated at 101 recall
/// points and averaged over classes that have ground truth.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], params: &EvalParams) -> Result<EvalResult> {
    if gts.is_empty() {
        return Err(Error::EmptyInput("no ground truth to evaluate against"));
    }
    if params.iou_thresholds.is_empty() || params.iou_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidConfig("IoU thresholds must be a non-empty list within [0, 1]".into()));
    }
    let g = group(dets, gts, params.max_detections);
    let at = |t: f64, area| ap_at(&g, t, area).unwrap_or(0.0);
    let per_threshold: Vec<(f64, f64)> = params.iou_thresholds.iter().map(|&t| (t, at(t, AREA_ALL))).collect();
    let ap = per_threshold.iter().map(|p| p.1).sum::<f64>() / per_threshold.len() as f64;
    let lookup =
        |t: f64| per_threshold.iter().find(|p| (p.0 - t).abs() < 1e-12).map_or_else(|| at(t, AREA_ALL), |p| p.1);
    let area = params.area_bands.then(|| {
        let band = |range| {
            let v: Option<Vec<f64>> = params.iou_thresholds.iter().map(|&t| ap_at(&g, t, range)).collect();
            v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        AreaAp { small: band(AREA_SMALL), medium: band(AREA_MEDIUM), large: band(AREA_LARGE) }
    });
    Ok(EvalResult { ap, ap50: lookup(0.5), ap75: lookup(0.75), per_threshold, area })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Misalignment {
    pub rate: f64,
    /// Per input detection: confident but poorly localized.
    pub flags: Vec<bool>,
    pub considered: usize,
    pub misaligned: usize,
}

/// Share of confident detections (`score >= score_threshold`) whose best IoU
/// with a same-image, same-class ground truth is below `loc_threshold`.
/// Zero when no detection is confident.
pub fn misalignment_rate(
    dets: &[Detection],
    gts: &[GroundTruth],
    loc_threshold: f64,
    score_threshold: f64,
) -> Misalignment {
    let mut flags = vec![false; dets.len()];
    let mut considered = 0;
    for (i, d) in dets.iter().enumerate() {
        if d.score < score_threshold {
            continue;
        }
        considered += 1;
        let best = gts
            .iter()
            .filter(|g| g.image_id == d.image_id && g.class_id == d.class_id)
            .map(|g| iou(&g.bbox, &d.bbox))
            .fold(0.0, f64::max);
        flags[i] = best < loc_threshold;
    }
    let misaligned = flags.iter().filter(|f| **f).count();
    let rate = if considered == 0 { 0.0 } else { misaligned as f64 / considered as f64 };
    Misalignment { rate, flags, considered, misaligned }
}
