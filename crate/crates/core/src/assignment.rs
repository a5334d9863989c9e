//! Anchor label assignment.
//!
//! Three matchers share the same skeleton:
//!
//! * [`static_assign`] thresholds the anchor/object IoU (`t_pos`, `t_neg`)
//!   and records, per object, how many anchors came out positive (`N_p`) and
//!   ignored (`N_i`).
//! * [`localize_to_classify`] re-ranks anchors by the IoU of their *regressed*
//!   boxes and hands the top `N_p` the positive classification label and the
//!   next `N_i` the ignored label.
//! * [`classify_to_localize`] re-ranks anchors by [`amplified_iou`], which
//!   lifts the anchor IoU according to the predicted class score, and gives
//!   the top `N_p` a positive localization label.
//!
//! Selection happens per object. Afterwards the per-object selections are
//! merged: positive beats ignored beats negative, and an anchor chosen by
//! several objects goes to the one with the highest ranking score (lower
//! object index on ties). Displaced anchors are not refilled, except that an
//! object left without any positive takes the best anchor it can get
//! without emptying another object.
//!
//! # Worked example
//!
//! A single object with thirteen nearby anchors whose IoUs are
//! `[.72, .68, .64, .61, .57, .52, .48, .45, .41, .33, .25, .12, .05]`
//! gets `N_p = 6` and `N_i = 3` from [`static_assign`]. The dynamic matchers
//! then keep exactly six positives, chosen by whatever score they rank on.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::UnitMatrix;
use crate::rank::top_k;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    /// Matched to the object at this index.
    Positive(usize),
    Negative,
    Ignored,
}

impl Label {
    pub fn is_positive(&self) -> bool {
        matches!(self, Label::Positive(_))
    }

    pub fn object(&self) -> Option<usize> {
        match *self {
            Label::Positive(j) => Some(j),
            _ => None,
        }
    }

    /// Compact integer form: object index for positives, `-1` negative, `-2` ignored.
    pub fn code(&self) -> i64 {
        match *self {
            Label::Positive(j) => j as i64,
            Label::Negative => -1,
            Label::Ignored => -2,
        }
    }

    pub fn from_code(code: i64) -> Option<Label> {
        match code {
            -1 => Some(Label::Negative),
            -2 => Some(Label::Ignored),
            j if j >= 0 => Some(Label::Positive(j as usize)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct MatchingConfig {
    pub t_pos: f64,
    pub t_neg: f64,
    /// Amplification strength; must exceed 1.
    pub sigma: f64,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self { t_pos: 0.5, t_neg: 0.4, sigma: 2.0 }
    }
}

impl MatchingConfig {
    pub fn new(t_pos: f64, t_neg: f64, sigma: f64) -> Result<Self> {
        let cfg = Self { t_pos, t_neg, sigma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_neg >= 0.0 && self.t_neg <= self.t_pos && self.t_pos <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "thresholds must satisfy 0 <= t_neg <= t_pos <= 1, got t_pos={} t_neg={}",
                self.t_pos,
                self.t_neg
            )));
        }
        check_sigma(self.sigma)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 1.0) {
        return Err(Error::InvalidConfig(alloc::format!("sigma must be finite and > 1, got {sigma}")));
    }
    Ok(())
}

/// Per-object `(N_p, N_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectCounts {
    pub positive: usize,
    pub ignored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize), serde(tag = "kind", rename_all = "snake_case"))]
pub enum Warning {
    /// Fewer candidates than the object's selection budget; all were taken.
    BudgetClamped { object: usize, requested: usize, available: usize },
    /// No anchor could be given to the object without emptying another one.
    NoPositive { object: usize },
}

/// Labels for one task together with the per-object selection sizes before
/// the cross-object merge.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLabels {
    pub labels: Vec<Label>,
    pub selected: Vec<ObjectCounts>,
    pub warnings: Vec<Warning>,
}

impl TaskLabels {
    /// Positive anchors per object after merging.
    pub fn positives_per_object(&self) -> Vec<usize> {
        positives_per_object(&self.labels, self.selected.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub classification_labels: Vec<Label>,
    pub localization_labels: Vec<Label>,
    pub per_object_counts: Vec<ObjectCounts>,
    pub warnings: Vec<Warning>,
}

pub fn positives_per_object(labels: &[Label], objects: usize) -> Vec<usize> {
    let mut counts = vec![0; objects];
    for l in labels {
        if let Label::Positive(j) = *l {
            counts[j] += 1;
        }
    }
    counts
}

/// `iou^((sigma - p) / sigma)`: never below `iou`, equal to it when `p = 0`.
pub fn amplified_iou(iou: f64, p: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(0.0..=1.0).contains(&iou) || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(alloc::format!(
            "amplified_iou needs iou and score in [0, 1], got iou={iou} p={p}"
        )));
    }
    Ok(amplify(iou, p, sigma))
}

#[inline]
pub(crate) fn amplify(base: f64, p: f64, sigma: f64) -> f64 {
    libm::pow(base, (sigma - p) / sigma)
}

/// Per-object candidate lists produced by a matcher before merging.
pub(crate) struct Selection {
    pub positive: Vec<Vec<usize>>,
    pub ignored: Vec<Vec<usize>>,
}

/// Merges per-object selections into one label per row and rescues objects
/// that lost every positive.
///
/// `score` is the matcher's ranking signal; `eligible(i, j)` restricts the
/// rescue candidates for object `j`.
pub(crate) fn merge(
    rows: usize,
    selection: &Selection,
    score: &UnitMatrix,
    eligible: impl Fn(usize, usize) -> bool,
    warnings: &mut Vec<Warning>,
) -> Vec<Label> {
    let objects = selection.positive.len();
    let mut labels = vec![Label::Negative; rows];
    for ignored in &selection.ignored {
        for &i in ignored {
            labels[i] = Label::Ignored;
        }
    }
    for (j, positives) in selection.positive.iter().enumerate() {
        for &i in positives {
            match labels[i] {
                // objects are visited in index order, so equal scores keep the earlier one
                Label::Positive(k) if score.get(i, k) >= score.get(i, j) => {}
                _ => labels[i] = Label::Positive(j),
            }
        }
    }

    let mut counts = positives_per_object(&labels, objects);
    for j in 0..objects {
        if counts[j] > 0 {
            continue;
        }
        let best = (0..rows)
            .filter(|&i| eligible(i, j))
            .filter(|&i| match labels[i] {
                Label::Positive(k) => counts[k] > 1,
                _ => true,
            })
            .map(|i| (i, score.get(i, j)))
            .min_by(crate::rank::by_score_desc);
        match best {
            Some((i, _)) => {
                if let Label::Positive(k) = labels[i] {
                    counts[k] -= 1;
                }
                labels[i] = Label::Positive(j);
                counts[j] = 1;
            }
            None => warnings.push(Warning::NoPositive { object: j }),
        }
    }
    labels
}

/// Ranks `candidates(j)` by `score(., j)` and cuts at `budgets[j]`.
pub(crate) fn select_by_rank(
    score: &UnitMatrix,
    budgets: &[ObjectCounts],
    candidates: impl Fn(usize) -> Vec<usize>,
    warnings: &mut Vec<Warning>,
) -> (Selection, Vec<ObjectCounts>) {
    let mut selection = Selection { positive: Vec::new(), ignored: Vec::new() };
    let mut selected = Vec::with_capacity(budgets.len());
    for (j, budget) in budgets.iter().enumerate() {
        let pool: Vec<(usize, f64)> = candidates(j).into_iter().map(|i| (i, score.get(i, j))).collect();
        let requested = budget.positive + budget.ignored;
        if pool.len() < requested {
            warnings.push(Warning::BudgetClamped { object: j, requested, available: pool.len() });
        }
        let mut ranked = top_k(pool, requested);
        let ignored = ranked.split_off(budget.positive.min(ranked.len()));
        selected.push(ObjectCounts { positive: ranked.len(), ignored: ignored.len() });
        selection.positive.push(ranked);
        selection.ignored.push(ignored);
    }
    (selection, selected)
}

/// Threshold matching on anchor IoU.
///
/// Per object, anchors with IoU `>= t_pos` are positive; if there are none
/// the single best anchor is taken instead. Anchors in `[t_neg, t_pos)` for
/// some object and positive for none are ignored. Both tasks get the same
/// labels. `N_p` is the size of each object's positive set before the merge;
/// `N_i` counts ignored anchors whose highest-IoU object is that object.
pub fn static_assign(iou_anchor: &UnitMatrix, cfg: &MatchingConfig) -> Result<Assignment> {
    cfg.validate()?;
    let (rows, objects) = (iou_anchor.rows(), iou_anchor.cols());
    if rows == 0 || objects == 0 {
        return Err(Error::EmptyInput("static assignment needs anchors and objects"));
    }

    let mut selection = Selection { positive: vec![Vec::new(); objects], ignored: vec![Vec::new(); objects] };
    for i in 0..rows {
        for (j, &v) in iou_anchor.row(i).iter().enumerate() {
            if v >= cfg.t_pos {
                selection.positive[j].push(i);
            } else if v >= cfg.t_neg {
                selection.ignored[j].push(i);
            }
        }
    }
    for j in 0..objects {
        if selection.positive[j].is_empty() {
            let best = top_k(iou_anchor.column(j).enumerate().collect(), 1);
            selection.positive[j] = best;
        }
    }

    let mut warnings = Vec::new();
    let labels = merge(rows, &selection, iou_anchor, |_, _| true, &mut warnings);

    let mut per_object_counts: Vec<ObjectCounts> =
        selection.positive.iter().map(|p| ObjectCounts { positive: p.len(), ignored: 0 }).collect();
    for (i, l) in labels.iter().enumerate() {
        if *l == Label::Ignored {
            let owner = top_k(iou_anchor.row(i).iter().copied().enumerate().collect(), 1)[0];
            per_object_counts[owner].ignored += 1;
        }
    }

    Ok(Assignment { localization_labels: labels.clone(), classification_labels: labels, per_object_counts, warnings })
}

/// Classification labels from the IoU of the regressed boxes.
///
/// The budgets `(N_p, N_i)` come from [`static_assign`] on `iou_anchor`.
pub fn localize_to_classify(
    iou_anchor: &UnitMatrix,
    iou_regressed: &UnitMatrix,
    cfg: &MatchingConfig,
) -> Result<TaskLabels> {
    iou_regressed.ensure_shape(iou_anchor.rows(), iou_anchor.cols())?;
    let reference = static_assign(iou_anchor, cfg)?;
    Ok(localize_to_classify_with_budgets(iou_regressed, &reference.per_object_counts))
}

/// [`localize_to_classify`] with precomputed per-object budgets.
pub fn localize_to_classify_with_budgets(iou_regressed: &UnitMatrix, budgets: &[ObjectCounts]) -> TaskLabels {
    let rows = iou_regressed.rows();
    let mut warnings = Vec::new();
    let (selection, selected) = select_by_rank(iou_regressed, budgets, |_| (0..rows).collect(), &mut warnings);
    let labels = merge(rows, &selection, iou_regressed, |_, _| true, &mut warnings);
    TaskLabels { labels, selected, warnings }
}

/// Localization labels from [`amplified_iou`].
///
/// Only positives are selected; every other anchor is `Negative`, meaning it
/// is left out of box-regression training.
pub fn classify_to_localize(
    iou_anchor: &UnitMatrix,
    classif_scores: &UnitMatrix,
    cfg: &MatchingConfig,
) -> Result<TaskLabels> {
    classif_scores.ensure_shape(iou_anchor.rows(), iou_anchor.cols())?;
    let reference = static_assign(iou_anchor, cfg)?;
    Ok(classify_to_localize_with_budgets(iou_anchor, classif_scores, cfg.sigma, &reference.per_object_counts))
}

/// [`classify_to_localize`] with precomputed per-object budgets.
pub fn classify_to_localize_with_budgets(
    iou_anchor: &UnitMatrix,
    classif_scores: &UnitMatrix,
    sigma: f64,
    budgets: &[ObjectCounts],
) -> TaskLabels {
    let amplified = amplified_matrix(iou_anchor, classif_scores, sigma);
    let rows = amplified.rows();
    let positive_only: Vec<ObjectCounts> =
        budgets.iter().map(|b| ObjectCounts { positive: b.positive, ignored: 0 }).collect();
    let mut warnings = Vec::new();
    let (selection, selected) = select_by_rank(&amplified, &positive_only, |_| (0..rows).collect(), &mut warnings);
    let labels = merge(rows, &selection, &amplified, |_, _| true, &mut warnings);
    TaskLabels { labels, selected, warnings }
}

/// Entry-wise [`amplified_iou`] of two equally shaped matrices.
pub fn amplified_matrix(base: &UnitMatrix, scores: &UnitMatrix, sigma: f64) -> UnitMatrix {
    base.map(|i, j, v| amplify(v, scores.get(i, j), sigma))
}

/// Both dynamic matchers: classification labels from
/// [`localize_to_classify`], localization labels from
/// [`classify_to_localize`], budgets from [`static_assign`].
///
/// The two label sets may disagree on the same anchor.
pub fn mutual_guidance_assign(
    iou_anchor: &UnitMatrix,
    iou_regressed: &UnitMatrix,
    classif_scores: &UnitMatrix,
    cfg: &MatchingConfig,
) -> Result<Assignment> {
    iou_regressed.ensure_shape(iou_anchor.rows(), iou_anchor.cols())?;
    classif_scores.ensure_shape(iou_anchor.rows(), iou_anchor.cols())?;
    let reference = static_assign(iou_anchor, cfg)?;
    let budgets = &reference.per_object_counts;
    let cls = localize_to_classify_with_budgets(iou_regressed, budgets);
    let loc = classify_to_localize_with_budgets(iou_anchor, classif_scores, cfg.sigma, budgets);
    let mut warnings = cls.warnings;
    warnings.extend(loc.warnings);
    Ok(Assignment {
        classification_labels: cls.labels,
        localization_labels: loc.labels,
        per_object_counts: reference.per_object_counts,
        warnings,
    })
}
