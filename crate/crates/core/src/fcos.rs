//! Point-based (FCOS-style) label assignment.
//!
//! The original strategy marks every scale-matched point inside a box as
//! positive for both tasks, optionally restricted to a central region. The
//! prediction-guided variants keep each object's positive count `N_p` from
//! that strategy and re-rank candidate points: by regressed-box IoU for
//! classification, and by class-score-amplified centerness for localization.
//!
//! Candidate points for object `j` are the points strictly inside its box on
//! a level whose size band accepts it, plus any point the original strategy
//! gave to `j`. Points outside every box therefore never become positive
//! (unless an object contains no grid point at all; see
//! [`fcos_assign_original`]).

use alloc::vec;
use alloc::vec::Vec;

use crate::anchors::{GridPoint, PointSet};
use crate::assignment::{
    amplify, merge, positives_per_object, select_by_rank, Label, ObjectCounts, Selection, TaskLabels, Warning,
};
use crate::geometry::{BBox, UnitMatrix};
use crate::{Error, Result};

/// Labels for a point set. `per_object_counts[j]` is `N_p` for object `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointAssignment {
    pub classification_labels: Vec<Label>,
    pub localization_labels: Vec<Label>,
    pub per_object_counts: Vec<usize>,
    pub warnings: Vec<Warning>,
}

/// `sqrt(min(l, r) / max(l, r) * min(t, b) / max(t, b))` for a point strictly
/// inside `gt`.
pub fn centerness(x: f64, y: f64, gt: &BBox) -> Result<f64> {
    if !gt.contains_strict(x, y) {
        return Err(Error::PointOutsideBox { x, y });
    }
    Ok(centerness_unchecked(x, y, gt))
}

fn centerness_unchecked(x: f64, y: f64, gt: &BBox) -> f64 {
    let (l, r) = (x - gt.x_min(), gt.x_max() - x);
    let (t, b) = (y - gt.y_min(), gt.y_max() - y);
    libm::sqrt((l.min(r) / l.max(r)) * (t.min(b) / t.max(b)))
}

fn longer_side(b: &BBox) -> f64 {
    b.width().max(b.height())
}

fn scale_match(p: &GridPoint, gt: &BBox) -> bool {
    gt.contains_strict(p.x, p.y) && p.accepts_size(longer_side(gt))
}

fn distance_sq(p: &GridPoint, gt: &BBox) -> f64 {
    let (cx, cy) = gt.center();
    (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)
}

/// The standard FCOS assignment.
///
/// A point is positive for object `j` if it lies strictly inside the box, its
/// level accepts the box's longer side, and (with `center_sampling_radius =
/// Some(r)`) it is within `r * stride` of the box centre on both axes. A
/// point that qualifies for several objects goes to the smallest box (lower
/// index on equal areas).
///
/// An object that ends up with no point takes the in-box point nearest its
/// centre on any level; if the box contains no grid point at all, the
/// nearest point overall. Points already serving as the only positive of
/// another object are never taken.
pub fn fcos_assign_original(
    points: &PointSet,
    objects: &[BBox],
    center_sampling_radius: Option<f64>,
) -> Result<PointAssignment> {
    if objects.is_empty() {
        return Err(Error::EmptyInput("no ground-truth objects"));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("no points"));
    }
    if let Some(r) = center_sampling_radius {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("center sampling radius must be positive, got {r}")));
        }
    }

    let mut labels = vec![Label::Negative; points.len()];
    for (i, p) in points.points.iter().enumerate() {
        let owner = objects
            .iter()
            .enumerate()
            .filter(|(_, gt)| scale_match(p, gt))
            .filter(|(_, gt)| match center_sampling_radius {
                Some(r) => {
                    let (cx, cy) = gt.center();
                    let reach = r * p.stride as f64;
                    (p.x - cx).abs() < reach && (p.y - cy).abs() < reach
                }
                None => true,
            })
            .min_by(|a, b| a.1.area().total_cmp(&b.1.area()).then(a.0.cmp(&b.0)));
        if let Some((j, _)) = owner {
            labels[i] = Label::Positive(j);
        }
    }

    let mut counts = positives_per_object(&labels, objects.len());
    let mut warnings = Vec::new();
    for (j, gt) in objects.iter().enumerate() {
        if counts[j] > 0 {
            continue;
        }
        let available = |i: &usize| match labels[*i] {
            Label::Positive(k) => counts[k] > 1,
            _ => true,
        };
        let nearest = |only_inside: bool| {
            points
                .points
                .iter()
                .enumerate()
                .filter(|(_, p)| !only_inside || gt.contains_strict(p.x, p.y))
                .map(|(i, p)| (i, distance_sq(p, gt)))
                .filter(|(i, _)| available(i))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
        };
        match nearest(true).or_else(|| nearest(false)) {
            Some(i) => {
                if let Label::Positive(k) = labels[i] {
                    counts[k] -= 1;
                }
                labels[i] = Label::Positive(j);
                counts[j] = 1;
            }
            None => warnings.push(Warning::NoPositive { object: j }),
        }
    }

    Ok(PointAssignment {
        localization_labels: labels.clone(),
        classification_labels: labels,
        per_object_counts: counts,
        warnings,
    })
}

fn check_inputs(points: &PointSet, objects: &[BBox], original: &PointAssignment) -> Result<()> {
    if objects.is_empty() {
        return Err(Error::EmptyInput("no ground-truth objects"));
    }
    if original.per_object_counts.len() != objects.len() || original.classification_labels.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected_rows: points.len(),
            expected_cols: objects.len(),
            rows: original.classification_labels.len(),
            cols: original.per_object_counts.len(),
        });
    }
    Ok(())
}

fn guided_labels(points: &PointSet, objects: &[BBox], score: &UnitMatrix, original: &PointAssignment) -> TaskLabels {
    let candidate = |i: usize, j: usize| {
        scale_match(&points.points[i], &objects[j]) || original.classification_labels[i] == Label::Positive(j)
    };
    let budgets: Vec<ObjectCounts> =
        original.per_object_counts.iter().map(|&n| ObjectCounts { positive: n, ignored: 0 }).collect();
    let mut warnings = Vec::new();
    let (selection, selected): (Selection, _) =
        select_by_rank(score, &budgets, |j| (0..points.len()).filter(|&i| candidate(i, j)).collect(), &mut warnings);
    let labels = merge(points.len(), &selection, score, candidate, &mut warnings);
    TaskLabels { labels, selected, warnings }
}

/// Classification labels: per object, the `N_p` candidate points with the
/// highest regressed-box IoU. There is no ignored band.
pub fn fcos_localize_to_classify(
    points: &PointSet,
    objects: &[BBox],
    iou_regressed: &UnitMatrix,
    original: &PointAssignment,
) -> Result<TaskLabels> {
    check_inputs(points, objects, original)?;
    iou_regressed.ensure_shape(points.len(), objects.len())?;
    Ok(guided_labels(points, objects, iou_regressed, original))
}

/// Centerness of every point against every object, raised to
/// `(sigma - p) / sigma`; zero for points not strictly inside the box.
pub fn amplified_centerness(
    points: &PointSet,
    objects: &[BBox],
    classif_scores: &UnitMatrix,
    sigma: f64,
) -> Result<UnitMatrix> {
    crate::assignment::amplified_iou(0.0, 0.0, sigma)?;
    classif_scores.ensure_shape(points.len(), objects.len())?;
    Ok(classif_scores.map(|i, j, p| {
        let pt = &points.points[i];
        let gt = &objects[j];
        if gt.contains_strict(pt.x, pt.y) {
            amplify(centerness_unchecked(pt.x, pt.y, gt), p, sigma)
        } else {
            0.0
        }
    }))
}

/// Localization labels: per object, the `N_p` candidate points with the
/// highest amplified centerness.
pub fn fcos_classify_to_localize(
    points: &PointSet,
    objects: &[BBox],
    classif_scores: &UnitMatrix,
    sigma: f64,
    original: &PointAssignment,
) -> Result<TaskLabels> {
    check_inputs(points, objects, original)?;
    let amplified = amplified_centerness(points, objects, classif_scores, sigma)?;
    Ok(guided_labels(points, objects, &amplified, original))
}

/// Original assignment for the budgets, then both guided variants.
pub fn fcos_mutual_assign(
    points: &PointSet,
    objects: &[BBox],
    iou_regressed: &UnitMatrix,
    classif_scores: &UnitMatrix,
    sigma: f64,
    center_sampling_radius: Option<f64>,
) -> Result<PointAssignment> {
    let original = fcos_assign_original(points, objects, center_sampling_radius)?;
    let cls = fcos_localize_to_classify(points, objects, iou_regressed, &original)?;
    let loc = fcos_classify_to_localize(points, objects, classif_scores, sigma, &original)?;
    let mut warnings = original.warnings;
    warnings.extend(cls.warnings);
    warnings.extend(loc.warnings);
    Ok(PointAssignment {
        classification_labels: cls.labels,
        localization_labels: loc.labels,
        per_object_counts: original.per_object_counts,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{generate_points, AnchorGridSpec, LevelSpec};
    use approx::assert_abs_diff_eq;
    use Label::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    fn one_level(stride: u32) -> PointSet {
        generate_points(&AnchorGridSpec {
            image_width: 320,
            image_height: 320,
            levels: vec![LevelSpec::new(stride, vec![32.0], vec![1.0])],
        })
        .unwrap()
    }

    fn manual(xy: &[(f64, f64)]) -> PointSet {
        PointSet {
            points: xy
                .iter()
                .map(|&(x, y)| GridPoint { x, y, level: 0, stride: 8, scale_range: (0.0, f64::INFINITY) })
                .collect(),
            level_offsets: core::iter::once(0..xy.len()).collect(),
        }
    }

    #[test]
    fn centerness_examples() {
        let gt = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(centerness(5.0, 5.0, &gt).unwrap(), 1.0);
        assert_abs_diff_eq!(centerness(5.0, 2.5, &gt).unwrap(), 0.5773502691896257, epsilon = 1e-12);
        assert!(centerness(5.0, 1e-9, &gt).unwrap() < 1e-4);
        assert!(centerness(0.0, 5.0, &gt).is_err());
        assert!(centerness(11.0, 5.0, &gt).is_err());
    }

    #[test]
    fn centered_object_takes_one_of_four() {
        let pts = one_level(160);
        let a = fcos_assign_original(&pts, &[bx(80.0, 80.0, 240.0, 240.0)], None).unwrap();
        // only the box interior counts; the centre (160,160) sees all four points on the boundary
        assert_eq!(a.per_object_counts, vec![1]);
        let a = fcos_assign_original(&pts, &[bx(70.0, 70.0, 230.0, 230.0)], None).unwrap();
        assert_eq!(a.classification_labels, vec![Positive(0), Negative, Negative, Negative]);
        assert_eq!(a.localization_labels, a.classification_labels);
    }

    #[test]
    fn nested_boxes_prefer_smaller() {
        let pts = manual(&[(50.0, 50.0), (10.0, 10.0)]);
        let outer = bx(0.0, 0.0, 100.0, 100.0);
        let inner = bx(40.0, 40.0, 60.0, 60.0);
        let a = fcos_assign_original(&pts, &[outer, inner], None).unwrap();
        assert_eq!(a.classification_labels, vec![Positive(1), Positive(0)]);
        // brute force over the ambiguity rule
        for (i, p) in pts.points.iter().enumerate() {
            let smallest = [outer, inner]
                .iter()
                .enumerate()
                .filter(|(_, b)| b.contains_strict(p.x, p.y))
                .min_by(|x, y| x.1.area().total_cmp(&y.1.area()))
                .map(|(j, _)| j);
            assert_eq!(a.classification_labels[i].object(), smallest);
        }
    }

    #[test]
    fn object_without_grid_point_falls_back() {
        let pts = one_level(160);
        let tiny = bx(100.0, 100.0, 110.0, 110.0);
        let a = fcos_assign_original(&pts, &[tiny], None).unwrap();
        assert_eq!(a.per_object_counts, vec![1]);
        assert_eq!(a.classification_labels[0], Positive(0));
    }

    #[test]
    fn center_sampling_shrinks_positive_region() {
        let pts = one_level(8);
        let gt = bx(40.0, 40.0, 200.0, 120.0);
        let full = fcos_assign_original(&pts, &[gt], None).unwrap();
        let central = fcos_assign_original(&pts, &[gt], Some(1.5)).unwrap();
        assert_eq!(full.per_object_counts, vec![20 * 10]);
        // |d| < 12 around the centre (120, 80): columns 116, 124 and rows 76, 84
        assert_eq!(central.per_object_counts, vec![4]);
        assert!(fcos_assign_original(&pts, &[gt], Some(0.0)).is_err());
    }

    #[test]
    fn l2c_rank_and_cut() {
        let pts = manual(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)]);
        let gt = bx(0.0, 0.0, 10.0, 10.0);
        let mut original = fcos_assign_original(&pts, &[gt], None).unwrap();
        original.per_object_counts = vec![2];
        let reg = UnitMatrix::new(4, 1, vec![0.1, 0.9, 0.5, 0.8]).unwrap();
        let t = fcos_localize_to_classify(&pts, &[gt], &reg, &original).unwrap();
        assert_eq!(t.labels, vec![Negative, Positive(0), Negative, Positive(0)]);
    }

    #[test]
    fn c2l_amplified_centerness() {
        // horizontally centred, so centerness = sqrt(t / b): 0.5 and 0.45
        let gt = bx(0.0, 0.0, 100.0, 100.0);
        let pts = manual(&[(50.0, 20.0), (50.0, 100.0 * 0.2025 / 1.2025)]);
        let c0 = centerness(pts.points[0].x, pts.points[0].y, &gt).unwrap();
        let c1 = centerness(pts.points[1].x, pts.points[1].y, &gt).unwrap();
        assert_abs_diff_eq!(c0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c1, 0.45, epsilon = 1e-12);
        let mut original = fcos_assign_original(&pts, &[gt], None).unwrap();
        original.per_object_counts = vec![1];
        let zero = UnitMatrix::zeros(2, 1);
        let t = fcos_classify_to_localize(&pts, &[gt], &zero, 2.0, &original).unwrap();
        assert_eq!(t.labels, vec![Positive(0), Negative]);
        let boost = UnitMatrix::new(2, 1, vec![0.0, 0.9]).unwrap();
        let amp = amplified_centerness(&pts, &[gt], &boost, 2.0).unwrap();
        assert!(amp.get(1, 0) >= c1);
        let t = fcos_classify_to_localize(&pts, &[gt], &boost, 2.0, &original).unwrap();
        assert_eq!(t.labels, vec![Negative, Positive(0)]);
        assert!(amplified_centerness(&pts, &[gt], &boost, 1.0).is_err());
    }

    #[test]
    fn amplified_value_closed_form() {
        let gt = bx(0.0, 0.0, 100.0, 100.0);
        let pts = manual(&[(50.0, 100.0 * 0.2025 / 1.2025)]);
        let amp = amplified_centerness(&pts, &[gt], &UnitMatrix::new(1, 1, vec![0.9]).unwrap(), 2.0).unwrap();
        assert_abs_diff_eq!(amp.get(0, 0), libm::exp(0.55 * libm::log(0.45)), epsilon = 1e-12);
        assert_abs_diff_eq!(amp.get(0, 0), 0.6446, epsilon = 1e-4);
    }

    #[test]
    fn outside_points_never_positive() {
        let pts = one_level(16);
        let objects = [bx(20.0, 30.0, 90.0, 100.0), bx(150.0, 150.0, 300.0, 220.0)];
        let n = pts.len() * objects.len();
        let reg = UnitMatrix::new(pts.len(), 2, (0..n).map(|k| (k % 97) as f64 / 96.0).collect()).unwrap();
        let sc = UnitMatrix::new(pts.len(), 2, (0..n).map(|k| (k % 89) as f64 / 88.0).collect()).unwrap();
        let a = fcos_mutual_assign(&pts, &objects, &reg, &sc, 2.0, None).unwrap();
        for labels in [&a.classification_labels, &a.localization_labels] {
            for (i, l) in labels.iter().enumerate() {
                if let Positive(j) = l {
                    let p = &pts.points[i];
                    assert!(objects[*j].contains_strict(p.x, p.y));
                }
            }
        }
        assert_eq!(positives_per_object(&a.classification_labels, 2), a.per_object_counts);
    }

    #[test]
    fn requires_objects() {
        assert!(fcos_assign_original(&one_level(160), &[], None).is_err());
    }
}
