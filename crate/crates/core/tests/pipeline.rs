use labelassign_core::{
    fcos_assign_original, generate_anchors, generate_points, iou_matrix, mutual_guidance_assign, static_assign,
    synth_predictions, AnchorGridSpec, BBox, Label, MatchingConfig, Scene, SceneObject, TrajectoryConfig,
};

/// One object on the default grid: six anchors at IoU >= 0.5, three in [0.4, 0.5).
fn boat() -> Scene {
    let bbox = BBox::from_xywh(125.0, 125.0, 68.0, 39.0).unwrap();
    Scene { width: 320, height: 320, objects: vec![SceneObject { bbox, class_id: 4 }] }
}

#[test]
fn boat_counts_on_default_grid() {
    let anchors = generate_anchors(&AnchorGridSpec::default()).unwrap();
    assert_eq!(anchors.len(), 40 * 40 * 3 + 20 * 20 * 6 + 10 * 10 * 3);
    let m = iou_matrix(&anchors.boxes, &boat().boxes()).unwrap();
    let a = static_assign(&m, &MatchingConfig::default()).unwrap();
    assert_eq!((a.per_object_counts[0].positive, a.per_object_counts[0].ignored), (6, 3));
    assert_eq!(a.classification_labels, a.localization_labels);
    let ignored = a.classification_labels.iter().filter(|l| **l == Label::Ignored).count();
    assert_eq!(ignored, 3);
}

#[test]
fn guided_labels_keep_budgets_along_training() {
    let scene = boat();
    let anchors = generate_anchors(&AnchorGridSpec::default()).unwrap().boxes;
    let cfg = TrajectoryConfig::default();
    for t in [0.0, 0.3, 0.7, 1.0] {
        let snap = synth_predictions(&scene, &anchors, &cfg, t, 1).unwrap();
        let a = mutual_guidance_assign(
            &snap.iou_anchor,
            &snap.iou_regressed,
            &snap.classif_scores,
            &MatchingConfig::default(),
        )
        .unwrap();
        let cls = a.classification_labels.iter().filter(|l| l.is_positive()).count();
        let loc = a.localization_labels.iter().filter(|l| l.is_positive()).count();
        assert_eq!((cls, loc), (6, 6), "t = {t}");
        assert!(a.localization_labels.iter().all(|l| *l != Label::Ignored));
    }
}

#[test]
fn points_cover_the_boat() {
    let points = generate_points(&AnchorGridSpec::default()).unwrap();
    let a = fcos_assign_original(&points, &boat().boxes(), None).unwrap();
    // longest side 68 falls in the stride-16 range [64, 256)
    let lvl = a
        .classification_labels
        .iter()
        .zip(&points.points)
        .filter(|(l, _)| l.is_positive())
        .map(|(_, p)| p.stride)
        .collect::<Vec<_>>();
    assert_eq!(lvl.len(), a.per_object_counts[0]);
    assert!(!lvl.is_empty() && lvl.iter().all(|&s| s == 16), "{lvl:?}");
}
