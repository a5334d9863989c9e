//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every verdict is printed even when
//! all pass; the process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use labelassign_core::assignment::{classify_to_localize, localize_to_classify, positives_per_object};
use labelassign_core::evaluation::EvalParams;
use labelassign_core::{
    amplified_iou, average_precision, compare_misalignment, fcos_assign_original, fcos_mutual_assign, generate_anchors,
    generate_points, iou, mutual_guidance_assign, nms, run_trajectory, static_assign, synth_predictions, synth_scene,
    AnchorGridSpec, BBox, Detection, DetectionModel, GroundTruth, Label, MatchingConfig, Scene, SceneSpec, Strategy,
    TrajectoryConfig, UnitMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

const SCENES: u64 = 1000;

fn scenes() -> Vec<Scene> {
    (0..SCENES).map(|seed| synth_scene(&SceneSpec { seed, ..Default::default() }).unwrap()).collect()
}

fn check(ok: bool, pass: String, fail: String) -> Verdict {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn amplification() -> Verdict {
    let a = amplified_iou(0.5, 0.0, 2.0).unwrap();
    let b = amplified_iou(0.5, 1.0, 2.0).unwrap();
    let c = amplified_iou(0.49, 0.8, 2.0).unwrap();
    let oracle = (0.6_f64 * 0.49_f64.ln()).exp();
    if a != 0.5
        || (b - std::f64::consts::FRAC_1_SQRT_2).abs() > 1e-9
        || (c - 0.65180).abs() > 1e-4
        || (c - oracle).abs() > 1e-12
    {
        return Err(format!("closed forms off: {a}, {b}, {c}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0;
    for _ in 0..100_000 {
        let (v, p) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let sigma = rng.random_range(1.0001..10.0);
        if amplified_iou(v, p, sigma).unwrap() < v {
            violations += 1;
        }
    }
    check(violations == 0, "exact values hold, 0 of 100000 below raw IoU".into(), format!("{violations} violations"))
}

fn boat_fixture() -> Verdict {
    let ious = [0.72, 0.68, 0.64, 0.61, 0.57, 0.52, 0.48, 0.45, 0.41, 0.33, 0.25, 0.12, 0.05];
    let m = UnitMatrix::new(ious.len(), 1, ious.to_vec()).unwrap();
    let c = static_assign(&m, &MatchingConfig::default()).unwrap().per_object_counts[0];
    check(
        (c.positive, c.ignored) == (6, 3),
        "13 anchors give N_p = 6, N_i = 3".into(),
        format!("got N_p = {}, N_i = {}", c.positive, c.ignored),
    )
}

fn conservation(scenes: &[Scene], anchors: &[BBox]) -> Verdict {
    let cfg = TrajectoryConfig::default();
    let m = MatchingConfig::default();
    let mut violations = 0;
    for (seed, scene) in scenes.iter().enumerate() {
        let snap = synth_predictions(scene, anchors, &cfg, 0.5, seed as u64).unwrap();
        let n_p: Vec<usize> =
            static_assign(&snap.iou_anchor, &m).unwrap().per_object_counts.iter().map(|c| c.positive).collect();
        let l2c = localize_to_classify(&snap.iou_anchor, &snap.iou_regressed, &m).unwrap();
        let c2l = classify_to_localize(&snap.iou_anchor, &snap.classif_scores, &m).unwrap();
        for sel in [&l2c.selected, &c2l.selected] {
            violations += sel.iter().zip(&n_p).filter(|(s, n)| s.positive != **n).count();
        }
    }
    check(
        violations == 0,
        format!("{} scenes, pre-merge counts equal N_p everywhere", scenes.len()),
        format!("{violations} per-object mismatches"),
    )
}

fn at_least_one(scenes: &[Scene], anchors: &[BBox]) -> Verdict {
    let cfg = TrajectoryConfig::default();
    let m = MatchingConfig::default();
    let points = generate_points(&AnchorGridSpec::default()).unwrap();
    let spec = AnchorGridSpec::default();
    let priors = points.prior_boxes(|l| spec.levels[l].scales.iter().copied().fold(f64::INFINITY, f64::min)).unwrap();
    let mut failures: BTreeMap<&str, usize> = BTreeMap::new();
    for (seed, scene) in scenes.iter().enumerate() {
        let n = scene.objects.len();
        let objects = scene.boxes();
        let snap = synth_predictions(scene, anchors, &cfg, 0.5, seed as u64).unwrap();
        let stat = static_assign(&snap.iou_anchor, &m).unwrap();
        let l2c = localize_to_classify(&snap.iou_anchor, &snap.iou_regressed, &m).unwrap();
        let c2l = classify_to_localize(&snap.iou_anchor, &snap.classif_scores, &m).unwrap();
        let mutual = mutual_guidance_assign(&snap.iou_anchor, &snap.iou_regressed, &snap.classif_scores, &m).unwrap();
        let psnap = synth_predictions(scene, &priors, &cfg, 0.5, seed as u64).unwrap();
        let mut fcos = Vec::new();
        for radius in [None, Some(1.5)] {
            fcos.push(fcos_assign_original(&points, &objects, radius).unwrap());
            fcos.push(
                fcos_mutual_assign(&points, &objects, &psnap.iou_regressed, &psnap.classif_scores, m.sigma, radius)
                    .unwrap(),
            );
        }
        let mut sets: Vec<(&str, &[Label])> = vec![
            ("static", &stat.classification_labels),
            ("l2c", &l2c.labels),
            ("c2l", &c2l.labels),
            ("mutual/cls", &mutual.classification_labels),
            ("mutual/loc", &mutual.localization_labels),
        ];
        let names = ["fcos", "fcos-mutual", "fcos-center", "fcos-center-mutual"];
        for (name, a) in names.iter().zip(&fcos) {
            sets.push((name, &a.classification_labels));
            sets.push((name, &a.localization_labels));
        }
        for (name, labels) in sets {
            if positives_per_object(labels, n).contains(&0) {
                *failures.entry(name).or_default() += 1;
            }
        }
    }
    check(
        failures.is_empty(),
        format!("{} scenes, 4 anchor and 4 point strategies, no object left empty", scenes.len()),
        format!("objects without positives per strategy: {failures:?}"),
    )
}

fn dynamics(anchors: &[BBox]) -> Verdict {
    let cfg = TrajectoryConfig::default();
    let m = MatchingConfig::default();
    let mut worst = f64::INFINITY;
    for seed in 0..20 {
        let scene = synth_scene(&SceneSpec { seed, ..Default::default() }).unwrap();
        let dynamic = run_trajectory(&scene, anchors, &cfg, &m, Strategy::LocalizeToClassify, seed, false).unwrap();
        let fixed =
            run_trajectory(&scene, anchors, &cfg, &m, Strategy::FixedThresholdLocalizeToClassify, seed, false).unwrap();
        if dynamic.steps.len() != 10 || !dynamic.is_constant() {
            return Err(format!("seed {seed}: dynamic series {:?}", dynamic.selected_series()));
        }
        worst = worst.min(fixed.growth_factor());
    }
    check(
        worst >= 1.5,
        format!("20 scenes: dynamic series constant over 10 steps, fixed growth at least {worst:.2}x"),
        format!("fixed growth only {worst:.2}x"),
    )
}

fn degeneracy(scenes: &[Scene], anchors: &[BBox]) -> Verdict {
    let cfg = TrajectoryConfig::default();
    let m = MatchingConfig::default();
    let mut mismatched = 0;
    for (seed, scene) in scenes.iter().enumerate() {
        let snap = synth_predictions(scene, anchors, &cfg, 0.0, seed as u64).unwrap();
        if snap.classif_scores.as_slice().iter().any(|&p| p != 0.0) {
            return Err(format!("seed {seed}: non-zero scores at t = 0"));
        }
        let stat = static_assign(&snap.iou_anchor, &m).unwrap();
        let mutual = mutual_guidance_assign(&snap.iou_anchor, &snap.iou_regressed, &snap.classif_scores, &m).unwrap();
        let pos =
            |l: &[Label]| l.iter().map(|x| if x.is_positive() { *x } else { Label::Negative }).collect::<Vec<_>>();
        if pos(&stat.classification_labels) != pos(&mutual.classification_labels) {
            mismatched += 1;
        }
    }
    check(
        mismatched == 0,
        format!("{} scenes at t = 0, classification positives identical", scenes.len()),
        format!("{mismatched} scenes differ"),
    )
}

fn brute_nms(dets: &[Detection], thr: f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..dets.len()).collect();
    let mut kept = Vec::new();
    while let Some(&first) = remaining.first() {
        let best = remaining.iter().copied().fold(first, |b, i| {
            if dets[i].score > dets[b].score || (dets[i].score == dets[b].score && i < b) {
                i
            } else {
                b
            }
        });
        kept.push(best);
        remaining.retain(|&i| {
            i != best
                && !(dets[i].image_id == dets[best].image_id
                    && dets[i].class_id == dets[best].class_id
                    && iou(&dets[i].bbox, &dets[best].bbox) > thr)
        });
    }
    kept
}

fn raster_iou(a: &BBox, b: &BBox) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for py in 0..64 {
        for px in 0..64 {
            let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
            let (ia, ib) = (a.contains_strict(cx, cy), b.contains_strict(cx, cy));
            inter += (ia && ib) as u32;
            union += (ia || ib) as u32;
        }
    }
    inter as f64 / union as f64
}

fn int_box(rng: &mut ChaCha8Rng) -> BBox {
    let (x, y) = (rng.random_range(0..60), rng.random_range(0..60));
    let (w, h) = (rng.random_range(1..=64 - x), rng.random_range(1..=64 - y));
    BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap()
}

fn oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let n = rng.random_range(0..40);
        let dets: Vec<Detection> = (0..n)
            .map(|_| Detection {
                image_id: rng.random_range(0..2),
                class_id: rng.random_range(0..3),
                bbox: int_box(&mut rng),
                // coarse scores so ties occur
                score: rng.random_range(0..20) as f64 / 20.0,
            })
            .collect();
        let thr = rng.random_range(0.0..1.0);
        if nms(&dets, thr) != brute_nms(&dets, thr) {
            return Err(format!("nms differs from brute force on instance {case}"));
        }
    }
    for pair in 0..500 {
        let (a, b) = (int_box(&mut rng), int_box(&mut rng));
        if (iou(&a, &b) - raster_iou(&a, &b)).abs() > 1e-9 {
            return Err(format!("iou differs from rasterization on pair {pair}"));
        }
    }
    let gt = [GroundTruth { image_id: 0, class_id: 0, bbox: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap() }];
    let dets = [
        Detection { image_id: 0, class_id: 0, bbox: BBox::new(0.0, 0.0, 10.0, 6.0).unwrap(), score: 0.9 },
        Detection { image_id: 0, class_id: 0, bbox: BBox::new(50.0, 50.0, 60.0, 60.0).unwrap(), score: 0.8 },
    ];
    let r = average_precision(&dets, &gt, &EvalParams::default()).unwrap();
    check(
        r.ap50 == 1.0 && r.ap75 == 0.0,
        "nms 1000/1000, iou 500/500, two-detection AP50 = 1, AP75 = 0".into(),
        format!("two-detection case gave AP50 = {}, AP75 = {}", r.ap50, r.ap75),
    )
}

fn misalignment(anchors: &[BBox]) -> Verdict {
    let cfg = TrajectoryConfig { misalignment: 0.3, ..Default::default() };
    let m = MatchingConfig::default();
    let model = DetectionModel::default();
    let mut wins = 0;
    for seed in 0..100 {
        let scene = synth_scene(&SceneSpec { seed, ..Default::default() }).unwrap();
        let snap = synth_predictions(&scene, anchors, &cfg, 1.0, seed).unwrap();
        let c = compare_misalignment(&scene, &snap, &m, &model, 0.5, 0.75, 0.5).unwrap();
        wins += (c.static_rate > c.mutual_rate) as usize;
    }
    check(wins >= 95, format!("static rate higher in {wins} of 100 trials"), format!("only {wins} of 100 trials"))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_labelassign"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Verdict {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let boat = fixtures.join("boat.json");
    let dets = fixtures.join("boat_detections.json");
    let synth = fixtures.join("synthetic_detections.json");
    let (boat, dets, synth) = (boat.to_str().unwrap(), dets.to_str().unwrap(), synth.to_str().unwrap());
    let runs: [&[&str]; 6] = [
        &["assign", "--synthetic", "--seed", "11", "--svg"],
        &["assign", "--synthetic", "--seed", "11", "--strategy", "fcos-mutual", "--svg"],
        &["assign", "--annotations", boat, "--strategy", "c2l", "--svg"],
        &["simulate", "--synthetic", "--seed", "5"],
        &["evaluate", "--annotations", boat, "--detections", dets],
        &["evaluate", "--synthetic", "--seed", "3", "--detections", synth],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (k, args) in runs.iter().enumerate() {
        let (a, b) = (tmp.path().join(format!("{k}a")), tmp.path().join(format!("{k}b")));
        let (out_a, out_b) = (run_cli(&a, args)?, run_cli(&b, args)?);
        let (snap_a, snap_b) = (snapshot(&a), snapshot(&b));
        if out_a != out_b || snap_a != snap_b || snap_a.is_empty() {
            return Err(format!("{args:?} differs between runs"));
        }
        files += snap_a.len();
    }
    Ok(format!("{} commands run twice, {files} output files byte-identical", runs.len()))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let anchors = generate_anchors(&AnchorGridSpec::default()).unwrap().boxes;
    let scenes = scenes();
    let criteria: [Criterion; 9] = [
        ("amplified IoU", Box::new(amplification)),
        ("worked counting example", Box::new(boat_fixture)),
        ("count conservation", Box::new(|| conservation(&scenes, &anchors))),
        ("at least one positive", Box::new(|| at_least_one(&scenes, &anchors))),
        ("count dynamics", Box::new(|| dynamics(&anchors))),
        ("cold-start degeneracy", Box::new(|| degeneracy(&scenes, &anchors))),
        ("nms, iou and AP oracles", Box::new(oracles)),
        ("misalignment direction", Box::new(|| misalignment(&anchors))),
        ("CLI determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag} {name}: {detail} ({:.1}s)", k + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of 9 passed in {:.1}s", 9 - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
