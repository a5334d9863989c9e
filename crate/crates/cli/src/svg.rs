//! Deterministic SVG comparison of two label sets.
//!
//! Red marks positives only the baseline selected, yellow the guided
//! classification positives, green the guided localization positives.
//! Ground truth is drawn as dashed white boxes on a dark canvas.

use std::fmt::Write;

use labelassign_core::{BBox, Label};

pub const BASELINE: &str = "#e53935";
pub const CLASSIFICATION: &str = "#fdd835";
pub const LOCALIZATION: &str = "#43a047";

/// How a sample is drawn: its box for anchors, a dot for points.
pub enum Shape<'a> {
    Boxes(&'a [BBox]),
    Points(&'a [(f64, f64)]),
}

pub struct Comparison<'a> {
    pub width: u32,
    pub height: u32,
    pub objects: &'a [BBox],
    pub shape: Shape<'a>,
    pub baseline: &'a [Label],
    pub classification: &'a [Label],
    pub localization: &'a [Label],
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn sample(out: &mut String, shape: &Shape, i: usize, color: &str) {
    match shape {
        Shape::Boxes(b) => {
            let b = &b[i];
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
                num(b.x_min()),
                num(b.y_min()),
                num(b.width()),
                num(b.height())
            );
        }
        Shape::Points(p) => {
            let (x, y) = p[i];
            let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="2.5" fill="{color}"/>"#, num(x), num(y));
        }
    }
}

pub fn render(c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = c.width,
        h = c.height
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#1e1e1e"/>"##);
    let n = c.baseline.len();
    let baseline_only = |i: &usize| {
        c.baseline[*i].is_positive() && !c.classification[*i].is_positive() && !c.localization[*i].is_positive()
    };
    let layers = [
        ("baseline", BASELINE, (0..n).filter(baseline_only).collect::<Vec<_>>()),
        ("classification", CLASSIFICATION, (0..n).filter(|&i| c.classification[i].is_positive()).collect()),
        ("localization", LOCALIZATION, (0..n).filter(|&i| c.localization[i].is_positive()).collect()),
    ];
    for (class, color, members) in &layers {
        let _ = writeln!(out, r#"<g class="{class}">"#);
        for &i in members {
            sample(&mut out, &c.shape, i, color);
        }
        out.push_str("</g>\n");
    }
    out.push_str("<g class=\"ground-truth\">\n");
    for b in c.objects {
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="white" stroke-width="2" stroke-dasharray="6 4"/>"#,
            num(b.x_min()),
            num(b.y_min()),
            num(b.width()),
            num(b.height())
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn colors_follow_the_labels() {
        let boxes = [BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), BBox::new(5.0, 5.0, 15.5, 15.0).unwrap()];
        let svg = render(&Comparison {
            width: 20,
            height: 20,
            objects: &boxes[..1],
            shape: Shape::Boxes(&boxes),
            baseline: &[Positive(0), Positive(0)],
            classification: &[Negative, Positive(0)],
            localization: &[Negative, Negative],
        });
        assert_eq!(svg.matches(BASELINE).count(), 1);
        assert_eq!(svg.matches(CLASSIFICATION).count(), 1);
        assert!(!svg.contains(LOCALIZATION));
        assert!(svg.contains(r#"width="10.5""#));
        assert!(svg.contains("stroke-dasharray"));
    }
}
