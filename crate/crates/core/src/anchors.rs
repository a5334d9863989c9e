//! Multi-level anchor grids and FCOS-style point grids.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::geometry::BBox;
use crate::{Error, Result};

/// One pyramid level: a stride plus the anchor shapes stacked at each cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelSpec {
    pub stride: u32,
    /// Anchor side lengths in pixels (square-equivalent).
    pub scales: Vec<f64>,
    /// Width / height ratios.
    pub aspect_ratios: Vec<f64>,
}

impl LevelSpec {
    pub fn new(stride: u32, scales: Vec<f64>, aspect_ratios: Vec<f64>) -> Self {
        Self { stride, scales, aspect_ratios }
    }

    fn min_scale(&self) -> f64 {
        self.scales.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnchorGridSpec {
    pub image_width: u32,
    pub image_height: u32,
    pub levels: Vec<LevelSpec>,
}

impl Default for AnchorGridSpec {
    /// 320x320 canvas, strides 8/16/32, ratios {1, 2, 1/2}.
    ///
    /// A compact stand-in for an RFBNet-style layout; pass a custom spec to
    /// reproduce a particular detector.
    fn default() -> Self {
        let ratios = vec![1.0, 2.0, 0.5];
        Self {
            image_width: 320,
            image_height: 320,
            levels: vec![
                LevelSpec::new(8, vec![32.0], ratios.clone()),
                LevelSpec::new(16, vec![64.0, 128.0], ratios.clone()),
                LevelSpec::new(32, vec![256.0], ratios),
            ],
        }
    }
}

impl AnchorGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidGrid(format!(
                "image size {}x{} must be positive",
                self.image_width, self.image_height
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidGrid("at least one level is required".into()));
        }
        for (l, level) in self.levels.iter().enumerate() {
            if level.stride == 0 {
                return Err(Error::InvalidGrid(format!("level {l}: stride must be >= 1")));
            }
            if !self.image_width.is_multiple_of(level.stride) || !self.image_height.is_multiple_of(level.stride) {
                return Err(Error::InvalidGrid(format!(
                    "level {l}: stride {} does not divide {}x{}",
                    level.stride, self.image_width, self.image_height
                )));
            }
            if level.scales.is_empty() || level.aspect_ratios.is_empty() {
                return Err(Error::InvalidGrid(format!("level {l}: needs at least one scale and one aspect ratio")));
            }
            let positive = |v: &f64| v.is_finite() && *v > 0.0;
            if !level.scales.iter().all(positive) || !level.aspect_ratios.iter().all(positive) {
                return Err(Error::InvalidGrid(format!(
                    "level {l}: scales and aspect ratios must be finite and positive"
                )));
            }
        }
        Ok(())
    }

    /// Number of anchors `generate_anchors` will produce.
    pub fn anchor_count(&self) -> usize {
        self.levels.iter().map(|l| self.cells(l) * l.scales.len() * l.aspect_ratios.len()).sum()
    }

    fn cells(&self, level: &LevelSpec) -> usize {
        (self.image_width / level.stride) as usize * (self.image_height / level.stride) as usize
    }

    /// Object-size band `[lower, upper)` handled by each level in point mode.
    ///
    /// The first level starts at 0, the last is unbounded, and each interior
    /// boundary is the smallest scale of the next level.
    pub fn scale_ranges(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let mins: Vec<f64> = self.levels.iter().map(LevelSpec::min_scale).collect();
        if mins.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("point mode needs level scales that increase strictly with level".into()));
        }
        Ok((0..mins.len())
            .map(|l| {
                let lower = if l == 0 { 0.0 } else { mins[l] };
                let upper = mins.get(l + 1).copied().unwrap_or(f64::INFINITY);
                (lower, upper)
            })
            .collect())
    }
}

/// Flat anchor list plus the index range each level occupies.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub boxes: Vec<BBox>,
    pub level_offsets: Vec<Range<usize>>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Level index of anchor `i`.
    pub fn level_of(&self, i: usize) -> Option<usize> {
        self.level_offsets.iter().position(|r| r.contains(&i))
    }
}

/// Generates anchors in level, row, column, scale, ratio order.
///
/// Anchor `(scale s, ratio r)` is `s*sqrt(r)` wide and `s/sqrt(r)` tall, so
/// its area is `s^2` for every ratio. Boxes are not clipped to the image.
pub fn generate_anchors(spec: &AnchorGridSpec) -> Result<AnchorSet> {
    spec.validate()?;
    let mut boxes = Vec::with_capacity(spec.anchor_count());
    let mut level_offsets = Vec::with_capacity(spec.levels.len());
    for level in &spec.levels {
        let start = boxes.len();
        let stride = level.stride as f64;
        let shapes: Vec<(f64, f64)> = level
            .scales
            .iter()
            .flat_map(|&s| {
                level.aspect_ratios.iter().map(move |&r| {
                    let root = libm::sqrt(r);
                    (s * root, s / root)
                })
            })
            .collect();
        for row in 0..spec.image_height / level.stride {
            let cy = stride * (row as f64 + 0.5);
            for col in 0..spec.image_width / level.stride {
                let cx = stride * (col as f64 + 0.5);
                for &(w, h) in &shapes {
                    boxes.push(BBox::from_center(cx, cy, w, h)?);
                }
            }
        }
        level_offsets.push(start..boxes.len());
    }
    Ok(AnchorSet { boxes, level_offsets })
}

/// A sampling location of an anchor-free detector.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub level: usize,
    pub stride: u32,
    /// Objects whose longer side falls in `[lower, upper)` belong to this level.
    pub scale_range: (f64, f64),
}

impl GridPoint {
    pub fn accepts_size(&self, size: f64) -> bool {
        size >= self.scale_range.0 && size < self.scale_range.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<GridPoint>,
    pub level_offsets: Vec<Range<usize>>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Square box of side `side(level)` centred on each point.
    ///
    /// The simulator uses these as the starting boxes that point predictions
    /// regress from.
    pub fn prior_boxes(&self, side: impl Fn(usize) -> f64) -> Result<Vec<BBox>> {
        self.points
            .iter()
            .map(|p| {
                let s = side(p.level);
                BBox::from_center(p.x, p.y, s, s)
            })
            .collect()
    }
}

/// One point per cell centre per level, in the same order as the anchors.
pub fn generate_points(spec: &AnchorGridSpec) -> Result<PointSet> {
    let ranges = spec.scale_ranges()?;
    let mut points = Vec::new();
    let mut level_offsets = Vec::with_capacity(spec.levels.len());
    for (l, level) in spec.levels.iter().enumerate() {
        let start = points.len();
        let stride = level.stride as f64;
        for row in 0..spec.image_height / level.stride {
            for col in 0..spec.image_width / level.stride {
                points.push(GridPoint {
                    x: stride * (col as f64 + 0.5),
                    y: stride * (row as f64 + 0.5),
                    level: l,
                    stride: level.stride,
                    scale_range: ranges[l],
                });
            }
        }
        level_offsets.push(start..points.len());
    }
    Ok(PointSet { points, level_offsets })
}
