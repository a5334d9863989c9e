//! Axis-aligned boxes and IoU.
//!
//! Boxes use the `(x_min, y_min, x_max, y_max)` convention with continuous
//! pixel coordinates and area `(x_max - x_min) * (y_max - y_min)`.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Axis-aligned rectangle with strictly positive extent.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "[f64; 4]", into = "[f64; 4]")
)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite();
        if !finite || x_max <= x_min || y_max <= y_min {
            return Err(Error::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// Builds a box from a top-left corner and a size (COCO `bbox` layout).
    pub fn from_xywh(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(x, y, x + width, y + height)
    }

    /// Builds a box of the given size centred on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    #[inline]
    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    #[inline]
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Area of the overlap with `other`, zero when disjoint or merely touching.
    #[inline]
    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// True when `(x, y)` lies in the open interior of the box.
    #[inline]
    pub fn contains_strict(&self, x: f64, y: f64) -> bool {
        x > self.x_min && x < self.x_max && y > self.y_min && y < self.y_max
    }

    /// Coordinate-wise interpolation: `weight = 0` gives `self`, `1` gives `target`.
    pub fn lerp(&self, target: &BBox, weight: f64) -> BBox {
        let mix = |a: f64, b: f64| a + (b - a) * weight;
        let x_min = mix(self.x_min, target.x_min);
        let y_min = mix(self.y_min, target.y_min);
        let x_max = mix(self.x_max, target.x_max);
        let y_max = mix(self.y_max, target.y_max);
        // both endpoints have positive extent, so any convex mix does too
        BBox { x_min, y_min, x_max, y_max }
    }

    /// Scales all coordinates about the origin.
    pub fn scaled(&self, sx: f64, sy: f64) -> Result<BBox> {
        BBox::new(self.x_min * sx, self.y_min * sy, self.x_max * sx, self.y_max * sy)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union of two boxes.
#[inline]
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Row-major matrix whose entries all lie in `[0, 1]`.
///
/// Rows index anchors (or points), columns index ground-truth objects. Used
/// for IoU matrices and for per-anchor-per-object classification scores.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

pub type IouMatrix = UnitMatrix;

impl UnitMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected_rows: rows,
                expected_cols: cols,
                rows: values.len() / cols.max(1),
                cols,
            });
        }
        for (k, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfUnitInterval { row: k / cols, col: k % cols, value: v });
            }
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from a column-major list of columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for (j, c) in columns.iter().enumerate() {
                if c.len() != rows {
                    return Err(Error::DimensionMismatch {
                        expected_rows: rows,
                        expected_cols: cols,
                        rows: c.len(),
                        cols: j + 1,
                    });
                }
                values.push(c[i]);
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: alloc::vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.values[i * self.cols + col])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every entry; results are clamped into `[0, 1]`.
    pub fn map(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let values =
            self.values.iter().enumerate().map(|(k, &v)| f(k / self.cols, k % self.cols, v).clamp(0.0, 1.0)).collect();
        Self { rows: self.rows, cols: self.cols, values }
    }

    pub(crate) fn ensure_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::DimensionMismatch {
                expected_rows: rows,
                expected_cols: cols,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }
}

/// IoU of every anchor against every object; rows follow `anchors`, columns `objects`.
pub fn iou_matrix(anchors: &[BBox], objects: &[BBox]) -> Result<IouMatrix> {
    if anchors.is_empty() {
        return Err(Error::EmptyInput("no anchors"));
    }
    if objects.is_empty() {
        return Err(Error::EmptyInput("no ground-truth objects"));
    }
    let mut values = Vec::with_capacity(anchors.len() * objects.len());
    for a in anchors {
        values.extend(objects.iter().map(|o| iou(a, o)));
    }
    Ok(UnitMatrix { rows: anchors.len(), cols: objects.len(), values })
}
