//! A minimal COCO subset: `images`, `annotations` and `categories` for
//! ground truth, and the flat result list for detections.

use std::collections::{BTreeMap, BTreeSet};

use labelassign_core::{BBox, Detection, GroundTruth};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CocoError {
    #[error("not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing top-level `{0}` array")]
    MissingSection(&'static str),
    #[error("{section}[{index}]: {message}")]
    Record { section: &'static str, index: usize, message: String },
    #[error("detections reference unknown image ids {unknown:?}; known ids are {known:?}")]
    UnknownImages { unknown: Vec<u64>, known: Vec<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
}

#[derive(Deserialize)]
struct RawDetection {
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    score: f64,
}

fn records<T: DeserializeOwned>(root: &Value, section: &'static str) -> Result<Vec<T>, CocoError> {
    let items = root.get(section).and_then(Value::as_array).ok_or(CocoError::MissingSection(section))?;
    items
        .iter()
        .enumerate()
        .map(|(index, v)| T::deserialize(v).map_err(|e| CocoError::Record { section, index, message: e.to_string() }))
        .collect()
}

fn xywh(section: &'static str, index: usize, b: [f64; 4]) -> Result<BBox, CocoError> {
    BBox::from_xywh(b[0], b[1], b[2], b[3]).map_err(|e| CocoError::Record { section, index, message: e.to_string() })
}

pub fn parse_dataset(text: &str) -> Result<Dataset, CocoError> {
    let root: Value = serde_json::from_str(text)?;
    let images: Vec<ImageInfo> = records(&root, "images")?;
    let categories: Vec<Category> = records(&root, "categories")?;
    let mut seen = BTreeSet::new();
    for (index, img) in images.iter().enumerate() {
        let message = if !seen.insert(img.id) {
            format!("duplicate image id {}", img.id)
        } else if !(img.width > 0.0 && img.height > 0.0) {
            format!("image {} has non-positive size {}x{}", img.id, img.width, img.height)
        } else {
            continue;
        };
        return Err(CocoError::Record { section: "images", index, message });
    }
    let category_ids: BTreeSet<u32> = categories.iter().map(|c| c.id).collect();
    let raw: Vec<RawAnnotation> = records(&root, "annotations")?;
    let mut annotations = Vec::with_capacity(raw.len());
    for (index, a) in raw.into_iter().enumerate() {
        let fail = |message: String| Err(CocoError::Record { section: "annotations", index, message });
        if !seen.contains(&a.image_id) {
            return fail(format!("unknown image_id {}", a.image_id));
        }
        if !category_ids.contains(&a.category_id) {
            return fail(format!("unknown category_id {}", a.category_id));
        }
        let bbox = xywh("annotations", index, a.bbox)?;
        annotations.push(Annotation { image_id: a.image_id, category_id: a.category_id, bbox });
    }
    Ok(Dataset { images, annotations, categories })
}

/// A COCO result list: `[{image_id, category_id, bbox: [x, y, w, h], score}]`.
pub fn parse_detections(text: &str, known_images: &BTreeSet<u64>) -> Result<Vec<Detection>, CocoError> {
    let root: Value = serde_json::from_str(text)?;
    let wrapped = serde_json::json!({ "detections": root });
    let raw: Vec<RawDetection> = records(&wrapped, "detections")?;
    let unknown: BTreeSet<u64> = raw.iter().map(|d| d.image_id).filter(|id| !known_images.contains(id)).collect();
    if !unknown.is_empty() {
        return Err(CocoError::UnknownImages {
            unknown: unknown.into_iter().collect(),
            known: known_images.iter().copied().collect(),
        });
    }
    raw.into_iter()
        .enumerate()
        .map(|(index, d)| {
            let bbox = xywh("detections", index, d.bbox)?;
            Detection::new(d.image_id, d.category_id, bbox, d.score).map_err(|e| CocoError::Record {
                section: "detections",
                index,
                message: e.to_string(),
            })
        })
        .collect()
}

impl Dataset {
    pub fn ground_truth(&self) -> Vec<GroundTruth> {
        self.annotations
            .iter()
            .map(|a| GroundTruth { image_id: a.image_id, class_id: a.category_id, bbox: a.bbox })
            .collect()
    }

    /// Annotations grouped by image, in image order.
    pub fn by_image(&self) -> BTreeMap<u64, Vec<&Annotation>> {
        let mut map: BTreeMap<u64, Vec<&Annotation>> = self.images.iter().map(|i| (i.id, Vec::new())).collect();
        for a in &self.annotations {
            map.entry(a.image_id).or_default().push(a);
        }
        map
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }
}
