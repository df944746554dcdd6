//! Detector post-processing: confidence filtering, fragment merging and
//! per-class non-maximum suppression.
//!
//! All operations order their output by the same total order (score
//! descending, then class id, `x_min`, `y_min`, `x_max`, `y_max` ascending),
//! so results do not depend on the order detections arrive in.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of detector classes (ids `0..NUM_CLASSES`).
pub const NUM_CLASSES: u8 = 17;

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.6;
pub const DEFAULT_NMS_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MERGE_IOS_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("invalid box [{0}, {1}, {2}, {3}]")]
    InvalidBox(f64, f64, f64, f64),
    #[error("detector class {0} outside 0..=16")]
    UnknownClass(i64),
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("page size must be positive, got {width}x{height}")]
    InvalidPage { width: i64, height: i64 },
    #[error("threshold `{name}` = {value} outside [0, 1]")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("malformed detections: {0}")]
    Json(String),
}

/// Axis-aligned box in page pixels, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, LayoutError> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min > x_max || y_min > y_max || x_min < 0.0 || y_min < 0.0 {
            return Err(LayoutError::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(0.0) * h.max(0.0)
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Clamps to `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        BBox {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
        }
    }

    fn cmp_coords(&self, other: &BBox) -> Ordering {
        self.x_min
            .total_cmp(&other.x_min)
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = LayoutError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Intersection over union; 1 for identical boxes, 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Intersection over the smaller box's area.
pub fn ios(a: &BBox, b: &BBox) -> f64 {
    let smaller = a.area().min(b.area());
    if smaller <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (a.intersection_area(b) / smaller).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection", into = "RawDetection")]
pub struct Detection {
    pub cls: u8,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Serialize, Deserialize)]
struct RawDetection {
    class: i64,
    score: f64,
    bbox: BBox,
}

impl TryFrom<RawDetection> for Detection {
    type Error = LayoutError;
    fn try_from(raw: RawDetection) -> Result<Self, Self::Error> {
        Detection::new(raw.class, raw.score, raw.bbox)
    }
}

impl From<Detection> for RawDetection {
    fn from(d: Detection) -> Self {
        RawDetection {
            class: i64::from(d.cls),
            score: d.score,
            bbox: d.bbox,
        }
    }
}

impl Detection {
    pub fn new(cls: i64, score: f64, bbox: BBox) -> Result<Self, LayoutError> {
        if !(0..i64::from(NUM_CLASSES)).contains(&cls) {
            return Err(LayoutError::UnknownClass(cls));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(LayoutError::InvalidScore(score));
        }
        Ok(Detection {
            cls: cls as u8,
            score,
            bbox,
        })
    }

    /// The canonical tie-break order used by every stage.
    pub fn canonical_cmp(&self, other: &Detection) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.cls.cmp(&other.cls))
            .then(self.bbox.cmp_coords(&other.bbox))
    }
}

fn sort_canonical(dets: &mut [Detection]) {
    dets.sort_by(Detection::canonical_cmp);
}

/// Detector output for one page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageDetections {
    pub page_id: String,
    pub width: u32,
    pub height: u32,
    pub detections: Vec<Detection>,
}

#[derive(Deserialize)]
struct RawPage {
    page_id: String,
    width: i64,
    height: i64,
    detections: Vec<Detection>,
}

impl PageDetections {
    /// Validates dimensions and clamps every box into the page.
    pub fn new(
        page_id: impl Into<String>,
        width: i64,
        height: i64,
        detections: Vec<Detection>,
    ) -> Result<Self, LayoutError> {
        if width <= 0 || height <= 0 || width > i64::from(u32::MAX) || height > i64::from(u32::MAX) {
            return Err(LayoutError::InvalidPage { width, height });
        }
        let (w, h) = (width as f64, height as f64);
        let detections = detections
            .into_iter()
            .map(|d| Detection {
                bbox: d.bbox.clamp_to(w, h),
                ..d
            })
            .collect();
        Ok(PageDetections {
            page_id: page_id.into(),
            width: width as u32,
            height: height as u32,
            detections,
        })
    }

    /// Parses one detections JSON object.
    pub fn from_json(s: &str) -> Result<Self, LayoutError> {
        let raw: RawPage = serde_json::from_str(s).map_err(|e| LayoutError::Json(e.to_string()))?;
        PageDetections::new(raw.page_id, raw.width, raw.height, raw.detections)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("detections serialize")
    }
}

/// Post-processing thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    /// Keep detections scoring strictly above this.
    pub confidence_threshold: f64,
    /// Suppress same-class boxes overlapping a kept box above this IoU.
    pub nms_iou_threshold: f64,
    /// Merge same-class boxes whose intersection over the smaller area reaches this.
    pub merge_ios_threshold: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            nms_iou_threshold: DEFAULT_NMS_IOU_THRESHOLD,
            merge_ios_threshold: DEFAULT_MERGE_IOS_THRESHOLD,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        for (name, value) in [
            ("confidence_threshold", self.confidence_threshold),
            ("nms_iou_threshold", self.nms_iou_threshold),
            ("merge_ios_threshold", self.merge_ios_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(LayoutError::InvalidThreshold { name, value });
            }
        }
        Ok(())
    }
}

/// Keeps detections with `score > threshold`, preserving order.
pub fn filter_confidence(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score > threshold).copied().collect()
}

/// Unions same-class pairs whose IoS reaches `threshold` until no pair does.
///
/// Each step merges the first qualifying pair in canonical order into their
/// hull with the larger score.
pub fn merge_fragments(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut out = dets.to_vec();
    sort_canonical(&mut out);
    'outer: loop {
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                let (a, b) = (out[i], out[j]);
                if a.cls == b.cls && ios(&a.bbox, &b.bbox) >= threshold {
                    out[i] = Detection {
                        cls: a.cls,
                        score: a.score.max(b.score),
                        bbox: a.bbox.hull(&b.bbox),
                    };
                    out.remove(j);
                    sort_canonical(&mut out);
                    continue 'outer;
                }
            }
        }
        return out;
    }
}

/// Greedy per-class NMS in canonical order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sort_canonical(&mut sorted);
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for d in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.cls == d.cls && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

/// Filter, then merge, then NMS.
pub fn postprocess(page: &PageDetections, cfg: &PostprocessConfig) -> PageDetections {
    let filtered = filter_confidence(&page.detections, cfg.confidence_threshold);
    let merged = merge_fragments(&filtered, cfg.merge_ios_threshold);
    PageDetections {
        page_id: page.page_id.clone(),
        width: page.width,
        height: page.height,
        detections: nms(&merged, cfg.nms_iou_threshold),
    }
}
