//! From per-location head outputs to a single answer: box reconstruction,
//! score fusion, rotated NMS, top-1 selection and SAM prompt export.

use serde::{Deserialize, Serialize};

use crate::assignment::FrameOffsets;
use crate::error::{invalid, Error, Result};
use crate::geometry::{hbox_iou, rbox_corners, rbox_iou, rbox_to_hbox, HBox, Point2, RBox};

/// Fused scores under this are dropped before selection, unless that would
/// leave nothing.
pub const CONFIDENCE_FLOOR: f64 = 1e-4;
/// Suppression threshold of the multi-output diagnostic mode.
pub const DIAGNOSTIC_NMS_IOU: f64 = 0.1;

/// Inverse of [`crate::assignment::box_frame_offsets`].
pub fn decode_rbox(point: Point2, reg: &FrameOffsets) -> Result<RBox> {
    let FrameOffsets { l, t, r, b, theta } = *reg;
    if [l, t, r, b].iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!("regression extents must be non-negative, got {:?}", reg.to_array())));
    }
    if l + r <= 0.0 || t + b <= 0.0 {
        return Err(invalid("regression has a zero extent"));
    }
    let (s, c) = theta.sin_cos();
    let du = 0.5 * (r - l);
    let dv = 0.5 * (b - t);
    RBox::new(point.x + du * c - dv * s, point.y + du * s + dv * c, l + r, t + b, theta)
}

/// Anchor plus `(dx, dy, dw, dh)` deltas back to a box.
pub fn decode_hbox(anchor: &HBox, deltas: &[f64; 4]) -> Result<HBox> {
    let c = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cx = c.x + deltas[0] * aw;
    let cy = c.y + deltas[1] * ah;
    let w = aw * deltas[2].exp();
    let h = ah * deltas[3].exp();
    HBox::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
}

/// Geometric mean of classification and centerness.
pub fn fuse_score(cls: f64, centerness: f64) -> f64 {
    (cls.max(0.0) * centerness.max(0.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetBox {
    Rbox(RBox),
    Hbox(HBox),
}

impl DetBox {
    pub fn as_rbox(&self) -> RBox {
        match self {
            DetBox::Rbox(b) => *b,
            DetBox::Hbox(h) => RBox::from_hbox(h),
        }
    }

    pub fn hull(&self) -> HBox {
        match self {
            DetBox::Rbox(b) => rbox_to_hbox(b),
            DetBox::Hbox(h) => *h,
        }
    }
}

fn det_iou(a: &DetBox, b: &DetBox) -> f64 {
    match (a, b) {
        (DetBox::Hbox(x), DetBox::Hbox(y)) => hbox_iou(x, y),
        _ => rbox_iou(&a.as_rbox(), &b.as_rbox()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub det: DetBox,
    pub score: f64,
    /// Pyramid level and row-major index within it; used for tie-breaks.
    pub level: u32,
    pub index: usize,
}

/// Raw output of one head location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPrediction {
    pub level: u32,
    pub i: usize,
    pub j: usize,
    pub index: usize,
    pub point: Point2,
    pub cls: f64,
    pub centerness: f64,
    pub regression: FrameOffsets,
}

impl RawPrediction {
    pub fn decode(&self) -> Result<Prediction> {
        Ok(Prediction {
            det: DetBox::Rbox(decode_rbox(self.point, &self.regression)?),
            score: fuse_score(self.cls, self.centerness),
            level: self.level,
            index: self.index,
        })
    }
}

fn rank(a: &Prediction, b: &Prediction) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.level.cmp(&b.level)).then(a.index.cmp(&b.index))
}

/// Greedy suppression; output sorted by descending score.
pub fn rotated_nms(preds: &[Prediction], iou_thr: f64) -> Vec<Prediction> {
    let mut order = preds.to_vec();
    order.sort_by(rank);
    let mut kept: Vec<Prediction> = Vec::new();
    for p in order {
        if kept.iter().all(|k| det_iou(&k.det, &p.det) < iou_thr) {
            kept.push(p);
        }
    }
    kept
}

pub fn select_top1(preds: &[Prediction]) -> Result<Prediction> {
    preds.iter().min_by(|a, b| rank(a, b)).copied().ok_or(Error::NoPrediction)
}

/// Drops predictions below [`CONFIDENCE_FLOOR`] unless none would remain.
pub fn apply_confidence_floor(preds: Vec<Prediction>) -> Vec<Prediction> {
    if preds.iter().any(|p| p.score >= CONFIDENCE_FLOOR) {
        preds.into_iter().filter(|p| p.score >= CONFIDENCE_FLOOR).collect()
    } else {
        preds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputMode {
    Top1,
    /// All survivors of rotated NMS at [`DIAGNOSTIC_NMS_IOU`].
    Multi,
}

/// Decodes every raw output and returns the final answer(s).
pub fn decode_outputs(raw: &[RawPrediction], mode: OutputMode) -> Result<Vec<Prediction>> {
    let preds = raw.iter().map(RawPrediction::decode).collect::<Result<Vec<_>>>()?;
    let preds = apply_confidence_floor(preds);
    match mode {
        OutputMode::Top1 => Ok(vec![select_top1(&preds)?]),
        OutputMode::Multi => {
            let kept = rotated_nms(&preds, DIAGNOSTIC_NMS_IOU);
            if kept.is_empty() {
                return Err(Error::NoPrediction);
            }
            Ok(kept)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptMode {
    #[serde(rename = "hbox")]
    Hbox,
    #[serde(rename = "rbox-corners")]
    RboxCorners,
}

impl std::str::FromStr for PromptMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hbox" => Ok(Self::Hbox),
            "rbox-corners" => Ok(Self::RboxCorners),
            other => Err(invalid(format!("unknown prompt mode {other:?}"))),
        }
    }
}

/// One line of the prompt file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamPrompt {
    pub image_id: String,
    pub mode: PromptMode,
    #[serde(rename = "box")]
    pub coords: Vec<f64>,
    pub score: f64,
}

impl SamPrompt {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn export_sam_prompt(image_id: &str, p: &Prediction, mode: PromptMode) -> SamPrompt {
    let coords = match mode {
        PromptMode::Hbox => p.det.hull().to_array().to_vec(),
        PromptMode::RboxCorners => {
            rbox_corners(&p.det.as_rbox()).vertices.iter().flat_map(|v| [v.x, v.y]).collect()
        }
    };
    SamPrompt { image_id: image_id.to_string(), mode, coords, score: p.score }
}
