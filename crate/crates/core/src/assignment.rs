//! Anchor-free rotated target assignment and the anchor/IoU path of the
//! horizontal head.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{hbox_iou, point_in_rbox, to_box_frame, HBox, Point2, RBox};
use crate::mcp::LEVELS;

/// Integer mapping of a feature cell to the image pixel it stands for, returned as
/// `(i_m, j_m)`: the row coordinate first, then the column coordinate.
pub fn feature_to_image(i: u64, j: u64, stride: u64) -> (u64, u64) {
    let half = stride / 2;
    (half + i * stride, half + j * stride)
}

/// The same mapping as an image point, `x = j_m`, `y = i_m`.
pub fn location_point(i: usize, j: usize, stride: u32) -> Point2 {
    let (im, jm) = feature_to_image(i as u64, j as u64, stride as u64);
    Point2::new(jm as f64, im as f64)
}

/// Distances from a point to the four edges of a box, in the box frame, plus
/// the box angle. `l + r = w` and `t + b = h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameOffsets {
    pub l: f64,
    pub t: f64,
    pub r: f64,
    pub b: f64,
    pub theta: f64,
}

impl FrameOffsets {
    pub fn max_extent(&self) -> f64 {
        self.l.max(self.t).max(self.r).max(self.b)
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.l, self.t, self.r, self.b, self.theta]
    }
}

pub fn box_frame_offsets(p: Point2, b: &RBox) -> Result<FrameOffsets> {
    if !point_in_rbox(p, b) {
        return Err(invalid(format!("point ({}, {}) is outside {b:?}", p.x, p.y)));
    }
    let (u, v) = to_box_frame(p, b);
    let (hw, hh) = (0.5 * b.w, 0.5 * b.h);
    // boundary points may land a hair outside; clamp into the box
    let u = u.clamp(-hw, hw);
    let v = v.clamp(-hh, hh);
    Ok(FrameOffsets { l: hw + u, t: hh + v, r: hw - u, b: hh - v, theta: b.theta })
}

pub fn centerness(l: f64, t: f64, r: f64, b: f64) -> Result<f64> {
    if [l, t, r, b].iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!("centerness needs non-negative offsets, got ({l}, {t}, {r}, {b})")));
    }
    if l + r <= 0.0 || t + b <= 0.0 {
        return Err(invalid("centerness of a degenerate extent"));
    }
    let ratio = (l.min(r) / l.max(r)) * (t.min(b) / t.max(b));
    Ok(ratio.sqrt())
}

/// Per-level `(lower, upper]` bounds on `max(l, t, r, b)`, keyed by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRanges {
    pub ranges: Vec<(u32, f64, f64)>,
}

impl ScaleRanges {
    pub fn new(ranges: Vec<(u32, f64, f64)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(invalid("scale ranges must not be empty"));
        }
        for (k, lo, hi) in &ranges {
            if lo.is_nan() || hi.is_nan() || lo >= hi || *lo < 0.0 {
                return Err(invalid(format!("bad range ({lo}, {hi}) at level {k}")));
            }
        }
        Ok(Self { ranges })
    }

    /// 0, 64, 128, 256, 512, inf px over levels 3..7.
    pub fn fcos_default() -> Self {
        let bounds = [0.0, 64.0, 128.0, 256.0, 512.0, f64::INFINITY];
        Self { ranges: LEVELS.iter().enumerate().map(|(n, &k)| (k, bounds[n], bounds[n + 1])).collect() }
    }

    /// Pure containment on every level.
    pub fn unbounded() -> Self {
        Self { ranges: LEVELS.iter().map(|&k| (k, 0.0, f64::INFINITY)).collect() }
    }

    pub fn accepts(&self, k: u32, extent: f64) -> bool {
        self.ranges.iter().find(|(lk, _, _)| *lk == k).is_some_and(|&(_, lo, hi)| extent > lo && extent <= hi)
    }
}

impl Default for ScaleRanges {
    fn default() -> Self {
        Self::fcos_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelShape {
    pub k: u32,
    pub h: usize,
    pub w: usize,
    pub stride: u32,
}

impl LevelShape {
    pub fn new(k: u32, h: usize, w: usize) -> Self {
        Self { k, h, w, stride: 1 << k }
    }

    /// Shapes of the five-level pyramid over an image.
    pub fn pyramid(image_h: usize, image_w: usize) -> Vec<Self> {
        crate::mcp::FeaturePyramid::shapes_for_image(image_h, image_w)
            .into_iter()
            .map(|(k, h, w)| Self::new(k, h, w))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationTarget {
    pub k: u32,
    pub i: usize,
    pub j: usize,
    pub point: Point2,
    pub label: Label,
    /// Index into the GT list for positives.
    pub gt_index: Option<usize>,
    pub centerness: Option<f64>,
    pub regression: Option<FrameOffsets>,
}

impl LocationTarget {
    pub fn is_positive(&self) -> bool {
        self.label == Label::Positive
    }
}

/// Single-GT assignment, the usual CVOGL setting.
pub fn assign_rbox_targets(shapes: &[LevelShape], gt: &RBox, ranges: &ScaleRanges) -> Vec<LocationTarget> {
    assign_rbox_targets_multi(shapes, std::slice::from_ref(gt), ranges)
}

/// Locations inside several GTs take the one with the smallest area.
pub fn assign_rbox_targets_multi(shapes: &[LevelShape], gts: &[RBox], ranges: &ScaleRanges) -> Vec<LocationTarget> {
    let mut out = Vec::with_capacity(shapes.iter().map(|s| s.h * s.w).sum());
    for s in shapes {
        for i in 0..s.h {
            for j in 0..s.w {
                let point = location_point(i, j, s.stride);
                let best = gts
                    .iter()
                    .enumerate()
                    .filter_map(|(n, g)| {
                        let off = box_frame_offsets(point, g).ok()?;
                        ranges.accepts(s.k, off.max_extent()).then_some((n, off, g.area()))
                    })
                    .min_by(|a, b| a.2.total_cmp(&b.2));
                let target = match best {
                    Some((n, off, _)) => LocationTarget {
                        k: s.k,
                        i,
                        j,
                        point,
                        label: Label::Positive,
                        gt_index: Some(n),
                        centerness: centerness(off.l, off.t, off.r, off.b).ok(),
                        regression: Some(off),
                    },
                    None => LocationTarget {
                        k: s.k,
                        i,
                        j,
                        point,
                        label: Label::Negative,
                        gt_index: None,
                        centerness: None,
                        regression: None,
                    },
                };
                out.push(target);
            }
        }
    }
    out
}

/// One square anchor of side `4 * stride` per location.
pub fn generate_anchors(shapes: &[LevelShape]) -> Vec<HBox> {
    let mut out = Vec::new();
    for s in shapes {
        let half = 2.0 * s.stride as f64;
        for i in 0..s.h {
            for j in 0..s.w {
                let p = location_point(i, j, s.stride);
                out.push(HBox { xmin: p.x - half, ymin: p.y - half, xmax: p.x + half, ymax: p.y + half });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorLabel {
    Positive,
    Negative,
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorTarget {
    pub label: AnchorLabel,
    pub iou: f64,
    /// `(dx, dy, dw, dh)`: center delta over anchor size, log size ratio.
    pub deltas: Option<[f64; 4]>,
}

pub const DEFAULT_POS_IOU: f64 = 0.5;
pub const DEFAULT_NEG_IOU: f64 = 0.4;

pub fn encode_hbox_deltas(anchor: &HBox, gt: &HBox) -> [f64; 4] {
    let (ac, gc) = (anchor.center(), gt.center());
    [
        (gc.x - ac.x) / anchor.width(),
        (gc.y - ac.y) / anchor.height(),
        (gt.width() / anchor.width()).ln(),
        (gt.height() / anchor.height()).ln(),
    ]
}

pub fn assign_hbox_targets(anchors: &[HBox], gt: &HBox, pos_thr: f64, neg_thr: f64) -> Result<Vec<AnchorTarget>> {
    if !(0.0..=1.0).contains(&neg_thr) || !(0.0..=1.0).contains(&pos_thr) || neg_thr > pos_thr {
        return Err(invalid(format!("need 0 <= neg_thr <= pos_thr <= 1, got {neg_thr} / {pos_thr}")));
    }
    Ok(anchors
        .iter()
        .map(|a| {
            let iou = hbox_iou(a, gt);
            if iou >= pos_thr {
                AnchorTarget { label: AnchorLabel::Positive, iou, deltas: Some(encode_hbox_deltas(a, gt)) }
            } else if iou < neg_thr {
                AnchorTarget { label: AnchorLabel::Negative, iou, deltas: None }
            } else {
                AnchorTarget { label: AnchorLabel::Ignored, iou, deltas: None }
            }
        })
        .collect())
}
