//! Loss terms of the detection objective: focal classification, centerness
//! cross-entropy, IoU regression for the horizontal head and the
//! orientation-sensitive loss for the rotated head, plus gradients and a
//! small gradient-descent box fitter.

use serde::{Deserialize, Serialize};

use crate::assignment::{FrameOffsets, LocationTarget};
use crate::decode::decode_rbox;
use crate::error::{invalid, Result};
use crate::geometry::{center_distance, hbox_iou, normalize_angle, rbox_iou, rbox_to_hbox, HBox, RBox};
use crate::mcp::NORM_EPS;
use crate::numeric::pairwise_sum;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;
/// Distance below which the center term is treated as sitting on its kink.
pub const KINK_DISTANCE: f64 = 1e-8;
/// Relative central-difference step for the IoU term.
pub const FD_STEP: f64 = 1e-4;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { gamma: 2.0, alpha: 0.25 }
    }
}

/// `-alpha_t (1 - p_t)^gamma ln p_t`, with `alpha_t = alpha` for positives and
/// `1 - alpha` for negatives.
pub fn focal_loss(p: f64, positive: bool, gamma: f64, alpha_f: f64) -> f64 {
    let p = clamp_prob(p);
    let (pt, at) = if positive { (p, alpha_f) } else { (1.0 - p, 1.0 - alpha_f) };
    -at * (1.0 - pt).powf(gamma) * pt.ln()
}

/// Binary cross-entropy against a soft target.
pub fn centerness_bce(pred: f64, target: f64) -> f64 {
    let p = clamp_prob(pred);
    let t = target.clamp(0.0, 1.0);
    -t * p.ln() - (1.0 - t) * (1.0 - p).ln()
}

pub fn iou_loss_hbox(pred: &HBox, gt: &HBox) -> f64 {
    1.0 - hbox_iou(pred, gt)
}

/// How the overlap enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IouForm {
    /// `1 - IoU`
    #[default]
    Linear,
    /// `-ln IoU`, with IoU floored at [`PROB_EPS`]
    NegLog,
}

impl IouForm {
    fn apply(self, iou: f64) -> f64 {
        match self {
            IouForm::Linear => 1.0 - iou,
            IouForm::NegLog => -iou.max(PROB_EPS).ln(),
        }
    }
}

/// How the center distance enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// `sigmoid(d)`, which is 0.5 at a perfect match
    #[default]
    Sigmoid,
    /// `2 sigmoid(d) - 1`, which vanishes at a perfect match
    CenteredSigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsLossParams {
    pub alpha: f64,
    pub beta: f64,
    pub distance_mode: DistanceMode,
    pub iou_form: IouForm,
}

impl OsLossParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() || alpha < 0.0 || beta < 0.0 {
            return Err(invalid(format!("alpha and beta must be finite and non-negative, got {alpha}, {beta}")));
        }
        Ok(Self { alpha, beta, ..Self::default() })
    }
}

impl Default for OsLossParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, distance_mode: DistanceMode::Sigmoid, iou_form: IouForm::Linear }
    }
}

/// The three weighted parts of the orientation-sensitive loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsLossTerms {
    pub iou: f64,
    pub distance: f64,
    pub angle: f64,
}

impl OsLossTerms {
    pub fn total(&self) -> f64 {
        self.iou + self.distance + self.angle
    }
}

pub fn angle_difference(pred: &RBox, gt: &RBox) -> f64 {
    normalize_angle(pred.theta - gt.theta).unwrap_or(0.0)
}

pub fn os_loss_terms(pred: &RBox, gt: &RBox, params: &OsLossParams) -> OsLossTerms {
    let d = center_distance(pred, gt);
    let dist = match params.distance_mode {
        DistanceMode::Sigmoid => sigmoid(d),
        DistanceMode::CenteredSigmoid => 2.0 * sigmoid(d) - 1.0,
    };
    OsLossTerms {
        iou: params.iou_form.apply(rbox_iou(pred, gt)),
        distance: params.alpha * dist,
        angle: params.beta * angle_difference(pred, gt).sin().abs(),
    }
}

/// `L_IoU + alpha * sigmoid(d_c) + beta * |sin(dtheta)|`.
pub fn os_loss(pred: &RBox, gt: &RBox, params: &OsLossParams) -> f64 {
    os_loss_terms(pred, gt, params).total()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsGradient {
    /// d/d(cx, cy, w, h, theta)
    pub grad: [f64; 5],
    /// Set when the center distance or the angle difference sits on its
    /// non-smooth point and the zero subgradient was used.
    pub at_kink: bool,
}

/// Central-difference steps per parameter. Positions scale with the box
/// size so the step is translation invariant.
pub fn fd_steps(b: &RBox) -> [f64; 5] {
    [
        FD_STEP * b.w.min(b.h).max(1.0),
        FD_STEP * b.w.min(b.h).max(1.0),
        FD_STEP * b.w.max(1.0),
        FD_STEP * b.h.max(1.0),
        FD_STEP,
    ]
}

/// Box with one raw parameter shifted; the angle is re-normalized and the
/// extents kept positive.
pub fn perturbed(b: &RBox, idx: usize, delta: f64) -> RBox {
    let mut p = b.to_array();
    p[idx] += delta;
    RBox {
        cx: p[0],
        cy: p[1],
        w: p[2].max(f64::MIN_POSITIVE),
        h: p[3].max(f64::MIN_POSITIVE),
        theta: normalize_angle(p[4]).unwrap_or(b.theta),
    }
}

pub fn os_loss_grad(pred: &RBox, gt: &RBox, params: &OsLossParams) -> OsGradient {
    let mut grad = [0.0; 5];
    let steps = fd_steps(pred);
    let iou_term = |b: &RBox| params.iou_form.apply(rbox_iou(b, gt));
    for (idx, h) in steps.iter().enumerate() {
        let up = iou_term(&perturbed(pred, idx, *h));
        let down = iou_term(&perturbed(pred, idx, -*h));
        grad[idx] = (up - down) / (2.0 * h);
    }

    let mut at_kink = false;
    let d = center_distance(pred, gt);
    if d > KINK_DISTANCE {
        let s = sigmoid(d);
        let slope = match params.distance_mode {
            DistanceMode::Sigmoid => s * (1.0 - s),
            DistanceMode::CenteredSigmoid => 2.0 * s * (1.0 - s),
        };
        grad[0] += params.alpha * slope * (pred.cx - gt.cx) / d;
        grad[1] += params.alpha * slope * (pred.cy - gt.cy) / d;
    } else {
        at_kink = true;
    }

    let dt = angle_difference(pred, gt);
    let s = dt.sin();
    if s != 0.0 {
        grad[4] += params.beta * s.signum() * dt.cos();
    } else if params.beta > 0.0 {
        at_kink = true;
    }
    OsGradient { grad, at_kink }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalLossWeights {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl Default for TotalLossWeights {
    fn default() -> Self {
        Self { mu1: 1.0, mu2: 1.0, mu3: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Rbox,
    Hbox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RegressionOutput {
    /// Rotated head: box-frame offsets from the location point.
    Offsets(FrameOffsets),
    /// Horizontal head: an already decoded box.
    Hbox(HBox),
}

/// What the head emits at one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadOutput {
    pub cls: f64,
    pub centerness: f64,
    pub regression: RegressionOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossConfig {
    pub weights: TotalLossWeights,
    pub os: OsLossParams,
    pub focal: FocalParams,
}

/// Normalized components (before the mu weights) and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub classification: f64,
    pub centerness: f64,
    pub regression: f64,
    pub total: f64,
    pub n_pos: usize,
    pub sum_cn_pos: f64,
    pub weights: TotalLossWeights,
}

impl LossBreakdown {
    /// `[mu1 * classification, mu2 * centerness, mu3 * regression]`.
    pub fn weighted(&self) -> [f64; 3] {
        [
            self.weights.mu1 * self.classification,
            self.weights.mu2 * self.centerness,
            self.weights.mu3 * self.regression,
        ]
    }
}

fn regression_loss(out: &HeadOutput, target: &LocationTarget, cfg: &LossConfig, head: HeadKind) -> Result<f64> {
    let reg = target.regression.ok_or_else(|| invalid("positive target without regression"))?;
    let gt = decode_rbox(target.point, &reg)?;
    let pred = match out.regression {
        RegressionOutput::Offsets(o) => decode_rbox(target.point, &o)?,
        RegressionOutput::Hbox(h) => RBox::from_hbox(&h),
    };
    Ok(match head {
        HeadKind::Rbox => os_loss(&pred, &gt, &cfg.os),
        HeadKind::Hbox => {
            let pred_h = match out.regression {
                RegressionOutput::Hbox(h) => h,
                RegressionOutput::Offsets(_) => rbox_to_hbox(&pred),
            };
            iou_loss_hbox(&pred_h, &rbox_to_hbox(&gt))
        }
    })
}

/// Detection objective over location-aligned outputs and targets.
pub fn total_loss(
    outputs: &[HeadOutput],
    targets: &[LocationTarget],
    cfg: &LossConfig,
    head: HeadKind,
) -> Result<LossBreakdown> {
    if outputs.len() != targets.len() {
        return Err(invalid(format!("{} outputs for {} targets", outputs.len(), targets.len())));
    }
    let cls: Vec<f64> = outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| focal_loss(o.cls, t.is_positive(), cfg.focal.gamma, cfg.focal.alpha))
        .collect();
    let mut cn_terms = Vec::new();
    let mut reg_terms = Vec::new();
    let mut cn_targets = Vec::new();
    for (o, t) in outputs.iter().zip(targets).filter(|(_, t)| t.is_positive()) {
        let cn = t.centerness.ok_or_else(|| invalid("positive target without centerness"))?;
        cn_targets.push(cn);
        cn_terms.push(centerness_bce(o.centerness, cn));
        reg_terms.push(cn * regression_loss(o, t, cfg, head)?);
    }
    let n_pos = cn_targets.len();
    let norm_pos = n_pos.max(1) as f64;
    let sum_cn_pos = pairwise_sum(&cn_targets).max(NORM_EPS);
    let classification = pairwise_sum(&cls) / norm_pos;
    let centerness = pairwise_sum(&cn_terms) / norm_pos;
    let regression = pairwise_sum(&reg_terms) / sum_cn_pos;
    let w = cfg.weights;
    Ok(LossBreakdown {
        classification,
        centerness,
        regression,
        total: w.mu1 * classification + w.mu2 * centerness + w.mu3 * regression,
        n_pos,
        sum_cn_pos,
        weights: w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStep {
    pub step: usize,
    pub rbox: RBox,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrajectory {
    pub steps: Vec<FitStep>,
    /// Diagnostic when the loss became non-finite.
    pub diverged: Option<String>,
}

impl FitTrajectory {
    pub fn last(&self) -> &FitStep {
        self.steps.last().expect("trajectory always holds the initial box")
    }
}

const MIN_EXTENT: f64 = 1e-3;
const MAX_HALVINGS: usize = 40;

/// Center, extents and angle are line-searched separately: the IoU term is
/// not smooth where edges align, and a joint step would be throttled by
/// whichever block sits on such a crease.
const BLOCKS: [&[usize]; 3] = [&[0, 1], &[2, 3], &[4]];

fn descend(b: &RBox, g: &[f64; 5], block: &[usize], step: f64) -> RBox {
    // positions and extents move in units of the half-diagonal, so the step
    // is the same for a 10 px and a 500 px box
    let reach = (0.5 * b.w.hypot(b.h)).max(1.0);
    let mut p = b.to_array();
    for &i in block {
        let scale = if i < 4 { reach * reach } else { 1.0 };
        p[i] -= step * scale * g[i];
    }
    RBox {
        cx: p[0],
        cy: p[1],
        w: p[2].max(MIN_EXTENT),
        h: p[3].max(MIN_EXTENT),
        theta: normalize_angle(p[4]).unwrap_or(b.theta),
    }
}

/// Gradient descent on [`os_loss`] with step `lr` in box-normalized units.
/// Each iteration updates the center, the extents and the angle in turn,
/// halving a block's step until the loss drops. Stops early once no block
/// can lower it.
pub fn fit_rbox(init: &RBox, gt: &RBox, params: &OsLossParams, lr: f64, steps: usize) -> Result<FitTrajectory> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(invalid(format!("learning rate must be positive, got {lr}")));
    }
    init.check()?;
    gt.check()?;
    let mut cur = *init;
    let mut loss = os_loss(&cur, gt, params);
    let mut traj = FitTrajectory { steps: vec![FitStep { step: 0, rbox: cur, loss }], diverged: None };
    if !loss.is_finite() {
        traj.diverged = Some(format!("initial loss is {loss}"));
        return Ok(traj);
    }
    for n in 1..=steps {
        let mut moved = false;
        for block in BLOCKS {
            let g = os_loss_grad(&cur, gt, params).grad;
            if g.iter().any(|v| !v.is_finite()) {
                traj.diverged = Some(format!("non-finite gradient at step {n}: {g:?}"));
                return Ok(traj);
            }
            if block.iter().all(|&i| g[i] == 0.0) {
                continue;
            }
            let mut step = lr;
            for _ in 0..MAX_HALVINGS {
                let cand = descend(&cur, &g, block, step);
                let l = os_loss(&cand, gt, params);
                if !l.is_finite() {
                    traj.diverged = Some(format!("loss became {l} at step {n}"));
                    return Ok(traj);
                }
                if l < loss {
                    cur = cand;
                    loss = l;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !moved {
            break;
        }
        traj.steps.push(FitStep { step: n, rbox: cur, loss });
    }
    Ok(traj)
}
