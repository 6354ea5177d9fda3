//! End-to-end run over synthetic scenes: MCP attention, target assignment, a
//! stand-in detection head, top-1 decoding and evaluation.
//!
//! The head is not learned. It scores each location by its MCP attention and
//! regresses the assigned targets (perturbed by `noise`) at positives, and a
//! small square at negatives, so decoding and evaluation see realistic input
//! whose quality depends on whether attention singles out the GT region.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign_rbox_targets, FrameOffsets, LevelShape, LocationTarget, ScaleRanges};
use crate::dataset::synth::{synth_scene, SynthConfig, SyntheticScene};
use crate::decode::{decode_outputs, DetBox, OutputMode, Prediction, RawPrediction};
use crate::error::{invalid, Result};
use crate::eval::{box_report, pair_iou, Criterion, EvalReport};
use crate::losses::{total_loss, HeadKind, HeadOutput, LossBreakdown, LossConfig, RegressionOutput};
use crate::mcp::{mcp_forward_with_attention, AttentionMap, DEFAULT_ATTENTION_EPS};

const HEAD_STREAM: u64 = 128;
const CLS_CLAMP: f64 = 1e-6;
const NEGATIVE_CENTERNESS: f64 = 0.05;
const OFFSET_NOISE: f64 = 0.1;
const ANGLE_NOISE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub eps: f64,
    pub criterion: Criterion,
    pub loss: LossConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            eps: DEFAULT_ATTENTION_EPS,
            criterion: Criterion::Rbox,
            loss: LossConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Default config with feature and head noise set to `noise`.
    pub fn with_noise(noise: f64) -> Self {
        Self { synth: SynthConfig { noise, ..Default::default() }, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub seed: u64,
    pub gt: DetBox,
    pub prediction: Prediction,
    pub iou: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub scenes: Vec<SceneResult>,
    pub eval: EvalReport,
    pub mean_loss: f64,
}

/// Head outputs for every location, aligned with `targets`.
pub fn synthetic_head(
    scene_seed: u64,
    attention: &[AttentionMap],
    targets: &[LocationTarget],
    noise: f64,
) -> Result<Vec<HeadOutput>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    rng.set_stream(HEAD_STREAM);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    targets
        .iter()
        .map(|t| {
            let level = t.k.checked_sub(crate::mcp::LEVELS[0]).map(|n| n as usize);
            let a = level
                .and_then(|n| attention.get(n))
                .filter(|a| t.i < a.h && t.j < a.w)
                .ok_or_else(|| invalid(format!("no attention for level {} at ({}, {})", t.k, t.i, t.j)))?;
            let cls = a.get(t.i, t.j).clamp(CLS_CLAMP, 1.0 - CLS_CLAMP);
            Ok(match (t.regression, t.centerness) {
                (Some(o), Some(cn)) => {
                    let mut jitter = |v: f64| v * (1.0 + noise * OFFSET_NOISE * gauss()).max(0.0);
                    let reg = FrameOffsets { l: jitter(o.l), t: jitter(o.t), r: jitter(o.r), b: jitter(o.b), theta: o.theta };
                    let reg = FrameOffsets { theta: reg.theta + noise * ANGLE_NOISE * gauss(), ..reg };
                    HeadOutput { cls, centerness: cn, regression: RegressionOutput::Offsets(reg) }
                }
                _ => {
                    let s = 2.0 * f64::from(1u32 << t.k);
                    let reg = FrameOffsets { l: s, t: s, r: s, b: s, theta: 0.0 };
                    HeadOutput { cls, centerness: NEGATIVE_CENTERNESS, regression: RegressionOutput::Offsets(reg) }
                }
            })
        })
        .collect()
}

fn raw_predictions(targets: &[LocationTarget], outputs: &[HeadOutput]) -> Vec<RawPrediction> {
    let mut per_level_index = std::collections::BTreeMap::<u32, usize>::new();
    targets
        .iter()
        .zip(outputs)
        .filter_map(|(t, o)| {
            let index = per_level_index.entry(t.k).or_insert(0);
            let this = *index;
            *index += 1;
            match o.regression {
                RegressionOutput::Offsets(reg) => Some(RawPrediction {
                    level: t.k,
                    i: t.i,
                    j: t.j,
                    index: this,
                    point: t.point,
                    cls: o.cls,
                    centerness: o.centerness,
                    regression: reg,
                }),
                RegressionOutput::Hbox(_) => None,
            }
        })
        .collect()
}

/// Attention, assignment, head, decode and loss for one scene.
pub fn run_scene(scene: &SyntheticScene, cfg: &PipelineConfig) -> Result<SceneResult> {
    let (_, attention) = mcp_forward_with_attention(&scene.query, &scene.reference, cfg.eps)?;
    let shapes = LevelShape::pyramid(scene.image_h, scene.image_w);
    let targets = assign_rbox_targets(&shapes, &scene.gt_rbox, &ScaleRanges::fcos_default());
    let outputs = synthetic_head(scene.seed, &attention, &targets, cfg.synth.noise)?;
    let loss = total_loss(&outputs, &targets, &cfg.loss, HeadKind::Rbox)?;
    let prediction = decode_outputs(&raw_predictions(&targets, &outputs), OutputMode::Top1)?[0];
    let gt = DetBox::Rbox(scene.gt_rbox);
    Ok(SceneResult { seed: scene.seed, gt, prediction, iou: pair_iou(&prediction.det, &gt, cfg.criterion), loss })
}

/// Runs scenes `base_seed .. base_seed + count` on `workers` threads (0 means
/// rayon's default). Results do not depend on the worker count.
pub fn run_pipeline(base_seed: u64, count: usize, cfg: &PipelineConfig, workers: usize) -> Result<PipelineReport> {
    if count == 0 {
        return Err(invalid("pipeline needs at least one scene"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let scenes: Vec<SceneResult> = pool.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|n| run_scene(&synth_scene(base_seed.wrapping_add(n), &cfg.synth)?, cfg))
            .collect::<Result<_>>()
    })?;
    let pairs: Vec<(DetBox, DetBox)> = scenes.iter().map(|s| (s.prediction.det, s.gt)).collect();
    let eval = box_report(&pairs, cfg.criterion)?;
    let totals: Vec<f64> = scenes.iter().map(|s| s.loss.total).collect();
    let mean_loss = crate::numeric::mean(&totals).unwrap_or(0.0);
    Ok(PipelineReport { config: *cfg, scenes, eval, mean_loss })
}
