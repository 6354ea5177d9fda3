use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rbox_geoloc::decode::PromptMode;
use rbox_geoloc::eval::{CentroidMode, Criterion};
use serde::Serialize;

/// Rotated-box cross-view object localization toolkit.
#[derive(Debug, Parser)]
#[command(name = "rbox-geoloc", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an annotation file against the schema rules.
    Validate(ValidateArgs),
    /// Fill `gt_hbox` with the hull of `gt_rbox` for every record.
    Convert(ConvertArgs),
    /// Write a batch of synthetic scenes (annotations and feature pyramids).
    Synth(SynthArgs),
    /// Write the click representation map as a PFM float image.
    Clickmap(ClickmapArgs),
    /// Accuracy and mask metrics of predictions against annotations.
    Eval(EvalArgs),
    /// Accuracy under the horizontal and the rotated criterion side by side.
    Gap(GapArgs),
    /// Rotation statistics and annotation cost summary.
    Stats(StatsArgs),
    /// Compare the OS-loss gradient with finite differences on random boxes.
    Gradcheck(GradcheckArgs),
    /// Fit a box to a target by descending the OS-loss.
    Fitbox(FitboxArgs),
    /// Synthetic scenes through attention, assignment, decoding and evaluation.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionArg {
    Rbox,
    Hbox,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Rbox => Criterion::Rbox,
            CriterionArg::Hbox => Criterion::Hbox,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentroidArg {
    PixelMean,
    BoxCenter,
}

impl From<CentroidArg> for CentroidMode {
    fn from(c: CentroidArg) -> Self {
        match c {
            CentroidArg::PixelMean => CentroidMode::PixelMean,
            CentroidArg::BoxCenter => CentroidMode::BoxCenter,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptArg {
    Hbox,
    RboxCorners,
}

impl From<PromptArg> for PromptMode {
    fn from(p: PromptArg) -> Self {
        match p {
            PromptArg::Hbox => PromptMode::Hbox,
            PromptArg::RboxCorners => PromptMode::RboxCorners,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Annotation JSONL file.
    #[arg(long)]
    pub input: PathBuf,
    /// Query image size as HxW, enables the click bounds check.
    #[arg(long, value_parser = parse_size)]
    pub query_size: Option<(usize, usize)>,
    /// JSON report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Converted JSONL file.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of scenes.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Plant exactly this fraction of rotated boxes.
    #[arg(long)]
    pub rotated_fraction: Option<f64>,
    /// Feature channels per level.
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Skip writing the feature pyramids.
    #[arg(long)]
    pub no_pyramids: bool,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Worker threads; 0 uses every core. Never changes the output.
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub workers: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ClickmapArgs {
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    /// Click column.
    #[arg(long)]
    pub x: f64,
    /// Click row.
    #[arg(long)]
    pub y: f64,
    /// PFM output file.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Prediction JSONL file.
    #[arg(long)]
    pub input: PathBuf,
    /// Annotation JSONL file.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = CriterionArg::Rbox)]
    pub criterion: CriterionArg,
    /// Predicted masks: RLE JSONL file or a directory of `<id>.png`/`<id>.pgm`.
    #[arg(long, requires = "gt_masks")]
    pub pred_masks: Option<PathBuf>,
    /// Ground-truth masks, same forms as `--pred-masks`.
    #[arg(long, requires = "pred_masks")]
    pub gt_masks: Option<PathBuf>,
    /// Meters per pixel for the mask area and center errors.
    #[arg(long, default_value_t = 1.0)]
    pub gsd: f64,
    #[arg(long, value_enum, default_value_t = CentroidArg::PixelMean)]
    pub centroid: CentroidArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub workers: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GapArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction JSONL file; defaults to the axis-aligned hull of each GT.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub thr: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Rotation threshold in degrees.
    #[arg(long, default_value_t = 1.0)]
    pub thr: f64,
    /// Annotation cost JSONL (`{"record_id","kind","seconds"}` per line).
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Number of random tuples.
    #[arg(long, default_value_t = 200)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitboxArgs {
    /// Target box `cx,cy,w,h,theta_deg`.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    pub gt: [f64; 5],
    /// Start box `cx,cy,w,h,theta_deg`; drawn near the target from `--seed` if omitted.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    pub init: Option<[f64; 5]>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Trajectory JSONL file.
    #[arg(long)]
    pub output: PathBuf,
    /// SVG plot of loss against step.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    /// Number of scenes.
    #[arg(long, default_value_t = 50)]
    pub seeds: usize,
    /// First scene seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Attention normalization epsilon.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = CriterionArg::Rbox)]
    pub criterion: CriterionArg,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// JSON report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Prediction JSONL path.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Segmentation prompt JSONL path.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PromptArg::Hbox)]
    pub prompt_mode: PromptArg,
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub workers: usize,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    Ok((h, w))
}

fn parse_box(s: &str) -> Result<[f64; 5], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 5 comma-separated numbers, got {}", v.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsers() {
        assert_eq!(parse_size("256x128").unwrap(), (256, 128));
        assert!(parse_size("256").is_err());
        assert_eq!(parse_box("1,2,3,4,-30").unwrap(), [1.0, 2.0, 3.0, 4.0, -30.0]);
        assert!(parse_box("1,2,3").is_err());
        assert!(parse_box("1,2,3,4,x").is_err());
    }
}
