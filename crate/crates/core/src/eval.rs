//! Benchmark metrics: Acc@t under rotated or horizontal IoU, mask metrics
//! with pixel-to-meter conversion, rotation statistics and the HBox/RBox
//! criterion gap.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decode::DetBox;
use crate::error::{invalid, Error, Result};
use crate::geometry::{hbox_iou, normalize_angle, rbox_iou, RBox};
use crate::numeric::{mean, pairwise_sum};

/// Default threshold (degrees) above which a box counts as rotated.
pub const DEFAULT_ROT_THR_DEG: f64 = 1.0;
pub const HISTOGRAM_BINS: usize = 18;
/// Acc@t thresholds reported by default, in percent.
pub const ACC_THRESHOLDS: [u32; 3] = [25, 50, 75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Rbox,
    Hbox,
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbox" => Ok(Self::Rbox),
            "hbox" => Ok(Self::Hbox),
            other => Err(invalid(format!("unknown criterion {other:?}"))),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::Rbox => "rbox",
            Criterion::Hbox => "hbox",
        })
    }
}

/// Overlap of one prediction with its GT. RBoxes are hull-converted under
/// the horizontal criterion.
pub fn pair_iou(pred: &DetBox, gt: &DetBox, criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Rbox => rbox_iou(&pred.as_rbox(), &gt.as_rbox()),
        Criterion::Hbox => hbox_iou(&pred.hull(), &gt.hull()),
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid(format!("IoU threshold must lie in (0, 1], got {t}")));
    }
    Ok(())
}

/// Fraction of pairs with IoU >= `t`.
pub fn acc_at(pairs: &[(DetBox, DetBox)], t: f64, criterion: Criterion) -> Result<f64> {
    check_threshold(t)?;
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over zero pairs".into()));
    }
    let hits = pairs.iter().filter(|(p, g)| pair_iou(p, g, criterion) >= t).count();
    Ok(hits as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n: usize,
    pub thr: f64,
    pub acc_hbox: f64,
    pub acc_rbox: f64,
    /// `acc_hbox - acc_rbox`
    pub gap: f64,
}

/// Scores the same predictions under both criteria.
pub fn criterion_gap(pairs: &[(RBox, RBox)], t: f64) -> Result<GapReport> {
    let dets: Vec<(DetBox, DetBox)> = pairs.iter().map(|(p, g)| (DetBox::Rbox(*p), DetBox::Rbox(*g))).collect();
    let acc_hbox = acc_at(&dets, t, Criterion::Hbox)?;
    let acc_rbox = acc_at(&dets, t, Criterion::Rbox)?;
    Ok(GapReport { n: pairs.len(), thr: t, acc_hbox, acc_rbox, gap: acc_hbox - acc_rbox })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsdConfig {
    pub meters_per_pixel: f64,
}

impl GsdConfig {
    pub fn new(meters_per_pixel: f64) -> Result<Self> {
        if !(meters_per_pixel > 0.0 && meters_per_pixel.is_finite()) {
            return Err(invalid(format!("ground sample distance must be positive, got {meters_per_pixel}")));
        }
        Ok(Self { meters_per_pixel })
    }
}

/// Row-major foreground bitmap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub h: usize,
    pub w: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::ShapeMismatch(format!("{} bits for a {h}x{w} mask", bits.len())));
        }
        Ok(Self { h, w, bits })
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self { h, w, bits: vec![false; h * w] }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.w + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.w + j] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Pixels whose centers `(j + 0.5, i + 0.5)` fall inside `b`.
    pub fn rasterize(h: usize, w: usize, b: &RBox) -> Self {
        let mut m = Self::empty(h, w);
        for i in 0..h {
            for j in 0..w {
                let p = crate::geometry::Point2::new(j as f64 + 0.5, i as f64 + 0.5);
                if crate::geometry::point_in_rbox(p, b) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(n, _)| (n / self.w, n % self.w))
    }

    /// `(x, y)` center of the mask under the given rule; `None` when empty.
    pub fn centroid(&self, mode: CentroidMode) -> Option<(f64, f64)> {
        let n = self.area();
        if n == 0 {
            return None;
        }
        match mode {
            CentroidMode::PixelMean => {
                let xs: Vec<f64> = self.foreground().map(|(_, j)| j as f64).collect();
                let ys: Vec<f64> = self.foreground().map(|(i, _)| i as f64).collect();
                Some((pairwise_sum(&xs) / n as f64, pairwise_sum(&ys) / n as f64))
            }
            CentroidMode::BoxCenter => {
                let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
                for (i, j) in self.foreground() {
                    i0 = i0.min(i);
                    i1 = i1.max(i);
                    j0 = j0.min(j);
                    j1 = j1.max(j);
                }
                Some((0.5 * (j0 + j1) as f64, 0.5 * (i0 + i1) as f64))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentroidMode {
    /// Mean of foreground pixel coordinates.
    #[default]
    PixelMean,
    /// Center of the foreground's bounding box.
    BoxCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPairMetrics {
    pub iou: f64,
    pub dice: f64,
    /// m^2
    pub area_error: f64,
    /// m; `None` when either mask is empty.
    pub center_error: Option<f64>,
}

pub fn mask_pair_metrics(
    pred: &BinaryMask,
    gt: &BinaryMask,
    gsd: &GsdConfig,
    mode: CentroidMode,
) -> Result<MaskPairMetrics> {
    if pred.h != gt.h || pred.w != gt.w {
        return Err(invalid(format!("mask shapes differ: {}x{} vs {}x{}", pred.h, pred.w, gt.h, gt.w)));
    }
    let inter = pred.bits.iter().zip(&gt.bits).filter(|(a, b)| **a && **b).count();
    let (a, b) = (pred.area(), gt.area());
    let union = a + b - inter;
    let (iou, dice) = if union == 0 {
        (1.0, 1.0)
    } else {
        (inter as f64 / union as f64, 2.0 * inter as f64 / (a + b) as f64)
    };
    let g = gsd.meters_per_pixel;
    let area_error = (a as f64 - b as f64).abs() * (g * g);
    let center_error = match (pred.centroid(mode), gt.centroid(mode)) {
        (Some(p), Some(q)) => Some((p.0 - q.0).hypot(p.1 - q.1) * g),
        _ => None,
    };
    Ok(MaskPairMetrics { iou, dice, area_error, center_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskMetrics {
    pub n: usize,
    pub miou: f64,
    pub mdice: f64,
    pub aae: f64,
    /// Mean over pairs where both masks are non-empty.
    pub me: Option<f64>,
    pub me_pairs: usize,
}

pub fn mask_metrics(pairs: &[(BinaryMask, BinaryMask)], gsd: &GsdConfig, mode: CentroidMode) -> Result<MaskMetrics> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("mask metrics over zero pairs".into()));
    }
    let per = pairs.iter().map(|(p, g)| mask_pair_metrics(p, g, gsd, mode)).collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&MaskPairMetrics) -> f64| per.iter().map(f).collect::<Vec<_>>();
    let centers: Vec<f64> = per.iter().filter_map(|m| m.center_error).collect();
    Ok(MaskMetrics {
        n: per.len(),
        miou: mean(&col(|m| m.iou)).unwrap_or(0.0),
        mdice: mean(&col(|m| m.dice)).unwrap_or(0.0),
        aae: mean(&col(|m| m.area_error)).unwrap_or(0.0),
        me: mean(&centers),
        me_pairs: centers.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub criterion: Criterion,
    pub acc25: f64,
    pub acc50: f64,
    pub acc75: f64,
    pub masks: Option<MaskMetrics>,
}

pub fn box_report(pairs: &[(DetBox, DetBox)], criterion: Criterion) -> Result<EvalReport> {
    Ok(EvalReport {
        n: pairs.len(),
        criterion,
        acc25: acc_at(pairs, 0.25, criterion)?,
        acc50: acc_at(pairs, 0.50, criterion)?,
        acc75: acc_at(pairs, 0.75, criterion)?,
        masks: None,
    })
}

impl EvalReport {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>10}", "metric", "value");
        let _ = writeln!(s, "{:<10} {:>10}", "n", self.n);
        let _ = writeln!(s, "{:<10} {:>10}", "criterion", self.criterion);
        for (name, v) in [("Acc@25", self.acc25), ("Acc@50", self.acc50), ("Acc@75", self.acc75)] {
            let _ = writeln!(s, "{name:<10} {:>9.2}%", 100.0 * v);
        }
        if let Some(m) = &self.masks {
            let _ = writeln!(s, "{:<10} {:>9.2}%", "mIoU", 100.0 * m.miou);
            let _ = writeln!(s, "{:<10} {:>9.2}%", "mDice", 100.0 * m.mdice);
            let _ = writeln!(s, "{:<10} {:>10.3}", "AAE (m2)", m.aae);
            match m.me {
                Some(me) => {
                    let _ = writeln!(s, "{:<10} {:>10.3}", "ME (m)", me);
                }
                None => {
                    let _ = writeln!(s, "{:<10} {:>10}", "ME (m)", "n/a");
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationStats {
    pub n: usize,
    pub rotated: usize,
    pub fraction_rotated: f64,
    pub threshold_deg: f64,
    /// Counts of `|theta|` in 5-degree bins over `[0, 90)`.
    pub histogram: Vec<usize>,
}

pub fn rotation_stats(annotations: &[RBox], rot_thr_deg: f64) -> Result<RotationStats> {
    if annotations.is_empty() {
        return Err(Error::UndefinedMetric("rotation statistics over zero boxes".into()));
    }
    let mut histogram = vec![0usize; HISTOGRAM_BINS];
    let mut rotated = 0;
    let width = 90.0 / HISTOGRAM_BINS as f64;
    for b in annotations {
        let deg = normalize_angle(b.theta)?.to_degrees().abs();
        if deg > rot_thr_deg {
            rotated += 1;
        }
        let bin = ((deg / width).floor() as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    Ok(RotationStats {
        n: annotations.len(),
        rotated,
        fraction_rotated: rotated as f64 / annotations.len() as f64,
        threshold_deg: rot_thr_deg,
        histogram,
    })
}
