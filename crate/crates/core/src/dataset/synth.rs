//! Seeded synthetic scenes: a GT rotated box on a reference raster, a click on
//! the query image, and query/reference pyramids with a planted signal.
//!
//! Every scene is a pure function of `(seed, config)`. Each random stream is a
//! ChaCha8 generator keyed by the seed with a fixed stream id (geometry,
//! per-level query, per-level reference), so one scene can be rebuilt
//! without generating any other.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, Split, View};
use crate::assignment::{box_frame_offsets, centerness, location_point};
use crate::clickmap::{ClickPoint, ImagePlane};
use crate::error::{invalid, Result};
use crate::geometry::{point_in_rbox, rbox_to_hbox, RBox};
use crate::mcp::{FeatureLevel, FeaturePyramid};

/// Smallest and largest cosine planted inside the GT.
pub const INSIDE_COSINE: (f64, f64) = (0.8, 1.0);
/// Cosine bound planted outside the GT (symmetric around zero).
pub const OUTSIDE_COSINE: f64 = 0.2;
/// `|theta|` range (degrees) of boxes planted as rotated.
pub const PLANTED_ROTATION_DEG: (f64, f64) = (5.0, 85.0);

const STREAM_GEOMETRY: u64 = 0;
const STREAM_QUERY: u64 = 16;
const STREAM_REFERENCE: u64 = 32;
const STREAM_PLANTING: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub query_h: usize,
    pub query_w: usize,
    /// Box side range in pixels.
    pub box_min: f64,
    pub box_max: f64,
    /// Angle range in degrees, `[min, max)`; equal bounds fix the angle.
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub channels: usize,
    pub noise: f64,
    /// When set, batches plant exactly this fraction of rotated boxes.
    pub rotated_fraction: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_h: 256,
            image_w: 256,
            query_h: 256,
            query_w: 256,
            box_min: 24.0,
            box_max: 96.0,
            theta_min_deg: -90.0,
            theta_max_deg: 90.0,
            channels: 8,
            noise: 0.0,
            rotated_fraction: None,
        }
    }
}

impl SynthConfig {
    pub fn check(&self) -> Result<()> {
        if self.image_h == 0 || self.image_w == 0 || self.query_h == 0 || self.query_w == 0 {
            return Err(invalid("image sizes must be positive"));
        }
        if !(self.box_min > 0.0 && self.box_min <= self.box_max && self.box_max.is_finite()) {
            return Err(invalid(format!("bad box size range [{}, {}]", self.box_min, self.box_max)));
        }
        if !(self.theta_min_deg >= -90.0 && self.theta_min_deg <= self.theta_max_deg && self.theta_max_deg <= 90.0) {
            return Err(invalid(format!(
                "bad angle range [{}, {}) deg",
                self.theta_min_deg, self.theta_max_deg
            )));
        }
        if self.channels < 2 {
            return Err(invalid("planted features need at least 2 channels"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid(format!("noise must be non-negative, got {}", self.noise)));
        }
        if let Some(f) = self.rotated_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(invalid(format!("rotated fraction must lie in [0, 1], got {f}")));
            }
        }
        let fixed_axis = self.theta_min_deg == self.theta_max_deg && self.theta_min_deg.rem_euclid(90.0) == 0.0
            && self.rotated_fraction.is_none_or(|f| f == 0.0);
        let reach = if fixed_axis { self.box_max } else { self.box_max * std::f64::consts::SQRT_2 };
        if reach > self.image_h.min(self.image_w) as f64 {
            return Err(invalid(format!(
                "boxes up to {} px cannot be placed inside a {}x{} image",
                self.box_max, self.image_h, self.image_w
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    pub image_h: usize,
    pub image_w: usize,
    pub query_plane: ImagePlane,
    pub gt_rbox: RBox,
    pub click: ClickPoint,
    pub query: FeaturePyramid,
    pub reference: FeaturePyramid,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector orthogonal to the unit vector `q`.
fn orthogonal_unit(rng: &mut ChaCha8Rng, q: &[f64]) -> Vec<f64> {
    loop {
        let v = unit_vector(rng, q.len());
        let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
        let u: Vec<f64> = v.iter().zip(q).map(|(a, b)| a - dot * b).collect();
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return u.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Angle drawn from the configured range, in radians.
fn draw_theta(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> f64 {
    uniform(rng, cfg.theta_min_deg, cfg.theta_max_deg).to_radians()
}

fn planted_theta(rng: &mut ChaCha8Rng, rotated: bool) -> f64 {
    if !rotated {
        return 0.0;
    }
    let mag = uniform(rng, PLANTED_ROTATION_DEG.0, PLANTED_ROTATION_DEG.1);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    (sign * mag).to_radians()
}

pub fn synth_scene(seed: u64, cfg: &SynthConfig) -> Result<SyntheticScene> {
    cfg.check()?;
    let mut rng = stream(seed, STREAM_GEOMETRY);
    let theta = draw_theta(&mut rng, cfg);
    build_scene(seed, cfg, rng, theta)
}

/// Scene with an explicit GT angle (radians); everything else from the seed.
pub fn synth_scene_with_theta(seed: u64, cfg: &SynthConfig, theta: f64) -> Result<SyntheticScene> {
    cfg.check()?;
    let mut rng = stream(seed, STREAM_GEOMETRY);
    let _ = draw_theta(&mut rng, cfg);
    build_scene(seed, cfg, rng, theta)
}

fn build_scene(seed: u64, cfg: &SynthConfig, mut rng: ChaCha8Rng, theta: f64) -> Result<SyntheticScene> {
    let w = uniform(&mut rng, cfg.box_min, cfg.box_max);
    let h = uniform(&mut rng, cfg.box_min, cfg.box_max);
    let shape = RBox::new(0.0, 0.0, w, h, theta)?;
    let hull = rbox_to_hbox(&shape);
    let (hx, hy) = (0.5 * hull.width(), 0.5 * hull.height());
    let (iw, ih) = (cfg.image_w as f64, cfg.image_h as f64);
    if 2.0 * hx > iw || 2.0 * hy > ih {
        return Err(invalid(format!("a {w:.1}x{h:.1} box does not fit a {}x{} image", cfg.image_h, cfg.image_w)));
    }
    let cx = uniform(&mut rng, hx, iw - hx);
    let cy = uniform(&mut rng, hy, ih - hy);
    let gt = RBox::new(cx, cy, w, h, theta)?;

    let qw = cfg.query_w as f64;
    let qh = cfg.query_h as f64;
    let click = ClickPoint { x: uniform(&mut rng, 0.25 * qw, 0.75 * qw), y: uniform(&mut rng, 0.25 * qh, 0.75 * qh) };
    let query_scale = uniform(&mut rng, 0.5, 2.0);

    let mut query = FeaturePyramid::zeros_for_image(cfg.query_h, cfg.query_w, cfg.channels);
    let mut reference = FeaturePyramid::zeros_for_image(cfg.image_h, cfg.image_w, cfg.channels);
    let d = cfg.channels;
    let noise_sd = cfg.noise / (d as f64).sqrt();
    for (n, (ql, rl)) in query.levels.iter_mut().zip(reference.levels.iter_mut()).enumerate() {
        let mut qrng = stream(seed, STREAM_QUERY + n as u64);
        let q = unit_vector(&mut qrng, d);
        fill_query(ql, &q, query_scale, noise_sd, &mut qrng);
        let mut rrng = stream(seed, STREAM_REFERENCE + n as u64);
        fill_reference(rl, &q, &gt, noise_sd, &mut rrng);
    }
    Ok(SyntheticScene {
        seed,
        image_h: cfg.image_h,
        image_w: cfg.image_w,
        query_plane: ImagePlane::new(cfg.query_h, cfg.query_w)?,
        gt_rbox: gt,
        click,
        query,
        reference,
    })
}

fn fill_query(level: &mut FeatureLevel, q: &[f64], scale: f64, noise_sd: f64, rng: &mut ChaCha8Rng) {
    for i in 0..level.h {
        for j in 0..level.w {
            for (c, qc) in q.iter().enumerate() {
                let e: f64 = StandardNormal.sample(rng);
                level.set(c, i, j, scale * (qc + noise_sd * e));
            }
        }
    }
}

/// Inside the GT the cosine to `q` grows from 0.8 at the edges to 1.0 at the
/// center; outside it is uniform in `[-0.2, 0.2]`.
fn fill_reference(level: &mut FeatureLevel, q: &[f64], gt: &RBox, noise_sd: f64, rng: &mut ChaCha8Rng) {
    let stride = level.stride();
    let (lo, hi) = INSIDE_COSINE;
    for i in 0..level.h {
        for j in 0..level.w {
            let p = location_point(i, j, stride);
            let outside_cos = uniform(rng, -OUTSIDE_COSINE, OUTSIDE_COSINE);
            let cos = if point_in_rbox(p, gt) {
                let o = box_frame_offsets(p, gt).expect("point is inside");
                lo + (hi - lo) * centerness(o.l, o.t, o.r, o.b).unwrap_or(0.0)
            } else {
                outside_cos
            };
            let u = orthogonal_unit(rng, q);
            let sin = (1.0 - cos * cos).max(0.0).sqrt();
            let mag = uniform(rng, 0.5, 2.0);
            for c in 0..q.len() {
                let e: f64 = StandardNormal.sample(rng);
                level.set(c, i, j, mag * (cos * q[c] + sin * u[c] + noise_sd * e));
            }
        }
    }
}

/// Scene `n` of a batch uses seed `base_seed + n`. With `rotated_fraction`
/// set, exactly `round(fraction * count)` scenes (chosen by a seeded
/// shuffle) get a rotated GT and the rest an axis-aligned one.
pub fn synth_batch(base_seed: u64, count: usize, cfg: &SynthConfig) -> Result<Vec<SyntheticScene>> {
    cfg.check()?;
    let seeds: Vec<u64> = (0..count as u64).map(|n| base_seed.wrapping_add(n)).collect();
    match cfg.rotated_fraction {
        None => seeds.par_iter().map(|&s| synth_scene(s, cfg)).collect(),
        Some(frac) => {
            let plan = rotation_plan(base_seed, count, frac);
            seeds
                .par_iter()
                .zip(plan.par_iter())
                .map(|(&s, &rotated)| {
                    let mut rng = stream(s, STREAM_PLANTING);
                    synth_scene_with_theta(s, cfg, planted_theta(&mut rng, rotated))
                })
                .collect()
        }
    }
}

/// Which scenes of a batch are rotated.
pub fn rotation_plan(base_seed: u64, count: usize, frac: f64) -> Vec<bool> {
    let k = (frac * count as f64).round() as usize;
    let mut plan: Vec<bool> = (0..count).map(|n| n < k).collect();
    plan.shuffle(&mut stream(base_seed, STREAM_PLANTING + 1));
    plan
}

/// Annotation record for a scene (ids `scene-<seed>`).
pub fn scene_record(scene: &SyntheticScene) -> AnnotationRecord {
    AnnotationRecord {
        id: format!("scene-{:06}", scene.seed),
        query_image: format!("query/{:06}.png", scene.seed),
        reference_image: format!("reference/{:06}.png", scene.seed),
        click: scene.click,
        gt_rbox: scene.gt_rbox,
        gt_hbox: None,
        split: Split::Test,
        view: if scene.seed % 2 == 0 { View::Drone } else { View::Ground },
    }
}

/// Cosines between the pooled query vector and the reference vector of every
/// location, split into inside-GT and outside-GT sets.
pub fn planted_cosines(scene: &SyntheticScene) -> (Vec<f64>, Vec<f64>) {
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for (ql, rl) in scene.query.levels.iter().zip(&scene.reference.levels) {
        let g = crate::mcp::global_average_pool(ql);
        let s = crate::mcp::cosine_score_map(&g, rl).expect("levels align");
        for i in 0..rl.h {
            for j in 0..rl.w {
                let p = location_point(i, j, rl.stride());
                if point_in_rbox(p, &scene.gt_rbox) {
                    inside.push(s.get(i, j));
                } else {
                    outside.push(s.get(i, j));
                }
            }
        }
    }
    (inside, outside)
}
