//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls the library's numerics; inputs and
//! outputs go through its plain data types only.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rbox_geoloc::mcp::{FeatureLevel, FeaturePyramid};
use rbox_geoloc::RBox;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    rng.random_range(lo..hi)
}

pub fn random_angle(rng: &mut ChaCha8Rng) -> f64 {
    uniform(rng, -std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
}

pub fn random_rbox(rng: &mut ChaCha8Rng, center: (f64, f64), spread: f64, size: (f64, f64)) -> RBox {
    let cx = center.0 + uniform(rng, -spread, spread);
    let cy = center.1 + uniform(rng, -spread, spread);
    let w = uniform(rng, size.0, size.1);
    let h = uniform(rng, size.0, size.1);
    RBox::new(cx, cy, w, h, random_angle(rng)).unwrap()
}

/// Two boxes likely to overlap: centers within 6 px, sides in [1, 12].
pub fn random_pair(rng: &mut ChaCha8Rng) -> (RBox, RBox) {
    let a = random_rbox(rng, (0.0, 0.0), 1.0, (1.0, 12.0));
    let b = random_rbox(rng, (0.0, 0.0), 6.0, (1.0, 12.0));
    (a, b)
}

/// Coordinates of `(x, y)` in the frame of a box: `u` along the width axis.
pub fn frame(x: f64, y: f64, b: &RBox) -> (f64, f64) {
    let (dx, dy) = (x - b.cx, y - b.cy);
    let (c, s) = (b.theta.cos(), b.theta.sin());
    (dx * c + dy * s, -dx * s + dy * c)
}

pub fn inside(x: f64, y: f64, b: &RBox) -> bool {
    let (u, v) = frame(x, y, b);
    u.abs() <= 0.5 * b.w && v.abs() <= 0.5 * b.h
}

/// Half-extents of the axis-aligned hull from the four corners.
pub fn hull(b: &RBox) -> (f64, f64, f64, f64) {
    let (c, s) = (b.theta.cos(), b.theta.sin());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (u, v) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        let (du, dv) = (0.5 * b.w * u, 0.5 * b.h * v);
        xs.push(b.cx + du * c - dv * s);
        ys.push(b.cy + du * s + dv * c);
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min(&xs), min(&ys), max(&xs), max(&ys))
}

/// Monte-Carlo IoU from `n` uniform samples over the joint hull, split into
/// 64 independently seeded chunks.
pub fn mc_iou(a: &RBox, b: &RBox, n: usize, seed: u64) -> f64 {
    let (ax0, ay0, ax1, ay1) = hull(a);
    let (bx0, by0, bx1, by1) = hull(b);
    let (x0, y0, x1, y1) = (ax0.min(bx0), ay0.min(by0), ax1.max(bx1), ay1.max(by1));
    // trig hoisted out of the sampling loop
    let frame_of = |b: &RBox| (b.cx, b.cy, b.theta.cos(), b.theta.sin(), 0.5 * b.w, 0.5 * b.h);
    let (fa, fb) = (frame_of(a), frame_of(b));
    let contains = |(cx, cy, c, s, hw, hh): (f64, f64, f64, f64, f64, f64), x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        (dx * c + dy * s).abs() <= hw && (-dx * s + dy * c).abs() <= hh
    };
    let chunks = 64;
    let (inter, union) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng(seed.wrapping_mul(1_000_003).wrapping_add(c as u64));
            let (mut i, mut u) = (0usize, 0usize);
            for _ in 0..n / chunks {
                let x = x0 + (x1 - x0) * r.random::<f64>();
                let y = y0 + (y1 - y0) * r.random::<f64>();
                let (ia, ib) = (contains(fa, x, y), contains(fb, x, y));
                i += (ia && ib) as usize;
                u += (ia || ib) as usize;
            }
            (i, u)
        })
        .reduce(|| (0, 0), |p, q| (p.0 + q.0, p.1 + q.1));
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn click_oracle(h: usize, w: usize, px: f64, py: f64) -> Vec<f64> {
    let diag = ((h * h + w * w) as f64).sqrt();
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let dx = j as f64 - px;
            let dy = i as f64 - py;
            let t = 1.0 - (dx * dx + dy * dy).sqrt() / diag;
            out.push(t * t);
        }
    }
    out
}

/// Attention and modulated features per level, written out longhand.
pub fn mcp_oracle(q: &FeaturePyramid, r: &FeaturePyramid, eps: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    q.levels
        .iter()
        .zip(&r.levels)
        .map(|(ql, rl)| {
            let d = ql.d;
            let mut g = vec![0.0; d];
            for (c, gc) in g.iter_mut().enumerate() {
                let mut s = 0.0;
                for i in 0..ql.h {
                    for j in 0..ql.w {
                        s += ql.data[c * ql.h * ql.w + i * ql.w + j];
                    }
                }
                *gc = s / (ql.h * ql.w) as f64;
            }
            let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let hw = rl.h * rl.w;
            let mut scores = vec![0.0; hw];
            let mut norms = vec![0.0; hw];
            for p in 0..hw {
                let mut dot = 0.0;
                let mut nn = 0.0;
                for c in 0..d {
                    let v = rl.data[c * hw + p];
                    dot += g[c] * v;
                    nn += v * v;
                }
                norms[p] = nn.sqrt();
                scores[p] = if gn < 1e-12 || norms[p] < 1e-12 { 0.0 } else { (dot / (gn * norms[p])).clamp(-1.0, 1.0) };
            }
            let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let att: Vec<f64> = scores.iter().map(|s| (s - lo) / (hi - lo + eps)).collect();
            let mut out = vec![0.0; d * hw];
            for c in 0..d {
                for p in 0..hw {
                    if norms[p] >= 1e-12 {
                        out[c * hw + p] = att[p] * rl.data[c * hw + p] / norms[p];
                    }
                }
            }
            (att, out)
        })
        .collect()
}

pub fn random_pyramid(rng: &mut ChaCha8Rng, image_h: usize, image_w: usize, d: usize) -> FeaturePyramid {
    let levels = (3u32..=7)
        .map(|k| {
            let s = 1usize << k;
            let (h, w) = (image_h.div_ceil(s), image_w.div_ceil(s));
            let data = (0..d * h * w).map(|_| uniform(rng, -1.0, 1.0)).collect();
            FeatureLevel::new(k, d, h, w, data).unwrap()
        })
        .collect();
    FeaturePyramid::new(levels).unwrap()
}

/// A positive location found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePositive {
    pub k: u32,
    pub i: usize,
    pub j: usize,
    pub gt: usize,
    pub ltrb: [f64; 4],
    pub theta: f64,
    pub centerness: f64,
}

/// Every location of every level against every GT; the smallest-area GT
/// that contains the location with max offset in `(lo, hi]` wins.
pub fn assignment_oracle(image_h: usize, image_w: usize, gts: &[RBox], ranges: &[(f64, f64); 5]) -> Vec<OraclePositive> {
    let mut out = Vec::new();
    for (n, k) in (3u32..=7).enumerate() {
        let s = 1usize << k;
        for i in 0..image_h.div_ceil(s) {
            for j in 0..image_w.div_ceil(s) {
                let x = (s / 2 + j * s) as f64;
                let y = (s / 2 + i * s) as f64;
                let mut best: Option<(f64, OraclePositive)> = None;
                for (g, b) in gts.iter().enumerate() {
                    let (u, v) = frame(x, y, b);
                    if u.abs() > 0.5 * b.w || v.abs() > 0.5 * b.h {
                        continue;
                    }
                    let ltrb = [0.5 * b.w + u, 0.5 * b.h + v, 0.5 * b.w - u, 0.5 * b.h - v];
                    let m = ltrb.iter().copied().fold(0.0, f64::max);
                    if !(m > ranges[n].0 && m <= ranges[n].1) {
                        continue;
                    }
                    let area = b.w * b.h;
                    if best.as_ref().is_some_and(|(a, _)| *a <= area) {
                        continue;
                    }
                    let [l, t, r, bb] = ltrb;
                    let centerness = ((l.min(r) / l.max(r)) * (t.min(bb) / t.max(bb))).sqrt();
                    best = Some((area, OraclePositive { k, i, j, gt: g, ltrb, theta: b.theta, centerness }));
                }
                if let Some((_, p)) = best {
                    out.push(p);
                }
            }
        }
    }
    out
}

pub const FCOS_RANGES: [(f64, f64); 5] =
    [(0.0, 64.0), (64.0, 128.0), (128.0, 256.0), (256.0, 512.0), (512.0, f64::INFINITY)];

/// `(1 - IoU) + alpha * sigmoid(d) + beta * |sin(dtheta)|` evaluated from an
/// IoU supplied by the caller.
pub fn os_loss_from_iou(iou: f64, pred: &RBox, gt: &RBox, alpha: f64, beta: f64) -> f64 {
    let d = ((pred.cx - gt.cx).powi(2) + (pred.cy - gt.cy).powi(2)).sqrt();
    (1.0 - iou) + alpha / (1.0 + (-d).exp()) + beta * (pred.theta - gt.theta).sin().abs()
}
