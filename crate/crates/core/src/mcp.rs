//! Multi-scale cross-view perception: per-level pooled query vector, cosine
//! score map over the reference features, min-max attention and modulation.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Pyramid levels used throughout (strides 8..128).
pub const LEVELS: [u32; 5] = [3, 4, 5, 6, 7];
/// Guard for zero-length vectors.
pub const NORM_EPS: f64 = 1e-12;
/// Default denominator guard of the min-max normalization.
pub const DEFAULT_ATTENTION_EPS: f64 = 1e-6;

/// One `d x h x w` level, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    pub k: u32,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureLevel {
    pub fn new(k: u32, d: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || h == 0 || w == 0 {
            return Err(invalid(format!("level {k} has an empty dimension ({d}x{h}x{w})")));
        }
        if k >= 31 {
            return Err(invalid(format!("level index {k} too large")));
        }
        if data.len() != d * h * w {
            return Err(Error::ShapeMismatch(format!("level {k}: {} values for {d}x{h}x{w}", data.len())));
        }
        Ok(Self { k, d, h, w, data })
    }

    pub fn zeros(k: u32, d: usize, h: usize, w: usize) -> Self {
        Self { k, d, h, w, data: vec![0.0; d * h * w] }
    }

    pub fn stride(&self) -> u32 {
        1 << self.k
    }

    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.h + i) * self.w + j]
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        self.data[(c * self.h + i) * self.w + j] = v;
    }

    /// Feature vector at one spatial location.
    pub fn vector(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.d).map(|c| self.at(c, i, j)).collect()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { data: self.data.iter().map(|v| v * factor).collect(), ..self.clone() }
    }
}

/// Five levels, `k = 3..=7`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub levels: Vec<FeatureLevel>,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<FeatureLevel>) -> Result<Self> {
        if levels.len() != LEVELS.len() {
            return Err(invalid(format!("a pyramid has {} levels, got {}", LEVELS.len(), levels.len())));
        }
        for (lvl, &k) in levels.iter().zip(LEVELS.iter()) {
            if lvl.k != k {
                return Err(invalid(format!("expected level {k}, found {}", lvl.k)));
            }
        }
        for pair in levels.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let near = |big: usize, small: usize| small.abs_diff(big.div_ceil(2)) <= 1;
            if !near(a.h, b.h) || !near(a.w, b.w) {
                return Err(invalid(format!(
                    "level {} ({}x{}) is not half of level {} ({}x{})",
                    b.k, b.h, b.w, a.k, a.h, a.w
                )));
            }
        }
        Ok(Self { levels })
    }

    /// Level shapes for an `image_h x image_w` input: `ceil(H / 2^k)`.
    pub fn shapes_for_image(image_h: usize, image_w: usize) -> Vec<(u32, usize, usize)> {
        LEVELS
            .iter()
            .map(|&k| {
                let s = 1usize << k;
                (k, image_h.div_ceil(s), image_w.div_ceil(s))
            })
            .collect()
    }

    pub fn zeros_for_image(image_h: usize, image_w: usize, d: usize) -> Self {
        let levels = Self::shapes_for_image(image_h, image_w)
            .into_iter()
            .map(|(k, h, w)| FeatureLevel::zeros(k, d, h, w))
            .collect();
        Self { levels }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { levels: self.levels.iter().map(|l| l.scale(factor)).collect() }
    }
}

/// `h x w` grid in row-major order; used for raw scores and attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.w + j]
    }

    /// First maximum in row-major scan order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (idx, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = idx;
            }
        }
        (best / self.w, best % self.w)
    }
}

/// Attention in `[0, 1)`.
pub type AttentionMap = Grid;

pub fn global_average_pool(f: &FeatureLevel) -> Vec<f64> {
    let n = (f.h * f.w) as f64;
    f.data.chunks_exact(f.h * f.w).map(|ch| ch.iter().sum::<f64>() / n).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_score_map(g: &[f64], f: &FeatureLevel) -> Result<Grid> {
    if g.len() != f.d {
        return Err(invalid(format!("query vector has {} components, level {} has {}", g.len(), f.k, f.d)));
    }
    let gn = norm(g);
    let mut values = vec![0.0; f.h * f.w];
    if gn >= NORM_EPS {
        for i in 0..f.h {
            for j in 0..f.w {
                let v = f.vector(i, j);
                let vn = norm(&v);
                if vn >= NORM_EPS {
                    let dot: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
                    values[i * f.w + j] = (dot / (gn * vn)).clamp(-1.0, 1.0);
                }
            }
        }
    }
    Ok(Grid { h: f.h, w: f.w, values })
}

pub fn minmax_normalize(scores: &Grid, eps: f64) -> AttentionMap {
    let lo = scores.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom = hi - lo + eps;
    Grid { h: scores.h, w: scores.w, values: scores.values.iter().map(|s| (s - lo) / denom).collect() }
}

/// Per-location L2 normalization of the d-vectors; zero vectors stay zero.
pub fn l2_normalize_locations(f: &FeatureLevel) -> FeatureLevel {
    let mut out = f.clone();
    for i in 0..f.h {
        for j in 0..f.w {
            let n = norm(&f.vector(i, j));
            for c in 0..f.d {
                out.set(c, i, j, if n >= NORM_EPS { f.at(c, i, j) / n } else { 0.0 });
            }
        }
    }
    out
}

pub fn modulate(a: &AttentionMap, f_norm: &FeatureLevel) -> Result<FeatureLevel> {
    if a.h != f_norm.h || a.w != f_norm.w {
        return Err(invalid(format!(
            "attention is {}x{} but level {} is {}x{}",
            a.h, a.w, f_norm.k, f_norm.h, f_norm.w
        )));
    }
    let hw = a.h * a.w;
    let data = f_norm.data.iter().enumerate().map(|(idx, v)| a.values[idx % hw] * v).collect();
    Ok(FeatureLevel { data, ..f_norm.clone() })
}

/// Attention map of one level pair.
pub fn level_attention(query: &FeatureLevel, reference: &FeatureLevel, eps: f64) -> Result<AttentionMap> {
    check_pair(query, reference)?;
    let g = global_average_pool(query);
    Ok(minmax_normalize(&cosine_score_map(&g, reference)?, eps))
}

fn check_pair(q: &FeatureLevel, r: &FeatureLevel) -> Result<()> {
    if q.k != r.k || q.d != r.d {
        return Err(invalid(format!(
            "query level {} (d={}) does not align with reference level {} (d={})",
            q.k, q.d, r.k, r.d
        )));
    }
    Ok(())
}

/// Refines every reference level independently; returns the modulated pyramid.
pub fn mcp_forward(query: &FeaturePyramid, reference: &FeaturePyramid, eps: f64) -> Result<FeaturePyramid> {
    Ok(mcp_forward_with_attention(query, reference, eps)?.0)
}

pub fn mcp_forward_with_attention(
    query: &FeaturePyramid,
    reference: &FeaturePyramid,
    eps: f64,
) -> Result<(FeaturePyramid, Vec<AttentionMap>)> {
    if query.levels.len() != reference.levels.len() {
        return Err(invalid("query and reference pyramids have different level counts"));
    }
    let per_level: Vec<(FeatureLevel, AttentionMap)> = query
        .levels
        .par_iter()
        .zip(reference.levels.par_iter())
        .map(|(q, r)| {
            let a = level_attention(q, r, eps)?;
            Ok((modulate(&a, &l2_normalize_locations(r))?, a))
        })
        .collect::<Result<_>>()?;
    let (levels, maps) = per_level.into_iter().unzip();
    Ok((FeaturePyramid { levels }, maps))
}

/// Writes the flat container: `u32` level count, then `k, d, h, w` per level
/// (all little-endian `u32`), then every level's values as little-endian
/// `f32` in row-major `(c, i, j)` order.
pub fn write_pyramid<W: Write>(p: &FeaturePyramid, mut out: W) -> Result<()> {
    let u32_of = |v: usize| u32::try_from(v).map_err(|_| invalid("dimension exceeds u32"));
    out.write_all(&u32_of(p.levels.len())?.to_le_bytes())?;
    for l in &p.levels {
        for v in [l.k, u32_of(l.d)?, u32_of(l.h)?, u32_of(l.w)?] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for l in &p.levels {
        let mut buf = Vec::with_capacity(l.data.len() * 4);
        for v in &l.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_pyramid<R: Read>(mut input: R) -> Result<FeaturePyramid> {
    let mut word = [0u8; 4];
    let mut next = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut word).map_err(|e| Error::Format(format!("truncated pyramid header: {e}")))?;
        Ok(u32::from_le_bytes(word))
    };
    let count = next(&mut input)? as usize;
    if count > 64 {
        return Err(Error::Format(format!("implausible level count {count}")));
    }
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        dims.push([next(&mut input)?, next(&mut input)?, next(&mut input)?, next(&mut input)?]);
    }
    let mut levels = Vec::with_capacity(count);
    for [k, d, h, w] in dims {
        let n = (d as usize)
            .checked_mul(h as usize)
            .and_then(|x| x.checked_mul(w as usize))
            .ok_or_else(|| Error::Format("level size overflow".into()))?;
        let mut raw = vec![0u8; n * 4];
        input.read_exact(&mut raw).map_err(|e| Error::Format(format!("truncated level {k} data: {e}")))?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
        levels.push(FeatureLevel::new(k, d as usize, h as usize, w as usize, data)?);
    }
    FeaturePyramid::new(levels)
}
