//! Click representation map and its attachment as a fourth query channel.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Click location in query-image pixels, `(x, y)` with x along columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePlane {
    pub h: usize,
    pub w: usize,
}

impl ImagePlane {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(invalid(format!("image plane must be non-empty, got {h}x{w}")));
        }
        Ok(Self { h, w })
    }

    pub fn contains(&self, p: &ClickPoint) -> bool {
        p.x.is_finite() && p.y.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x < self.w as f64 && p.y < self.h as f64
    }

    pub fn diagonal(&self) -> f64 {
        (self.h as f64).hypot(self.w as f64)
    }
}

/// Row-major `h x w` grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl ScalarMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.w + j]
    }
}

/// Channel-major `c x h x w` image tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * h * w {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {channels}x{h}x{w} tensor",
                data.len()
            )));
        }
        Ok(Self { channels, h, w, data })
    }

    pub fn zeros(channels: usize, h: usize, w: usize) -> Self {
        Self { channels, h, w, data: vec![0.0; channels * h * w] }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }
}

/// `P(i, j) = (1 - |z(i, j) - p_c| / sqrt(h^2 + w^2))^2` with `z(i, j) = (x = j, y = i)`.
pub fn make_click_map(plane: ImagePlane, pc: ClickPoint) -> Result<ScalarMap> {
    if plane.h == 0 || plane.w == 0 {
        return Err(invalid("image plane must be non-empty"));
    }
    if !plane.contains(&pc) {
        return Err(invalid(format!(
            "click ({}, {}) outside a {}x{} image",
            pc.x, pc.y, plane.h, plane.w
        )));
    }
    let diag = plane.diagonal();
    let mut values = Vec::with_capacity(plane.h * plane.w);
    for i in 0..plane.h {
        for j in 0..plane.w {
            let d = (j as f64 - pc.x).hypot(i as f64 - pc.y);
            let r = 1.0 - d / diag;
            values.push(r * r);
        }
    }
    Ok(ScalarMap { h: plane.h, w: plane.w, values })
}

/// Appends `map` as channel 3 of a three-channel image.
pub fn attach_click_channel(image: &ImageTensor, map: &ScalarMap) -> Result<ImageTensor> {
    if image.channels != 3 {
        return Err(invalid(format!("expected a 3-channel image, got {}", image.channels)));
    }
    if image.h != map.h || image.w != map.w || map.values.len() != map.h * map.w {
        return Err(invalid(format!(
            "image is {}x{} but click map is {}x{}",
            image.h, image.w, map.h, map.w
        )));
    }
    let mut data = Vec::with_capacity(image.data.len() + map.values.len());
    data.extend_from_slice(&image.data);
    data.extend_from_slice(&map.values);
    Ok(ImageTensor { channels: 4, h: image.h, w: image.w, data })
}
