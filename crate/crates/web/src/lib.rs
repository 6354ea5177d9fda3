//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Boxes cross the boundary as five numbers `cx, cy, w, h, theta_deg`.

use rbox_geoloc::clickmap::{make_click_map, ClickPoint, ImagePlane};
use rbox_geoloc::geometry::{convex_intersect, hbox_iou, rbox_corners, rbox_iou, rbox_to_hbox, ConvexPolygon, RBox};
use rbox_geoloc::losses::{fit_rbox, os_loss_terms, OsLossParams};
use wasm_bindgen::prelude::*;

fn rbox(v: &[f64]) -> Result<RBox, JsError> {
    match v {
        [cx, cy, w, h, deg] => RBox::new(*cx, *cy, *w, *h, deg.to_radians()).map_err(|e| JsError::new(&e.to_string())),
        _ => Err(JsError::new(&format!("a box needs 5 numbers, got {}", v.len()))),
    }
}

fn params(alpha: f64, beta: f64) -> Result<OsLossParams, JsError> {
    OsLossParams::new(alpha, beta).map_err(|e| JsError::new(&e.to_string()))
}

fn flat(p: &ConvexPolygon) -> Vec<f64> {
    p.vertices.iter().flat_map(|v| [v.x, v.y]).collect()
}

/// Overlap of two boxes under both criteria, plus the OS-loss of `a` against `b`.
#[wasm_bindgen]
pub struct Overlap {
    iou: f64,
    hbox_iou: f64,
    loss: f64,
    iou_term: f64,
    distance_term: f64,
    angle_term: f64,
    corners_a: Vec<f64>,
    corners_b: Vec<f64>,
    intersection: Vec<f64>,
    hull_a: Vec<f64>,
    hull_b: Vec<f64>,
}

#[wasm_bindgen]
impl Overlap {
    #[wasm_bindgen(getter)]
    pub fn iou(&self) -> f64 {
        self.iou
    }
    #[wasm_bindgen(getter)]
    pub fn hbox_iou(&self) -> f64 {
        self.hbox_iou
    }
    #[wasm_bindgen(getter)]
    pub fn loss(&self) -> f64 {
        self.loss
    }
    #[wasm_bindgen(getter)]
    pub fn iou_term(&self) -> f64 {
        self.iou_term
    }
    #[wasm_bindgen(getter)]
    pub fn distance_term(&self) -> f64 {
        self.distance_term
    }
    #[wasm_bindgen(getter)]
    pub fn angle_term(&self) -> f64 {
        self.angle_term
    }
    /// `x0, y0, x1, y1, ...`
    #[wasm_bindgen(getter)]
    pub fn corners_a(&self) -> Vec<f64> {
        self.corners_a.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn corners_b(&self) -> Vec<f64> {
        self.corners_b.clone()
    }
    /// Vertices of the intersection polygon; empty when the boxes are apart.
    #[wasm_bindgen(getter)]
    pub fn intersection(&self) -> Vec<f64> {
        self.intersection.clone()
    }
    /// `xmin, ymin, xmax, ymax`
    #[wasm_bindgen(getter)]
    pub fn hull_a(&self) -> Vec<f64> {
        self.hull_a.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn hull_b(&self) -> Vec<f64> {
        self.hull_b.clone()
    }
}

#[wasm_bindgen]
pub fn overlap(a: &[f64], b: &[f64], alpha: f64, beta: f64) -> Result<Overlap, JsError> {
    let (a, b) = (rbox(a)?, rbox(b)?);
    let (ca, cb) = (rbox_corners(&a), rbox_corners(&b));
    let (ha, hb) = (rbox_to_hbox(&a), rbox_to_hbox(&b));
    let terms = os_loss_terms(&a, &b, &params(alpha, beta)?);
    Ok(Overlap {
        iou: rbox_iou(&a, &b),
        hbox_iou: hbox_iou(&ha, &hb),
        loss: terms.total(),
        iou_term: terms.iou,
        distance_term: terms.distance,
        angle_term: terms.angle,
        intersection: flat(&convex_intersect(&ca, &cb)),
        corners_a: flat(&ca),
        corners_b: flat(&cb),
        hull_a: ha.to_array().to_vec(),
        hull_b: hb.to_array().to_vec(),
    })
}

/// Row-major click representation map.
#[wasm_bindgen]
pub fn click_map(height: usize, width: usize, x: f64, y: f64) -> Result<Vec<f32>, JsError> {
    let plane = ImagePlane::new(height, width).map_err(|e| JsError::new(&e.to_string()))?;
    let map = make_click_map(plane, ClickPoint { x, y }).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(map.values.iter().map(|v| *v as f32).collect())
}

/// Six numbers per step: `cx, cy, w, h, theta_deg, loss`.
#[wasm_bindgen]
pub fn fit_trajectory(init: &[f64], gt: &[f64], alpha: f64, beta: f64, lr: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    let t = fit_rbox(&rbox(init)?, &rbox(gt)?, &params(alpha, beta)?, lr, steps)
        .map_err(|e| JsError::new(&e.to_string()))?;
    Ok(t.steps.iter().flat_map(|s| [s.rbox.cx, s.rbox.cy, s.rbox.w, s.rbox.h, s.rbox.theta.to_degrees(), s.loss]).collect())
}
