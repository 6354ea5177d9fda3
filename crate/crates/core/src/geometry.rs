//! Rotated and axis-aligned rectangle algebra.
//!
//! Angles follow the `le90` convention: `theta` lies in `[-pi/2, pi/2)` and is
//! measured counter-clockwise from the image x-axis to the box's `w` edge.
//! Image coordinates have y growing downward; polygon orientation below is
//! always "positive signed area" in the raw (x, y) coordinates.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Intersections with less area than this (px^2) are reported as empty.
pub const AREA_EPS: f64 = 1e-9;
/// Vertex deduplication tolerance used while clipping.
pub const COLLINEAR_EPS: f64 = 1e-9;
/// Slack on the boundary test of [`point_in_rbox`].
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn dist(self, o: Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Oriented rectangle `(cx, cy, w, h, theta)`.
///
/// Fields are public so that raw (possibly invalid) annotations can be held
/// and reported on; [`RBox::new`] is the checked constructor and always
/// normalizes the angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl RBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h, theta: normalize_angle(theta)? };
        b.check()?;
        Ok(b)
    }

    /// Validates the invariants without touching the angle.
    pub fn check(&self) -> Result<()> {
        let fields = [self.cx, self.cy, self.w, self.h, self.theta];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite rbox field in {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(invalid(format!("rbox extents must be positive, got w={} h={}", self.w, self.h)));
        }
        Ok(())
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.cx, self.cy, self.w, self.h, self.theta]
    }

    /// Unit vectors of the box's w-axis and h-axis in image coordinates.
    pub fn axes(&self) -> (Point2, Point2) {
        let (s, c) = self.theta.sin_cos();
        (Point2::new(c, s), Point2::new(-s, c))
    }

    /// Same box with the angle shifted by `delta`, re-normalized.
    pub fn rotated_by(&self, delta: f64) -> Result<Self> {
        Self::new(self.cx, self.cy, self.w, self.h, self.theta + delta)
    }

    /// Axis-aligned box as an `RBox` with `theta = 0`.
    pub fn from_hbox(h: &HBox) -> Self {
        let c = h.center();
        Self { cx: c.x, cy: c.y, w: h.width(), h: h.height(), theta: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl HBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let b = Self { xmin, ymin, xmax, ymax };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<()> {
        let f = [self.xmin, self.ymin, self.xmax, self.ymax];
        if f.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite hbox field in {self:?}")));
        }
        if self.xmax <= self.xmin || self.ymax <= self.ymin {
            return Err(invalid(format!("hbox must have xmax > xmin and ymax > ymin, got {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    pub fn contains_point(&self, p: Point2, tol: f64) -> bool {
        p.x >= self.xmin - tol && p.x <= self.xmax + tol && p.y >= self.ymin - tol && p.y <= self.ymax + tol
    }

    /// True when `other` lies inside `self` up to `tol` on every side.
    pub fn contains_hbox(&self, other: &HBox, tol: f64) -> bool {
        other.xmin >= self.xmin - tol
            && other.ymin >= self.ymin - tol
            && other.xmax <= self.xmax + tol
            && other.ymax <= self.ymax + tol
    }
}

/// Convex polygon with positively oriented vertices. Empty means zero area.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn from_hbox(b: &HBox) -> Self {
        Self::new(vec![
            Point2::new(b.xmin, b.ymin),
            Point2::new(b.xmax, b.ymin),
            Point2::new(b.xmax, b.ymax),
            Point2::new(b.xmin, b.ymax),
        ])
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }
}

/// Reduces `theta` modulo pi into `[-pi/2, pi/2)`.
pub fn normalize_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(invalid(format!("angle must be finite, got {theta}")));
    }
    let mut t = theta - PI * ((theta + FRAC_PI_2) / PI).floor();
    // floor() can leave t one ulp outside the half-open interval
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    if t < -FRAC_PI_2 {
        t += PI;
    }
    Ok(t)
}

pub fn rbox_corners(b: &RBox) -> ConvexPolygon {
    let (ex, ey) = b.axes();
    let (hw, hh) = (0.5 * b.w, 0.5 * b.h);
    let local = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
    ConvexPolygon::new(
        local
            .iter()
            .map(|&(u, v)| Point2::new(b.cx + u * ex.x + v * ey.x, b.cy + u * ex.y + v * ey.y))
            .collect(),
    )
}

/// Shoelace area (absolute value).
pub fn polygon_area(p: &ConvexPolygon) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.vertices.len();
    let twice: f64 = (0..n).map(|i| p.vertices[i].cross(p.vertices[(i + 1) % n])).sum();
    0.5 * twice.abs()
}

fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

fn oriented(p: &ConvexPolygon) -> Vec<Point2> {
    let mut v = p.vertices.clone();
    if signed_area(&v) < 0.0 {
        v.reverse();
    }
    v
}

/// Sutherland–Hodgman clip of `p` against every edge of `q`.
pub fn convex_intersect(p: &ConvexPolygon, q: &ConvexPolygon) -> ConvexPolygon {
    if p.is_empty() || q.is_empty() {
        return ConvexPolygon::empty();
    }
    let clip = oriented(q);
    let mut out = oriented(p);
    let m = clip.len();
    for e in 0..m {
        if out.is_empty() {
            break;
        }
        let a = clip[e];
        let b = clip[(e + 1) % m];
        let edge = b.sub(a);
        let len = edge.x.hypot(edge.y);
        if len <= COLLINEAR_EPS {
            continue;
        }
        // signed distance of a point to the clip line, positive inside
        let side = |pt: Point2| edge.cross(pt.sub(a)) / len;
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let (sc, sp) = (side(cur), side(prev));
            let cur_in = sc >= -COLLINEAR_EPS;
            let prev_in = sp >= -COLLINEAR_EPS;
            if cur_in {
                if !prev_in {
                    out.push(crossing(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if prev_in {
                out.push(crossing(prev, cur, sp, sc));
            }
        }
    }
    let verts = dedup(out);
    if verts.len() < 3 || signed_area(&verts).abs() < AREA_EPS {
        return ConvexPolygon::empty();
    }
    ConvexPolygon::new(verts)
}

fn crossing(a: Point2, b: Point2, sa: f64, sb: f64) -> Point2 {
    let denom = sa - sb;
    if denom.abs() < f64::MIN_POSITIVE {
        return a;
    }
    let t = (sa / denom).clamp(0.0, 1.0);
    Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
}

fn dedup(v: Vec<Point2>) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(v.len());
    for p in v {
        if out.last().is_none_or(|q| q.dist(p) > COLLINEAR_EPS) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(out[out.len() - 1]) <= COLLINEAR_EPS {
        out.pop();
    }
    out
}

fn ordered<'a>(a: &'a RBox, b: &'a RBox) -> (&'a RBox, &'a RBox) {
    // clip in a canonical order so that iou(a, b) and iou(b, a) agree bit-for-bit
    let ka = a.to_array();
    let kb = b.to_array();
    match ka.iter().zip(kb.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) {
        Some(std::cmp::Ordering::Greater) => (b, a),
        _ => (a, b),
    }
}

/// Area of the intersection of two rotated boxes.
pub fn rbox_intersection_area(a: &RBox, b: &RBox) -> f64 {
    let (a, b) = ordered(a, b);
    polygon_area(&convex_intersect(&rbox_corners(a), &rbox_corners(b)))
}

pub fn rbox_iou(a: &RBox, b: &RBox) -> f64 {
    if a == b && a.area() > 0.0 {
        return 1.0;
    }
    let inter = rbox_intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn hbox_iou(a: &HBox, b: &HBox) -> f64 {
    let iw = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let ih = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Smallest axis-aligned box containing the four corners.
pub fn rbox_to_hbox(b: &RBox) -> HBox {
    let (s, c) = b.theta.sin_cos();
    let hx = 0.5 * (b.w * c.abs() + b.h * s.abs());
    let hy = 0.5 * (b.w * s.abs() + b.h * c.abs());
    HBox { xmin: b.cx - hx, ymin: b.cy - hy, xmax: b.cx + hx, ymax: b.cy + hy }
}

/// Coordinates of `p` in the frame of `b` (along the w-axis, along the h-axis).
pub fn to_box_frame(p: Point2, b: &RBox) -> (f64, f64) {
    let (ex, ey) = b.axes();
    let d = p.sub(b.center());
    (d.x * ex.x + d.y * ex.y, d.x * ey.x + d.y * ey.y)
}

/// Boundary-inclusive containment test.
pub fn point_in_rbox(p: Point2, b: &RBox) -> bool {
    let (u, v) = to_box_frame(p, b);
    u.abs() <= 0.5 * b.w + BOUNDARY_EPS && v.abs() <= 0.5 * b.h + BOUNDARY_EPS
}

pub fn center_distance(a: &RBox, b: &RBox) -> f64 {
    a.center().dist(b.center())
}
