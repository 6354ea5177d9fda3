//! Annotation records (JSON Lines), validation, HBox derivation,
//! annotation-cost accounting, mask files and the synthetic generator.
//!
//! On disk every record is one JSON object per line:
//!
//! ```text
//! {"id":"s0","query_image":"q/s0.png","reference_image":"r/s0.png",
//!  "click":{"x":120.0,"y":96.5},
//!  "gt_rbox":{"cx":80.0,"cy":64.0,"w":40.0,"h":12.0,"theta":30.0},
//!  "gt_hbox":{"xmin":...,"ymin":...,"xmax":...,"ymax":...},
//!  "split":"test","view":"drone"}
//! ```
//!
//! `theta` is stored in degrees in `[-90, 90)` and held in radians in memory.
//! `gt_hbox` is optional and omitted when absent.

pub mod masks;
pub mod synth;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::clickmap::{ClickPoint, ImagePlane};
use crate::error::{Error, Result};
use crate::decode::DetBox;
use crate::geometry::{rbox_to_hbox, HBox, RBox};

/// Slack allowed between a stored HBox and the hull of its RBox.
pub const HULL_TOLERANCE_PX: f64 = 1.0;
/// Degrees are written rounded to this many decimals.
const DEGREE_DECIMALS: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Drone,
    Ground,
}

/// In-memory record; `gt_rbox.theta` is in radians and not re-normalized so
/// that out-of-range inputs can be reported.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub id: String,
    pub query_image: String,
    pub reference_image: String,
    pub click: ClickPoint,
    pub gt_rbox: RBox,
    pub gt_hbox: Option<HBox>,
    pub split: Split,
    pub view: View,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RBoxDegrees {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    query_image: String,
    reference_image: String,
    click: ClickPoint,
    gt_rbox: RBoxDegrees,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_hbox: Option<HBox>,
    split: Split,
    view: View,
}

fn to_degrees(rad: f64) -> f64 {
    let d = (rad.to_degrees() * DEGREE_DECIMALS).round() / DEGREE_DECIMALS;
    if d == 0.0 {
        0.0
    } else {
        d
    }
}

impl From<RecordLine> for AnnotationRecord {
    fn from(r: RecordLine) -> Self {
        let g = r.gt_rbox;
        Self {
            id: r.id,
            query_image: r.query_image,
            reference_image: r.reference_image,
            click: r.click,
            gt_rbox: RBox { cx: g.cx, cy: g.cy, w: g.w, h: g.h, theta: g.theta.to_radians() },
            gt_hbox: r.gt_hbox,
            split: r.split,
            view: r.view,
        }
    }
}

impl From<&AnnotationRecord> for RecordLine {
    fn from(r: &AnnotationRecord) -> Self {
        let g = r.gt_rbox;
        Self {
            id: r.id.clone(),
            query_image: r.query_image.clone(),
            reference_image: r.reference_image.clone(),
            click: r.click,
            gt_rbox: RBoxDegrees { cx: g.cx, cy: g.cy, w: g.w, h: g.h, theta: to_degrees(g.theta) },
            gt_hbox: r.gt_hbox,
            split: r.split,
            view: r.view,
        }
    }
}

impl AnnotationRecord {
    pub fn parse_line(line: &str) -> Result<Self> {
        let raw: RecordLine = serde_json::from_str(line)?;
        Ok(raw.into())
    }

    /// Canonical single-line JSON (no trailing newline).
    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(&RecordLine::from(self))?)
    }
}

/// One line of an annotation stream: a record or the reason it failed to parse.
#[derive(Debug)]
pub struct ParsedLine {
    pub line: usize,
    pub record: std::result::Result<AnnotationRecord, String>,
}

/// Parses every non-blank line; parse failures are kept, not fatal.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<ParsedLine>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(ParsedLine { line: n + 1, record: AnnotationRecord::parse_line(&line).map_err(|e| e.to_string()) });
    }
    Ok(out)
}

/// Parses a stream and fails on the first bad line.
pub fn read_records_strict<R: BufRead>(input: R) -> Result<Vec<AnnotationRecord>> {
    read_records(input)?
        .into_iter()
        .map(|p| p.record.map_err(|e| Error::Format(format!("line {}: {e}", p.line))))
        .collect()
}

pub fn write_records<W: Write>(records: &[AnnotationRecord], mut out: W) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line()?)?;
    }
    Ok(())
}

/// A predicted box for one record: `{"id":..,"rbox":{..theta in degrees..},"score":..}`
/// or `{"id":..,"hbox":{..},"score":..}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub id: String,
    pub det: DetBox,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rbox: Option<RBoxDegrees>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hbox: Option<HBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

impl PredictionRecord {
    pub fn parse_line(line: &str) -> Result<Self> {
        let raw: PredictionLine = serde_json::from_str(line)?;
        let det = match (raw.rbox, raw.hbox) {
            (Some(g), None) => DetBox::Rbox(RBox::new(g.cx, g.cy, g.w, g.h, g.theta.to_radians())?),
            (None, Some(h)) => {
                h.check()?;
                DetBox::Hbox(h)
            }
            _ => return Err(Error::Format(format!("prediction {:?} needs exactly one of rbox, hbox", raw.id))),
        };
        Ok(Self { id: raw.id, det, score: raw.score })
    }

    pub fn to_line(&self) -> Result<String> {
        let (rbox, hbox) = match self.det {
            DetBox::Rbox(g) => {
                (Some(RBoxDegrees { cx: g.cx, cy: g.cy, w: g.w, h: g.h, theta: to_degrees(g.theta) }), None)
            }
            DetBox::Hbox(h) => (None, Some(h)),
        };
        Ok(serde_json::to_string(&PredictionLine { id: self.id.clone(), rbox, hbox, score: self.score })?)
    }
}

pub fn read_predictions<R: BufRead>(input: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(PredictionRecord::parse_line(&line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(preds: &[PredictionRecord], mut out: W) -> Result<()> {
    for p in preds {
        writeln!(out, "{}", p.to_line()?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub line: usize,
    pub id: Option<String>,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Query image size, when known, for the click bounds check.
    pub query_bounds: Option<ImagePlane>,
}

/// Rule names reported by [`validate`].
pub mod rules {
    pub const PARSE_ERROR: &str = "parse-error";
    pub const EMPTY_ID: &str = "empty-id";
    pub const DUPLICATE_ID: &str = "duplicate-id";
    pub const NON_FINITE: &str = "non-finite";
    pub const NONPOSITIVE_EXTENT: &str = "nonpositive-extent";
    pub const ANGLE_RANGE: &str = "angle-range";
    pub const CLICK_OUT_OF_BOUNDS: &str = "click-out-of-bounds";
    pub const INVALID_HBOX: &str = "invalid-hbox";
    pub const HBOX_HULL_MISMATCH: &str = "hbox-hull-mismatch";
}

fn record_violations(r: &AnnotationRecord, opts: &ValidateOptions) -> Vec<(&'static str, String)> {
    let mut v = Vec::new();
    if r.id.is_empty() {
        v.push((rules::EMPTY_ID, "record id is empty".to_string()));
    }
    let g = &r.gt_rbox;
    let finite = g.to_array().iter().all(|x| x.is_finite()) && r.click.x.is_finite() && r.click.y.is_finite();
    if !finite {
        v.push((rules::NON_FINITE, "non-finite coordinate".to_string()));
        return v;
    }
    if g.w <= 0.0 || g.h <= 0.0 {
        v.push((rules::NONPOSITIVE_EXTENT, format!("w={} h={}", g.w, g.h)));
    }
    let deg = to_degrees(g.theta);
    if !(-90.0..90.0).contains(&deg) {
        v.push((rules::ANGLE_RANGE, format!("theta={deg} deg outside [-90, 90)")));
    }
    let c = r.click;
    let outside = match opts.query_bounds {
        Some(plane) => !plane.contains(&c),
        None => c.x < 0.0 || c.y < 0.0,
    };
    if outside {
        v.push((rules::CLICK_OUT_OF_BOUNDS, format!("click ({}, {})", c.x, c.y)));
    }
    if let Some(hb) = &r.gt_hbox {
        if hb.check().is_err() {
            v.push((rules::INVALID_HBOX, format!("{:?}", hb.to_array())));
        } else if g.w > 0.0 && g.h > 0.0 {
            let hull = rbox_to_hbox(g);
            if !hb.contains_hbox(&hull, HULL_TOLERANCE_PX) {
                v.push((
                    rules::HBOX_HULL_MISMATCH,
                    format!("hbox {:?} does not contain hull {:?}", hb.to_array(), hull.to_array()),
                ));
            }
        }
    }
    v
}

/// Lists every invariant violation; a clean stream gives an empty report.
pub fn validate(lines: &[ParsedLine], opts: &ValidateOptions) -> ValidationReport {
    let mut report = ValidationReport { records: lines.len(), violations: Vec::new() };
    let mut seen = HashSet::new();
    for p in lines {
        match &p.record {
            Err(e) => report.violations.push(Violation {
                line: p.line,
                id: None,
                rule: rules::PARSE_ERROR.into(),
                detail: e.clone(),
            }),
            Ok(r) => {
                if !r.id.is_empty() && !seen.insert(r.id.clone()) {
                    report.violations.push(Violation {
                        line: p.line,
                        id: Some(r.id.clone()),
                        rule: rules::DUPLICATE_ID.into(),
                        detail: format!("id {:?} seen before", r.id),
                    });
                }
                for (rule, detail) in record_violations(r, opts) {
                    report.violations.push(Violation { line: p.line, id: Some(r.id.clone()), rule: rule.into(), detail });
                }
            }
        }
    }
    report
}

/// Fills `gt_hbox` with the hull of `gt_rbox`.
pub fn hbox_from_rbox_record(r: &AnnotationRecord) -> AnnotationRecord {
    AnnotationRecord { gt_hbox: Some(rbox_to_hbox(&r.gt_rbox)), ..r.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub record_id: String,
    /// Annotation type, e.g. `rbox`, `hbox`, `mask`.
    pub kind: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostLedger {
    pub entries: Vec<CostEntry>,
}

impl CostLedger {
    pub fn record(&mut self, record_id: impl Into<String>, kind: impl Into<String>, seconds: f64) -> Result<()> {
        if !(seconds >= 0.0 && seconds.is_finite()) {
            return Err(crate::error::invalid(format!("annotation time must be non-negative, got {seconds}")));
        }
        self.entries.push(CostEntry { record_id: record_id.into(), kind: kind.into(), seconds });
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindCost {
    pub kind: String,
    pub count: usize,
    pub total_seconds: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRatio {
    pub numerator: String,
    pub denominator: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub per_kind: Vec<KindCost>,
    /// Mean-time ratio for every ordered pair of distinct kinds.
    pub ratios: Vec<CostRatio>,
}

impl CostSummary {
    pub fn ratio(&self, numerator: &str, denominator: &str) -> Option<f64> {
        self.ratios
            .iter()
            .find(|r| r.numerator == numerator && r.denominator == denominator)
            .map(|r| r.ratio)
    }
}

pub fn cost_summary(ledger: &CostLedger) -> Result<CostSummary> {
    if ledger.entries.is_empty() {
        return Err(Error::UndefinedMetric("cost summary of an empty ledger".into()));
    }
    let mut by_kind: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in &ledger.entries {
        by_kind.entry(e.kind.as_str()).or_default().push(e.seconds);
    }
    let per_kind: Vec<KindCost> = by_kind
        .iter()
        .map(|(k, v)| {
            let total = crate::numeric::pairwise_sum(v);
            KindCost { kind: k.to_string(), count: v.len(), total_seconds: total, mean_seconds: total / v.len() as f64 }
        })
        .collect();
    let mut ratios = Vec::new();
    for a in &per_kind {
        for b in &per_kind {
            if a.kind != b.kind && b.mean_seconds > 0.0 {
                ratios.push(CostRatio {
                    numerator: a.kind.clone(),
                    denominator: b.kind.clone(),
                    ratio: a.mean_seconds / b.mean_seconds,
                });
            }
        }
    }
    Ok(CostSummary { per_kind, ratios })
}
