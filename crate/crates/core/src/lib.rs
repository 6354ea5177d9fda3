//! Rotated-box cross-view object geo-localization toolkit.
//!
//! The crate covers the geometric and numerical core of localizing a clicked
//! query object on a satellite image with rotated boxes:
//!
//! - [`geometry`]: rotated/axis-aligned rectangles, convex clipping, IoU.
//! - [`clickmap`]: the click representation map attached to the query image.
//! - [`mcp`]: multi-scale cross-view attention over feature pyramids.
//! - [`assignment`]: anchor-free rotated targets and the anchor/IoU path.
//! - [`losses`]: focal, centerness, IoU and orientation-sensitive losses.
//! - [`decode`]: box reconstruction, score fusion, rotated NMS, SAM prompts.
//! - [`eval`]: Acc@t, mask metrics, rotation statistics, criterion gap.
//! - [`dataset`]: JSONL annotations, masks and the seeded synthetic generator.
//! - [`experiments`]: gradient check and box-fitting trials.
//! - [`pipeline`]: end-to-end planted-signal runs.

pub mod assignment;
pub mod clickmap;
pub mod dataset;
pub mod decode;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod geometry;
pub mod losses;
pub mod mcp;
pub mod numeric;
pub mod pipeline;

pub use error::{Error, Result};
pub use geometry::{HBox, Point2, RBox};
