//! Mask files: run-length JSON (`{"h":..,"w":..,"counts":[..]}`, column-major
//! runs starting with background) and 8-bit single-channel images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub h: usize,
    pub w: usize,
    pub counts: Vec<usize>,
}

pub fn encode_rle(m: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0usize;
    for j in 0..m.w {
        for i in 0..m.h {
            let b = m.get(i, j);
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask { id: None, h: m.h, w: m.w, counts }
}

pub fn decode_rle(r: &RleMask) -> Result<BinaryMask> {
    let total: usize = r.counts.iter().sum();
    if total != r.h * r.w {
        return Err(Error::Format(format!("RLE counts sum to {total}, mask has {} pixels", r.h * r.w)));
    }
    let mut m = BinaryMask::empty(r.h, r.w);
    let mut pos = 0usize;
    for (n, &c) in r.counts.iter().enumerate() {
        if n % 2 == 1 {
            for p in pos..pos + c {
                m.set(p % r.h, p / r.h, true);
            }
        }
        pos += c;
    }
    Ok(m)
}

/// Reads a JSONL file of RLE masks, each carrying an `id`.
pub fn read_rle_lines(text: &str) -> Result<Vec<(String, BinaryMask)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: RleMask = serde_json::from_str(line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        let id = r.id.clone().ok_or_else(|| Error::Format(format!("line {}: mask without id", n + 1)))?;
        out.push((id, decode_rle(&r)?));
    }
    Ok(out)
}

/// Any non-zero pixel is foreground.
#[cfg(feature = "image-io")]
pub fn read_mask_image(path: &std::path::Path) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?.to_luma8();
    let (w, h) = img.dimensions();
    BinaryMask::new(h as usize, w as usize, img.pixels().map(|p| p.0[0] > 0).collect())
}

/// Writes 0/255 as an 8-bit grayscale image; format follows the extension.
#[cfg(feature = "image-io")]
pub fn write_mask_image(m: &BinaryMask, path: &std::path::Path) -> Result<()> {
    let w = u32::try_from(m.w).map_err(|_| crate::error::invalid("mask too wide"))?;
    let h = u32::try_from(m.h).map_err(|_| crate::error::invalid("mask too tall"))?;
    let img = image::GrayImage::from_fn(w, h, |x, y| image::Luma([if m.get(y as usize, x as usize) { 255 } else { 0 }]));
    img.save(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
