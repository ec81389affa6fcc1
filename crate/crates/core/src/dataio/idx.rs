//! IDX containers (the MNIST distribution format).
//!
//! Header: big-endian `u32` magic (`0x00000803` images, `0x00000801` labels), then
//! one big-endian `u32` per dimension, then the unsigned bytes. Gzip-compressed files
//! are detected by their magic bytes and decompressed transparently.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for v in [IMAGES_MAGIC, self.count as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

pub fn labels_to_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&self, offset: usize, needed: usize) -> Result<&[u8]> {
        self.bytes
            .get(offset..offset.saturating_add(needed))
            .ok_or_else(|| Error::IdxTruncated {
                path: self.path.to_path_buf(),
                offset,
                needed,
                available: self.bytes.len().saturating_sub(offset),
            })
    }

    fn u32_at(&self, offset: usize) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(offset, 4)?.try_into().unwrap()))
    }

    fn magic(&self, expected: u32) -> Result<()> {
        let found = self.u32_at(0)?;
        if found != expected {
            return Err(Error::IdxMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }

    fn body(&self, offset: usize, len: usize) -> Result<&[u8]> {
        let body = self.take(offset, len)?;
        if self.bytes.len() != offset + len {
            return Err(Error::IdxDimension {
                path: self.path.to_path_buf(),
                detail: format!(
                    "header declares {len} data bytes but the file carries {}",
                    self.bytes.len() - offset
                ),
            });
        }
        Ok(body)
    }
}

/// Parses an uncompressed image container; `path` is only used in errors.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    let c = Cursor { bytes, path };
    c.magic(IMAGES_MAGIC)?;
    let count = c.u32_at(4)? as usize;
    let rows = c.u32_at(8)? as usize;
    let cols = c.u32_at(12)? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::IdxDimension {
            path: path.to_path_buf(),
            detail: format!("{count}x{rows}x{cols} overflows"),
        })?;
    let pixels = c.body(16, len)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Parses an uncompressed label container.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let c = Cursor { bytes, path };
    c.magic(LABELS_MAGIC)?;
    let count = c.u32_at(4)? as usize;
    Ok(c.body(8, count)?.to_vec())
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    parse_idx_images(&read_file(path)?, path)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read_file(path)?, path)
}
