//! Binary ("P5") PGM with maxval 255. Reading thresholds at 128; writing
//! emits 255 for foreground and 0 for background.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{write_file, PipelineIoError};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PgmError {
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel data: expected {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("unsupported maxval {0} (only 255)")]
    UnsupportedMaxval(u32),
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::MalformedHeader(format!("expected {what}")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<BinaryMask, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::MalformedHeader("magic number is not P5".into()));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(PgmError::MalformedHeader("missing whitespace after maxval".into())),
    }
    let expected = width * height;
    let data = &bytes[h.pos..];
    if data.len() < expected {
        return Err(PgmError::TruncatedData {
            expected,
            actual: data.len(),
        });
    }
    let bits = data[..expected].iter().map(|&v| v >= 128).collect();
    Ok(BinaryMask::from_bits(width, height, bits).expect("dimensions checked"))
}

pub fn encode_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn read_pgm(path: &Path) -> Result<BinaryMask, PipelineIoError> {
    let bytes = fs::read(path).map_err(|e| PipelineIoError::io(path, e))?;
    decode_pgm(&bytes).map_err(|source| PipelineIoError::Pgm {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_pgm(mask: &BinaryMask, path: &Path) -> Result<(), PipelineIoError> {
    write_file(path, &encode_pgm(mask))
}
