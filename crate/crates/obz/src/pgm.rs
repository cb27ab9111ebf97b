//! Netpbm graymap (PGM) reading and writing, 8- and 16-bit, plain (P2) and raw (P5).

use std::fmt;

use obz_core::ImageSample;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmError(pub String);

impl fmt::Display for PgmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed PGM: {}", self.0)
    }
}

impl std::error::Error for PgmError {}

fn err(msg: impl Into<String>) -> PgmError {
    PgmError(msg.into())
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<u32, PgmError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(format!("expected a number at byte {start}")))
    }
}

/// Decodes a PGM into pixel intensities (raw sample values, not rescaled).
pub fn decode(bytes: &[u8]) -> Result<ImageSample, PgmError> {
    let raw = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(err("missing P2/P5 magic")),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number()? as usize;
    let height = h.number()? as usize;
    let maxval = h.number()?;
    if width == 0 || height == 0 {
        return Err(err("zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(err(format!("maxval {maxval} out of range")));
    }
    let n = width.checked_mul(height).ok_or_else(|| err("dimensions overflow"))?;
    let mut pixels = Vec::with_capacity(n);
    if raw {
        // exactly one whitespace byte separates the header from raster data
        if !bytes.get(h.pos).is_some_and(|b| b.is_ascii_whitespace()) {
            return Err(err("missing separator before raster"));
        }
        let data = &bytes[h.pos + 1..];
        let bps = if maxval < 256 { 1 } else { 2 };
        if data.len() < n * bps {
            return Err(err(format!("raster truncated: {} of {} bytes", data.len(), n * bps)));
        }
        for i in 0..n {
            let v = if bps == 1 {
                data[i] as u32
            } else {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32
            };
            if v > maxval {
                return Err(err(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as f64);
        }
    } else {
        for _ in 0..n {
            let v = h.number()?;
            if v > maxval {
                return Err(err(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as f64);
        }
    }
    ImageSample::new(height, width, pixels).map_err(|e| err(e.to_string()))
}

/// Encodes integer samples as a raw (P5) PGM; 16-bit when `maxval > 255`.
pub fn encode(width: usize, height: usize, maxval: u16, samples: &[u16]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    for &s in samples {
        if maxval > 255 {
            out.extend_from_slice(&s.to_be_bytes());
        } else {
            out.push(s as u8);
        }
    }
    out
}
