//! Portable graymap reader (P2 ASCII, P5 binary) and P5 writer.
//!
//! Header grammar: magic, width, height, maxval as whitespace-separated
//! tokens; `#` starts a comment running to end of line. In P5 a single
//! whitespace byte separates maxval from the raster, and samples are one byte
//! when maxval < 256, otherwise two bytes big-endian.

use std::fs;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

/// Writes `img` as P5 with maxval 255. Pixels are clamped to `[0, 1]` and
/// rounded to the nearest level.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.pixels()
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur
        .token()
        .ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 {
        return Err(Error::ZeroMaxval);
    }
    if maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} > 65535")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width * height;

    let samples = if binary {
        // Exactly one whitespace byte after maxval.
        match cur.bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(Error::MalformedHeader(
                    "missing whitespace before raster".into(),
                ))
            }
        }
        read_binary(&cur.bytes[cur.pos..], expected, maxval)?
    } else {
        read_ascii(&mut cur, expected)?
    };

    let scale = 1.0 / maxval as f64;
    let mut pixels = Vec::with_capacity(expected);
    for s in samples {
        if s > maxval {
            return Err(Error::SampleOutOfRange { value: s, maxval });
        }
        pixels.push(s as f64 * scale);
    }
    GrayImage::new(width, height, pixels)
}

fn read_binary(raster: &[u8], expected: usize, maxval: u32) -> Result<Vec<u32>> {
    let wide = maxval > 255;
    let per = if wide { 2 } else { 1 };
    let found = raster.len() / per;
    if found < expected {
        return Err(Error::TruncatedData { expected, found });
    }
    Ok(if wide {
        raster
            .chunks_exact(2)
            .take(expected)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect()
    } else {
        raster[..expected].iter().map(|&b| b as u32).collect()
    })
}

fn read_ascii(cur: &mut Cursor<'_>, expected: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(expected);
    while out.len() < expected {
        match cur.token() {
            Some(tok) => out.push(parse_u32(tok).ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "bad sample {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })?),
            None => {
                return Err(Error::TruncatedData {
                    expected,
                    found: out.len(),
                })
            }
        }
    }
    Ok(out)
}

fn parse_u32(tok: &[u8]) -> Option<u32> {
    std::str::from_utf8(tok).ok()?.parse().ok()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        parse_u32(tok).ok_or_else(|| {
            Error::MalformedHeader(format!(
                "bad {what} {:?}",
                String::from_utf8_lossy(tok)
            ))
        })
    }
}
