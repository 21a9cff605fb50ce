use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Field2D;

/// Decoded grayscale raster with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl GrayImage {
    /// Field on a unit grid; needs at least 3x3 pixels.
    pub fn into_field(self) -> Result<Field2D> {
        Field2D::new(self.values, self.height, self.width, 1.0)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
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

    fn token(&mut self, what: &str) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::Format(format!("bad {what}")))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token(what)?;
        t.parse().map_err(|_| Error::Format(format!("bad {what} {t:?}")))
    }
}

/// Decode a P2 (ASCII) or P5 (binary) PGM with `maxval <= 255`; pixel `v`
/// maps to `v / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    let binary = match cur.token("magic number")? {
        "P5" => true,
        "P2" => false,
        other => return Err(Error::Format(format!("bad magic number {other:?}"))),
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("maxval {maxval} not in 1..=255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty raster {width}x{height}")));
    }
    let count = width * height;
    let scale = 1.0 / maxval as f64;
    let values = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = cur.pos + 1;
        let raster = bytes
            .get(start..start + count)
            .ok_or_else(|| Error::Format(format!("truncated raster: expected {count} bytes")))?;
        if let Some(&v) = raster.iter().find(|&&v| v as usize > maxval) {
            return Err(Error::Format(format!("pixel {v} exceeds maxval {maxval}")));
        }
        raster.iter().map(|&v| v as f64 * scale).collect()
    } else {
        let mut values = Vec::with_capacity(count);
        for k in 0..count {
            let v = cur.number("pixel").map_err(|_| {
                Error::Format(format!("truncated raster: pixel {k} of {count} missing or malformed"))
            })?;
            if v > maxval {
                return Err(Error::Format(format!("pixel {v} exceeds maxval {maxval}")));
            }
            values.push(v as f64 * scale);
        }
        values
    };
    Ok(GrayImage { width, height, values })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Field2D> {
    decode_pgm(&fs::read(path)?)?.into_field()
}

/// P5, maxval 255: clamp to `[0, 1]`, scale by 255, round half to even.
pub fn encode_pgm(f: &Field2D) -> Result<Vec<u8>> {
    if let Some(k) = f.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(format!("non-finite pixel at index {k}")));
    }
    let mut out = format!("P5\n{} {}\n255\n", f.cols, f.rows).into_bytes();
    out.extend(f.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8));
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, f: &Field2D) -> Result<()> {
    fs::write(path, encode_pgm(f)?)?;
    Ok(())
}
