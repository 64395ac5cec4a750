//! Minimal PGM (P2 ASCII / P5 binary) reader and writer.

use std::io::Write;

use super::DensityError;

/// Grayscale raster; `pixels[row * width + col]`, row 0 is the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub pixels: Vec<u16>,
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn next_number(&mut self, what: &str) -> Result<usize, DensityError> {
        let tok = self
            .next_token()
            .ok_or_else(|| DensityError::Pgm(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DensityError::Pgm(format!("bad {what}")))
    }
}

impl PgmImage {
    pub fn parse(bytes: &[u8]) -> Result<Self, DensityError> {
        let mut tok = Tokens { bytes, pos: 0 };
        let magic = tok
            .next_token()
            .ok_or_else(|| DensityError::Pgm("empty file".into()))?;
        let binary = match magic {
            b"P2" => false,
            b"P5" => true,
            _ => return Err(DensityError::Pgm("expected P2 or P5 magic".into())),
        };
        let width = tok.next_number("width")?;
        let height = tok.next_number("height")?;
        let max_value = tok.next_number("maxval")?;
        if width == 0 || height == 0 {
            return Err(DensityError::Pgm("zero-sized image".into()));
        }
        if max_value == 0 || max_value > 65535 {
            return Err(DensityError::Pgm(format!("maxval {max_value} out of range")));
        }
        let count = width * height;
        let mut pixels = Vec::with_capacity(count);
        if binary {
            // exactly one whitespace byte separates the header from the raster
            let start = tok.pos + 1;
            let bpp = if max_value < 256 { 1 } else { 2 };
            let raster = bytes
                .get(start..start + count * bpp)
                .ok_or_else(|| DensityError::Pgm("truncated raster".into()))?;
            if bpp == 1 {
                pixels.extend(raster.iter().map(|&b| u16::from(b)));
            } else {
                pixels.extend(raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])));
            }
        } else {
            for _ in 0..count {
                pixels.push(tok.next_number("pixel")? as u16);
            }
        }
        if pixels.iter().any(|&p| usize::from(p) > max_value) {
            return Err(DensityError::Pgm("pixel exceeds maxval".into()));
        }
        Ok(Self {
            width,
            height,
            max_value: max_value as u16,
            pixels,
        })
    }

    pub fn read(path: &std::path::Path) -> Result<Self, DensityError> {
        let bytes = std::fs::read(path)
            .map_err(|e| DensityError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&bytes)
    }

    /// Serializes as binary P5.
    pub fn to_p5(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write!(out, "P5\n{} {}\n{}\n", self.width, self.height, self.max_value).unwrap();
        if self.max_value < 256 {
            out.extend(self.pixels.iter().map(|&p| p as u8));
        } else {
            for p in &self.pixels {
                out.extend_from_slice(&p.to_be_bytes());
            }
        }
        out
    }

    pub fn pixel(&self, col: usize, row: usize) -> u16 {
        self.pixels[row * self.width + col]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ascii_with_comments() {
        let src = b"P2\n# a comment\n3 2\n# another\n10\n0 1 2\n3 4 10\n";
        let img = PgmImage::parse(src).unwrap();
        assert_eq!((img.width, img.height, img.max_value), (3, 2, 10));
        assert_eq!(img.pixel(2, 1), 10);
        assert_eq!(img.pixel(0, 1), 3);
    }

    #[test]
    fn binary_round_trip() {
        let img = PgmImage {
            width: 2,
            height: 2,
            max_value: 255,
            pixels: vec![0, 32, 255, 10],
        };
        assert_eq!(PgmImage::parse(&img.to_p5()).unwrap(), img);
        let wide = PgmImage {
            max_value: 1000,
            pixels: vec![0, 999, 1000, 10],
            ..img
        };
        assert_eq!(PgmImage::parse(&wide.to_p5()).unwrap(), wide);
    }

    #[test]
    fn rejects_malformed() {
        assert!(PgmImage::parse(b"P3\n1 1\n1\n0").is_err());
        assert!(PgmImage::parse(b"P5\n2 2\n255\n\x00").is_err());
        assert!(PgmImage::parse(b"P2\n1 1\n5\n9").is_err());
    }
}
