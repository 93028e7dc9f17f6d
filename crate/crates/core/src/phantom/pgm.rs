//! PGM (P2 plain / P5 binary) reading and writing.
//!
//! Samples are rescaled to 8 bits (`v·255 / maxval`); a pixel is free when the
//! rescaled value is at least [`FREE_THRESHOLD`].

use super::{OccupancyGrid, PhantomError};

pub const FREE_THRESHOLD: u32 = 128;

/// Decoded greyscale image, samples rescaled to `0..=255`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], PhantomError> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(malformed("unexpected end of header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize, PhantomError> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| malformed(&format!("invalid {what}")))
    }
}

fn malformed(msg: &str) -> PhantomError {
    PhantomError::MalformedImage(msg.to_string())
}

/// Decode a P2 or P5 image.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PhantomError> {
    let mut hdr = Header { bytes, pos: 0 };
    let magic = hdr.token()?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(malformed("bad magic number")),
    };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PhantomError::EmptyGrid);
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed("maxval out of range"));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| malformed("dimensions overflow"))?;
    let scale = |v: usize| -> Result<u8, PhantomError> {
        if v > maxval {
            return Err(malformed("sample exceeds maxval"));
        }
        Ok((v * 255 / maxval) as u8)
    };

    let mut pixels = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if hdr.pos >= bytes.len() || !bytes[hdr.pos].is_ascii_whitespace() {
            return Err(malformed("missing raster"));
        }
        let raster = &bytes[hdr.pos + 1..];
        let bps = if maxval < 256 { 1 } else { 2 };
        if raster.len() < count * bps {
            return Err(malformed("truncated raster"));
        }
        for i in 0..count {
            let v = if bps == 1 {
                raster[i] as usize
            } else {
                ((raster[2 * i] as usize) << 8) | raster[2 * i + 1] as usize
            };
            pixels.push(scale(v)?);
        }
    } else {
        for _ in 0..count {
            let v = hdr
                .number("sample")
                .map_err(|_| malformed("truncated raster"))?;
            pixels.push(scale(v)?);
        }
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

/// Parse a PGM phantom image into an occupancy grid.
///
/// Pixels `>= 128` are free, darker pixels occupied; the boundary ring is
/// always occupied.
pub fn load_grid(bytes: &[u8], resolution: f64) -> Result<OccupancyGrid, PhantomError> {
    let img = decode_pgm(bytes)?;
    let occupied = img
        .pixels
        .iter()
        .map(|&p| (p as u32) < FREE_THRESHOLD)
        .collect();
    OccupancyGrid::new(img.width, img.height, resolution, occupied)
}

/// Encode an 8-bit P5 image.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count mismatch");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Occupancy grid as a P5 image: free = 255, occupied = 0.
pub fn grid_to_pgm(grid: &OccupancyGrid) -> Vec<u8> {
    let px: Vec<u8> = grid
        .cells()
        .iter()
        .map(|&o| if o { 0 } else { 255 })
        .collect();
    encode_pgm(grid.width(), grid.height(), &px)
}

/// Min-max scale finite values to `0..=255`; non-finite values map to 0.
pub fn scale_to_u8(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                0
            } else if span > 0.0 {
                (((v - lo) / span) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}
