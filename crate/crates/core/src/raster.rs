//! 8-bit rasters with an optional validity mask, binary PNM IO, BMP export
//! and bilinear sampling.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RasterError {
    #[error("malformed PNM header: {0}")]
    MalformedHeader(String),
    #[error("truncated PNM payload: expected {expected} sample bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("unsupported PNM maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),
    #[error("invalid raster layout: {0}")]
    InvalidLayout(String),
}

/// Row-major 8-bit image with 1 or 3 interleaved channels.
///
/// The mask, when present, holds one entry per pixel; `false` marks no-data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
    mask: Option<Vec<bool>>,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::InvalidLayout(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| RasterError::InvalidLayout("dimensions overflow".into()))?;
        if pixels.len() != expected {
            return Err(RasterError::InvalidLayout(format!(
                "expected {expected} samples, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
            mask: None,
        })
    }

    /// Raster with every sample set to `value`.
    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels])
            .expect("channel count must be 1 or 3")
    }

    /// Attaches (or replaces) the validity mask.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self, RasterError> {
        if mask.len() != self.width * self.height {
            return Err(RasterError::InvalidLayout(format!(
                "mask has {} entries, raster has {} pixels",
                mask.len(),
                self.width * self.height
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn without_mask(mut self) -> Self {
        self.mask = None;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + channel]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        match &self.mask {
            Some(m) => m[y * self.width + x],
            None => true,
        }
    }

    pub fn valid_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|v| **v).count(),
            None => self.width * self.height,
        }
    }

    /// Single-channel copy using integer Rec. 601 luma weights; the mask is kept.
    pub fn to_luma(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| {
                let y = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
                ((y + 500) / 1000) as u8
            })
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels,
            mask: self.mask.clone(),
        }
    }

    /// Bilinear interpolation at subpixel position (`x` = column, `y` = row).
    ///
    /// Returns `None` outside `[0, w-1] x [0, h-1]` or when any pixel with a
    /// nonzero weight is masked out. Only the first `channels()` entries of the
    /// result are meaningful.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        if self.width == 0 || self.height == 0 {
            return None;
        }
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64)
        {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1, y0, fx * (1.0 - fy)),
            (x0, y0 + 1, (1.0 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ];
        let mut out = [0.0; 3];
        for &(tx, ty, w) in &taps {
            if w == 0.0 {
                continue;
            }
            if !self.is_valid(tx, ty) {
                return None;
            }
            let base = (ty * self.width + tx) * self.channels;
            for (c, o) in out.iter_mut().enumerate().take(self.channels) {
                *o += w * self.pixels[base + c] as f64;
            }
        }
        Some(out)
    }

    /// Channel-0 convenience wrapper around [`Raster::sample_bilinear`].
    pub fn sample_gray(&self, x: f64, y: f64) -> Option<f64> {
        self.sample_bilinear(x, y).map(|s| s[0])
    }
}

/// Parses a binary P5 (gray) or P6 (RGB) file with maxval 255.
pub fn load_pnm(bytes: &[u8]) -> Result<Raster, RasterError> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) => {
            return Err(RasterError::MalformedHeader(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(m)
            )))
        }
        None => return Err(RasterError::MalformedHeader("missing magic".into())),
    };
    cursor.pos = 2;
    let width = cursor.field("width")?;
    let height = cursor.field("height")?;
    let maxval = cursor.field("maxval")?;
    if maxval != 255 {
        return Err(RasterError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the samples
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => {
            return Err(RasterError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| RasterError::MalformedHeader("dimensions overflow".into()))?;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(RasterError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    Raster::new(
        width as usize,
        height as usize,
        channels,
        payload[..expected].to_vec(),
    )
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_blanks(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn field(&mut self, name: &str) -> Result<u32, RasterError> {
        let start = self.pos;
        self.skip_blanks();
        if self.pos == start {
            return Err(RasterError::MalformedHeader(format!(
                "expected whitespace before {name}"
            )));
        }
        let digits_start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if digits_start == self.pos {
            return Err(RasterError::MalformedHeader(format!("non-numeric {name}")));
        }
        std::str::from_utf8(&self.bytes[digits_start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::MalformedHeader(format!("{name} out of range")))
    }
}

/// Canonical binary PNM encoding. The mask is not written; see [`save_mask`].
pub fn save_pnm(r: &Raster) -> Vec<u8> {
    let magic = if r.channels == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", r.width, r.height);
    let mut out = Vec::with_capacity(header.len() + r.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&r.pixels);
    out
}

/// Validity mask as a P5 image: 255 = valid, 0 = no-data.
pub fn save_mask(r: &Raster) -> Vec<u8> {
    let payload: Vec<u8> = match &r.mask {
        Some(m) => m.iter().map(|&v| if v { 255 } else { 0 }).collect(),
        None => vec![255; r.width * r.height],
    };
    let mask_img = Raster::new(r.width, r.height, 1, payload).expect("mask layout");
    save_pnm(&mask_img)
}

/// Reattaches a mask previously written by [`save_mask`]. Any nonzero sample is valid.
pub fn attach_mask(r: Raster, mask_pgm: &Raster) -> Result<Raster, RasterError> {
    if mask_pgm.channels != 1 || mask_pgm.width != r.width || mask_pgm.height != r.height {
        return Err(RasterError::InvalidLayout(
            "mask image does not match raster dimensions".into(),
        ));
    }
    let mask = mask_pgm.pixels.iter().map(|&v| v != 0).collect();
    r.with_mask(mask)
}

const BMP_HEADER_LEN: usize = 14 + 40;
const NO_DATA_RGB: [u8; 3] = [255, 0, 255];

/// Uncompressed 24-bit bottom-up BMP. Masked pixels are painted magenta.
pub fn encode_bmp(r: &Raster) -> Vec<u8> {
    let row_stride = (3 * r.width).div_ceil(4) * 4;
    let image_size = row_stride * r.height;
    let file_size = BMP_HEADER_LEN + image_size;
    let mut out = Vec::with_capacity(file_size);

    out.extend_from_slice(b"BM");
    out.extend_from_slice(&(file_size as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(BMP_HEADER_LEN as u32).to_le_bytes());

    out.extend_from_slice(&40u32.to_le_bytes());
    out.extend_from_slice(&(r.width as i32).to_le_bytes());
    out.extend_from_slice(&(r.height as i32).to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(image_size as u32).to_le_bytes());
    // 72 dpi
    out.extend_from_slice(&2835i32.to_le_bytes());
    out.extend_from_slice(&2835i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());

    let pad = row_stride - 3 * r.width;
    for y in (0..r.height).rev() {
        for x in 0..r.width {
            let rgb = if !r.is_valid(x, y) {
                NO_DATA_RGB
            } else if r.channels == 1 {
                let g = r.get(x, y, 0);
                [g, g, g]
            } else {
                [r.get(x, y, 0), r.get(x, y, 1), r.get(x, y, 2)]
            };
            out.extend_from_slice(&[rgb[2], rgb[1], rgb[0]]);
        }
        out.extend(std::iter::repeat_n(0u8, pad));
    }
    out
}
