//! Feathered compositing of registered frames into one geo-anchored mosaic.

use rayon::prelude::*;

use super::{Similarity2D, StitchError};
use crate::geodesy::GeoPoint;
use crate::raster::Raster;

/// Geo-anchor of a mosaic: a GPS position and the pixel (row, col) it falls on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapAnchor {
    pub point: GeoPoint,
    pub row: f64,
    pub col: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMap {
    pub image: Raster,
    pub anchor: MapAnchor,
    pub gsd: f64,
}

struct Placement<'a> {
    image: &'a Raster,
    to_local: Similarity2D,
    /// Output-frame bounding box, inclusive.
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

fn corners(img: &Raster) -> [(f64, f64); 4] {
    let (w, h) = ((img.width() as f64 - 1.0).max(0.0), (img.height() as f64 - 1.0).max(0.0));
    [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
}

/// Blends `images` (each with the transform taking its pixels into the first
/// image's frame) into one mosaic covering all transformed corners.
///
/// Overlaps are weighted by each contributor's distance to its own nearest
/// image edge. `anchor.row`/`anchor.col` are given in the first image and
/// are moved into mosaic coordinates.
pub fn composite(
    images: &[(Raster, Similarity2D)],
    anchor: MapAnchor,
    gsd: f64,
) -> Result<SurfaceMap, StitchError> {
    let Some((first, first_t)) = images.first() else {
        return Err(StitchError::EmptyInput);
    };
    if !(gsd > 0.0 && gsd.is_finite()) {
        return Err(StitchError::InvalidParameter(format!("gsd must be positive, got {gsd}")));
    }
    let channels = first.channels();
    if images.iter().any(|(r, _)| r.channels() != channels) {
        return Err(StitchError::ChannelMismatch);
    }

    let mut placements = Vec::with_capacity(images.len());
    for (img, t) in images {
        if img.width() == 0 || img.height() == 0 {
            continue;
        }
        let pts = corners(img).map(|c| t.apply(c));
        let fold = |f: fn(f64, f64) -> f64, sel: fn(&(f64, f64)) -> f64, init: f64| {
            pts.iter().map(sel).fold(init, f)
        };
        placements.push(Placement {
            image: img,
            to_local: t.inverse(),
            x0: fold(f64::min, |p| p.0, f64::INFINITY),
            x1: fold(f64::max, |p| p.0, f64::NEG_INFINITY),
            y0: fold(f64::min, |p| p.1, f64::INFINITY),
            y1: fold(f64::max, |p| p.1, f64::NEG_INFINITY),
        });
    }
    if placements.is_empty() {
        return Err(StitchError::EmptyInput);
    }
    // small slack keeps exact-integer corners from growing the extent by rounding noise
    const SNAP: f64 = 1e-6;
    let min_x = (placements.iter().map(|p| p.x0).fold(f64::INFINITY, f64::min) + SNAP).floor();
    let max_x = (placements.iter().map(|p| p.x1).fold(f64::NEG_INFINITY, f64::max) - SNAP).ceil();
    let min_y = (placements.iter().map(|p| p.y0).fold(f64::INFINITY, f64::min) + SNAP).floor();
    let max_y = (placements.iter().map(|p| p.y1).fold(f64::NEG_INFINITY, f64::max) - SNAP).ceil();
    let cols = (max_x - min_x) as usize + 1;
    let rows = (max_y - min_y) as usize + 1;

    let mut pixels = vec![0u8; rows * cols * channels];
    let mut mask = vec![false; rows * cols];
    pixels
        .par_chunks_mut(cols * channels)
        .zip(mask.par_chunks_mut(cols))
        .enumerate()
        .for_each(|(r, (px_row, mask_row))| {
            let y = min_y + r as f64;
            for c in 0..cols {
                let x = min_x + c as f64;
                let mut acc = [0.0f64; 3];
                let mut total = 0.0;
                for p in &placements {
                    if x < p.x0 - 1.0 || x > p.x1 + 1.0 || y < p.y0 - 1.0 || y > p.y1 + 1.0 {
                        continue;
                    }
                    let (lx, ly) = p.to_local.apply((x, y));
                    let Some(s) = p.image.sample_bilinear(lx, ly) else {
                        continue;
                    };
                    let (w, h) = (p.image.width() as f64, p.image.height() as f64);
                    let weight = (lx + 0.5).min(ly + 0.5).min(w - 0.5 - lx).min(h - 0.5 - ly);
                    for ch in 0..channels {
                        acc[ch] += weight * s[ch];
                    }
                    total += weight;
                }
                if total > 0.0 {
                    for ch in 0..channels {
                        px_row[c * channels + ch] = (acc[ch] / total).round().clamp(0.0, 255.0) as u8;
                    }
                    mask_row[c] = true;
                }
            }
        });

    let (ax, ay) = first_t.apply((anchor.col, anchor.row));
    let (ar, ac) = (ay - min_y, ax - min_x);
    let image = Raster::new(cols, rows, channels, pixels)
        .and_then(|r| r.with_mask(mask))
        .expect("mosaic layout");
    // trim the empty margin the snapped corner boxes leave, keeping the anchor pixel
    let (r0, r1, c0, c1) = valid_extent(&image, (ar.floor(), ac.floor()));
    let image = crop(&image, r0, r1, c0, c1);
    Ok(SurfaceMap {
        image,
        anchor: MapAnchor {
            point: anchor.point,
            row: ar - r0 as f64,
            col: ac - c0 as f64,
        },
        gsd,
    })
}

/// Inclusive row and column range of the valid pixels together with `keep`.
fn valid_extent(img: &Raster, keep: (f64, f64)) -> (usize, usize, usize, usize) {
    let (w, h) = (img.width(), img.height());
    let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64) as usize;
    let (kr, kc) = (clamp(keep.0, h), clamp(keep.1, w));
    let (mut r0, mut r1, mut c0, mut c1) = (kr, kr, kc, kc);
    for r in 0..h {
        for c in 0..w {
            if img.is_valid(c, r) {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    (r0, r1, c0, c1)
}

fn crop(img: &Raster, r0: usize, r1: usize, c0: usize, c1: usize) -> Raster {
    let (w, h, ch) = (c1 - c0 + 1, r1 - r0 + 1, img.channels());
    if (w, h) == (img.width(), img.height()) {
        return img.clone();
    }
    let mut px = Vec::with_capacity(w * h * ch);
    let mut mask = Vec::with_capacity(w * h);
    for r in r0..=r1 {
        let start = (r * img.width() + c0) * ch;
        px.extend_from_slice(&img.pixels()[start..start + w * ch]);
        mask.extend((c0..=c1).map(|c| img.is_valid(c, r)));
    }
    Raster::new(w, h, ch, px)
        .and_then(|r| r.with_mask(mask))
        .expect("crop layout")
}
