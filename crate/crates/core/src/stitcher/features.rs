//! Harris corners with normalized-patch descriptors, and descriptor matching.

use crate::raster::Raster;

pub const DESCRIPTOR_LEN: usize = 64;
const HARRIS_K: f32 = 0.04;
const NMS_RADIUS: isize = 2;
/// Descriptor support spans offsets -8..=7 around the keypoint.
const PATCH_HALF: isize = 8;
const RELATIVE_THRESHOLD: f32 = 0.01;
const ABSOLUTE_THRESHOLD: f32 = 10.0;
pub const RATIO_TEST: f32 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    /// Subpixel column.
    pub x: f64,
    /// Subpixel row.
    pub y: f64,
    pub response: f32,
    /// Unit-norm (or all-zero for flat patches).
    pub descriptor: [f32; DESCRIPTOR_LEN],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f32,
}

/// Gray image with validity, promoted to f32.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
    valid: Vec<bool>,
}

impl Plane {
    fn from_raster(img: &Raster) -> Self {
        let gray = img.to_luma();
        let (w, h) = (gray.width(), gray.height());
        let valid = match gray.mask() {
            Some(m) => m.to_vec(),
            None => vec![true; w * h],
        };
        Self {
            w,
            h,
            data: gray.pixels().iter().map(|&v| v as f32).collect(),
            valid,
        }
    }

    /// Summed-area table of invalid pixels, (w+1) x (h+1).
    fn invalid_integral(&self) -> Vec<u32> {
        let stride = self.w + 1;
        let mut sat = vec![0u32; stride * (self.h + 1)];
        for y in 0..self.h {
            let mut row = 0u32;
            for x in 0..self.w {
                row += u32::from(!self.valid[y * self.w + x]);
                sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
            }
        }
        sat
    }
}

/// True when the rectangle [x0, x1) x [y0, y1) lies inside the image and is fully valid.
fn window_valid(sat: &[u32], w: usize, h: usize, x0: isize, y0: isize, x1: isize, y1: isize) -> bool {
    if x0 < 0 || y0 < 0 || x1 > w as isize || y1 > h as isize {
        return false;
    }
    let stride = w + 1;
    let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
    sat[y1 * stride + x1] + sat[y0 * stride + x0] == sat[y0 * stride + x1] + sat[y1 * stride + x0]
}

/// Harris response; `None` where the 7x7 support touches invalid pixels or the border.
fn harris_response(p: &Plane, sat: &[u32]) -> Vec<Option<f32>> {
    let (w, h) = (p.w, p.h);
    let mut ixx = vec![0f32; w * h];
    let mut iyy = vec![0f32; w * h];
    let mut ixy = vec![0f32; w * h];
    let at = |x: usize, y: usize| p.data[y * w + x];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            // Sobel normalized to a per-pixel derivative
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1))
                / 8.0;
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1))
                / 8.0;
            ixx[y * w + x] = gx * gx;
            iyy[y * w + x] = gy * gy;
            ixy[y * w + x] = gx * gy;
        }
    }
    const BINOMIAL: [f32; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut out = vec![None; w * h];
    for y in 3..h.saturating_sub(3) {
        for x in 3..w.saturating_sub(3) {
            let (xi, yi) = (x as isize, y as isize);
            if !window_valid(sat, w, h, xi - 3, yi - 3, xi + 4, yi + 4) {
                continue;
            }
            let (mut a, mut b, mut c) = (0f32, 0f32, 0f32);
            for (dy, wy) in BINOMIAL.iter().enumerate() {
                for (dx, wx) in BINOMIAL.iter().enumerate() {
                    let k = (y + dy - 2) * w + (x + dx - 2);
                    let wt = wx * wy / 256.0;
                    a += wt * ixx[k];
                    b += wt * iyy[k];
                    c += wt * ixy[k];
                }
            }
            let det = a * b - c * c;
            let tr = a + b;
            out[y * w + x] = Some(det - HARRIS_K * tr * tr);
        }
    }
    out
}

fn describe(p: &Plane, x: usize, y: usize) -> [f32; DESCRIPTOR_LEN] {
    let mut d = [0f32; DESCRIPTOR_LEN];
    let x0 = x as isize - PATCH_HALF;
    let y0 = y as isize - PATCH_HALF;
    for by in 0..8 {
        for bx in 0..8 {
            let mut s = 0.0;
            for oy in 0..2 {
                for ox in 0..2 {
                    let px = (x0 + 2 * bx + ox) as usize;
                    let py = (y0 + 2 * by + oy) as usize;
                    s += p.data[py * p.w + px];
                }
            }
            d[(by * 8 + bx) as usize] = s / 4.0;
        }
    }
    let mean = d.iter().sum::<f32>() / DESCRIPTOR_LEN as f32;
    d.iter_mut().for_each(|v| *v -= mean);
    let norm = d.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm < 1e-3 {
        return [0f32; DESCRIPTOR_LEN];
    }
    d.iter_mut().for_each(|v| *v /= norm);
    d
}

/// Vertex offset of the parabola through three samples, clamped to half a pixel.
fn parabolic_offset(left: f32, center: f32, right: f32) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5) as f64
}

/// Harris corners (5x5 non-maximum suppression), strongest `max_count` first.
///
/// Multi-channel input is reduced to luma. Masked pixels never contribute:
/// a keypoint's whole gradient window and descriptor patch must be valid.
pub fn detect_features(img: &Raster, max_count: usize) -> Vec<Keypoint> {
    let plane = Plane::from_raster(img);
    let (w, h) = (plane.w, plane.h);
    if w == 0 || h == 0 || max_count == 0 {
        return Vec::new();
    }
    let sat = plane.invalid_integral();
    let response = harris_response(&plane, &sat);
    let peak = response.iter().flatten().fold(0f32, |m, &r| m.max(r));
    let threshold = (peak * RELATIVE_THRESHOLD).max(ABSOLUTE_THRESHOLD);

    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let Some(r) = response[y * w + x] else {
                continue;
            };
            if r <= threshold {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            if !window_valid(&sat, w, h, xi - PATCH_HALF, yi - PATCH_HALF, xi + PATCH_HALF, yi + PATCH_HALF) {
                continue;
            }
            let mut is_max = true;
            'nms: for dy in -NMS_RADIUS..=NMS_RADIUS {
                for dx in -NMS_RADIUS..=NMS_RADIUS {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (xi + dx, yi + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    if let Some(nr) = response[ny as usize * w + nx as usize] {
                        // ties go to the earlier pixel in raster order
                        let earlier = (dy, dx) < (0, 0);
                        if nr > r || (nr == r && earlier) {
                            is_max = false;
                            break 'nms;
                        }
                    }
                }
            }
            if is_max {
                candidates.push((x, y, r));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    candidates.truncate(max_count);

    let resp = |x: usize, y: usize| response[y * w + x].unwrap_or(0.0);
    candidates
        .into_iter()
        .map(|(x, y, r)| {
            let ox = parabolic_offset(resp(x - 1, y), r, resp(x + 1, y));
            let oy = parabolic_offset(resp(x, y - 1), r, resp(x, y + 1));
            Keypoint {
                x: x as f64 + ox,
                y: y as f64 + oy,
                response: r,
                descriptor: describe(&plane, x, y),
            }
        })
        .collect()
}

fn distance_sq(a: &[f32; DESCRIPTOR_LEN], b: &[f32; DESCRIPTOR_LEN]) -> f32 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Index and squared distance of the nearest and second-nearest descriptor.
fn two_nearest(query: &Keypoint, pool: &[Keypoint]) -> Option<(usize, f32, f32)> {
    let mut best: Option<(usize, f32)> = None;
    let mut second = f32::INFINITY;
    for (j, k) in pool.iter().enumerate() {
        let d = distance_sq(&query.descriptor, &k.descriptor);
        match best {
            Some((_, bd)) if d >= bd => second = second.min(d),
            Some((_, bd)) => {
                second = bd;
                best = Some((j, d));
            }
            None => best = Some((j, d)),
        }
    }
    best.map(|(j, d)| (j, d, second))
}

/// Ratio-tested, mutually-nearest descriptor matches from `a` into `b`.
pub fn match_features(a: &[Keypoint], b: &[Keypoint]) -> Vec<Match> {
    let back: Vec<Option<usize>> = b
        .iter()
        .map(|kb| two_nearest(kb, a).map(|(i, _, _)| i))
        .collect();
    let ratio_sq = RATIO_TEST * RATIO_TEST;
    a.iter()
        .enumerate()
        .filter_map(|(i, ka)| {
            let (j, d1, d2) = two_nearest(ka, b)?;
            if d1 >= ratio_sq * d2 || back[j] != Some(i) {
                return None;
            }
            Some(Match {
                index_a: i,
                index_b: j,
                distance: d1.sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// `square`-px checkerboard, corners where four squares meet.
    fn checkerboard(size: usize, square: usize, offset: usize) -> Raster {
        let mut px = vec![0u8; size * size];
        for y in 0..size {
            for x in 0..size {
                let on = ((x + offset) / square + (y + offset) / square).is_multiple_of(2);
                px[y * size + x] = if on { 200 } else { 40 };
            }
        }
        Raster::new(size, size, 1, px).unwrap()
    }

    #[test]
    fn uniform_image_has_no_features() {
        assert!(detect_features(&Raster::filled(64, 64, 1, 90), 100).is_empty());
    }

    #[test]
    fn finds_checkerboard_corners() {
        // 8x8 squares of 16 px => 7x7 = 49 interior corners at multiples of 16,
        // located on the pixel boundary, i.e. at (16k - 0.5) in pixel-center coordinates.
        let img = checkerboard(128, 16, 0);
        let kps = detect_features(&img, 200);
        let truth: Vec<(f64, f64)> = (1..8)
            .flat_map(|i| (1..8).map(move |j| (16.0 * i as f64 - 0.5, 16.0 * j as f64 - 0.5)))
            .collect();
        let hits = truth
            .iter()
            .filter(|t| kps.iter().any(|k| (k.x - t.0).hypot(k.y - t.1) <= 1.0))
            .count();
        assert!(hits >= 40, "only {hits} of 49 corners found");
    }

    #[test]
    fn detection_is_deterministic() {
        let img = checkerboard(96, 12, 3);
        assert_eq!(detect_features(&img, 50), detect_features(&img, 50));
    }

    #[test]
    fn descriptors_are_unit_or_zero() {
        for k in detect_features(&checkerboard(96, 12, 5), 50) {
            let n: f32 = k.descriptor.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-4 || n == 0.0);
        }
    }

    #[test]
    fn masked_region_contributes_nothing() {
        let img = checkerboard(64, 16, 0);
        let mask: Vec<bool> = (0..64 * 64).map(|i| i % 64 < 32).collect();
        let masked = img.with_mask(mask).unwrap();
        for k in detect_features(&masked, 100) {
            // descriptor patch reaches x + 7, gradient window x + 3
            assert!(k.x + 7.0 < 32.0, "{k:?}");
        }
    }

    /// Smooth random blob field, deterministic in `seed`.
    pub(crate) fn blob_texture(w: usize, h: usize, seed: u64) -> Raster {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..(w * h / 150))
            .map(|_| {
                (
                    rng.random_range(0.0..w as f64),
                    rng.random_range(0.0..h as f64),
                    rng.random_range(1.5..4.0),
                    rng.random_range(-90.0..90.0),
                )
            })
            .collect();
        let px = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let v: f64 = blobs
                    .iter()
                    .map(|(cx, cy, s, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
                    .sum();
                (128.0 + v).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        Raster::new(w, h, 1, px).unwrap()
    }

    fn crop(img: &Raster, x0: usize, y0: usize, w: usize, h: usize) -> Raster {
        let px = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| img.get(x0 + x, y0 + y, 0))
            .collect();
        Raster::new(w, h, 1, px).unwrap()
    }

    #[test]
    fn matching_edge_cases() {
        let kps = detect_features(&blob_texture(120, 120, 1), 80);
        assert!(kps.len() > 20);
        assert!(match_features(&kps, &[]).is_empty());
        assert!(match_features(&[], &kps).is_empty());
        let m = match_features(&kps, &kps);
        assert_eq!(m.len(), kps.len());
        assert!(m.iter().all(|m| m.index_a == m.index_b && m.distance == 0.0));
    }

    #[test]
    fn shifted_views_match_correctly() {
        let scene = blob_texture(180, 140, 2);
        let a = crop(&scene, 0, 0, 160, 120);
        let b = crop(&scene, 5, 0, 160, 120);
        let ka = detect_features(&a, 300);
        let kb = detect_features(&b, 300);
        // keypoints of `a` whose shifted location stays inside `b` with room for the patch
        let shared: Vec<usize> = (0..ka.len())
            .filter(|&i| ka[i].x - 5.0 >= 10.0)
            .collect();
        let matches = match_features(&ka, &kb);
        let correct = matches
            .iter()
            .filter(|m| {
                let (p, q) = (&ka[m.index_a], &kb[m.index_b]);
                (p.x - 5.0 - q.x).hypot(p.y - q.y) < 0.5
            })
            .count();
        assert!(
            correct as f64 >= 0.8 * shared.len() as f64,
            "{correct} correct of {} shared",
            shared.len()
        );
    }
}
