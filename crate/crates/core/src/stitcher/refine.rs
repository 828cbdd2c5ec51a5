//! Photometric polishing of a feature-based registration.
//!
//! Keypoint positions on resampled orthophotos scatter by a few tenths of a
//! pixel, and over a long pass those errors compound through the chained
//! transforms. A Gauss-Newton similarity fit on the overlapping pixels,
//! started from the RANSAC estimate, removes most of that scatter.

use nalgebra::{Matrix4, Vector4};

use super::transform::RANSAC_THRESHOLD_PX;
use super::Similarity2D;
use crate::raster::Raster;

const BLUR_SIGMA: f64 = 1.0;
const MAX_ITERATIONS: usize = 30;
/// Huber knee on intensity residuals, gray levels.
const HUBER_K: f64 = 12.0;
const MIN_OVERLAP_PX: usize = 400;
const CONVERGED_PX: f64 = 1e-4;

/// Smoothed gray plane with its own validity (the whole kernel support must be valid).
struct Smoothed {
    w: usize,
    h: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl Smoothed {
    fn new(img: &Raster) -> Self {
        let gray = img.to_luma();
        let (w, h) = (gray.width(), gray.height());
        let radius = (3.0 * BLUR_SIGMA).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|d| (-(d * d) as f64 / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let valid_in: Vec<bool> = (0..w * h).map(|i| gray.is_valid(i % w, i / w)).collect();

        // separable pass; a sample stays valid only if every tap it used was valid
        let pass = |src: &[f64], ok: &[bool], horizontal: bool| {
            let mut out = vec![0.0; w * h];
            let mut out_ok = vec![false; w * h];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    let mut good = true;
                    for (k, wt) in kernel.iter().enumerate() {
                        let d = k as isize - radius;
                        let (sx, sy) = if horizontal {
                            (x as isize + d, y as isize)
                        } else {
                            (x as isize, y as isize + d)
                        };
                        if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                            good = false;
                            break;
                        }
                        let i = sy as usize * w + sx as usize;
                        if !ok[i] {
                            good = false;
                            break;
                        }
                        acc += wt * src[i];
                    }
                    out[y * w + x] = acc / norm;
                    out_ok[y * w + x] = good;
                }
            }
            (out, out_ok)
        };
        let raw: Vec<f64> = gray.pixels().iter().map(|&v| v as f64).collect();
        let (tmp, tmp_ok) = pass(&raw, &valid_in, true);
        let (data, valid) = pass(&tmp, &tmp_ok, false);
        Self { w, h, data, valid }
    }

    /// Bilinear value and gradient at (x, y); `None` unless the 4x4 stencil is valid.
    fn sample(&self, x: f64, y: f64) -> Option<(f64, f64, f64)> {
        let (x0, y0) = (x.floor(), y.floor());
        if x0 < 1.0 || y0 < 1.0 || x0 + 2.0 >= self.w as f64 || y0 + 2.0 >= self.h as f64 {
            return None;
        }
        let (xi, yi) = (x0 as usize, y0 as usize);
        let (fx, fy) = (x - x0, y - y0);
        let at = |c: usize, r: usize| {
            let i = r * self.w + c;
            self.valid[i].then(|| self.data[i])
        };
        let bilinear = |c: usize, r: usize| -> Option<f64> {
            let (a, b) = (at(c, r)?, at(c + 1, r)?);
            let (d, e) = (at(c, r + 1)?, at(c + 1, r + 1)?);
            Some((a * (1.0 - fx) + b * fx) * (1.0 - fy) + (d * (1.0 - fx) + e * fx) * fy)
        };
        let value = bilinear(xi, yi)?;
        // central differences of the interpolant's neighbors
        let gx = (bilinear(xi + 1, yi)? - bilinear(xi - 1, yi)?) / 2.0;
        let gy = (bilinear(xi, yi + 1)? - bilinear(xi, yi - 1)?) / 2.0;
        Some((value, gx, gy))
    }
}

/// Refines `initial` (mapping `next` pixels into `base`) by minimizing the
/// robust intensity difference over the overlap. Returns `None` when the
/// overlap is too small, the system is singular, or the result strays more
/// than the RANSAC inlier threshold from `initial` anywhere on `next`.
pub fn refine_alignment(base: &Raster, next: &Raster, initial: &Similarity2D) -> Option<Similarity2D> {
    let b = Smoothed::new(base);
    let n = Smoothed::new(next);
    let (cx, cy) = (n.w as f64 / 2.0, n.h as f64 / 2.0);
    // parameters in centered coordinates: X = a x' - b y' + tx, Y = b x' + a y' + ty
    let (a0, b0) = initial.multiplier();
    let start = initial.apply((cx, cy));
    let mut p = Vector4::new(a0, b0, start.0, start.1);
    let samples: Vec<(f64, f64, f64)> = (0..n.w * n.h)
        .filter(|&i| n.valid[i])
        .map(|i| ((i % n.w) as f64 - cx, (i / n.w) as f64 - cy, n.data[i]))
        .collect();

    for _ in 0..MAX_ITERATIONS {
        let mut hess = Matrix4::<f64>::zeros();
        let mut grad = Vector4::<f64>::zeros();
        let mut used = 0usize;
        for &(x, y, target) in &samples {
            let wx = p[0] * x - p[1] * y + p[2];
            let wy = p[1] * x + p[0] * y + p[3];
            let Some((v, gx, gy)) = b.sample(wx, wy) else {
                continue;
            };
            let r = v - target;
            let weight = if r.abs() <= HUBER_K { 1.0 } else { HUBER_K / r.abs() };
            let j = Vector4::new(gx * x + gy * y, -gx * y + gy * x, gx, gy);
            hess += weight * j * j.transpose();
            grad += weight * r * j;
            used += 1;
        }
        if used < MIN_OVERLAP_PX {
            return None;
        }
        let step = hess.lu().solve(&-grad)?;
        p += step;
        let reach = cx.hypot(cy);
        if (step[0].abs() + step[1].abs()) * reach + step[2].abs() + step[3].abs() < CONVERGED_PX {
            break;
        }
    }

    let centered = Similarity2D::from_multiplier((p[0], p[1]), (p[2], p[3]));
    let refined = centered.compose(&Similarity2D::translation(-cx, -cy));
    let corners = [(0.0, 0.0), (n.w as f64, 0.0), (0.0, n.h as f64), (n.w as f64, n.h as f64)];
    let stray = corners.iter().fold(0.0f64, |m, &c| {
        let (u, v) = (refined.apply(c), initial.apply(c));
        m.max((u.0 - v.0).hypot(u.1 - v.1))
    });
    (stray.is_finite() && stray <= RANSAC_THRESHOLD_PX).then_some(refined)
}
