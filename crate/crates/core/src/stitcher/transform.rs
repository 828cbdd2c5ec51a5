//! 4-DOF similarity transforms and their robust estimation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StitchError;

pub const RANSAC_ITERATIONS: usize = 500;
pub const RANSAC_THRESHOLD_PX: f64 = 2.0;
pub const RANSAC_SEED: u64 = 0x5EED;

/// `p' = scale * R(rotation) * p + (tx, ty)`, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity2D {
    pub scale: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Similarity2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Similarity2D {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            tx,
            ty,
            ..Self::identity()
        }
    }

    /// Complex-multiplier form `a = scale * e^(i rotation)`.
    pub(super) fn multiplier(&self) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (self.scale * c, self.scale * s)
    }

    pub(super) fn from_multiplier(a: (f64, f64), t: (f64, f64)) -> Self {
        Self {
            scale: a.0.hypot(a.1),
            rotation: a.1.atan2(a.0),
            tx: t.0,
            ty: t.1,
        }
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (ar, ai) = self.multiplier();
        (
            ar * p.0 - ai * p.1 + self.tx,
            ai * p.0 + ar * p.1 + self.ty,
        )
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Similarity2D) -> Similarity2D {
        let (ar, ai) = self.multiplier();
        let (br, bi) = inner.multiplier();
        let t = self.apply((inner.tx, inner.ty));
        Self::from_multiplier((ar * br - ai * bi, ar * bi + ai * br), t)
    }

    pub fn inverse(&self) -> Similarity2D {
        let (ar, ai) = self.multiplier();
        let n = ar * ar + ai * ai;
        let inv = (ar / n, -ai / n);
        let t = (
            -(inv.0 * self.tx - inv.1 * self.ty),
            -(inv.1 * self.tx + inv.0 * self.ty),
        );
        Self::from_multiplier(inv, t)
    }
}

/// A point in one image and its counterpart in another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub from: (f64, f64),
    pub to: (f64, f64),
}

impl Correspondence {
    pub fn new(from: (f64, f64), to: (f64, f64)) -> Self {
        Self { from, to }
    }

    fn residual(&self, t: &Similarity2D) -> f64 {
        let p = t.apply(self.from);
        (p.0 - self.to.0).hypot(p.1 - self.to.1)
    }
}

const MIN_SPREAD: f64 = 1e-9;

fn solve_two_point(a: &Correspondence, b: &Correspondence) -> Option<Similarity2D> {
    let dz = (b.from.0 - a.from.0, b.from.1 - a.from.1);
    let dw = (b.to.0 - a.to.0, b.to.1 - a.to.1);
    let n = dz.0 * dz.0 + dz.1 * dz.1;
    if n < MIN_SPREAD {
        return None;
    }
    // multiplier = dw / dz
    let m = (
        (dw.0 * dz.0 + dw.1 * dz.1) / n,
        (dw.1 * dz.0 - dw.0 * dz.1) / n,
    );
    let t = (
        a.to.0 - (m.0 * a.from.0 - m.1 * a.from.1),
        a.to.1 - (m.1 * a.from.0 + m.0 * a.from.1),
    );
    Some(Similarity2D::from_multiplier(m, t))
}

/// Closed-form least-squares similarity over all given correspondences.
pub fn fit_least_squares(pairs: &[Correspondence]) -> Option<Similarity2D> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mut fx, mut fy, mut gx, mut gy) = (0.0, 0.0, 0.0, 0.0);
    for p in pairs {
        fx += p.from.0;
        fy += p.from.1;
        gx += p.to.0;
        gy += p.to.1;
    }
    let (fx, fy, gx, gy) = (fx / n, fy / n, gx / n, gy / n);
    let (mut num_r, mut num_i, mut den) = (0.0, 0.0, 0.0);
    for p in pairs {
        let z = (p.from.0 - fx, p.from.1 - fy);
        let w = (p.to.0 - gx, p.to.1 - gy);
        // w * conj(z)
        num_r += w.0 * z.0 + w.1 * z.1;
        num_i += w.1 * z.0 - w.0 * z.1;
        den += z.0 * z.0 + z.1 * z.1;
    }
    if den < MIN_SPREAD {
        return None;
    }
    let m = (num_r / den, num_i / den);
    let t = (gx - (m.0 * fx - m.1 * fy), gy - (m.1 * fx + m.0 * fy));
    Some(Similarity2D::from_multiplier(m, t))
}

fn inliers(pairs: &[Correspondence], t: &Similarity2D) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.residual(t) <= RANSAC_THRESHOLD_PX)
        .map(|(i, _)| i)
        .collect()
}

/// RANSAC over 2-point similarity hypotheses followed by a least-squares refit
/// on the consensus set. Returns the transform mapping `from` onto `to` and the
/// number of correspondences within the inlier threshold of it.
pub fn estimate_transform(
    pairs: &[Correspondence],
) -> Result<(Similarity2D, usize), StitchError> {
    if pairs.len() < 2 {
        return Err(StitchError::DegenerateInput(format!(
            "need at least 2 correspondences, got {}",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(RANSAC_SEED);
    let n = pairs.len() as u32;
    let mut best: Option<(Similarity2D, Vec<usize>)> = None;
    for _ in 0..RANSAC_ITERATIONS {
        let i = rng.random_range(0..n) as usize;
        let mut j = rng.random_range(0..n - 1) as usize;
        if j >= i {
            j += 1;
        }
        let Some(model) = solve_two_point(&pairs[i], &pairs[j]) else {
            continue;
        };
        let support = inliers(pairs, &model);
        if best.as_ref().is_none_or(|(_, b)| support.len() > b.len()) {
            best = Some((model, support));
        }
    }
    let Some((mut model, mut support)) = best else {
        return Err(StitchError::DegenerateInput(
            "all sampled correspondences coincide".into(),
        ));
    };
    // refit twice: the refined model can pick up borderline inliers
    for _ in 0..2 {
        let subset: Vec<Correspondence> = support.iter().map(|&k| pairs[k]).collect();
        let Some(refit) = fit_least_squares(&subset) else {
            break;
        };
        let refit_support = inliers(pairs, &refit);
        if refit_support.len() < support.len() {
            break;
        }
        model = refit;
        support = refit_support;
    }
    Ok((model, support.len()))
}
