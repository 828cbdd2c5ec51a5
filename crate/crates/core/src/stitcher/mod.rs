//! Semi-automatic mosaicking of perspective-corrected frames.
//!
//! Adjacent frames are first registered from image content (Harris corners,
//! patch descriptors, RANSAC similarity, then a photometric polish). When too
//! few inliers survive, the pair is placed by the offset between the two
//! geotags instead.

mod composite;
mod features;
mod refine;
mod transform;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ImageGeoTag;
use crate::geodesy::{to_local, GeoError, GeoPoint};
use crate::raster::Raster;

pub use composite::{composite, MapAnchor, SurfaceMap};
pub use refine::refine_alignment;
pub use features::{detect_features, match_features, Keypoint, Match, DESCRIPTOR_LEN, RATIO_TEST};
pub use transform::{
    estimate_transform, fit_least_squares, Correspondence, Similarity2D, RANSAC_ITERATIONS,
    RANSAC_SEED, RANSAC_THRESHOLD_PX,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StitchError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("nothing to composite")]
    EmptyInput,
    #[error("images disagree on channel count")]
    ChannelMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Inlier count below which a pair falls back to GPS placement.
pub const DEFAULT_TAU: usize = 12;
pub const DEFAULT_MAX_FEATURES: usize = 500;
/// Accepted scale band for frames flown at one altitude.
pub const SCALE_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationMethod {
    FeatureBased,
    GpsFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationResult {
    /// Maps pixels of the `next` frame into the `base` frame.
    pub transform: Similarity2D,
    pub inlier_count: usize,
    pub method: RegistrationMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationConfig {
    pub tau: usize,
    pub max_features: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            max_features: DEFAULT_MAX_FEATURES,
        }
    }
}

/// Pixel offset of `b`'s position relative to `a` on a north-up grid
/// (rows grow southward).
pub fn gps_offset(
    tag_a: &ImageGeoTag,
    tag_b: &ImageGeoTag,
    anchor: GeoPoint,
    gsd: f64,
) -> Result<(f64, f64), StitchError> {
    if !(gsd > 0.0 && gsd.is_finite()) {
        return Err(StitchError::InvalidParameter(format!("gsd must be positive, got {gsd}")));
    }
    let a = to_local(tag_a.position(), anchor)?;
    let b = to_local(tag_b.position(), anchor)?;
    Ok(((b.east - a.east) / gsd, -(b.north - a.north) / gsd))
}

/// Registers `next` onto `base`. Both frames must share one north-up grid
/// convention and ground sampling distance. Only invalid geotags can fail.
pub fn register_pair(
    base: &Raster,
    next: &Raster,
    tag_base: &ImageGeoTag,
    tag_next: &ImageGeoTag,
    gsd: f64,
    anchor: GeoPoint,
    config: &RegistrationConfig,
) -> Result<RegistrationResult, StitchError> {
    if let Some((transform, inliers)) = register_by_features(base, next, config) {
        return Ok(RegistrationResult {
            transform,
            inlier_count: inliers,
            method: RegistrationMethod::FeatureBased,
        });
    }
    let (dx, dy) = gps_offset(tag_base, tag_next, anchor, gsd)?;
    Ok(RegistrationResult {
        transform: Similarity2D::translation(dx, dy),
        inlier_count: 0,
        method: RegistrationMethod::GpsFallback,
    })
}

fn register_by_features(
    base: &Raster,
    next: &Raster,
    config: &RegistrationConfig,
) -> Option<(Similarity2D, usize)> {
    let kb = detect_features(base, config.max_features);
    let kn = detect_features(next, config.max_features);
    let pairs: Vec<Correspondence> = match_features(&kn, &kb)
        .iter()
        .map(|m| {
            let (p, q) = (&kn[m.index_a], &kb[m.index_b]);
            Correspondence::new((p.x, p.y), (q.x, q.y))
        })
        .collect();
    let (transform, inliers) = estimate_transform(&pairs).ok()?;
    let scale_ok = (SCALE_RANGE.0..=SCALE_RANGE.1).contains(&transform.scale);
    if inliers < config.tau || !scale_ok {
        return None;
    }
    let polished = refine_alignment(base, next, &transform).unwrap_or(transform);
    Some((polished, inliers))
}
