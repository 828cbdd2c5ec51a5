//! Synthetic ground scenes and camera flights with known ground truth.
//!
//! Views are rendered through a matrix pinhole model (rotation plus camera
//! center, read out on an equiangular pixel grid). That path shares no code
//! with the trigonometric mapping in [`crate::projection`], so each can check
//! the other.

mod dataset;

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{DefectType, ImageGeoTag};
use crate::geodesy::{to_geo, GeoError, GeoPoint, LocalPoint};
use crate::projection::{
    footprint_bounds, CameraRig, GroundBounds, GroundPoint, SourcePixel, ANGLE_TOLERANCE,
};
use crate::raster::Raster;

pub use dataset::{
    dataset_scene, write_dataset, DatasetConfig, GroundTruth, TruthDefect, PHASE1_MANIFEST,
    PHASE2_MANIFEST, TRUTH_FILE,
};

/// Gray level of pixels whose ray never meets the ground.
pub const SKY_VALUE: u8 = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("camera footprint reaches the horizon")]
    FootprintUnbounded,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundDefect {
    pub x: f64,
    pub y: f64,
    pub kind: DefectType,
}

impl GroundDefect {
    pub fn position(&self) -> GroundPoint {
        GroundPoint::new(self.x, self.y)
    }
}

/// Textured ground rectangle. Texel (col, row) is centered on
/// `x = min_x + (col + 0.5) / texels_per_m`, `y = max_y - (row + 0.5) / texels_per_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundScene {
    pub texture: Raster,
    pub extent: GroundBounds,
    pub texels_per_m: f64,
    /// Geographic position of the ground origin (x = 0, y = 0).
    pub anchor: GeoPoint,
    pub defects: Vec<GroundDefect>,
}

impl GroundScene {
    /// Bilinear texture lookup; 0 (black) outside the texture.
    pub fn sample(&self, g: GroundPoint) -> f64 {
        let col = (g.x - self.extent.min_x) * self.texels_per_m - 0.5;
        let row = (self.extent.max_y - g.y) * self.texels_per_m - 0.5;
        self.texture.sample_gray(col, row).unwrap_or(0.0)
    }
}

/// Camera-to-world rotation rows (forward, left, up) for the given pitch and yaw.
fn camera_rotation(rig: &CameraRig) -> Matrix3<f64> {
    let (st, ct) = rig.pitch.sin_cos();
    let (sg, cg) = rig.yaw.sin_cos();
    Matrix3::new(
        ct * cg, ct * sg, -st, //
        -sg, cg, 0.0, //
        st * cg, st * sg, ct,
    )
}

/// 3x4 projection `[R | -R C]` taking homogeneous world points into camera coordinates.
fn projection_matrix(rig: &CameraRig) -> Matrix3x4<f64> {
    let r = camera_rotation(rig);
    let center = Vector3::new(rig.pos_x, rig.pos_y, rig.height);
    let t = -(r * center);
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    p.set_column(3, &t);
    p
}

/// Pixel imaging ground point `g` under the matrix pinhole model, `None` when out of view.
pub fn pinhole_project(rig: &CameraRig, g: GroundPoint) -> Option<SourcePixel> {
    let cam = projection_matrix(rig) * Vector4::new(g.x, g.y, 0.0, 1.0);
    let (st, ct) = rig.pitch.sin_cos();
    // decompose the camera-frame ray into vertical and heading-aligned horizontal parts
    let vertical = -cam.x * st + cam.z * ct;
    let forward = cam.x * ct + cam.z * st;
    let lateral = cam.y;
    let horizontal = forward.hypot(lateral);
    if horizontal == 0.0 {
        return None;
    }
    let depression = (-vertical).atan2(horizontal);
    let rel_azimuth = lateral.atan2(forward);
    let alpha = rig.half_aperture;
    if rel_azimuth.abs() > alpha + ANGLE_TOLERANCE {
        return None;
    }
    let top = rig.pitch - alpha;
    if depression < top - ANGLE_TOLERANCE || depression > rig.pitch + alpha + ANGLE_TOLERANCE {
        return None;
    }
    let u = (depression - top) / (2.0 * alpha / (rig.rows - 1) as f64);
    let v = (rel_azimuth + alpha) / (2.0 * alpha / (rig.cols - 1) as f64);
    Some(SourcePixel {
        u: u.clamp(0.0, (rig.rows - 1) as f64),
        v: v.clamp(0.0, (rig.cols - 1) as f64),
    })
}

/// World-frame ray through pixel (u, v), built from the camera axes.
fn pixel_ray(rig: &CameraRig, u: f64, v: f64) -> (f64, Vector3<f64>) {
    let alpha = rig.half_aperture;
    let depression = rig.pitch - alpha + u * 2.0 * alpha / (rig.rows - 1) as f64;
    let rel_azimuth = -alpha + v * 2.0 * alpha / (rig.cols - 1) as f64;
    let r = camera_rotation(rig);
    // direction in a heading-aligned frame, then rotated out of the pitched camera frame
    let (sd, cd) = depression.sin_cos();
    let (sa, ca) = rel_azimuth.sin_cos();
    let (st, ct) = rig.pitch.sin_cos();
    let horiz = Vector3::new(cd * ca, cd * sa, -sd);
    let cam = Vector3::new(horiz.x * ct - horiz.z * st, horiz.y, horiz.x * st + horiz.z * ct);
    (depression, r.transpose() * cam)
}

/// Renders what `rig` sees of `scene`.
pub fn render_view(rig: &CameraRig, scene: &GroundScene) -> Raster {
    let (rows, cols) = (rig.rows, rig.cols);
    let mut px = vec![0u8; rows * cols];
    px.par_chunks_mut(cols).enumerate().for_each(|(u, row)| {
        for (v, out) in row.iter_mut().enumerate() {
            let (depression, dir) = pixel_ray(rig, u as f64, v as f64);
            if depression <= 0.0 || dir.z >= 0.0 {
                *out = SKY_VALUE;
                continue;
            }
            let t = rig.height / -dir.z;
            let g = GroundPoint::new(rig.pos_x + t * dir.x, rig.pos_y + t * dir.y);
            *out = scene.sample(g).round().clamp(0.0, 255.0) as u8;
        }
    });
    Raster::new(cols, rows, 1, px).expect("view layout")
}

/// Smooth value noise on a square lattice, deterministic in its RNG.
struct ValueNoise {
    cell: f64,
    nx: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, width_m: f64, height_m: f64, cell: f64) -> Self {
        let nx = (width_m / cell).ceil() as usize + 2;
        let ny = (height_m / cell).ceil() as usize + 2;
        let values = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { cell, nx, values }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = (x / self.cell, y / self.cell);
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
        let v = |i: usize, j: usize| self.values[j * self.nx + i];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Parameters of [`make_deck_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeckSceneConfig {
    pub length_m: f64,
    pub width_m: f64,
    pub texels_per_m: f64,
    pub n_defects: usize,
    pub seed: u64,
    /// Uniform deck with only delamination blobs, like a thermal frame of sound concrete.
    pub featureless: bool,
    pub anchor: GeoPoint,
    /// Range of x where defects may be placed; defaults to the deck less 1 m at each end.
    pub defect_x: Option<(f64, f64)>,
    /// Defects satisfy |y| <= this; defaults to a quarter of the deck width.
    pub defect_half_band: Option<f64>,
}

impl DeckSceneConfig {
    pub fn new(length_m: f64, width_m: f64, texels_per_m: f64, n_defects: usize, seed: u64) -> Self {
        Self {
            length_m,
            width_m,
            texels_per_m,
            n_defects,
            seed,
            featureless: false,
            anchor: GeoPoint {
                lat: 40.8136,
                lon: -96.7026,
            },
            defect_x: None,
            defect_half_band: None,
        }
    }
}

/// Margin of shoulder around the deck, as a fraction of deck width.
const SHOULDER_FRACTION: f64 = 0.5;
const BLOB_SIGMA_M: f64 = 0.35;
const BLOB_DEPTH: f64 = 100.0;
/// Gray level of the flat disk around each blob and of featureless decks.
pub const BLOB_BACKGROUND: f64 = 128.0;
/// Radius of the flat disk around each blob, meters.
pub const BLOB_CALM_M: f64 = 1.2;
const DEFECT_SPACING_M: f64 = 3.0;
const CRACK_HALF_WIDTH_M: f64 = 0.03;
const SPECKLES_PER_M2: f64 = 6.0;
const SPECKLE_CLEARANCE_M: f64 = BLOB_CALM_M + 0.3;

struct Crack {
    vertices: Vec<(f64, f64)>,
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Fraction of a texel covered by a band of half-width `half` around distance 0.
fn coverage(dist: f64, half: f64, texel: f64) -> f64 {
    ((half - dist) / texel + 0.5).clamp(0.0, 1.0)
}

/// Deck along +x from x = 0 to `length_m`, centered on y = 0, surrounded by shoulders.
///
/// Textured decks carry speckle, dashed lane lines, edge lines and a
/// checkerboard calibration target near the start. Defects alternate between
/// dark Gaussian delamination blobs and thin crack polylines (featureless
/// decks get blobs only), kept at least 3 m apart inside the placement region
/// (by default the central half of the deck width).
pub fn make_deck_scene(cfg: &DeckSceneConfig) -> Result<GroundScene, SynthError> {
    if !(cfg.length_m > 0.0 && cfg.width_m > 0.0 && cfg.texels_per_m > 0.0) {
        return Err(SynthError::InvalidParameter(
            "deck dimensions and texel density must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let margin = SHOULDER_FRACTION * cfg.width_m;
    let extent = GroundBounds {
        min_x: -margin,
        max_x: cfg.length_m + margin,
        min_y: -cfg.width_m / 2.0 - margin,
        max_y: cfg.width_m / 2.0 + margin,
    };
    let tpm = cfg.texels_per_m;
    let cols = ((extent.max_x - extent.min_x) * tpm).round() as usize;
    let rows = ((extent.max_y - extent.min_y) * tpm).round() as usize;

    let span_x = extent.max_x - extent.min_x;
    let span_y = extent.max_y - extent.min_y;
    let coarse = ValueNoise::new(&mut rng, span_x, span_y, 1.2);
    let fine = ValueNoise::new(&mut rng, span_x, span_y, 0.45);

    let mut defects = Vec::with_capacity(cfg.n_defects);
    let mut cracks = Vec::new();
    let inset = (1.0f64).min(cfg.length_m / 4.0);
    let (x_lo, x_hi) = cfg.defect_x.unwrap_or((inset, cfg.length_m - inset));
    let band = cfg.defect_half_band.unwrap_or(cfg.width_m / 4.0);
    if cfg.n_defects > 0 && !(x_lo < x_hi && band >= 0.0) {
        return Err(SynthError::InvalidParameter("empty defect placement region".into()));
    }
    let mut attempts = 0;
    while defects.len() < cfg.n_defects {
        attempts += 1;
        let x = rng.random_range(x_lo..x_hi);
        let y = rng.random_range(-band..=band);
        let spaced = defects
            .iter()
            .all(|d: &GroundDefect| (d.x - x).hypot(d.y - y) >= DEFECT_SPACING_M);
        if !spaced && attempts < 10_000 {
            continue;
        }
        let kind = if cfg.featureless || defects.len() % 2 == 0 {
            DefectType::Delamination
        } else {
            DefectType::Crack
        };
        if kind == DefectType::Crack {
            // random walk of four segments whose middle vertex is the recorded position
            let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
            let mut half = |sign: f64, rng: &mut ChaCha8Rng| {
                let mut pts = vec![(x, y)];
                for _ in 0..2 {
                    heading += rng.random_range(-0.6..0.6);
                    let last = *pts.last().unwrap();
                    pts.push((last.0 + sign * 0.4 * heading.cos(), last.1 + sign * 0.4 * heading.sin()));
                }
                pts
            };
            let mut forward = half(1.0, &mut rng);
            let mut backward = half(-1.0, &mut rng);
            backward.reverse();
            backward.pop();
            backward.append(&mut forward);
            cracks.push(Crack { vertices: backward });
        }
        defects.push(GroundDefect { x, y, kind });
    }

    // aggregate speckles give the corner detector something to hold on to;
    // they stay clear of the blobs so fiducial centroids remain unbiased
    let mut speckles = Vec::new();
    if !cfg.featureless {
        let count = (SPECKLES_PER_M2 * span_x * span_y).round() as usize;
        for _ in 0..count {
            let sx = rng.random_range(extent.min_x..extent.max_x);
            let sy = rng.random_range(extent.min_y..extent.max_y);
            let radius = rng.random_range(0.04..0.12);
            let delta = if rng.random_bool(0.5) { 70.0 } else { -70.0 };
            let near_blob = defects.iter().any(|d| {
                d.kind == DefectType::Delamination && (d.x - sx).hypot(d.y - sy) < SPECKLE_CLEARANCE_M
            });
            let on_target = (0.8..3.2).contains(&sx) && (-1.2..1.2).contains(&sy);
            if !near_blob && !on_target {
                speckles.push((sx, sy, radius, delta));
            }
        }
    }
    let bucket_cols = span_x.ceil() as usize + 1;
    let bucket_rows = span_y.ceil() as usize + 1;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); bucket_cols * bucket_rows];
    let bucket_of = |x: f64, y: f64| {
        let bx = ((x - extent.min_x).max(0.0) as usize).min(bucket_cols - 1);
        let by = ((y - extent.min_y).max(0.0) as usize).min(bucket_rows - 1);
        by * bucket_cols + bx
    };
    for (i, &(sx, sy, radius, _)) in speckles.iter().enumerate() {
        let mut touched: Vec<usize> = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
            .iter()
            .map(|(ox, oy)| bucket_of(sx + ox * radius, sy + oy * radius))
            .collect();
        touched.sort_unstable();
        touched.dedup();
        for b in touched {
            buckets[b].push(i);
        }
    }

    let texel = 1.0 / tpm;
    let half_deck = cfg.width_m / 2.0;
    let lane_y = cfg.width_m / 6.0;
    let mut px = vec![0u8; rows * cols];
    px.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
        let y = extent.max_y - (r as f64 + 0.5) * texel;
        for (c, out) in row.iter_mut().enumerate() {
            let x = extent.min_x + (c as f64 + 0.5) * texel;
            let on_deck = (0.0..=cfg.length_m).contains(&x) && y.abs() <= half_deck;
            let mut v = if cfg.featureless {
                BLOB_BACKGROUND
            } else if on_deck {
                let mut v = 130.0 + 28.0 * coarse.at(x - extent.min_x, y - extent.min_y)
                    + 14.0 * fine.at(x - extent.min_x, y - extent.min_y);
                // dashed lane lines: 3 m painted, 2 m gap
                let dash = (x.rem_euclid(5.0) < 3.0) as u8 as f64;
                for ly in [-lane_y, lane_y] {
                    v += (230.0 - v) * dash * coverage((y - ly).abs(), 0.075, texel);
                }
                // solid edge lines
                v += (230.0 - v) * coverage((y.abs() - (half_deck - 0.3)).abs(), 0.06, texel);
                // 4x4 checkerboard of 0.5 m squares starting 1 m onto the deck
                if (1.0..3.0).contains(&x) && (-1.0..1.0).contains(&y) {
                    let on = (((x - 1.0) / 0.5).floor() + ((y + 1.0) / 0.5).floor()) as i64 % 2 == 0;
                    v = if on { 190.0 } else { 70.0 };
                }
                v
            } else {
                70.0 + 20.0 * coarse.at(x - extent.min_x, y - extent.min_y)
            };
            for &i in &buckets[bucket_of(x, y)] {
                let (sx, sy, radius, delta) = speckles[i];
                v += delta * coverage((x - sx).hypot(y - sy), radius, texel);
            }
            // flat surround keeps blob centroids measurable against a known level
            for d in &defects {
                if d.kind == DefectType::Delamination {
                    let t = (((d.x - x).hypot(d.y - y) - BLOB_CALM_M) / 0.2).clamp(0.0, 1.0);
                    let calm = 1.0 - t * t * (3.0 - 2.0 * t);
                    v += (BLOB_BACKGROUND - v) * calm;
                }
            }
            for d in &defects {
                if d.kind == DefectType::Delamination {
                    let r2 = (x - d.x).powi(2) + (y - d.y).powi(2);
                    v -= BLOB_DEPTH * (-r2 / (2.0 * BLOB_SIGMA_M * BLOB_SIGMA_M)).exp();
                }
            }
            for crack in &cracks {
                let dist = crack
                    .vertices
                    .windows(2)
                    .map(|s| segment_distance((x, y), s[0], s[1]))
                    .fold(f64::INFINITY, f64::min);
                v += (35.0 - v) * coverage(dist, CRACK_HALF_WIDTH_M, texel);
            }
            *out = v.round().clamp(0.0, 255.0) as u8;
        }
    });

    Ok(GroundScene {
        texture: Raster::new(cols, rows, 1, px).expect("texture layout"),
        extent,
        texels_per_m: tpm,
        anchor: cfg.anchor,
        defects,
    })
}

/// Smoothed checkerboard covering `extent`; corners at integer multiples of `square_m`.
///
/// Edges are raised-cosine ramps `ramp_m` wide, so the pattern is band-limited
/// enough to survive perspective resampling.
pub fn make_checkerboard_scene(
    extent: GroundBounds,
    square_m: f64,
    ramp_m: f64,
    texels_per_m: f64,
    anchor: GeoPoint,
) -> GroundScene {
    let cols = ((extent.max_x - extent.min_x) * texels_per_m).round() as usize;
    let rows = ((extent.max_y - extent.min_y) * texels_per_m).round() as usize;
    let texel = 1.0 / texels_per_m;
    // signed square wave in [-1, 1] with smooth transitions at multiples of square_m
    let wave = |t: f64| {
        let phase = t.rem_euclid(2.0 * square_m);
        let edge_dist = |e: f64| (phase - e).abs();
        let d = edge_dist(0.0).min(edge_dist(square_m)).min(edge_dist(2.0 * square_m));
        let sign = if phase < square_m { 1.0 } else { -1.0 };
        if d >= ramp_m / 2.0 {
            sign
        } else {
            sign * (std::f64::consts::PI * d / ramp_m).sin()
        }
    };
    let mut px = vec![0u8; rows * cols];
    px.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
        let y = extent.max_y - (r as f64 + 0.5) * texel;
        for (c, out) in row.iter_mut().enumerate() {
            let x = extent.min_x + (c as f64 + 0.5) * texel;
            *out = (128.0 + 90.0 * wave(x) * wave(y)).round() as u8;
        }
    });
    GroundScene {
        texture: Raster::new(cols, rows, 1, px).expect("texture layout"),
        extent,
        texels_per_m,
        anchor,
        defects: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightPlan {
    /// Rig template; `pos_x`/`pos_y` are ignored in favor of the waypoints.
    pub rig: CameraRig,
    /// Camera (x, y) ground positions in scene coordinates.
    pub waypoints: Vec<(f64, f64)>,
    /// Yaw per waypoint, radians.
    pub headings: Vec<f64>,
    pub overlap: f64,
    /// Footprint extent along the flight axis.
    pub footprint_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightView {
    pub image: Raster,
    pub geotag: ImageGeoTag,
    /// True rig, positioned at the waypoint.
    pub rig: CameraRig,
}

/// Compass heading (clockwise from north) of a counter-clockwise-from-east yaw.
pub fn heading_deg_of_yaw(yaw: f64) -> f64 {
    (90.0 - yaw.to_degrees()).rem_euclid(360.0)
}

/// Flies `views` frames along the deck axis (+x) at constant height and heading.
///
/// The first footprint starts at the deck start; waypoint spacing is
/// `(1 - overlap)` times the footprint length along x. Geotags are the true
/// camera positions plus Gaussian noise of `gps_noise_sigma` meters per axis.
pub fn make_flight(
    scene: &GroundScene,
    template: &CameraRig,
    views: usize,
    overlap: f64,
    gps_noise_sigma: f64,
    seed: u64,
) -> Result<(FlightPlan, Vec<FlightView>), SynthError> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(SynthError::InvalidParameter(format!(
            "overlap must lie in [0, 1), got {overlap}"
        )));
    }
    if !(gps_noise_sigma >= 0.0 && gps_noise_sigma.is_finite()) {
        return Err(SynthError::InvalidParameter("gps noise must be >= 0".into()));
    }
    if views == 0 {
        return Err(SynthError::InvalidParameter("need at least one view".into()));
    }
    let centered = template.at(0.0, 0.0);
    let bounds = footprint_bounds(&centered).ok_or(SynthError::FootprintUnbounded)?;
    let length = bounds.max_x - bounds.min_x;
    let spacing = (1.0 - overlap) * length;
    let start = -bounds.min_x;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, gps_noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut waypoints = Vec::with_capacity(views);
    let mut out = Vec::with_capacity(views);
    for i in 0..views {
        let wp = (start + i as f64 * spacing, 0.0);
        let rig = template.at(wp.0, wp.1);
        let (ne, nn) = if gps_noise_sigma > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        let pos = to_geo(LocalPoint::new(wp.0 + ne, wp.1 + nn), scene.anchor)?;
        let geotag = ImageGeoTag {
            lat: pos.lat,
            lon: pos.lon,
            alt_m: rig.height,
            heading_deg: heading_deg_of_yaw(rig.yaw),
            timestamp: format!("2018-06-01T10:{:02}:{:02}Z", (2 * i) / 60, (2 * i) % 60),
        };
        out.push(FlightView {
            image: render_view(&rig, scene),
            geotag,
            rig,
        });
        waypoints.push(wp);
    }
    Ok((
        FlightPlan {
            rig: *template,
            headings: vec![template.yaw; views],
            waypoints,
            overlap,
            footprint_length: length,
        },
        out,
    ))
}

/// Square close-up of the scene texture centered on `g`, `size_px` texels wide.
pub fn closeup(scene: &GroundScene, g: GroundPoint, size_px: usize) -> Raster {
    let texel = 1.0 / scene.texels_per_m;
    let half = size_px as f64 / 2.0;
    let mut px = Vec::with_capacity(size_px * size_px);
    for r in 0..size_px {
        for c in 0..size_px {
            let p = GroundPoint::new(
                g.x + (c as f64 - half + 0.5) * texel,
                g.y - (r as f64 - half + 0.5) * texel,
            );
            px.push(scene.sample(p).round() as u8);
        }
    }
    Raster::new(size_px, size_px, 1, px).expect("closeup layout")
}

/// Oblique rig used by the CLI when no camera file is given: 10 m up,
/// pitched 60 degrees down, 25 degree half aperture.
pub fn default_rig(rows: usize, cols: usize) -> CameraRig {
    CameraRig::new(
        0.0,
        0.0,
        10.0,
        60f64.to_radians(),
        0.0,
        25f64.to_radians(),
        rows,
        cols,
    )
    .expect("valid default rig")
}

/// Random rig within the oblique envelope used by the cross-check suites.
pub fn random_oblique_rig(rng: &mut ChaCha8Rng) -> CameraRig {
    loop {
        let pitch = rng.random_range(15f64..75.0).to_radians();
        let alpha = rng.random_range(20f64..44.0).to_radians();
        if pitch <= alpha || pitch > FRAC_PI_2 {
            continue;
        }
        return CameraRig::new(
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
            rng.random_range(2.0..60.0),
            pitch,
            rng.random_range(-3.1..3.1),
            alpha,
            rng.random_range(2..600),
            rng.random_range(2..600),
        )
        .expect("rig within envelope");
    }
}

/// Random ground point inside `rig`'s view, found by rejection sampling with
/// the pinhole model.
pub fn random_visible_point(rng: &mut ChaCha8Rng, rig: &CameraRig) -> (GroundPoint, SourcePixel) {
    let reach = rig.height / (rig.pitch - rig.half_aperture).tan().max(1e-3);
    let reach = reach.min(rig.height * 60.0);
    loop {
        let g = GroundPoint::new(
            rig.pos_x + rng.random_range(-reach..reach),
            rig.pos_y + rng.random_range(-reach..reach),
        );
        if let Some(p) = pinhole_project(rig, g) {
            return (g, p);
        }
    }
}

/// Intensity-weighted centroid `(row, col)` of a dark blob on the flat
/// [`BLOB_BACKGROUND`] level, searched within `radius_px` of `near`.
/// Masked pixels are skipped; `None` when nothing darker than the background is found.
pub fn blob_centroid(img: &Raster, near: (f64, f64), radius_px: f64) -> Option<(f64, f64)> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let r0 = (near.0 - radius_px).floor().max(0.0) as usize;
    let r1 = (near.0 + radius_px).ceil().min(h - 1.0).max(0.0) as usize;
    let c0 = (near.1 - radius_px).floor().max(0.0) as usize;
    let c1 = (near.1 + radius_px).ceil().min(w - 1.0).max(0.0) as usize;
    let (mut sw, mut sr, mut sc) = (0.0, 0.0, 0.0);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let (fr, fc) = (r as f64, c as f64);
            if (fr - near.0).hypot(fc - near.1) > radius_px || !img.is_valid(c, r) {
                continue;
            }
            let luma = (0..img.channels()).map(|k| img.get(c, r, k) as f64).sum::<f64>()
                / img.channels() as f64;
            let weight = (BLOB_BACKGROUND - luma).max(0.0);
            sw += weight;
            sr += weight * fr;
            sc += weight * fc;
        }
    }
    (sw > 0.0).then(|| (sr / sw, sc / sw))
}
