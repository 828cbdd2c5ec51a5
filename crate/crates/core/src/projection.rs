//! Inverse perspective mapping between a tilted camera's image and the deck plane.
//!
//! Pixel rows are equiangular in depression below the horizon and columns are
//! equiangular in ground azimuth. For a camera at `(x0, y0, h)` pitched down by
//! `theta` with half-aperture `alpha`, a ground point at horizontal range `rho`
//! and azimuth `az` lands on
//!
//! ```text
//! u = (atan(h / rho) - (theta - alpha)) / (2 alpha / (rows - 1))
//! v = (az - (yaw - alpha)) / (2 alpha / (cols - 1))
//! ```
//!
//! `h / rho` is the same ratio as `h sin(az) / (y - y0)` but stays defined on
//! the optical-axis column where `y = y0`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::LocalPoint;
use crate::raster::Raster;

/// Slack on the angular field boundary so that edge rows/columns stay in view.
pub const ANGLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("pixel ray does not reach the ground plane")]
    HorizonPixel,
    #[error("source raster is {actual_rows}x{actual_cols}, camera expects {rows}x{cols}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },
    #[error("invalid camera file: {0}")]
    CameraFile(String),
}

/// Pose and optics of one shot. Angles in radians, distances in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    /// Camera position along the deck-plane x axis (east).
    pub pos_x: f64,
    /// Camera position along the deck-plane y axis (north).
    pub pos_y: f64,
    /// Height above the deck plane, > 0.
    pub height: f64,
    /// Depression of the optical axis below horizontal, in (0, pi/2].
    pub pitch: f64,
    /// Azimuth of the optical axis, counter-clockwise from +x.
    pub yaw: f64,
    /// Half of the field of view on both image axes, in (0, pi/2).
    pub half_aperture: f64,
    pub rows: usize,
    pub cols: usize,
}

impl CameraRig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pos_x: f64,
        pos_y: f64,
        height: f64,
        pitch: f64,
        yaw: f64,
        half_aperture: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self, ProjectionError> {
        let rig = Self {
            pos_x,
            pos_y,
            height,
            pitch,
            yaw,
            half_aperture,
            rows,
            cols,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<(), ProjectionError> {
        let bad = |msg: &str| Err(ProjectionError::PreconditionViolation(msg.to_string()));
        if ![self.pos_x, self.pos_y, self.yaw].iter().all(|v| v.is_finite()) {
            return bad("camera position and yaw must be finite");
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return bad("camera height must be positive");
        }
        if !(self.half_aperture > 0.0 && self.half_aperture < FRAC_PI_2) {
            return bad("half-aperture must lie in (0, pi/2)");
        }
        if !(self.pitch > 0.0 && self.pitch <= FRAC_PI_2) {
            return bad("pitch must lie in (0, pi/2]");
        }
        if self.rows < 2 || self.cols < 2 {
            return bad("image must be at least 2x2");
        }
        Ok(())
    }

    /// Same camera moved to another deck-plane position.
    pub fn at(&self, pos_x: f64, pos_y: f64) -> Self {
        Self {
            pos_x,
            pos_y,
            ..*self
        }
    }

    fn row_step(&self) -> f64 {
        2.0 * self.half_aperture / (self.rows - 1) as f64
    }

    fn col_step(&self) -> f64 {
        2.0 * self.half_aperture / (self.cols - 1) as f64
    }

    /// Depression angle of the ray through row `u`.
    pub fn row_angle(&self, u: f64) -> f64 {
        (self.pitch - self.half_aperture) + u * self.row_step()
    }

    /// Ground azimuth of the ray through column `v`.
    pub fn col_azimuth(&self, v: f64) -> f64 {
        (self.yaw - self.half_aperture) + v * self.col_step()
    }
}

/// On-disk camera record: degrees in the file, radians in [`CameraRig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    pub l_m: f64,
    pub d_m: f64,
    pub h_m: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub aperture_deg: f64,
    pub rows: usize,
    pub cols: usize,
}

impl TryFrom<CameraFile> for CameraRig {
    type Error = ProjectionError;

    fn try_from(f: CameraFile) -> Result<Self, Self::Error> {
        CameraRig::new(
            f.l_m,
            f.d_m,
            f.h_m,
            f.pitch_deg.to_radians(),
            f.yaw_deg.to_radians(),
            f.aperture_deg.to_radians(),
            f.rows,
            f.cols,
        )
    }
}

impl From<&CameraRig> for CameraFile {
    fn from(r: &CameraRig) -> Self {
        Self {
            l_m: r.pos_x,
            d_m: r.pos_y,
            h_m: r.height,
            pitch_deg: r.pitch.to_degrees(),
            yaw_deg: r.yaw.to_degrees(),
            aperture_deg: r.half_aperture.to_degrees(),
            rows: r.rows,
            cols: r.cols,
        }
    }
}

pub fn parse_camera_json(bytes: &[u8]) -> Result<CameraRig, ProjectionError> {
    let file: CameraFile =
        serde_json::from_slice(bytes).map_err(|e| ProjectionError::CameraFile(e.to_string()))?;
    CameraRig::try_from(file)
}

/// Point on the deck plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Subpixel source-image position: `u` is the row, `v` the column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePixel {
    pub u: f64,
    pub v: f64,
}

/// Wraps an angle into (-pi, pi].
pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Source pixel that images ground point `g`, or `None` when `g` is out of view.
pub fn ipm_pixel(rig: &CameraRig, g: GroundPoint) -> Option<SourcePixel> {
    let dx = g.x - rig.pos_x;
    let dy = g.y - rig.pos_y;
    let rho = dx.hypot(dy);
    if rho == 0.0 || !rho.is_finite() {
        return None;
    }
    let azimuth_off = wrap_angle(dy.atan2(dx) - rig.yaw);
    if azimuth_off.abs() > rig.half_aperture + ANGLE_TOLERANCE {
        return None;
    }
    let depression = (rig.height / rho).atan();
    let top = rig.pitch - rig.half_aperture;
    let bottom = rig.pitch + rig.half_aperture;
    if depression < top - ANGLE_TOLERANCE || depression > bottom + ANGLE_TOLERANCE {
        return None;
    }
    let max_u = (rig.rows - 1) as f64;
    let max_v = (rig.cols - 1) as f64;
    let u = ((depression - top) / rig.row_step()).clamp(0.0, max_u);
    let v = ((azimuth_off + rig.half_aperture) / rig.col_step()).clamp(0.0, max_v);
    Some(SourcePixel { u, v })
}

/// Ground point hit by the ray through source pixel `(u, v)`.
/// Rows deeper than nadir land behind the camera, where `ipm_pixel` reports them out of view.
pub fn ground_of_pixel(rig: &CameraRig, u: f64, v: f64) -> Result<GroundPoint, ProjectionError> {
    let max_u = (rig.rows - 1) as f64;
    let max_v = (rig.cols - 1) as f64;
    if !(0.0..=max_u).contains(&u) || !(0.0..=max_v).contains(&v) {
        return Err(ProjectionError::PreconditionViolation(format!(
            "pixel ({u}, {v}) outside {}x{} image",
            rig.rows, rig.cols
        )));
    }
    let depression = rig.row_angle(u);
    if depression <= 0.0 {
        return Err(ProjectionError::HorizonPixel);
    }
    let rho = if (depression - FRAC_PI_2).abs() < 1e-12 {
        0.0
    } else {
        rig.height / depression.tan()
    };
    let azimuth = rig.col_azimuth(v);
    Ok(GroundPoint {
        x: rig.pos_x + rho * azimuth.cos(),
        y: rig.pos_y + rho * azimuth.sin(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Footprint {
    /// Ground images of the corners (0,0), (0,n-1), (m-1,n-1), (m-1,0).
    Bounded([GroundPoint; 4]),
    /// The top image rows reach the horizon.
    Unbounded,
}

pub fn ground_footprint(rig: &CameraRig) -> Footprint {
    if rig.pitch - rig.half_aperture <= 0.0 {
        return Footprint::Unbounded;
    }
    let (mu, mv) = ((rig.rows - 1) as f64, (rig.cols - 1) as f64);
    let corner = |u, v| ground_of_pixel(rig, u, v).expect("corner below horizon");
    Footprint::Bounded([
        corner(0.0, 0.0),
        corner(0.0, mv),
        corner(mu, mv),
        corner(mu, 0.0),
    ])
}

/// Axis-aligned deck-plane rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundBounds {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl GroundBounds {
    pub fn include(&mut self, p: GroundPoint) {
        self.min_x = self.min_x.min(p.x);
        self.max_x = self.max_x.max(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_y = self.max_y.max(p.y);
    }

    fn point(p: GroundPoint) -> Self {
        Self {
            min_x: p.x,
            max_x: p.x,
            min_y: p.y,
            max_y: p.y,
        }
    }

    pub fn union(&self, o: &GroundBounds) -> GroundBounds {
        GroundBounds {
            min_x: self.min_x.min(o.min_x),
            max_x: self.max_x.max(o.max_x),
            min_y: self.min_y.min(o.min_y),
            max_y: self.max_y.max(o.max_y),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> GroundBounds {
        GroundBounds {
            min_x: self.min_x + dx,
            max_x: self.max_x + dx,
            min_y: self.min_y + dy,
            max_y: self.max_y + dy,
        }
    }
}

/// Bounding rectangle of everything the camera sees, traced along the image
/// border (the far edge is an arc, so the four corners alone under-cover it).
/// `None` when the footprint is unbounded.
pub fn footprint_bounds(rig: &CameraRig) -> Option<GroundBounds> {
    if rig.pitch - rig.half_aperture <= 0.0 {
        return None;
    }
    let (mu, mv) = ((rig.rows - 1) as f64, (rig.cols - 1) as f64);
    let mut border = Vec::with_capacity(2 * (rig.rows + rig.cols));
    for c in 0..rig.cols {
        border.push((0.0, c as f64));
        border.push((mu, c as f64));
    }
    for r in 0..rig.rows {
        border.push((r as f64, 0.0));
        border.push((r as f64, mv));
    }
    let mut it = border
        .into_iter()
        .map(|(u, v)| ground_of_pixel(rig, u, v).expect("border pixel below horizon"));
    let mut bounds = GroundBounds::point(it.next()?);
    it.for_each(|p| bounds.include(p));
    Some(bounds)
}

/// Ground distance covered by one source row where the optical axis meets the deck.
pub fn axis_gsd(rig: &CameraRig) -> f64 {
    rig.height * rig.row_step() / rig.pitch.sin().powi(2)
}

/// Chord length of the nearest image row divided by the column count.
pub fn near_row_gsd(rig: &CameraRig) -> Result<f64, ProjectionError> {
    let mu = (rig.rows - 1) as f64;
    let a = ground_of_pixel(rig, mu, 0.0)?;
    let b = ground_of_pixel(rig, mu, (rig.cols - 1) as f64)?;
    let width = (a.x - b.x).hypot(a.y - b.y);
    if width <= 0.0 {
        return Err(ProjectionError::PreconditionViolation(
            "nearest image row collapses to a point".into(),
        ));
    }
    Ok(width / rig.cols as f64)
}

/// Largest grid `OrthoGrid::covering` will build.
pub const MAX_GRID_CELLS: f64 = 2.5e8;

/// North-up target grid: rows run south, columns run east.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoGrid {
    /// Deck-plane position of pixel (row 0, col 0); `east` = x, `north` = y.
    pub origin: LocalPoint,
    pub gsd: f64,
    pub rows: usize,
    pub cols: usize,
}

impl OrthoGrid {
    pub fn new(origin: LocalPoint, gsd: f64, rows: usize, cols: usize) -> Result<Self, ProjectionError> {
        if !(gsd > 0.0 && gsd.is_finite()) || rows == 0 || cols == 0 {
            return Err(ProjectionError::PreconditionViolation(
                "grid needs gsd > 0 and at least one row and column".into(),
            ));
        }
        Ok(Self {
            origin,
            gsd,
            rows,
            cols,
        })
    }

    /// Smallest grid covering `b` whose pixel centers sit on multiples of `gsd`.
    pub fn covering(b: &GroundBounds, gsd: f64) -> Result<Self, ProjectionError> {
        if !(gsd > 0.0 && gsd.is_finite()) {
            return Err(ProjectionError::PreconditionViolation(format!("gsd must be positive, got {gsd}")));
        }
        let c0 = (b.min_x / gsd).floor();
        let c1 = (b.max_x / gsd).ceil();
        let r0 = (b.max_y / gsd).ceil();
        let r1 = (b.min_y / gsd).floor();
        let cells = (r0 - r1 + 1.0) * (c1 - c0 + 1.0);
        if cells.is_nan() || cells > MAX_GRID_CELLS {
            return Err(ProjectionError::PreconditionViolation(format!(
                "a {gsd} m grid over this area would need {cells:.3e} pixels"
            )));
        }
        Self::new(
            LocalPoint::new(c0 * gsd, r0 * gsd),
            gsd,
            (r0 - r1) as usize + 1,
            (c1 - c0) as usize + 1,
        )
    }

    pub fn ground_of(&self, row: f64, col: f64) -> GroundPoint {
        GroundPoint {
            x: self.origin.east + col * self.gsd,
            y: self.origin.north - row * self.gsd,
        }
    }

    /// Inverse of [`OrthoGrid::ground_of`]; returns `(row, col)`.
    pub fn pixel_of(&self, g: GroundPoint) -> (f64, f64) {
        (
            (self.origin.north - g.y) / self.gsd,
            (g.x - self.origin.east) / self.gsd,
        )
    }
}

/// Resamples `src` onto `grid`. Cells outside the camera's view are masked out.
pub fn render_orthophoto(
    rig: &CameraRig,
    src: &Raster,
    grid: &OrthoGrid,
) -> Result<Raster, ProjectionError> {
    if src.height() != rig.rows || src.width() != rig.cols {
        return Err(ProjectionError::DimensionMismatch {
            rows: rig.rows,
            cols: rig.cols,
            actual_rows: src.height(),
            actual_cols: src.width(),
        });
    }
    let ch = src.channels();
    let mut pixels = vec![0u8; grid.rows * grid.cols * ch];
    let mut mask = vec![false; grid.rows * grid.cols];
    pixels
        .par_chunks_mut(grid.cols * ch)
        .zip(mask.par_chunks_mut(grid.cols))
        .enumerate()
        .for_each(|(row, (px_row, mask_row))| {
            for col in 0..grid.cols {
                let g = grid.ground_of(row as f64, col as f64);
                let Some(sp) = ipm_pixel(rig, g) else {
                    continue;
                };
                if let Some(s) = src.sample_bilinear(sp.v, sp.u) {
                    for c in 0..ch {
                        px_row[col * ch + c] = s[c].round().clamp(0.0, 255.0) as u8;
                    }
                    mask_row[col] = true;
                }
            }
        });
    let out = Raster::new(grid.cols, grid.rows, ch, pixels).expect("grid layout");
    Ok(out.with_mask(mask).expect("mask layout"))
}

/// Height and ground sampling distance for single-shot nadir coverage of a deck.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightHeight {
    pub height: f64,
    pub gsd: f64,
}

pub fn plan_flight_height(
    deck_width: f64,
    half_aperture: f64,
    cols: usize,
) -> Result<FlightHeight, ProjectionError> {
    if !(deck_width > 0.0 && deck_width.is_finite()) {
        return Err(ProjectionError::PreconditionViolation(
            "deck width must be positive".into(),
        ));
    }
    if !(half_aperture > 0.0 && half_aperture < FRAC_PI_2) {
        return Err(ProjectionError::PreconditionViolation(
            "half-aperture must lie in (0, pi/2)".into(),
        ));
    }
    if cols < 2 {
        return Err(ProjectionError::PreconditionViolation(
            "need at least two image columns".into(),
        ));
    }
    Ok(FlightHeight {
        height: deck_width / (2.0 * half_aperture.tan()),
        gsd: deck_width / cols as f64,
    })
}
