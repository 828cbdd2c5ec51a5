//! Phase-1 pipeline: perspective-correct every frame of a pass, chain the
//! pairwise registrations, and composite one geo-anchored surface map.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ImageGeoTag;
use crate::projection::{
    axis_gsd, footprint_bounds, render_orthophoto, CameraRig, GroundPoint, OrthoGrid,
    ProjectionError,
};
use crate::raster::Raster;
use crate::stitcher::{
    composite, register_pair, MapAnchor, RegistrationConfig, RegistrationMethod,
    Similarity2D, StitchError, SurfaceMap,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("no frames to stitch")]
    EmptyInput,
    #[error("frame {index}: camera footprint reaches the horizon")]
    FootprintUnbounded { index: usize },
    #[error("frame {index}: {source}")]
    Projection {
        index: usize,
        source: ProjectionError,
    },
    #[error(transparent)]
    Stitch(#[from] StitchError),
}

/// One captured image with its pose. The rig's `pos_x`/`pos_y` locate the
/// camera in the frame's own deck-plane coordinates; the geotag places that
/// camera position on the globe.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: Raster,
    pub geotag: ImageGeoTag,
    pub rig: CameraRig,
    /// Explicit placement into the previous frame's orthophoto, skipping registration.
    pub manual: Option<Similarity2D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// The first frame defines the mosaic frame.
    Reference,
    FeatureBased,
    GpsFallback,
    Manual,
}

impl From<RegistrationMethod> for Placement {
    fn from(m: RegistrationMethod) -> Self {
        match m {
            RegistrationMethod::FeatureBased => Placement::FeatureBased,
            RegistrationMethod::GpsFallback => Placement::GpsFallback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePlacement {
    pub method: Placement,
    pub inlier_count: usize,
    /// Maps this frame's orthophoto pixels into the first frame's orthophoto.
    pub transform: Similarity2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StitchConfig {
    pub registration: RegistrationConfig,
    /// Orthophoto resolution; defaults to the first rig's on-axis row spacing.
    pub gsd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchOutput {
    pub map: SurfaceMap,
    pub placements: Vec<FramePlacement>,
}

struct Ortho {
    image: Raster,
    grid: OrthoGrid,
}

/// Orthophoto of one frame on a grid covering its footprint and its camera's nadir.
fn orthorectify(index: usize, frame: &Frame, gsd: f64) -> Result<Ortho, PipelineError> {
    let rig = &frame.rig;
    let mut bounds = footprint_bounds(rig).ok_or(PipelineError::FootprintUnbounded { index })?;
    bounds.include(GroundPoint::new(rig.pos_x, rig.pos_y));
    let wrap = |source| PipelineError::Projection { index, source };
    let grid = OrthoGrid::covering(&bounds, gsd).map_err(wrap)?;
    let image = render_orthophoto(rig, &frame.image, &grid).map_err(wrap)?;
    Ok(Ortho { image, grid })
}

/// Pixel offset between the camera-relative origins of two grids, `next` into `base`.
fn frame_correction(base: (&Ortho, &CameraRig), next: (&Ortho, &CameraRig), gsd: f64) -> (f64, f64) {
    let east = |o: &Ortho, r: &CameraRig| o.grid.origin.east - r.pos_x;
    let north = |o: &Ortho, r: &CameraRig| o.grid.origin.north - r.pos_y;
    (
        (east(next.0, next.1) - east(base.0, base.1)) / gsd,
        (north(base.0, base.1) - north(next.0, next.1)) / gsd,
    )
}

pub fn stitch_frames(frames: &[Frame], config: &StitchConfig) -> Result<StitchOutput, PipelineError> {
    let first = frames.first().ok_or(PipelineError::EmptyInput)?;
    let gsd = config.gsd.unwrap_or_else(|| axis_gsd(&first.rig));
    if !(gsd > 0.0 && gsd.is_finite()) {
        return Err(StitchError::InvalidParameter(format!("gsd must be positive, got {gsd}")).into());
    }
    let orthos = frames
        .iter()
        .enumerate()
        .map(|(i, f)| orthorectify(i, f, gsd))
        .collect::<Result<Vec<_>, _>>()?;
    let anchor_point = first.geotag.position();

    let mut placements = vec![FramePlacement {
        method: Placement::Reference,
        inlier_count: 0,
        transform: Similarity2D::identity(),
    }];
    for i in 1..frames.len() {
        let (base, next) = (&orthos[i - 1], &orthos[i]);
        let (local, method, inliers) = if let Some(m) = frames[i].manual {
            (m, Placement::Manual, 0)
        } else {
            let r = register_pair(
                &base.image,
                &next.image,
                &frames[i - 1].geotag,
                &frames[i].geotag,
                gsd,
                anchor_point,
                &config.registration,
            )?;
            let mut t = r.transform;
            if r.method == RegistrationMethod::GpsFallback {
                // geotags locate cameras; the grids start at camera-relative origins
                let (cx, cy) = frame_correction((base, &frames[i - 1].rig), (next, &frames[i].rig), gsd);
                t.tx += cx;
                t.ty += cy;
            }
            (t, r.method.into(), r.inlier_count)
        };
        let global = placements[i - 1].transform.compose(&local);
        placements.push(FramePlacement {
            method,
            inlier_count: inliers,
            transform: global,
        });
    }

    let (anchor_row, anchor_col) = orthos[0]
        .grid
        .pixel_of(GroundPoint::new(first.rig.pos_x, first.rig.pos_y));
    let inputs: Vec<(Raster, Similarity2D)> = orthos
        .into_iter()
        .zip(&placements)
        .map(|(o, p)| (o.image, p.transform))
        .collect();
    let map = composite(
        &inputs,
        MapAnchor {
            point: anchor_point,
            row: anchor_row,
            col: anchor_col,
        },
        gsd,
    )?;
    Ok(StitchOutput { map, placements })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::to_local;
    use crate::synth::{dataset_scene, make_flight, DatasetConfig, GroundScene};

    fn frames(featureless: bool, noise: f64) -> (GroundScene, Vec<Frame>, Vec<(f64, f64)>) {
        let cfg = DatasetConfig {
            views: 3,
            rows: 161,
            cols: 161,
            featureless,
            n_defects: 2,
            ..Default::default()
        };
        let (scene, rig) = dataset_scene(&cfg).unwrap();
        let (plan, views) = make_flight(&scene, &rig, 3, 0.6, noise, 8).unwrap();
        let frames = views
            .into_iter()
            .map(|v| Frame {
                image: v.image,
                geotag: v.geotag,
                rig,
                manual: None,
            })
            .collect();
        (scene, frames, plan.waypoints)
    }

    #[test]
    fn empty_and_unbounded() {
        assert_eq!(stitch_frames(&[], &StitchConfig::default()), Err(PipelineError::EmptyInput));
        let (_, mut f, _) = frames(true, 0.0);
        f[1].rig = CameraRig::new(0.0, 0.0, 10.0, 0.5, 0.0, 0.6, 81, 81).unwrap();
        f[1].image = Raster::filled(81, 81, 1, 0);
        assert_eq!(
            stitch_frames(&f, &StitchConfig::default()),
            Err(PipelineError::FootprintUnbounded { index: 1 })
        );
    }

    #[test]
    fn featureless_pass_is_placed_by_gps() {
        let (scene, f, wps) = frames(true, 0.0);
        let out = stitch_frames(&f, &StitchConfig::default()).unwrap();
        let gsd = out.map.gsd;
        assert_eq!(out.placements[0].method, Placement::Reference);
        for (p, wp) in out.placements.iter().zip(&wps).skip(1) {
            assert_eq!(p.method, Placement::GpsFallback);
            // a camera moves by its ground offset in mosaic pixels
            let want = ((wp.0 - wps[0].0) / gsd, -(wp.1 - wps[0].1) / gsd);
            assert!((p.transform.tx - want.0).abs() < 1e-6 && (p.transform.ty - want.1).abs() < 1e-6);
        }
        let a = out.map.anchor;
        let l = to_local(a.point, scene.anchor).unwrap();
        assert!((l.east - wps[0].0).abs() < 1e-6);
        assert!(a.row >= 0.0 && a.col >= 0.0);
        assert!((a.row as usize) < out.map.image.height() && (a.col as usize) < out.map.image.width());
    }

    #[test]
    fn textured_pass_is_placed_by_features() {
        let (_, f, wps) = frames(false, 0.0);
        let out = stitch_frames(&f, &StitchConfig::default()).unwrap();
        let gsd = out.map.gsd;
        for (p, wp) in out.placements.iter().zip(&wps).skip(1) {
            assert_eq!(p.method, Placement::FeatureBased, "{p:?}");
            let want = (wp.0 - wps[0].0) / gsd;
            assert!((p.transform.tx - want).abs() < 1.0, "{} vs {want}", p.transform.tx);
            assert!(p.transform.ty.abs() < 1.0);
        }
    }

    #[test]
    fn manual_transform_wins() {
        let (_, mut f, _) = frames(false, 0.0);
        let t = Similarity2D::translation(12.0, 3.0);
        f[1].manual = Some(t);
        let out = stitch_frames(&f, &StitchConfig::default()).unwrap();
        assert_eq!(out.placements[1].method, Placement::Manual);
        assert_eq!(out.placements[1].transform, t);
    }
}
