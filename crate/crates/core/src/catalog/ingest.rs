//! Batch ingestion of a sidecar manifest: a phase-1 pass becomes one surface
//! map, a phase-2 batch becomes defect records.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::model::{BridgeRecord, Condition, DefectRecord, DefectType, IngestManifest, SurfaceMapMeta};
use super::store::{validate_id, CatalogError, Store};
use crate::pipeline::{stitch_frames, Frame, Placement, StitchConfig};
use crate::projection::CameraRig;
use crate::raster::{load_pnm, Raster};
use crate::stitcher::Similarity2D;

#[derive(Debug, Clone, PartialEq)]
pub enum IngestMode {
    StitchToMap { map_id: String, config: StitchConfig },
    DefectRecords,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub file: String,
    /// How a stitched frame was placed; absent for defect records.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Placement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inlier_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub bridge_id: String,
    /// Map id or defect ids created by the batch.
    pub created: Vec<String>,
    pub images: Vec<ImageReport>,
    pub bridge_created: bool,
}

/// Reads a manifest and resolves relative image paths against its directory.
pub fn load_manifest(path: &Path) -> Result<IngestManifest, CatalogError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CatalogError::MissingFile(path.display().to_string()),
        _ => CatalogError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        },
    })?;
    let mut manifest: IngestManifest =
        serde_json::from_slice(&bytes).map_err(|e| CatalogError::InvalidManifest(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for entry in &mut manifest.images {
        let file = PathBuf::from(&entry.file);
        if file.is_relative() {
            entry.file = base.join(file).display().to_string();
        }
    }
    Ok(manifest)
}

fn read_image(file: &str) -> Result<Raster, CatalogError> {
    let bytes = fs::read(file).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CatalogError::MissingFile(file.to_string()),
        _ => CatalogError::Io {
            path: file.to_string(),
            reason: e.to_string(),
        },
    })?;
    load_pnm(&bytes).map_err(|source| CatalogError::Raster {
        file: file.to_string(),
        source,
    })
}

fn check_manifest(m: &IngestManifest) -> Result<(), CatalogError> {
    validate_id(&m.bridge_id)?;
    if m.phase != 1 && m.phase != 2 {
        return Err(CatalogError::InvalidManifest(format!("phase must be 1 or 2, got {}", m.phase)));
    }
    if m.images.is_empty() {
        return Err(CatalogError::EmptyInput);
    }
    for e in &m.images {
        e.geotag
            .position()
            .validate()
            .map_err(|err| CatalogError::InvalidManifest(format!("{}: {err}", e.file)))?;
    }
    Ok(())
}

/// A bridge first seen in a manifest is registered at its first geotag.
fn ensure_bridge(store: &mut Store, m: &IngestManifest) -> Result<bool, CatalogError> {
    if store.bridge(&m.bridge_id).is_some() {
        return Ok(false);
    }
    let first = &m.images[0].geotag;
    store.put_bridge(BridgeRecord {
        bridge_id: m.bridge_id.clone(),
        name: m.bridge_id.clone(),
        lat: first.lat,
        lon: first.lon,
        condition: Condition::Good,
        surface_map_ids: Vec::new(),
    })?;
    Ok(true)
}

/// Ingests one batch. Every image is loaded and processed before the store
/// is touched, and the store is rolled back if persisting fails, so an error
/// leaves both memory and disk as they were.
pub fn ingest_batch(store: &mut Store, manifest: &IngestManifest, mode: &IngestMode) -> Result<IngestReport, CatalogError> {
    check_manifest(manifest)?;
    let images = manifest
        .images
        .iter()
        .map(|e| read_image(&e.file))
        .collect::<Result<Vec<_>, _>>()?;
    match mode {
        IngestMode::StitchToMap { map_id, config } => stitch_batch(store, manifest, images, map_id, config),
        IngestMode::DefectRecords => defect_batch(store, manifest, images),
    }
}

fn stitch_batch(
    store: &mut Store,
    manifest: &IngestManifest,
    images: Vec<Raster>,
    map_id: &str,
    config: &StitchConfig,
) -> Result<IngestReport, CatalogError> {
    validate_id(map_id)?;
    if store.map(map_id).is_some() {
        return Err(CatalogError::DuplicateId(map_id.to_string()));
    }
    let frames = manifest
        .images
        .iter()
        .zip(images)
        .map(|(e, image)| {
            let camera = e
                .camera
                .ok_or_else(|| CatalogError::InvalidManifest(format!("{}: camera parameters required", e.file)))?;
            let rig = CameraRig::try_from(camera)
                .map_err(|err| CatalogError::InvalidManifest(format!("{}: {err}", e.file)))?;
            if (image.height(), image.width()) != (rig.rows, rig.cols) {
                return Err(CatalogError::InvalidManifest(format!(
                    "{}: image is {}x{} but camera says {}x{}",
                    e.file,
                    image.height(),
                    image.width(),
                    rig.rows,
                    rig.cols
                )));
            }
            let manual = e.transform.map(|t| Similarity2D {
                scale: t.scale,
                rotation: t.rotation,
                tx: t.tx,
                ty: t.ty,
            });
            Ok(Frame {
                image,
                geotag: e.geotag.clone(),
                rig,
                manual,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let out = stitch_frames(&frames, config)?;
    let map = out.map;
    let meta = SurfaceMapMeta {
        map_id: map_id.to_string(),
        bridge_id: manifest.bridge_id.clone(),
        phase: manifest.phase,
        sensor: manifest.sensor,
        anchor_lat: map.anchor.point.lat,
        anchor_lon: map.anchor.point.lon,
        anchor_row: map.anchor.row,
        anchor_col: map.anchor.col,
        gsd_m: map.gsd,
        rows: map.image.height(),
        cols: map.image.width(),
    };
    let bridge_created = store.transact(|s| {
        let created = ensure_bridge(s, manifest)?;
        s.add_map(meta, map.image)?;
        Ok(created)
    })?;
    let images = manifest
        .images
        .iter()
        .zip(&out.placements)
        .map(|(e, p)| ImageReport {
            file: e.file.clone(),
            method: Some(p.method),
            inlier_count: Some(p.inlier_count),
        })
        .collect();
    Ok(IngestReport {
        bridge_id: manifest.bridge_id.clone(),
        created: vec![map_id.to_string()],
        images,
        bridge_created,
    })
}

fn defect_batch(store: &mut Store, manifest: &IngestManifest, images: Vec<Raster>) -> Result<IngestReport, CatalogError> {
    let (bridge_created, created) = store.transact(|s| {
        let created = ensure_bridge(s, manifest)?;
        let mut n = 0usize;
        let mut ids = Vec::with_capacity(images.len());
        for (e, image) in manifest.images.iter().zip(images) {
            // number past any ids left by earlier batches
            let id = loop {
                n += 1;
                let id = format!("{}-p{}-{n:03}", manifest.bridge_id, manifest.phase);
                if s.defect(&id).is_none() {
                    break id;
                }
            };
            s.add_defect(
                DefectRecord {
                    defect_id: id.clone(),
                    bridge_id: manifest.bridge_id.clone(),
                    lat: e.geotag.lat,
                    lon: e.geotag.lon,
                    defect_type: e.defect_type.unwrap_or(DefectType::Other),
                    sensor: manifest.sensor,
                    note: e.note.clone().unwrap_or_default(),
                    image_id: None,
                },
                Some(image),
            )?;
            ids.push(id);
        }
        Ok((created, ids))
    })?;
    let images = manifest
        .images
        .iter()
        .map(|e| ImageReport {
            file: e.file.clone(),
            method: None,
            inlier_count: None,
        })
        .collect();
    Ok(IngestReport {
        bridge_id: manifest.bridge_id.clone(),
        created,
        images,
        bridge_created,
    })
}
