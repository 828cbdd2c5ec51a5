//! Flat-file persistence of the catalog: JSON indexes plus PNM blobs.
//!
//! Layout under the store root:
//!
//! ```text
//! bridges.json                 array of BridgeRecord
//! defects.json                 array of DefectRecord
//! maps/<map_id>/meta.json      SurfaceMapMeta
//! maps/<map_id>/mosaic.ppm     mosaic pixels (P5 for gray mosaics, P6 for color)
//! maps/<map_id>/mask.pgm       mosaic validity, 255 = valid
//! defect_images/<image_id>.ppm defect close-up (P5 or P6)
//! ```
//!
//! Every file is replaced by write-to-temp then rename. Blobs are written
//! before the indexes that reference them, and a map directory no bridge
//! lists is ignored on open, so an interrupted persist never exposes a
//! half-written map.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::model::{BridgeRecord, DefectRecord, SurfaceMapMeta};
use crate::geodesy::{bbox_contains, to_geo, to_local, GeoBBox, GeoError, GeoPoint, LocalPoint};
use crate::pipeline::PipelineError;
use crate::raster::{attach_mask, load_pnm, save_mask, save_pnm, Raster, RasterError};

pub const BRIDGES_FILE: &str = "bridges.json";
pub const DEFECTS_FILE: &str = "defects.json";
pub const MAPS_DIR: &str = "maps";
pub const DEFECT_IMAGES_DIR: &str = "defect_images";
const MAX_ID_LEN: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("corrupt store file {file}: {reason}")]
    CorruptStore { file: String, reason: String },
    #[error("i/o failure on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("manifest lists no images")]
    EmptyInput,
    #[error("id {0:?} already exists")]
    DuplicateId(String),
    #[error("unknown bridge {0:?}")]
    UnknownBridge(String),
    #[error("invalid id {0:?}: use 1-128 characters from A-Z a-z 0-9 . _ - not starting with '.'")]
    InvalidId(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("position lies outside the mosaic")]
    OutOfBounds,
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Stitch(#[from] PipelineError),
    #[error("raster {file}: {source}")]
    Raster { file: String, source: RasterError },
}

fn io_error(path: &Path, e: std::io::Error) -> CatalogError {
    CatalogError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn corrupt(path: &Path, reason: impl ToString) -> CatalogError {
    CatalogError::CorruptStore {
        file: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Ids become file names, so they are restricted to a portable character set.
pub fn validate_id(id: &str) -> Result<(), CatalogError> {
    let ok = !id.is_empty()
        && id.len() <= MAX_ID_LEN
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(CatalogError::InvalidId(id.to_string()))
    }
}

/// A surface map's metadata and its mosaic.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredMap {
    pub meta: SurfaceMapMeta,
    pub mosaic: Arc<Raster>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Contents {
    bridges: BTreeMap<String, BridgeRecord>,
    maps: BTreeMap<String, StoredMap>,
    defects: BTreeMap<String, DefectRecord>,
    defect_images: BTreeMap<String, Arc<Raster>>,
}

#[derive(Debug, Clone, Default)]
struct Dirty {
    indexes: bool,
    maps: BTreeSet<String>,
    images: BTreeSet<String>,
}

/// In-memory catalog bound to a store directory. Mutations change memory
/// only; [`Store::persist`] or [`Store::transact`] write them out.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
    contents: Contents,
    dirty: Dirty,
}

/// Stores compare by content, not by location or unsaved-change bookkeeping.
impl PartialEq for Store {
    fn eq(&self, other: &Self) -> bool {
        self.contents == other.contents
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, CatalogError> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| corrupt(path, e)),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_error(path, e)),
    }
}

fn read_raster(path: &Path) -> Result<Raster, CatalogError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => corrupt(path, "referenced file is missing"),
        _ => io_error(path, e),
    })?;
    load_pnm(&bytes).map_err(|e| corrupt(path, e))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CatalogError> {
    let dir = path.parent().expect("store paths have a parent");
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let name = path.file_name().expect("store paths name a file").to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_error(path, e)
    })
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("records serialize");
    out.push(b'\n');
    out
}

/// Drops an all-valid mask, so that a raster survives the mask.pgm round trip unchanged.
fn normalize_mask(r: Raster) -> Raster {
    match r.mask() {
        Some(m) if m.iter().all(|&v| v) => r.without_mask(),
        _ => r,
    }
}

fn check_meta(meta: &SurfaceMapMeta, mosaic: &Raster) -> Result<(), String> {
    if !(meta.gsd_m > 0.0 && meta.gsd_m.is_finite()) {
        return Err(format!("gsd must be positive, got {}", meta.gsd_m));
    }
    if meta.phase != 1 && meta.phase != 2 {
        return Err(format!("phase must be 1 or 2, got {}", meta.phase));
    }
    if meta.rows != mosaic.height() || meta.cols != mosaic.width() {
        return Err(format!(
            "meta says {}x{} but mosaic is {}x{}",
            meta.rows,
            meta.cols,
            mosaic.height(),
            mosaic.width()
        ));
    }
    let inside = |v: f64, n: usize| v >= 0.0 && v < n as f64;
    if !inside(meta.anchor_row, meta.rows) || !inside(meta.anchor_col, meta.cols) {
        return Err("anchor pixel lies outside the mosaic".into());
    }
    meta.anchor().validate().map_err(|e| e.to_string())
}

fn check_position(lat: f64, lon: f64) -> Result<(), CatalogError> {
    GeoPoint { lat, lon }
        .validate()
        .map_err(|e| CatalogError::InvalidRecord(e.to_string()))
}

impl Store {
    /// Loads the store at `root`, creating the directory if absent.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_error(&root, e))?;
        let mut contents = Contents::default();

        let bridges_path = root.join(BRIDGES_FILE);
        let bridges: Vec<BridgeRecord> = read_json(&bridges_path)?.unwrap_or_default();
        for b in bridges {
            validate_id(&b.bridge_id).map_err(|e| corrupt(&bridges_path, e))?;
            let id = b.bridge_id.clone();
            if contents.bridges.insert(id.clone(), b).is_some() {
                return Err(corrupt(&bridges_path, format!("duplicate bridge {id}")));
            }
        }

        let listed: Vec<String> = contents
            .bridges
            .values()
            .flat_map(|b| b.surface_map_ids.iter().cloned())
            .collect();
        for map_id in listed {
            validate_id(&map_id).map_err(|e| corrupt(&bridges_path, e))?;
            let dir = root.join(MAPS_DIR).join(&map_id);
            let meta_path = dir.join("meta.json");
            let meta: SurfaceMapMeta =
                read_json(&meta_path)?.ok_or_else(|| corrupt(&meta_path, "referenced map has no meta.json"))?;
            if meta.map_id != map_id || !contents.bridges.contains_key(&meta.bridge_id) {
                return Err(corrupt(&meta_path, "map id or owner does not match bridges.json"));
            }
            let mosaic = read_raster(&dir.join("mosaic.ppm"))?;
            let mask_path = dir.join("mask.pgm");
            let mosaic = attach_mask(mosaic, &read_raster(&mask_path)?).map_err(|e| corrupt(&mask_path, e))?;
            let mosaic = normalize_mask(mosaic);
            check_meta(&meta, &mosaic).map_err(|e| corrupt(&meta_path, e))?;
            if contents.maps.contains_key(&map_id) {
                return Err(corrupt(&bridges_path, format!("map {map_id} listed twice")));
            }
            contents.maps.insert(map_id, StoredMap { meta, mosaic: Arc::new(mosaic) });
        }

        let defects_path = root.join(DEFECTS_FILE);
        let defects: Vec<DefectRecord> = read_json(&defects_path)?.unwrap_or_default();
        for d in defects {
            validate_id(&d.defect_id).map_err(|e| corrupt(&defects_path, e))?;
            if let Some(image_id) = &d.image_id {
                validate_id(image_id).map_err(|e| corrupt(&defects_path, e))?;
                let path = root.join(DEFECT_IMAGES_DIR).join(format!("{image_id}.ppm"));
                let img = read_raster(&path)?;
                contents.defect_images.insert(image_id.clone(), Arc::new(img));
            }
            let id = d.defect_id.clone();
            if contents.defects.insert(id.clone(), d).is_some() {
                return Err(corrupt(&defects_path, format!("duplicate defect {id}")));
            }
        }

        Ok(Self {
            root,
            contents,
            dirty: Dirty::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes every unsaved change. Blobs go first, indexes last.
    pub fn persist(&mut self) -> Result<(), CatalogError> {
        for map_id in &self.dirty.maps {
            let Some(m) = self.contents.maps.get(map_id) else {
                continue;
            };
            let dir = self.root.join(MAPS_DIR).join(map_id);
            write_atomic(&dir.join("mosaic.ppm"), &save_pnm(&m.mosaic))?;
            write_atomic(&dir.join("mask.pgm"), &save_mask(&m.mosaic))?;
            write_atomic(&dir.join("meta.json"), &to_json(&m.meta))?;
        }
        for image_id in &self.dirty.images {
            if let Some(img) = self.contents.defect_images.get(image_id) {
                let path = self.root.join(DEFECT_IMAGES_DIR).join(format!("{image_id}.ppm"));
                write_atomic(&path, &save_pnm(img))?;
            }
        }
        if self.dirty.indexes {
            let bridges: Vec<&BridgeRecord> = self.contents.bridges.values().collect();
            write_atomic(&self.root.join(BRIDGES_FILE), &to_json(&bridges))?;
            let defects: Vec<&DefectRecord> = self.contents.defects.values().collect();
            write_atomic(&self.root.join(DEFECTS_FILE), &to_json(&defects))?;
        }
        self.dirty = Dirty::default();
        Ok(())
    }

    /// Applies `f` and persists; on any error the in-memory store is rolled back.
    pub fn transact<T>(
        &mut self,
        f: impl FnOnce(&mut Store) -> Result<T, CatalogError>,
    ) -> Result<T, CatalogError> {
        let before = (self.contents.clone(), self.dirty.clone());
        match f(self).and_then(|t| self.persist().map(|()| t)) {
            Ok(t) => Ok(t),
            Err(e) => {
                (self.contents, self.dirty) = before;
                Err(e)
            }
        }
    }

    pub fn bridges(&self) -> impl Iterator<Item = &BridgeRecord> {
        self.contents.bridges.values()
    }

    pub fn defects(&self) -> impl Iterator<Item = &DefectRecord> {
        self.contents.defects.values()
    }

    pub fn maps(&self) -> impl Iterator<Item = &StoredMap> {
        self.contents.maps.values()
    }

    pub fn bridge(&self, id: &str) -> Option<&BridgeRecord> {
        self.contents.bridges.get(id)
    }

    pub fn map(&self, id: &str) -> Option<&StoredMap> {
        self.contents.maps.get(id)
    }

    pub fn defect(&self, id: &str) -> Option<&DefectRecord> {
        self.contents.defects.get(id)
    }

    pub fn defect_image(&self, image_id: &str) -> Option<&Arc<Raster>> {
        self.contents.defect_images.get(image_id)
    }

    /// Maps of one bridge, in the bridge's listing order.
    pub fn maps_of(&self, bridge_id: &str) -> Vec<&SurfaceMapMeta> {
        self.bridge(bridge_id)
            .map(|b| {
                b.surface_map_ids
                    .iter()
                    .filter_map(|id| self.contents.maps.get(id).map(|m| &m.meta))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Inserts or replaces a bridge record. Its map list is kept as stored.
    pub fn put_bridge(&mut self, mut record: BridgeRecord) -> Result<(), CatalogError> {
        validate_id(&record.bridge_id)?;
        check_position(record.lat, record.lon)?;
        record.surface_map_ids = self
            .bridge(&record.bridge_id)
            .map(|b| b.surface_map_ids.clone())
            .unwrap_or_default();
        self.contents.bridges.insert(record.bridge_id.clone(), record);
        self.dirty.indexes = true;
        Ok(())
    }

    pub fn add_map(&mut self, meta: SurfaceMapMeta, mosaic: Raster) -> Result<(), CatalogError> {
        validate_id(&meta.map_id)?;
        if self.contents.maps.contains_key(&meta.map_id) {
            return Err(CatalogError::DuplicateId(meta.map_id));
        }
        let mosaic = normalize_mask(mosaic);
        check_meta(&meta, &mosaic).map_err(CatalogError::InvalidRecord)?;
        let bridge = self
            .contents
            .bridges
            .get_mut(&meta.bridge_id)
            .ok_or_else(|| CatalogError::UnknownBridge(meta.bridge_id.clone()))?;
        bridge.surface_map_ids.push(meta.map_id.clone());
        self.dirty.indexes = true;
        self.dirty.maps.insert(meta.map_id.clone());
        self.contents.maps.insert(
            meta.map_id.clone(),
            StoredMap {
                meta,
                mosaic: Arc::new(mosaic),
            },
        );
        Ok(())
    }

    /// Stores a defect record. With an image, `image_id` is set to the
    /// defect id; without one it is cleared.
    pub fn add_defect(&mut self, mut record: DefectRecord, image: Option<Raster>) -> Result<(), CatalogError> {
        validate_id(&record.defect_id)?;
        if self.contents.defects.contains_key(&record.defect_id) {
            return Err(CatalogError::DuplicateId(record.defect_id));
        }
        if !self.contents.bridges.contains_key(&record.bridge_id) {
            return Err(CatalogError::UnknownBridge(record.bridge_id));
        }
        check_position(record.lat, record.lon)?;
        record.image_id = image.as_ref().map(|_| record.defect_id.clone());
        if let (Some(image_id), Some(img)) = (&record.image_id, image) {
            self.contents.defect_images.insert(image_id.clone(), Arc::new(img));
            self.dirty.images.insert(image_id.clone());
        }
        self.dirty.indexes = true;
        self.contents.defects.insert(record.defect_id.clone(), record);
        Ok(())
    }

    /// Bridges whose location lies in `bbox` (boundary inclusive), by id.
    pub fn query_bridges(&self, bbox: &GeoBBox) -> Vec<BridgeRecord> {
        self.bridges()
            .filter(|b| bbox_contains(bbox, b.location()))
            .cloned()
            .collect()
    }

    /// Defects whose position lies in `bbox` (boundary inclusive), by id.
    pub fn query_defects(&self, bbox: &GeoBBox) -> Vec<DefectRecord> {
        self.defects()
            .filter(|d| bbox_contains(bbox, d.position()))
            .cloned()
            .collect()
    }
}

pub fn open_store(root: impl Into<PathBuf>) -> Result<Store, CatalogError> {
    Store::open(root)
}

pub fn persist(store: &mut Store) -> Result<(), CatalogError> {
    store.persist()
}

pub fn query_bridges(store: &Store, bbox: &GeoBBox) -> Vec<BridgeRecord> {
    store.query_bridges(bbox)
}

pub fn query_defects(store: &Store, bbox: &GeoBBox) -> Vec<DefectRecord> {
    store.query_defects(bbox)
}

/// Adds a defect and persists it; the store is unchanged on error.
pub fn add_defect(store: &mut Store, record: DefectRecord, image: Option<Raster>) -> Result<(), CatalogError> {
    store.transact(|s| s.add_defect(record, image))
}

fn within(meta: &SurfaceMapMeta, row: f64, col: f64) -> bool {
    row >= 0.0 && col >= 0.0 && row < meta.rows as f64 && col < meta.cols as f64
}

/// Geographic position of mosaic pixel (row, col).
pub fn map_pixel_to_geo(meta: &SurfaceMapMeta, row: f64, col: f64) -> Result<GeoPoint, CatalogError> {
    if !within(meta, row, col) {
        return Err(CatalogError::OutOfBounds);
    }
    let local = LocalPoint::new((col - meta.anchor_col) * meta.gsd_m, (meta.anchor_row - row) * meta.gsd_m);
    Ok(to_geo(local, meta.anchor())?)
}

/// Mosaic pixel `(row, col)` of a geographic position.
pub fn geo_to_map_pixel(meta: &SurfaceMapMeta, p: GeoPoint) -> Result<(f64, f64), CatalogError> {
    let local = to_local(p, meta.anchor())?;
    let row = meta.anchor_row - local.north / meta.gsd_m;
    let col = meta.anchor_col + local.east / meta.gsd_m;
    if !within(meta, row, col) {
        return Err(CatalogError::OutOfBounds);
    }
    Ok((row, col))
}
