//! Records of the map layer (bridges, surface maps) and the defects layer,
//! plus the sidecar ingest manifest. Field names match the on-disk JSON.

use serde::{Deserialize, Serialize};

use crate::geodesy::GeoPoint;
use crate::projection::CameraFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    Good,
    Fair,
    Poor,
}

impl Condition {
    pub fn flag_color(self) -> &'static str {
        match self {
            Condition::Good => "green",
            Condition::Fair => "yellow",
            Condition::Poor => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensor {
    Optical,
    Infrared,
    HammerSounding,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectType {
    Crack,
    Delamination,
    Spall,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRecord {
    pub bridge_id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub condition: Condition,
    #[serde(default)]
    pub surface_map_ids: Vec<String>,
}

impl BridgeRecord {
    pub fn location(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// Geo-anchored orthomosaic metadata. `anchor_row`/`anchor_col` is the mosaic
/// pixel that sits exactly on `anchor_lat`/`anchor_lon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMapMeta {
    pub map_id: String,
    pub bridge_id: String,
    pub phase: u8,
    pub sensor: Sensor,
    pub anchor_lat: f64,
    pub anchor_lon: f64,
    pub anchor_row: f64,
    pub anchor_col: f64,
    pub gsd_m: f64,
    pub rows: usize,
    pub cols: usize,
}

impl SurfaceMapMeta {
    pub fn anchor(&self) -> GeoPoint {
        GeoPoint {
            lat: self.anchor_lat,
            lon: self.anchor_lon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRecord {
    pub defect_id: String,
    pub bridge_id: String,
    pub lat: f64,
    pub lon: f64,
    pub defect_type: DefectType,
    pub sensor: Sensor,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub image_id: Option<String>,
}

impl DefectRecord {
    pub fn position(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// GPS metadata attached to one capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGeoTag {
    pub lat: f64,
    pub lon: f64,
    pub alt_m: f64,
    /// Compass heading, degrees clockwise from north.
    pub heading_deg: f64,
    /// ISO-8601 capture time.
    pub timestamp: String,
}

impl ImageGeoTag {
    pub fn position(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// Explicit placement overriding automatic registration: maps this image's
/// pixels into the previous image's pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManualTransform {
    pub scale: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub file: String,
    pub geotag: ImageGeoTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect_type: Option<DefectType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<ManualTransform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub bridge_id: String,
    pub phase: u8,
    pub sensor: Sensor,
    pub images: Vec<ManifestEntry>,
}
