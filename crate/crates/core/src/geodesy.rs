//! WGS84 degrees to and from a local east/north plane.
//!
//! The plane is a spherical equirectangular approximation about an anchor:
//! the cosine factor is taken at the anchor latitude, so the mapping is
//! linear in (dlat, dlon) and exactly invertible at a fixed anchor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Equatorial radius used for the tangent-plane scale, meters.
pub const EARTH_RADIUS_M: f64 = 6378137.0;

const MAX_ANCHOR_OFFSET_DEG: f64 = 1.0;
const MAX_LOCAL_OFFSET_M: f64 = 100_000.0;
const MAX_ANCHOR_LAT_DEG: f64 = 89.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of range: {0}")]
    OutOfRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = Self { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(GeoError::OutOfRange(format!(
                "({}, {}) is not a valid lat/lon",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Meters east and north of some anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint {
    pub east: f64,
    pub north: f64,
}

impl LocalPoint {
    pub fn new(east: f64, north: f64) -> Self {
        Self { east, north }
    }
}

/// Boundary-inclusive lat/lon rectangle. Antimeridian wrap is not supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GeoBBox {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self, GeoError> {
        let vals = [min_lat, min_lon, max_lat, max_lon];
        if vals.iter().any(|v| !v.is_finite()) || min_lat > max_lat || min_lon > max_lon {
            return Err(GeoError::OutOfRange(format!(
                "invalid bbox [{min_lat}, {min_lon}, {max_lat}, {max_lon}]"
            )));
        }
        Ok(Self {
            min_lat,
            min_lon,
            max_lat,
            max_lon,
        })
    }

    /// Covers the whole globe.
    pub fn world() -> Self {
        Self {
            min_lat: -90.0,
            min_lon: -180.0,
            max_lat: 90.0,
            max_lon: 180.0,
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        bbox_contains(self, p)
    }
}

pub fn bbox_contains(b: &GeoBBox, p: GeoPoint) -> bool {
    b.min_lat <= p.lat && p.lat <= b.max_lat && b.min_lon <= p.lon && p.lon <= b.max_lon
}

fn check_anchor(anchor: GeoPoint) -> Result<(), GeoError> {
    anchor.validate()?;
    if anchor.lat.abs() > MAX_ANCHOR_LAT_DEG {
        return Err(GeoError::OutOfRange(format!(
            "anchor latitude {} too close to a pole",
            anchor.lat
        )));
    }
    Ok(())
}

fn east_scale(anchor: GeoPoint) -> f64 {
    EARTH_RADIUS_M * anchor.lat.to_radians().cos()
}

pub fn to_local(p: GeoPoint, anchor: GeoPoint) -> Result<LocalPoint, GeoError> {
    check_anchor(anchor)?;
    p.validate()?;
    let dlat = p.lat - anchor.lat;
    let dlon = p.lon - anchor.lon;
    if dlat.abs() >= MAX_ANCHOR_OFFSET_DEG || dlon.abs() >= MAX_ANCHOR_OFFSET_DEG {
        return Err(GeoError::OutOfRange(format!(
            "({}, {}) is more than 1 degree from anchor ({}, {})",
            p.lat, p.lon, anchor.lat, anchor.lon
        )));
    }
    Ok(LocalPoint {
        east: dlon.to_radians() * east_scale(anchor),
        north: dlat.to_radians() * EARTH_RADIUS_M,
    })
}

pub fn to_geo(p: LocalPoint, anchor: GeoPoint) -> Result<GeoPoint, GeoError> {
    check_anchor(anchor)?;
    if !(p.east.abs() < MAX_LOCAL_OFFSET_M && p.north.abs() < MAX_LOCAL_OFFSET_M) {
        return Err(GeoError::OutOfRange(format!(
            "local offset ({}, {}) exceeds 100 km",
            p.east, p.north
        )));
    }
    let out = GeoPoint {
        lat: anchor.lat + (p.north / EARTH_RADIUS_M).to_degrees(),
        lon: anchor.lon + (p.east / east_scale(anchor)).to_degrees(),
    };
    out.validate()?;
    Ok(out)
}
