//! Demo catalog: five bridges around Lincoln, Nebraska. NE-0003 is in poor
//! condition and carries three surface maps and a set of defects.

use super::model::{BridgeRecord, Condition, DefectRecord, Sensor, SurfaceMapMeta};
use super::store::{CatalogError, Store};
use crate::geodesy::{to_geo, LocalPoint};
use crate::synth::{closeup, make_deck_scene, DeckSceneConfig, GroundScene};

pub const DEMO_BRIDGE_COUNT: usize = 5;
pub const DEMO_MAPPED_BRIDGE: &str = "NE-0003";

const BRIDGES: [(&str, &str, f64, f64, Condition); DEMO_BRIDGE_COUNT] = [
    ("NE-0001", "N 27th St over Salt Creek", 40.8342, -96.6818, Condition::Good),
    ("NE-0002", "W O St over Oak Creek", 40.8155, -96.7421, Condition::Fair),
    ("NE-0003", "S 14th St over Antelope Creek", 40.7962, -96.6985, Condition::Poor),
    ("NE-0004", "Pioneers Blvd over Beal Slough", 40.7712, -96.6579, Condition::Good),
    ("NE-0005", "Cornhusker Hwy over Dead Mans Run", 40.8451, -96.6503, Condition::Fair),
];

const DECK_LENGTH_M: f64 = 24.0;
const DECK_WIDTH_M: f64 = 8.0;
const TEXELS_PER_M: f64 = 10.0;
const CLOSEUP_PX: usize = 64;

fn scene(bridge: &BridgeRecord, featureless: bool, seed: u64) -> Result<GroundScene, CatalogError> {
    let mut cfg = DeckSceneConfig::new(DECK_LENGTH_M, DECK_WIDTH_M, TEXELS_PER_M, 4, seed);
    cfg.featureless = featureless;
    cfg.anchor = bridge.location();
    make_deck_scene(&cfg).map_err(|e| CatalogError::InvalidRecord(e.to_string()))
}

/// Surface map whose anchor is the scene origin, which maps to the bridge location.
fn map_meta(map_id: &str, bridge: &BridgeRecord, phase: u8, sensor: Sensor, s: &GroundScene) -> SurfaceMapMeta {
    SurfaceMapMeta {
        map_id: map_id.to_string(),
        bridge_id: bridge.bridge_id.clone(),
        phase,
        sensor,
        anchor_lat: s.anchor.lat,
        anchor_lon: s.anchor.lon,
        anchor_row: s.extent.max_y * s.texels_per_m - 0.5,
        anchor_col: -s.extent.min_x * s.texels_per_m - 0.5,
        gsd_m: 1.0 / s.texels_per_m,
        rows: s.texture.height(),
        cols: s.texture.width(),
    }
}

/// Fills `store` with the demo catalog and persists it. Fails with
/// `DuplicateId` if the maps are already present.
pub fn seed_demo(store: &mut Store) -> Result<(), CatalogError> {
    store.transact(|s| {
        for (id, name, lat, lon, condition) in BRIDGES {
            s.put_bridge(BridgeRecord {
                bridge_id: id.to_string(),
                name: name.to_string(),
                lat,
                lon,
                condition,
                surface_map_ids: Vec::new(),
            })?;
        }
        let bridge = s.bridge(DEMO_MAPPED_BRIDGE).cloned().expect("just inserted");
        let optical = scene(&bridge, false, 3)?;
        let infrared = scene(&bridge, true, 3)?;
        let sounding = scene(&bridge, true, 4)?;
        for (map_id, phase, sensor, sc) in [
            ("NE-0003-p1-optical", 1, Sensor::Optical, &optical),
            ("NE-0003-p1-infrared", 1, Sensor::Infrared, &infrared),
            ("NE-0003-p2-sounding", 2, Sensor::HammerSounding, &sounding),
        ] {
            s.add_map(map_meta(map_id, &bridge, phase, sensor, sc), sc.texture.clone())?;
        }
        for (i, d) in optical.defects.iter().enumerate() {
            let p = to_geo(LocalPoint::new(d.x, d.y), optical.anchor)?;
            s.add_defect(
                DefectRecord {
                    defect_id: format!("NE-0003-p2-{:03}", i + 1),
                    bridge_id: bridge.bridge_id.clone(),
                    lat: p.lat,
                    lon: p.lon,
                    defect_type: d.kind,
                    sensor: Sensor::Optical,
                    note: format!("{:?} noted in ground survey, {:.1} m from the south abutment", d.kind, d.x),
                    image_id: None,
                },
                Some(closeup(&optical, d.position(), CLOSEUP_PX)),
            )?;
        }
        Ok(())
    })
}
