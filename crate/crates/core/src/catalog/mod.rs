//! Map layer and defects layer.

mod fixture;
mod ingest;
mod model;
mod store;

pub use fixture::{seed_demo, DEMO_BRIDGE_COUNT, DEMO_MAPPED_BRIDGE};
pub use ingest::{ingest_batch, load_manifest, ImageReport, IngestMode, IngestReport};
pub use model::*;
pub use store::{
    add_defect, geo_to_map_pixel, map_pixel_to_geo, open_store, persist, query_bridges, query_defects,
    validate_id, CatalogError, Store, StoredMap, BRIDGES_FILE, DEFECTS_FILE, DEFECT_IMAGES_DIR, MAPS_DIR,
};
