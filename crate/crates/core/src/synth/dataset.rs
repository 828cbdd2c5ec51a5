//! On-disk two-phase inspection dataset: phase-1 flight views with their
//! ingest manifest, phase-2 defect close-ups with theirs, and a ground-truth
//! sidecar for tests.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    closeup, make_deck_scene, make_flight, DeckSceneConfig, GroundScene, SynthError,
    SHOULDER_FRACTION, SPECKLE_CLEARANCE_M,
};
use crate::catalog::{DefectType, ImageGeoTag, IngestManifest, ManifestEntry, Sensor};
use crate::geodesy::{to_geo, LocalPoint};
use crate::projection::{axis_gsd, footprint_bounds, CameraFile, CameraRig};
use crate::raster::save_pnm;

pub const PHASE1_MANIFEST: &str = "phase1.json";
pub const PHASE2_MANIFEST: &str = "phase2.json";
pub const TRUTH_FILE: &str = "truth.json";
/// Texture density relative to the source camera's on-axis ground spacing.
const TEXELS_PER_GSD: f64 = 3.0;
const MAX_TEXELS: f64 = 60e6;
const CLOSEUP_PX: usize = 96;
const CLOSEUP_ALT_M: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub views: usize,
    pub pitch_deg: f64,
    pub aperture_deg: f64,
    pub height_m: f64,
    pub overlap: f64,
    pub gps_noise_m: f64,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub featureless: bool,
    pub n_defects: usize,
    pub bridge_id: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            views: 8,
            pitch_deg: 60.0,
            aperture_deg: 25.0,
            height_m: 10.0,
            overlap: 0.6,
            gps_noise_m: 0.0,
            seed: 1,
            rows: 241,
            cols: 241,
            featureless: false,
            n_defects: 6,
            bridge_id: "synth-bridge".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDefect {
    /// Deck-plane position, meters east/north of the scene anchor.
    pub x_m: f64,
    pub y_m: f64,
    pub lat: f64,
    pub lon: f64,
    pub kind: DefectType,
    /// Close-up file, relative to the dataset root.
    pub closeup: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub anchor_lat: f64,
    pub anchor_lon: f64,
    pub camera: CameraFile,
    /// True camera positions, meters east/north of the scene anchor.
    pub waypoints: Vec<[f64; 2]>,
    pub overlap: f64,
    pub footprint_length_m: f64,
    pub deck_length_m: f64,
    pub deck_width_m: f64,
    pub texels_per_m: f64,
    pub gps_noise_m: f64,
    pub defects: Vec<TruthDefect>,
}

/// Scene and flight sized so that every view lands on textured ground and
/// every fiducial lies where the pass sees it in full.
pub fn dataset_scene(cfg: &DatasetConfig) -> Result<(GroundScene, CameraRig), SynthError> {
    if cfg.views == 0 {
        return Err(SynthError::InvalidParameter("need at least one view".into()));
    }
    let rig = CameraRig::new(
        0.0,
        0.0,
        cfg.height_m,
        cfg.pitch_deg.to_radians(),
        0.0,
        cfg.aperture_deg.to_radians(),
        cfg.rows,
        cfg.cols,
    )
    .map_err(|e| SynthError::InvalidParameter(e.to_string()))?;
    let fp = footprint_bounds(&rig).ok_or(SynthError::FootprintUnbounded)?;
    let length = fp.max_x - fp.min_x;
    let deck_length = length * (1.0 + (cfg.views - 1) as f64 * (1.0 - cfg.overlap));
    let deck_width = fp.max_y - fp.min_y;
    let texels_per_m = (TEXELS_PER_GSD / axis_gsd(&rig)).ceil();
    let texels = (deck_length + deck_width) * 2.0 * deck_width * texels_per_m * texels_per_m;
    if texels > MAX_TEXELS {
        return Err(SynthError::InvalidParameter(format!(
            "scene would need {texels:.0} texels; lower the resolution or the view count"
        )));
    }

    // a fiducial at lateral offset y is fully seen once the wedge half-width exceeds it
    let tan_a = rig.half_aperture.tan();
    let reach = fp.max_x * 0.6 * tan_a - SPECKLE_CLEARANCE_M;
    let band = (deck_width / 4.0).min(reach).max(0.0);
    let first_camera = -fp.min_x;
    let x_lo = (first_camera + (band + SPECKLE_CLEARANCE_M) / tan_a).max(4.5);
    let x_hi = deck_length - SPECKLE_CLEARANCE_M;

    let mut scene_cfg = DeckSceneConfig::new(deck_length, deck_width, texels_per_m, cfg.n_defects, cfg.seed);
    scene_cfg.featureless = cfg.featureless;
    scene_cfg.defect_x = Some((x_lo, x_hi));
    scene_cfg.defect_half_band = Some(band);
    Ok((make_deck_scene(&scene_cfg)?, rig))
}

fn io_err(path: &Path, e: std::io::Error) -> SynthError {
    SynthError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

fn defect_note(kind: DefectType) -> &'static str {
    match kind {
        DefectType::Delamination => "hollow sound under hammer; delaminated area",
        DefectType::Crack => "hairline crack, surface sealed",
        DefectType::Spall => "spalled concrete",
        DefectType::Other => "inspector note",
    }
}

/// Renders the dataset into `dir` (created if absent) and returns its ground truth.
pub fn write_dataset(dir: &Path, cfg: &DatasetConfig) -> Result<GroundTruth, SynthError> {
    let (scene, rig) = dataset_scene(cfg)?;
    let deck_width = (scene.extent.max_y - scene.extent.min_y) / (1.0 + 2.0 * SHOULDER_FRACTION);
    let deck = (scene.extent.max_x - scene.extent.min_x - 2.0 * SHOULDER_FRACTION * deck_width, deck_width);
    let (plan, views) = make_flight(&scene, &rig, cfg.views, cfg.overlap, cfg.gps_noise_m, cfg.seed)?;

    for sub in ["views", "closeups"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
    }
    let mut camera = CameraFile::from(&rig);
    camera.l_m = 0.0;
    camera.d_m = 0.0;

    let mut phase1 = Vec::with_capacity(views.len());
    for (i, view) in views.iter().enumerate() {
        let file = format!("views/view_{i:03}.pgm");
        write(&dir.join(&file), &save_pnm(&view.image))?;
        phase1.push(ManifestEntry {
            file,
            geotag: view.geotag.clone(),
            camera: Some(camera),
            note: None,
            defect_type: None,
            transform: None,
        });
    }
    let phase1 = IngestManifest {
        bridge_id: cfg.bridge_id.clone(),
        phase: 1,
        sensor: if cfg.featureless { Sensor::Infrared } else { Sensor::Optical },
        images: phase1,
    };

    // close-up geotags get their own noise stream so phase 1 is unchanged by defect count
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC105_E0B5);
    let noise = Normal::new(0.0, cfg.gps_noise_m.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut phase2 = Vec::with_capacity(scene.defects.len());
    let mut truth_defects = Vec::with_capacity(scene.defects.len());
    for (k, d) in scene.defects.iter().enumerate() {
        let file = format!("closeups/defect_{k:03}.pgm");
        write(&dir.join(&file), &save_pnm(&closeup(&scene, d.position(), CLOSEUP_PX)))?;
        let truth = to_geo(LocalPoint::new(d.x, d.y), scene.anchor)?;
        let (ne, nn) = if cfg.gps_noise_m > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        let tagged = to_geo(LocalPoint::new(d.x + ne, d.y + nn), scene.anchor)?;
        phase2.push(ManifestEntry {
            file: file.clone(),
            geotag: ImageGeoTag {
                lat: tagged.lat,
                lon: tagged.lon,
                alt_m: CLOSEUP_ALT_M,
                heading_deg: 0.0,
                timestamp: format!("2018-06-02T09:{:02}:00Z", k % 60),
            },
            camera: None,
            note: Some(defect_note(d.kind).into()),
            defect_type: Some(d.kind),
            transform: None,
        });
        truth_defects.push(TruthDefect {
            x_m: d.x,
            y_m: d.y,
            lat: truth.lat,
            lon: truth.lon,
            kind: d.kind,
            closeup: file,
        });
    }
    let phase2 = IngestManifest {
        bridge_id: cfg.bridge_id.clone(),
        phase: 2,
        sensor: Sensor::Optical,
        images: phase2,
    };

    let truth = GroundTruth {
        anchor_lat: scene.anchor.lat,
        anchor_lon: scene.anchor.lon,
        camera,
        waypoints: plan.waypoints.iter().map(|&(x, y)| [x, y]).collect(),
        overlap: plan.overlap,
        footprint_length_m: plan.footprint_length,
        deck_length_m: deck.0,
        deck_width_m: deck.1,
        texels_per_m: scene.texels_per_m,
        gps_noise_m: cfg.gps_noise_m,
        defects: truth_defects,
    };
    write(&dir.join(PHASE1_MANIFEST), &to_json(&phase1))?;
    write(&dir.join(PHASE2_MANIFEST), &to_json(&phase2))?;
    write(&dir.join(TRUTH_FILE), &to_json(&truth))?;
    Ok(truth)
}
