//! The `deckfuse` command line. Exit status: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use deckfuse_core::catalog::{
    ingest_batch, load_manifest, open_store, query_bridges, query_defects, seed_demo, IngestMode,
};
use deckfuse_core::geodesy::GeoBBox;
use deckfuse_core::pipeline::StitchConfig;
use deckfuse_core::projection::{footprint_bounds, parse_camera_json, render_orthophoto, OrthoGrid};
use deckfuse_core::raster::{load_pnm, save_pnm};
use deckfuse_core::stitcher::RegistrationConfig;
use deckfuse_core::synth::{write_dataset, DatasetConfig, PHASE1_MANIFEST, PHASE2_MANIFEST, TRUTH_FILE};

use crate::api::serve;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "deckfuse", version, about = "Bridge-deck imagery: perspective correction, stitching and a defect catalog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic deck, a flight over it, manifests and ground truth
    Synth(SynthArgs),
    /// Perspective-correct one image onto the deck plane
    Ipm(IpmArgs),
    /// Stitch a phase-1 manifest into a surface map in the store
    Stitch(StitchArgs),
    /// Ingest a phase-2 manifest as defect records
    Ingest(IngestArgs),
    /// Serve the HTTP API
    Serve(ServeArgs),
    /// Print bridges or defects inside a bounding box as JSON
    Query(QueryArgs),
    /// Fill a store with the five-bridge demo catalog
    Seed(StoreArg),
}

#[derive(Debug, Args)]
struct StoreArg {
    #[arg(long, env = "DECKFUSE_STORE")]
    store: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    views: usize,
    /// Depression of the optical axis, degrees
    #[arg(long, default_value_t = 60.0)]
    pitch: f64,
    /// Half aperture, degrees
    #[arg(long, default_value_t = 25.0)]
    aperture: f64,
    #[arg(long, default_value_t = 10.0)]
    height: f64,
    #[arg(long, default_value_t = 0.6)]
    overlap: f64,
    /// Standard deviation of geotag noise, meters
    #[arg(long, default_value_t = 0.0)]
    gps_noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 241)]
    rows: usize,
    #[arg(long, default_value_t = 241)]
    cols: usize,
    #[arg(long, default_value_t = 6)]
    defects: usize,
    /// Blank deck with only delamination marks, as a thermal pass would see it
    #[arg(long)]
    featureless: bool,
    #[arg(long, default_value = "synth-bridge")]
    bridge_id: String,
}

#[derive(Debug, Args)]
struct IpmArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    /// Output ground sample distance, meters per pixel
    #[arg(long)]
    gsd: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StitchArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, env = "DECKFUSE_STORE")]
    store: PathBuf,
    #[arg(long)]
    map_id: String,
    /// Minimum RANSAC inliers before a pair falls back to GPS placement
    #[arg(long)]
    tau: Option<usize>,
    /// Mosaic resolution in meters per pixel; defaults to the first camera's on-axis spacing
    #[arg(long)]
    gsd: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IngestKind {
    Defects,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, env = "DECKFUSE_STORE")]
    store: PathBuf,
    #[arg(long, value_enum)]
    mode: IngestKind,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "DECKFUSE_STORE")]
    store: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Directory of built web client assets to serve at /
    #[arg(long)]
    webui: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long, env = "DECKFUSE_STORE")]
    store: PathBuf,
    /// min_lat,min_lon,max_lat,max_lon
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    bbox: GeoBBox,
    #[arg(long, conflicts_with = "bridges")]
    defects: bool,
    #[arg(long)]
    bridges: bool,
}

fn parse_bbox(s: &str) -> Result<GeoBBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("{p:?} is not a number")))
        .collect::<Result<_, _>>()?;
    let [a, b, c, d] = v[..] else {
        return Err("expected min_lat,min_lon,max_lat,max_lon".into());
    };
    GeoBBox::new(a, b, c, d).map_err(|e| e.to_string())
}

/// A failure after argument parsing, reported with exit status 2.
#[derive(Debug)]
struct DataError(String);

impl<E: std::fmt::Display> From<E> for DataError {
    fn from(e: E) -> Self {
        DataError(e.to_string())
    }
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<(), DataError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|e| DataError(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SynthSummary {
    phase1_manifest: PathBuf,
    phase2_manifest: PathBuf,
    truth: PathBuf,
    views: usize,
    defects: usize,
}

fn synth(a: SynthArgs) -> Result<(), DataError> {
    let cfg = DatasetConfig {
        views: a.views,
        pitch_deg: a.pitch,
        aperture_deg: a.aperture,
        height_m: a.height,
        overlap: a.overlap,
        gps_noise_m: a.gps_noise,
        seed: a.seed,
        rows: a.rows,
        cols: a.cols,
        featureless: a.featureless,
        n_defects: a.defects,
        bridge_id: a.bridge_id,
    };
    let truth = write_dataset(&a.out, &cfg)?;
    print_json(&SynthSummary {
        phase1_manifest: a.out.join(PHASE1_MANIFEST),
        phase2_manifest: a.out.join(PHASE2_MANIFEST),
        truth: a.out.join(TRUTH_FILE),
        views: truth.waypoints.len(),
        defects: truth.defects.len(),
    })
}

fn ipm(a: IpmArgs) -> Result<(), DataError> {
    let img = load_pnm(&read(&a.image)?).map_err(|e| DataError(format!("{}: {e}", a.image.display())))?;
    let rig = parse_camera_json(&read(&a.camera)?).map_err(|e| DataError(format!("{}: {e}", a.camera.display())))?;
    let bounds = footprint_bounds(&rig).ok_or_else(|| DataError("camera footprint reaches the horizon".into()))?;
    let grid = OrthoGrid::covering(&bounds, a.gsd)?;
    let ortho = render_orthophoto(&rig, &img, &grid)?;
    fs::write(&a.out, save_pnm(&ortho)).map_err(|e| DataError(format!("{}: {e}", a.out.display())))?;
    Ok(())
}

fn stitch(a: StitchArgs) -> Result<(), DataError> {
    let manifest = load_manifest(&a.manifest)?;
    let mut store = open_store(&a.store)?;
    let mut registration = RegistrationConfig::default();
    if let Some(tau) = a.tau {
        registration.tau = tau;
    }
    let mode = IngestMode::StitchToMap {
        map_id: a.map_id,
        config: StitchConfig { registration, gsd: a.gsd },
    };
    print_json(&ingest_batch(&mut store, &manifest, &mode)?)
}

fn ingest(a: IngestArgs) -> Result<(), DataError> {
    let IngestKind::Defects = a.mode;
    let manifest = load_manifest(&a.manifest)?;
    let mut store = open_store(&a.store)?;
    print_json(&ingest_batch(&mut store, &manifest, &IngestMode::DefectRecords)?)
}

fn serve_cmd(a: ServeArgs) -> Result<(), DataError> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let addr = SocketAddr::new(a.host, a.port);
    runtime.block_on(async move {
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        eprintln!("deckfuse: serving {} on http://{addr}", a.store.display());
        serve(a.store, addr, a.webui, shutdown).await
    })?;
    Ok(())
}

fn query(a: QueryArgs) -> Result<(), DataError> {
    // a query never creates a store
    if !a.store.is_dir() {
        return Err(DataError(format!("no store at {}", a.store.display())));
    }
    let store = open_store(&a.store)?;
    if a.defects {
        print_json(&query_defects(&store, &a.bbox))
    } else {
        print_json(&query_bridges(&store, &a.bbox))
    }
}

fn seed(a: StoreArg) -> Result<(), DataError> {
    let mut store = open_store(&a.store)?;
    seed_demo(&mut store)?;
    print_json(&store.bridges().collect::<Vec<_>>())
}

/// Runs one command line and returns its exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ipm(a) => ipm(a),
        Command::Stitch(a) => stitch(a),
        Command::Ingest(a) => ingest(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Query(a) => query(a),
        Command::Seed(a) => seed(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(DataError(msg)) => {
            eprintln!("deckfuse: error: {msg}");
            EXIT_DATA
        }
    }
}
