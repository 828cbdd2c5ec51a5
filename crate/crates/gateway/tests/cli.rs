use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use deckfuse_core::catalog::{BridgeRecord, DefectRecord, IngestManifest};
use deckfuse_core::projection::{footprint_bounds, parse_camera_json, render_orthophoto, CameraFile, OrthoGrid};
use deckfuse_core::raster::{load_pnm, save_pnm};
use serde_json::Value;

fn deckfuse(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deckfuse"));
    c.args(args).env_remove("DECKFUSE_STORE");
    c
}

fn run(args: &[&str]) -> Output {
    deckfuse(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, views: &str) -> Value {
    let out = run(&["synth", "--out", p(dir), "--views", views, "--rows", "161", "--cols", "161", "--defects", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["query", "--store", "/tmp", "--bbox", "1,2,3"]).status.code(), Some(1));
    assert_eq!(run(&["query", "--store", "/tmp", "--bbox", "1,2,3,x"]).status.code(), Some(1));
    // the store is mandatory when the environment does not supply it
    assert_eq!(run(&["query", "--bbox", "0,0,1,1"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn query_without_store_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing-here");
    let out = run(&["query", "--store", p(&missing), "--bbox", "40,-97,41,-96"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert!(!missing.exists());
}

#[test]
fn seed_and_query_with_env_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    assert_eq!(run(&["seed", "--store", p(&store)]).status.code(), Some(0));
    // seeding twice collides with the existing maps
    assert_eq!(run(&["seed", "--store", p(&store)]).status.code(), Some(2));

    let out = deckfuse(&["query", "--bbox", "40.7,-96.8,40.9,-96.6", "--bridges"])
        .env("DECKFUSE_STORE", &store)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let bridges: Vec<BridgeRecord> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(bridges.len(), 5);

    let out = run(&["query", "--store", p(&store), "--bbox", "-90,-180,90,180", "--defects"]);
    let defects: Vec<DefectRecord> = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!defects.is_empty());
    assert!(defects.iter().all(|d| d.bridge_id == "NE-0003"));
}

#[test]
fn ipm_matches_library_rendering() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2");
    let manifest: IngestManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("phase1.json")).unwrap()).unwrap();
    let entry = &manifest.images[0];
    let camera: CameraFile = entry.camera.unwrap();
    let cam_path = dir.path().join("cam.json");
    std::fs::write(&cam_path, serde_json::to_vec(&camera).unwrap()).unwrap();
    let image = dir.path().join(&entry.file);
    let out_path = dir.path().join("ortho.pgm");

    let out = run(&["ipm", "--image", p(&image), "--camera", p(&cam_path), "--gsd", "0.05", "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let rig = parse_camera_json(&std::fs::read(&cam_path).unwrap()).unwrap();
    let src = load_pnm(&std::fs::read(&image).unwrap()).unwrap();
    let grid = OrthoGrid::covering(&footprint_bounds(&rig).unwrap(), 0.05).unwrap();
    let want = save_pnm(&render_orthophoto(&rig, &src, &grid).unwrap());
    assert_eq!(std::fs::read(&out_path).unwrap(), want);

    let bad = run(&["ipm", "--image", p(&image), "--camera", p(&cam_path), "--gsd", "0", "--out", p(&out_path)]);
    assert_eq!(bad.status.code(), Some(2));
    let missing = run(&["ipm", "--image", "/no/such.pgm", "--camera", p(&cam_path), "--gsd", "0.05", "--out", p(&out_path)]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn stitch_and_ingest_populate_the_store() {
    let data = tempfile::tempdir().unwrap();
    let summary = synth(data.path(), "3");
    let store = tempfile::tempdir().unwrap();

    let out = run(&[
        "stitch",
        "--manifest",
        summary["phase1_manifest"].as_str().unwrap(),
        "--store",
        p(store.path()),
        "--map-id",
        "pass-1",
        "--tau",
        "12",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["created"][0], "pass-1");
    assert_eq!(report["images"].as_array().unwrap().len(), 3);
    assert!(store.path().join("maps/pass-1/mosaic.ppm").is_file());
    assert!(store.path().join("maps/pass-1/mask.pgm").is_file());

    let again = run(&[
        "stitch",
        "--manifest",
        summary["phase1_manifest"].as_str().unwrap(),
        "--store",
        p(store.path()),
        "--map-id",
        "pass-1",
    ]);
    assert_eq!(again.status.code(), Some(2));

    let out = run(&[
        "ingest",
        "--manifest",
        summary["phase2_manifest"].as_str().unwrap(),
        "--store",
        p(store.path()),
        "--mode",
        "defects",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["created"].as_array().unwrap().len(), 3);

    let out = run(&["query", "--store", p(store.path()), "--bbox", "-90,-180,90,180", "--defects"]);
    let defects: Vec<DefectRecord> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(defects.len(), 3);

    assert_eq!(
        run(&["ingest", "--manifest", "/no/such.json", "--store", p(store.path()), "--mode", "defects"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["ingest", "--manifest", "/no/such.json", "--store", p(store.path()), "--mode", "maps"]).status.code(),
        Some(1)
    );
}

#[test]
fn serve_answers_and_reports_busy_ports() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["seed", "--store", p(dir.path())]).status.code(), Some(0));
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = deckfuse(&["serve", "--store", p(dir.path()), "--port", &port.to_string()])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();

    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let get = |url: String| rt.block_on(async { reqwest::get(url).await?.text().await });
    let deadline = Instant::now() + Duration::from_secs(20);
    let body = loop {
        match get(format!("http://127.0.0.1:{port}/api/bridges")) {
            Ok(b) => break b,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(100)),
            Err(e) => panic!("server did not come up: {e}"),
        }
    };
    let bridges: Vec<BridgeRecord> = serde_json::from_str(&body).unwrap();
    assert_eq!(bridges.len(), 5);

    let busy = run(&["serve", "--store", p(dir.path()), "--port", &port.to_string()]);
    assert_eq!(busy.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&busy.stderr).contains("in use"));

    child.kill().unwrap();
    child.wait().unwrap();
}
