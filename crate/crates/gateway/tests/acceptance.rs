//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::FRAC_PI_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use deckfuse_core::catalog::{
    geo_to_map_pixel, map_pixel_to_geo, open_store, persist, query_bridges, query_defects, seed_demo, BridgeRecord,
    Condition, DefectRecord, DefectType, Sensor,
};
use deckfuse_core::geodesy::{bbox_contains, to_geo, to_local, GeoBBox, GeoPoint, LocalPoint};
use deckfuse_core::pipeline::{stitch_frames, Frame, Placement, StitchConfig};
use deckfuse_core::projection::{
    footprint_bounds, ground_of_pixel, ipm_pixel, render_orthophoto, CameraRig, GroundBounds, GroundPoint, OrthoGrid,
};
use deckfuse_core::raster::{encode_bmp, load_pnm, save_pnm, Raster};
use deckfuse_core::synth::{
    blob_centroid, dataset_scene, make_checkerboard_scene, make_flight, pinhole_project, random_oblique_rig,
    random_visible_point, render_view, DatasetConfig, GroundTruth, BLOB_CALM_M,
};
use deckfuse_gateway::{router, ApiError, BridgeDetail};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1. ipm_pixel agrees with an independent pinhole projection
fn oracle_equivalence() -> Outcome {
    const TOL_PX: f64 = 1e-6;
    const LIMIT: Duration = Duration::from_secs(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: Vec<_> = (0..1000)
        .map(|_| {
            let rig = random_oblique_rig(&mut rng);
            let (g, _) = random_visible_point(&mut rng, &rig);
            (rig, g)
        })
        .collect();
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for (rig, g) in &cases {
        let theta = rig.pitch.to_degrees();
        let alpha = rig.half_aperture.to_degrees();
        if !(15.0..=75.0).contains(&theta) || !(20.0..=44.0).contains(&alpha) || theta <= alpha {
            return Err(format!("rig outside the tested envelope: theta {theta}, alpha {alpha}"));
        }
        let (Some(a), Some(b)) = (ipm_pixel(rig, *g), pinhole_project(rig, *g)) else {
            return Err(format!("visible point not projected by both models: {g:?}"));
        };
        worst = worst.max((a.u - b.u).abs()).max((a.v - b.v).abs());
    }
    let took = t0.elapsed();
    ensure(
        worst < TOL_PX && took < LIMIT,
        format!("max |diff| {worst:.2e} px over 1000 rigs (< {TOL_PX:e}), {took:.2?} (< {LIMIT:?})"),
    )
}

// 2. pixel -> ground -> pixel is the identity
fn inverse_consistency() -> Outcome {
    const TOL_PX: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let rig = random_oblique_rig(&mut rng);
        // rows past nadir look behind the camera and are out of view
        let step = 2.0 * rig.half_aperture / (rig.rows - 1) as f64;
        let nadir_row = (FRAC_PI_2 - rig.row_angle(0.0)) / step;
        let u = rng.random_range(0.0..=nadir_row.min((rig.rows - 1) as f64));
        let v = rng.random_range(0.0..=(rig.cols - 1) as f64);
        let g = ground_of_pixel(&rig, u, v).map_err(|e| e.to_string())?;
        let p = ipm_pixel(&rig, g).ok_or_else(|| format!("ground point of ({u}, {v}) not visible"))?;
        worst = worst.max((p.u - u).abs()).max((p.v - v).abs());
    }
    ensure(worst < TOL_PX, format!("max |diff| {worst:.2e} px over 10000 pixels (< {TOL_PX:e})"))
}

/// Sub-pixel corner of a checkerboard: the point about which the image is most
/// nearly point-symmetric (opposite quadrants share a color).
fn symmetric_center(img: &Raster, start: (f64, f64), radius: i32) -> Option<(f64, f64)> {
    let cost = |x: f64, y: f64| -> Option<f64> {
        let mut sum = 0.0;
        for dy in -radius..=radius {
            for dx in 0..=radius {
                if dx == 0 && dy <= 0 {
                    continue;
                }
                let a = img.sample_gray(x + dx as f64, y + dy as f64)?;
                let b = img.sample_gray(x - dx as f64, y - dy as f64)?;
                sum += (a - b) * (a - b);
            }
        }
        Some(sum)
    };
    let mut best = (start.0, start.1, cost(start.0, start.1)?);
    for step in [0.25, 0.05, 0.01] {
        let center = best;
        for i in -8..=8 {
            for j in -8..=8 {
                let (x, y) = (center.0 + i as f64 * step, center.1 + j as f64 * step);
                if let Some(c) = cost(x, y) {
                    if c < best.2 {
                        best = (x, y, c);
                    }
                }
            }
        }
    }
    Some((best.0, best.1))
}

// 3. perspective correction of a checkerboard
fn perspective_correction() -> Outcome {
    const CORNER_TOL_PX: f64 = 0.5;
    const MAE_TOL: f64 = 3.0;
    const LIMIT: Duration = Duration::from_secs(5);
    const SQUARE_M: f64 = 2.5;
    const RAMP_M: f64 = 1.0;
    let anchor = GeoPoint { lat: 40.8, lon: -96.7 };
    let rig = CameraRig::new(0.0, 0.0, 10.0, 45f64.to_radians(), 0.0, 20f64.to_radians(), 101, 101)
        .map_err(|e| e.to_string())?;
    let fb = footprint_bounds(&rig).ok_or("footprint unbounded")?;
    let extent = GroundBounds {
        min_x: fb.min_x - 5.0,
        max_x: fb.max_x + 5.0,
        min_y: fb.min_y - 5.0,
        max_y: fb.max_y + 5.0,
    };
    let scene = make_checkerboard_scene(extent, SQUARE_M, RAMP_M, 40.0, anchor);
    let view = render_view(&rig, &scene);

    let side = (fb.max_x - fb.min_x).max(fb.max_y - fb.min_y);
    let gsd = side / 400.0;
    let grid = OrthoGrid::new(LocalPoint::new(fb.min_x, fb.max_y), gsd, 400, 400).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let ortho = render_orthophoto(&rig, &view, &grid).map_err(|e| e.to_string())?;
    let took = t0.elapsed();

    // intensity against the analytic board at every valid pixel center
    let mut abs_err = 0.0;
    let mut n = 0usize;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if ortho.is_valid(c, r) {
                let g = grid.ground_of(r as f64, c as f64);
                abs_err += (ortho.get(c, r, 0) as f64 - scene.sample(g)).abs();
                n += 1;
            }
        }
    }
    let mae = abs_err / n.max(1) as f64;

    let radius = (0.8 * RAMP_M / gsd).ceil() as i32;
    let mut worst = 0.0f64;
    let mut corners = 0;
    let k0 = (fb.min_x / SQUARE_M).ceil() as i32;
    let k1 = (fb.max_x / SQUARE_M).floor() as i32;
    let l0 = (fb.min_y / SQUARE_M).ceil() as i32;
    let l1 = (fb.max_y / SQUARE_M).floor() as i32;
    for k in k0..=k1 {
        for l in l0..=l1 {
            let truth = grid.pixel_of(GroundPoint::new(k as f64 * SQUARE_M, l as f64 * SQUARE_M));
            // only corners whose whole window was imaged
            let start = (truth.1, truth.0);
            let Some(found) = symmetric_center(&ortho, start, radius) else {
                continue;
            };
            corners += 1;
            worst = worst.max((found.0 - truth.1).hypot(found.1 - truth.0));
        }
    }
    ensure(
        corners >= 10 && worst < CORNER_TOL_PX && mae < MAE_TOL && took < LIMIT,
        format!(
            "{corners} corners, worst offset {worst:.3} px (< {CORNER_TOL_PX}), MAE {mae:.2} gray (< {MAE_TOL}), {took:.2?} (< {LIMIT:?})"
        ),
    )
}

/// Worst fiducial placement error in mosaic pixels, and the placements used.
fn mosaic_error(featureless: bool) -> Result<(f64, Vec<Placement>, usize), String> {
    let cfg = DatasetConfig {
        featureless,
        ..Default::default()
    };
    let (scene, rig) = dataset_scene(&cfg).map_err(|e| e.to_string())?;
    let (plan, views) = make_flight(&scene, &rig, cfg.views, cfg.overlap, 0.0, cfg.seed).map_err(|e| e.to_string())?;
    let frames: Vec<Frame> = views
        .into_iter()
        .map(|v| Frame {
            image: v.image,
            geotag: v.geotag,
            rig: v.rig,
            manual: None,
        })
        .collect();
    let out = stitch_frames(&frames, &StitchConfig::default()).map_err(|e| e.to_string())?;
    let (map, gsd) = (&out.map, out.map.gsd);
    let wp0 = plan.waypoints[0];
    let mut worst = 0.0f64;
    let mut n = 0;
    for d in scene.defects.iter().filter(|d| d.kind == DefectType::Delamination) {
        let truth = (map.anchor.row - (d.y - wp0.1) / gsd, map.anchor.col + (d.x - wp0.0) / gsd);
        let found = blob_centroid(&map.image, truth, BLOB_CALM_M / gsd)
            .ok_or_else(|| format!("no blob near {truth:?}"))?;
        worst = worst.max((found.0 - truth.0).hypot(found.1 - truth.1));
        n += 1;
    }
    Ok((worst, out.placements.iter().skip(1).map(|p| p.method).collect(), n))
}

// 4. mosaic accuracy on an 8-view flight
fn mosaic_accuracy() -> Outcome {
    const FEATURE_TOL_PX: f64 = 1.0;
    const GPS_NOISE_M: f64 = 0.0;
    let (textured, methods, n) = mosaic_error(false)?;
    let all_features = methods.iter().all(|m| *m == Placement::FeatureBased);
    let (plain, plain_methods, m) = mosaic_error(true)?;
    let gsd = dataset_scene(&DatasetConfig::default()).map(|(_, r)| deckfuse_core::projection::axis_gsd(&r));
    let gps_tol = 0.5 + GPS_NOISE_M / gsd.map_err(|e| e.to_string())?;
    let all_gps = plain_methods.iter().all(|m| *m == Placement::GpsFallback);
    ensure(
        all_features && textured < FEATURE_TOL_PX && all_gps && plain < gps_tol && n > 0 && m > 0,
        format!(
            "textured: {n} fiducials, worst {textured:.3} px (< {FEATURE_TOL_PX}), all pairs feature-based {all_features}; \
             featureless: {m} fiducials, worst {plain:.3} px (< {gps_tol}), all pairs GPS {all_gps}"
        ),
    )
}

// 5. geodesy
fn geodesy() -> Outcome {
    const ROUND_TRIP_DEG: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let anchor = GeoPoint {
            lat: rng.random_range(-80.0..80.0),
            lon: rng.random_range(-180.0..180.0),
        };
        let local = LocalPoint::new(rng.random_range(-2000.0..2000.0), rng.random_range(-2000.0..2000.0));
        let p = to_geo(local, anchor).map_err(|e| e.to_string())?;
        let back = to_geo(to_local(p, anchor).map_err(|e| e.to_string())?, anchor).map_err(|e| e.to_string())?;
        worst = worst.max((back.lat - p.lat).abs()).max((back.lon - p.lon).abs());
    }
    let a = GeoPoint { lat: 40.8, lon: -96.7 };
    let north = to_local(GeoPoint { lat: 40.801, lon: -96.7 }, a).map_err(|e| e.to_string())?.north;
    let rel = (north - 111.3195).abs() / 111.3195;
    ensure(
        worst < ROUND_TRIP_DEG && rel < 1e-3,
        format!("round trip {worst:.1e} deg (< {ROUND_TRIP_DEG:e}); 0.001 deg lat = {north:.4} m ({:.4}% off)", rel * 100.0),
    )
}

// 6. catalog round trip and queries
fn catalog() -> Outcome {
    let mut queries = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut store = open_store(dir.path()).map_err(|e| e.to_string())?;
        let point = |rng: &mut ChaCha8Rng| (rng.random_range(40.0..41.0), rng.random_range(-97.0..-96.0));
        for i in 0..20 {
            let (lat, lon) = point(&mut rng);
            store
                .put_bridge(BridgeRecord {
                    bridge_id: format!("B{i:02}"),
                    name: format!("bridge {i}"),
                    lat,
                    lon,
                    condition: [Condition::Good, Condition::Fair, Condition::Poor][i % 3],
                    surface_map_ids: vec![],
                })
                .map_err(|e| e.to_string())?;
        }
        for i in 0..80 {
            let (lat, lon) = point(&mut rng);
            let image = (i % 5 == 0).then(|| Raster::filled(3, 2, 1, i as u8));
            store
                .add_defect(
                    DefectRecord {
                        defect_id: format!("D{i:03}"),
                        bridge_id: format!("B{:02}", i % 20),
                        lat,
                        lon,
                        defect_type: DefectType::Crack,
                        sensor: Sensor::Optical,
                        note: format!("note {i}"),
                        image_id: None,
                    },
                    image,
                )
                .map_err(|e| e.to_string())?;
        }
        persist(&mut store).map_err(|e| e.to_string())?;
        let back = open_store(dir.path()).map_err(|e| e.to_string())?;
        if back != store {
            return Err(format!("seed {seed}: reopened store differs"));
        }
        for _ in 0..10 {
            let (a, b) = (point(&mut rng), point(&mut rng));
            let bbox = GeoBBox::new(a.0.min(b.0), a.1.min(b.1), a.0.max(b.0), a.1.max(b.1)).map_err(|e| e.to_string())?;
            let want_b: Vec<_> = store.bridges().filter(|x| bbox_contains(&bbox, x.location())).cloned().collect();
            let want_d: Vec<_> = store.defects().filter(|x| bbox_contains(&bbox, x.position())).cloned().collect();
            if query_bridges(&back, &bbox) != want_b || query_defects(&back, &bbox) != want_d {
                return Err(format!("seed {seed}: query differs from brute force"));
            }
            queries += 1;
        }
    }
    Ok(format!("100 stores of 100 records round-trip; {queries} bbox queries equal brute force"))
}

/// Exact key set of a JSON object.
fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
    k.sort();
    k
}

fn sorted(names: &[&str]) -> Vec<String> {
    let mut k: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    k.sort();
    k
}

async fn api_contract_async() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut store = open_store(dir.path()).map_err(|e| e.to_string())?;
    seed_demo(&mut store).map_err(|e| e.to_string())?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let base = format!("http://{}", listener.local_addr().map_err(|e| e.to_string())?);
    let app = router(Arc::new(tokio::sync::RwLock::new(store.clone())), None);
    tokio::spawn(async move { axum::serve(listener, app).await });
    let client = reqwest::Client::new();
    let get = |path: String| {
        let client = client.clone();
        let base = base.clone();
        async move { client.get(format!("{base}{path}")).send().await.map_err(|e| e.to_string()) }
    };
    let bridge_keys = sorted(&["bridge_id", "name", "lat", "lon", "condition", "surface_map_ids"]);
    let meta_keys = sorted(&["map_id", "bridge_id", "phase", "sensor", "anchor_lat", "anchor_lon", "anchor_row", "anchor_col", "gsd_m", "rows", "cols"]);
    let defect_keys = sorted(&["defect_id", "bridge_id", "lat", "lon", "defect_type", "sensor", "note", "image_id"]);
    let error_keys = sorted(&["status", "code", "message"]);
    let mut checks = 0;
    let mut check = |ok: bool, what: &str| -> Result<(), String> {
        checks += 1;
        if ok {
            Ok(())
        } else {
            Err(what.to_string())
        }
    };
    let json_of = |r: reqwest::Response| async move { r.json::<Value>().await.map_err(|e| e.to_string()) };

    let bridges = json_of(get("/api/bridges".into()).await?).await?;
    let list = bridges.as_array().ok_or("bridges is not an array")?;
    check(list.len() == 5, "five bridges")?;
    check(list.iter().all(|b| keys(b) == bridge_keys), "bridge shape")?;
    let poor: Vec<_> = list.iter().filter(|b| b["condition"] == "Poor").collect();
    check(poor.len() == 1, "exactly one Poor bridge")?;
    let typed: Vec<BridgeRecord> = serde_json::from_value(bridges.clone()).map_err(|e| e.to_string())?;
    check(typed.iter().filter(|b| b.condition.flag_color() == "red").count() == 1, "one red flag")?;

    for b in &typed {
        let detail = json_of(get(format!("/api/bridges/{}", b.bridge_id)).await?).await?;
        let mut want = bridge_keys.clone();
        want.push("surface_maps".into());
        want.sort();
        check(keys(&detail) == want, "bridge detail shape")?;
        let d: BridgeDetail = serde_json::from_value(detail).map_err(|e| e.to_string())?;
        for m in &d.surface_maps {
            let meta = json_of(get(format!("/api/maps/{}", m.map_id)).await?).await?;
            check(keys(&meta) == meta_keys, "map shape")?;
            let r = get(format!("/api/maps/{}/image", m.map_id)).await?;
            check(r.headers().get("content-type").is_some_and(|v| v == "image/bmp"), "map image type")?;
            let bytes = r.bytes().await.map_err(|e| e.to_string())?;
            let stored = store.map(&m.map_id).ok_or("map missing from store")?;
            check(bytes.as_ref() == encode_bmp(&stored.mosaic).as_slice(), "map image bytes")?;
        }
    }
    let defects = json_of(get("/api/defects".into()).await?).await?;
    let list = defects.as_array().ok_or("defects is not an array")?;
    check(list.iter().all(|d| keys(d) == defect_keys), "defect shape")?;
    for d in list {
        let r = get(format!("/api/defects/{}/image", d["defect_id"].as_str().unwrap_or(""))).await?;
        check(r.headers().get("content-type").is_some_and(|v| v == "image/bmp"), "defect image type")?;
    }

    // read-your-write
    let body = json!({
        "defect_id": "accept-1", "bridge_id": "NE-0002", "lat": 40.8156, "lon": -96.7422,
        "defect_type": "spall", "sensor": "optical", "note": "spall at curb",
        "image": base64_pnm(&Raster::filled(4, 4, 1, 90)),
    });
    let r = client.post(format!("{base}/api/defects")).json(&body).send().await.map_err(|e| e.to_string())?;
    check(r.status() == 201, "POST returns 201")?;
    let created = json_of(r).await?;
    check(keys(&created) == defect_keys, "created defect shape")?;
    let hits = json_of(get("/api/defects?min_lat=40.8&min_lon=-96.75&max_lat=40.82&max_lon=-96.74".into()).await?).await?;
    check(hits.as_array().is_some_and(|h| h.iter().any(|d| d["defect_id"] == "accept-1")), "POST then query")?;
    let dup = client.post(format!("{base}/api/defects")).json(&body).send().await.map_err(|e| e.to_string())?;
    check(dup.status() == 409, "duplicate is 409")?;
    let dup = json_of(dup).await?;
    check(keys(&dup) == error_keys && dup["code"] == "duplicate_defect", "duplicate body")?;

    // documented 404 shapes
    for (path, code) in [
        ("/api/bridges/NE-9999", "bridge_not_found"),
        ("/api/maps/unknown", "map_not_found"),
        ("/api/maps/unknown/image", "map_not_found"),
        ("/api/defects/unknown/image", "defect_not_found"),
    ] {
        let r = get(path.into()).await?;
        check(r.status() == 404, path)?;
        let e = json_of(r).await?;
        check(keys(&e) == error_keys, path)?;
        let e: ApiError = serde_json::from_value(e).map_err(|e| e.to_string())?;
        check(e.status == 404 && e.code == code, path)?;
    }
    let plain = json!({"defect_id": "accept-2", "bridge_id": "NE-0002", "lat": 40.0, "lon": -96.0,
        "defect_type": "other", "sensor": "other", "note": ""});
    client.post(format!("{base}/api/defects")).json(&plain).send().await.map_err(|e| e.to_string())?;
    let r = get("/api/defects/accept-2/image".into()).await?;
    let e = json_of(r).await?;
    check(e["status"] == 404 && e["code"] == "no_image", "no_image")?;
    Ok(format!("{checks} checks over every endpoint"))
}

fn base64_pnm(r: &Raster) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(save_pnm(r))
}

// 7. API contract
fn api_contract() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(api_contract_async())
}

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_deckfuse"))
        .args(args)
        .env_remove("DECKFUSE_STORE")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(format!("deckfuse {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn meters_between(a: GeoPoint, b: GeoPoint) -> f64 {
    let l = to_local(b, a).expect("valid points");
    l.east.hypot(l.north)
}

// 8. end-to-end two-phase run through the CLI
fn end_to_end() -> Outcome {
    const LIMIT: Duration = Duration::from_secs(60);
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = work.path().join("data");
    let store = work.path().join("store");
    let s = |p: &Path| p.to_str().expect("utf-8 temp path").to_string();

    let t0 = Instant::now();
    cli(&["synth", "--out", &s(&data)])?;
    cli(&["stitch", "--manifest", &s(&data.join("phase1.json")), "--store", &s(&store), "--map-id", "phase1"])?;
    cli(&["ingest", "--manifest", &s(&data.join("phase2.json")), "--store", &s(&store), "--mode", "defects"])?;
    let out = cli(&["query", "--store", &s(&store), "--bbox", "-90,-180,90,180", "--defects"])?;
    let took = t0.elapsed();

    let found: Vec<DefectRecord> = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    let truth: GroundTruth =
        serde_json::from_slice(&std::fs::read(data.join("truth.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let catalog = open_store(&store).map_err(|e| e.to_string())?;
    let map = catalog.map("phase1").ok_or("phase-1 map missing")?;
    let gsd = map.meta.gsd_m;
    let tol = 2.0 * gsd;

    if found.len() != truth.defects.len() {
        return Err(format!("query returned {} defects, truth has {}", found.len(), truth.defects.len()));
    }
    let mut worst_record = 0.0f64;
    let mut worst_map = 0.0f64;
    for t in &truth.defects {
        let tp = GeoPoint { lat: t.lat, lon: t.lon };
        let rec = found
            .iter()
            .min_by(|a, b| meters_between(tp, a.position()).total_cmp(&meters_between(tp, b.position())))
            .ok_or("no defects")?;
        worst_record = worst_record.max(meters_between(tp, rec.position()));
        if t.kind == DefectType::Delamination {
            // the phase-2 record must land on its blob in the phase-1 map
            let px = geo_to_map_pixel(&map.meta, rec.position()).map_err(|e| e.to_string())?;
            let c = blob_centroid(&map.mosaic, px, BLOB_CALM_M / gsd).ok_or("blob not found in map")?;
            let seen = map_pixel_to_geo(&map.meta, c.0, c.1).map_err(|e| e.to_string())?;
            worst_map = worst_map.max(meters_between(tp, seen));
        }
    }
    // the phase-1 map itself must be readable as an image
    let mosaic = load_pnm(&std::fs::read(store.join("maps/phase1/mosaic.ppm")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(
        worst_record < tol && worst_map < tol && took < LIMIT && mosaic.width() == map.meta.cols,
        format!(
            "{} defects; record error {worst_record:.4} m, map-located error {worst_map:.4} m (< 2 gsd = {tol:.4} m); {took:.1?} (< {LIMIT:?})",
            found.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("ipm pixel model equals pinhole oracle", oracle_equivalence),
        ("pixel/ground inverse consistency", inverse_consistency),
        ("checkerboard perspective correction", perspective_correction),
        ("8-view mosaic fiducial accuracy", mosaic_accuracy),
        ("geodesy round trip and scale", geodesy),
        ("catalog round trip and bbox queries", catalog),
        ("HTTP API contract", api_contract),
        ("two-phase CLI run", end_to_end),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
