//! HTTP API over a catalog store.
//!
//! Reads share the store through a read lock; the single write endpoint takes
//! the write lock for the whole add-and-persist, so readers always see a
//! store that matches disk.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::RwLock;
use tower_http::services::ServeDir;

use deckfuse_core::catalog::{
    add_defect, open_store, query_bridges, query_defects, BridgeRecord, CatalogError, DefectRecord, Store,
    SurfaceMapMeta,
};
use deckfuse_core::geodesy::GeoBBox;
use deckfuse_core::raster::{encode_bmp, load_pnm, Raster};

pub type SharedStore = Arc<RwLock<Store>>;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{status} {code}: {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        let message = e.to_string();
        match e {
            CatalogError::DuplicateId(_) => Self::new(StatusCode::CONFLICT, "duplicate_defect", message),
            CatalogError::UnknownBridge(_) => Self::new(StatusCode::NOT_FOUND, "bridge_not_found", message),
            CatalogError::InvalidId(_) | CatalogError::InvalidRecord(_) | CatalogError::Geo(_) => {
                Self::bad_request(message)
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

/// A bridge with its surface maps, in listing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeDetail {
    #[serde(flatten)]
    pub bridge: BridgeRecord,
    pub surface_maps: Vec<SurfaceMapMeta>,
}

/// POST body: a defect record plus an optional base64-encoded PNM close-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewDefect {
    #[serde(flatten)]
    pub record: DefectRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

const BBOX_KEYS: [&str; 4] = ["min_lat", "min_lon", "max_lat", "max_lon"];

/// All four bbox parameters, or none for the whole globe.
fn bbox_of(params: &HashMap<String, String>) -> Result<GeoBBox, ApiError> {
    let present = BBOX_KEYS.iter().filter(|k| params.contains_key(**k)).count();
    if present == 0 {
        return Ok(GeoBBox::world());
    }
    if present < 4 {
        return Err(ApiError::bad_request("give all of min_lat, min_lon, max_lat, max_lon or none"));
    }
    let mut v = [0.0; 4];
    for (slot, key) in v.iter_mut().zip(BBOX_KEYS) {
        *slot = params[key]
            .parse()
            .map_err(|_| ApiError::bad_request(format!("{key} is not a number")))?;
    }
    GeoBBox::new(v[0], v[1], v[2], v[3]).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn bmp(img: Arc<Raster>) -> Response {
    ([(header::CONTENT_TYPE, "image/bmp")], encode_bmp(&img)).into_response()
}

async fn list_bridges(
    State(store): State<SharedStore>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Vec<BridgeRecord>>, ApiError> {
    let bbox = bbox_of(&params)?;
    Ok(Json(query_bridges(&*store.read().await, &bbox)))
}

async fn get_bridge(State(store): State<SharedStore>, UrlPath(id): UrlPath<String>) -> Result<Json<BridgeDetail>, ApiError> {
    let s = store.read().await;
    let bridge = s
        .bridge(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "bridge_not_found", format!("no bridge {id:?}")))?;
    let surface_maps = s.maps_of(&id).into_iter().cloned().collect();
    Ok(Json(BridgeDetail { bridge, surface_maps }))
}

fn map_not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "map_not_found", format!("no surface map {id:?}"))
}

async fn get_map(State(store): State<SharedStore>, UrlPath(id): UrlPath<String>) -> Result<Json<SurfaceMapMeta>, ApiError> {
    let s = store.read().await;
    let m = s.map(&id).ok_or_else(|| map_not_found(&id))?;
    Ok(Json(m.meta.clone()))
}

async fn map_image(State(store): State<SharedStore>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let mosaic = {
        let s = store.read().await;
        s.map(&id).ok_or_else(|| map_not_found(&id))?.mosaic.clone()
    };
    Ok(bmp(mosaic))
}

async fn list_defects(
    State(store): State<SharedStore>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Vec<DefectRecord>>, ApiError> {
    let bbox = bbox_of(&params)?;
    Ok(Json(query_defects(&*store.read().await, &bbox)))
}

async fn post_defect(State(store): State<SharedStore>, body: Bytes) -> Result<(StatusCode, Json<DefectRecord>), ApiError> {
    let req: NewDefect = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let image = req
        .image
        .map(|b64| {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| ApiError::bad_request(format!("image is not base64: {e}")))?;
            load_pnm(&bytes).map_err(|e| ApiError::bad_request(format!("image is not a PNM raster: {e}")))
        })
        .transpose()?;
    let id = req.record.defect_id.clone();
    let mut guard = store.write_owned().await;
    // persisting touches the disk, so keep it off the async workers
    let stored = tokio::task::spawn_blocking(move || {
        add_defect(&mut guard, req.record, image)?;
        Ok::<_, CatalogError>(guard.defect(&id).cloned().expect("just stored"))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn defect_image(State(store): State<SharedStore>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let img = {
        let s = store.read().await;
        let d = s
            .defect(&id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "defect_not_found", format!("no defect {id:?}")))?;
        d.image_id
            .as_deref()
            .and_then(|i| s.defect_image(i))
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_image", format!("defect {id:?} has no image")))?
    };
    Ok(bmp(img))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn api_method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this endpoint")
}

async fn builtin_index() -> Html<&'static str> {
    Html(include_str!("index.html"))
}

/// The full application: `/api/...` plus static assets from `webui` at `/`,
/// or a plain index page when no asset directory is given.
pub fn router(store: SharedStore, webui: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/bridges", get(list_bridges))
        .route("/bridges/{id}", get(get_bridge))
        .route("/maps/{id}", get(get_map))
        .route("/maps/{id}/image", get(map_image))
        .route("/defects", get(list_defects).post(post_defect))
        .route("/defects/{id}/image", get(defect_image))
        .fallback(api_not_found)
        .method_not_allowed_fallback(api_method_not_allowed)
        .with_state(store);
    let app = Router::new().nest("/api", api);
    match webui {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(builtin_index)),
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("cannot listen on {addr}: {source}")]
    Io { addr: SocketAddr, source: std::io::Error },
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|source| match source.kind() {
        std::io::ErrorKind::AddrInUse => ServeError::PortInUse(addr.port()),
        _ => ServeError::Io { addr, source },
    })
}

/// Opens the store and serves until `shutdown` resolves.
pub async fn serve(
    store_path: PathBuf,
    addr: SocketAddr,
    webui: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let store = open_store(store_path)?;
    let listener = bind(addr).await?;
    let app = router(Arc::new(RwLock::new(store)), webui.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| ServeError::Io { addr, source })
}
