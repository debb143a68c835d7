//! `/api/v1` routes.

use std::collections::HashMap;
use std::future::Future;
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use cybermap::aggregate::{make_frames, Endpoint, Frame, FrameEnvelope};
use cybermap::coords::{asn_to_cell, cell_to_prefix, ip_to_cell, parse_scale, scale_notation, Asn, Cell, Cidr};
use cybermap::hilbert::{Order, Rect};
use cybermap::ingest::{PrefixAttrs, Relationship};
use serde::Serialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::catalog::{render_tile, Dataset, LayerName, LayerRequest, TileError, TileRequest};

/// Upper bound on cells across all frames of one response.
pub const MAX_FRAME_CELLS: u64 = 1 << 25;
pub const DEFAULT_FRAME_ORDER: u32 = 8;

/// Shared handle to the current dataset. Requests take a snapshot; a reload
/// replaces it for later requests without disturbing those in flight.
#[derive(Clone)]
pub struct AppState {
    current: Arc<RwLock<Arc<Dataset>>>,
}

impl AppState {
    pub fn new(data: Dataset) -> AppState {
        AppState { current: Arc::new(RwLock::new(Arc::new(data))) }
    }

    pub fn snapshot(&self) -> Arc<Dataset> {
        self.current.read().expect("snapshot lock").clone()
    }

    pub fn swap(&self, data: Dataset) {
        *self.current.write().expect("snapshot lock") = Arc::new(data);
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    detail: String,
}

impl ApiError {
    fn bad_request(detail: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::BAD_REQUEST, detail: detail.into() }
    }

    fn not_found(detail: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::NOT_FOUND, detail: detail.into() }
    }

    fn internal(detail: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, detail: detail.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let error = match self.status {
            StatusCode::NOT_FOUND => "not_found",
            StatusCode::BAD_REQUEST => "bad_request",
            _ => "internal",
        };
        (self.status, Json(json!({ "error": error, "detail": self.detail }))).into_response()
    }
}

impl From<TileError> for ApiError {
    fn from(e: TileError) -> Self {
        match e {
            TileError::UnknownLayer(_) => ApiError::not_found(e.to_string()),
            TileError::Render(cybermap::render::RenderError::Png(_) | cybermap::render::RenderError::Io(_)) => {
                ApiError::internal(e.to_string())
            }
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

type Params = HashMap<String, String>;
type ApiResult<T> = Result<T, ApiError>;

fn params(q: Result<Query<Params>, QueryRejection>) -> ApiResult<Params> {
    q.map(|Query(p)| p).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn required<'a>(p: &'a Params, key: &str) -> ApiResult<&'a str> {
    p.get(key).map(String::as_str).ok_or_else(|| ApiError::bad_request(format!("missing `{key}`")))
}

fn number<T: std::str::FromStr>(p: &Params, key: &str) -> ApiResult<Option<T>> {
    p.get(key)
        .map(|v| {
            v.parse().map_err(|_| ApiError::bad_request(format!("`{key}` must be a non-negative integer, got `{v}`")))
        })
        .transpose()
}

fn order_param(p: &Params) -> ApiResult<Option<Order>> {
    let by_order = number::<u32>(p, "order")?
        .map(|n| Order::new(n).map_err(|e| ApiError::bad_request(e.to_string())))
        .transpose()?;
    let by_scale =
        p.get("scale").map(|s| parse_scale(s).map_err(|e| ApiError::bad_request(e.to_string()))).transpose()?;
    match (by_order, by_scale) {
        (Some(a), Some(b)) if a != b => Err(ApiError::bad_request("`order` and `scale` disagree")),
        (a, b) => Ok(a.or(b)),
    }
}

fn rect_param(p: &Params) -> ApiResult<Option<Rect>> {
    let coords = ["x0", "y0", "x1", "y1"].map(|k| number::<u32>(p, k));
    let [x0, y0, x1, y1] = coords;
    match (x0?, y0?, x1?, y1?) {
        (None, None, None, None) => Ok(None),
        (Some(x0), Some(y0), Some(x1), Some(y1)) => {
            Rect::new(x0, y0, x1, y1).map(Some).ok_or_else(|| ApiError::bad_request("rect bounds are inverted"))
        }
        _ => Err(ApiError::bad_request("rect needs all of x0, y0, x1, y1")),
    }
}

fn layer_param(p: &Params) -> ApiResult<LayerName> {
    required(p, "layer")?.parse().map_err(ApiError::not_found)
}

/// Parses tile query parameters.
pub fn tile_request(p: &Params) -> Result<TileRequest, ApiError> {
    let name = layer_param(p)?;
    let order = order_param(p)?.ok_or_else(|| ApiError::bad_request("missing `order` or `scale`"))?;
    let endpoint = match p.get("endpoint") {
        Some(e) => e.parse().map_err(ApiError::bad_request)?,
        None => Endpoint::default(),
    };
    let cell_px = number::<u32>(p, "cell_px")?.unwrap_or(1);
    Ok(TileRequest { layer: LayerRequest { name, order, window: rect_param(p)?, endpoint }, cell_px })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

async fn layers(State(state): State<AppState>) -> Response {
    let data = state.snapshot();
    Json(json!({ "layers": data.catalog(), "sources": data.sources })).into_response()
}

async fn tile(State(state): State<AppState>, q: Result<Query<Params>, QueryRejection>) -> ApiResult<Response> {
    let req = tile_request(&params(q)?)?;
    let data = state.snapshot();
    let png = blocking(move || Ok(render_tile(&data, &req)?)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Serialize)]
struct CellInfo {
    order: u8,
    x: u32,
    y: u32,
    index: u64,
    cidr: Cidr,
}

impl From<Cell> for CellInfo {
    fn from(c: Cell) -> Self {
        CellInfo { order: c.order.get(), x: c.x, y: c.y, index: c.index(), cidr: cell_to_prefix(c) }
    }
}

/// Position of an AS on the AS grid.
#[derive(Serialize)]
struct AsCell {
    order: u8,
    x: u32,
    y: u32,
    index: u64,
}

#[derive(Serialize)]
struct Match<'a> {
    prefix: Cidr,
    attrs: &'a PrefixAttrs,
}

/// Body of `/resolve`: the address's cell at every order and its longest
/// matching prefix.
pub fn resolve_body(data: &Dataset, ip: Ipv4Addr) -> Value {
    let cells: Vec<CellInfo> = Order::all().map(|o| ip_to_cell(ip, o).into()).collect();
    let hit = data.store.lookup(ip);
    json!({
        "ip": ip,
        "cells": cells,
        "match": hit.map(|(prefix, attrs)| Match { prefix, attrs }),
        "asn": hit.and_then(|(_, a)| a.asn),
    })
}

/// Body of `/cell`: prefix, attributes of the most specific entry covering
/// the whole cell, and the four refinements.
pub fn cell_body(data: &Dataset, c: Cell) -> Value {
    let cidr = cell_to_prefix(c);
    let hit = data.store.lookup_within(cidr.base(), cidr.len());
    let children: Vec<CellInfo> = c.children().into_iter().map(CellInfo::from).collect();
    json!({
        "cell": CellInfo::from(c),
        "scale": scale_notation(c.order),
        "match": hit.map(|(prefix, attrs)| Match { prefix, attrs }),
        "more_specific": data.store.within(cidr).iter().filter(|(p, _)| p.len() > cidr.len()).count(),
        "children": children,
    })
}

async fn resolve(State(state): State<AppState>, q: Result<Query<Params>, QueryRejection>) -> ApiResult<Response> {
    let p = params(q)?;
    let text = required(&p, "ip")?;
    let ip: Ipv4Addr =
        text.parse().map_err(|_| ApiError::bad_request(format!("`{text}` is not a dotted-quad IPv4 address")))?;
    Ok(Json(resolve_body(&state.snapshot(), ip)).into_response())
}

async fn cell(State(state): State<AppState>, q: Result<Query<Params>, QueryRejection>) -> ApiResult<Response> {
    let p = params(q)?;
    let order = order_param(&p)?.ok_or_else(|| ApiError::bad_request("missing `order` or `scale`"))?;
    let x = number::<u32>(&p, "x")?.ok_or_else(|| ApiError::bad_request("missing `x`"))?;
    let y = number::<u32>(&p, "y")?.ok_or_else(|| ApiError::bad_request("missing `y`"))?;
    let c = Cell::new(order, x, y).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(cell_body(&state.snapshot(), c)).into_response())
}

#[derive(Serialize)]
struct LinkInfo {
    asn: Asn,
    relationship: Relationship,
    /// True when the queried AS is the provider side.
    provider: Option<bool>,
}

/// Body of `/as/{asn}`, or `None` when the AS appears nowhere in the data.
pub fn as_body(data: &Dataset, asn: Asn) -> Option<Value> {
    if !data.known_asns().contains_key(&asn) {
        return None;
    }
    let links: Vec<LinkInfo> = data
        .as_links(asn)
        .into_iter()
        .map(|l| {
            let (other, first) = if l.a == asn { (l.b, true) } else { (l.a, false) };
            let provider = (l.relationship == Relationship::ProviderCustomer).then_some(first);
            LinkInfo { asn: other, relationship: l.relationship, provider }
        })
        .collect();
    let cell = asn_to_cell(asn).ok().map(|c| AsCell { order: c.order.get(), x: c.x, y: c.y, index: c.index() });
    Some(json!({
        "asn": asn,
        "height": data.heights.get(&asn).copied().unwrap_or(0),
        "mappable": cell.is_some(),
        "cell": cell,
        "prefixes": data.as_prefixes(asn),
        "links": links,
    }))
}

async fn as_info(State(state): State<AppState>, Path(raw): Path<String>) -> ApiResult<Response> {
    let asn: Asn = raw.parse().map_err(|_| ApiError::bad_request(format!("`{raw}` is not an AS number")))?;
    as_body(&state.snapshot(), asn)
        .map(|body| Json(body).into_response())
        .ok_or_else(|| ApiError::not_found(format!("AS{asn} does not appear in the data")))
}

/// Body of `/frames`: one envelope per interval plus the event total.
pub fn frames_body(frames: &[Frame], interval: u64, order: Order) -> Value {
    let envelopes: Vec<FrameEnvelope> = frames.iter().map(FrameEnvelope::from).collect();
    let total: u64 = frames.iter().map(|f| f.layer.total()).sum();
    json!({ "interval": interval, "order": order.get(), "event_count": total, "frames": envelopes })
}

async fn frames(State(state): State<AppState>, q: Result<Query<Params>, QueryRejection>) -> ApiResult<Response> {
    let p = params(q)?;
    let name = layer_param(&p)?;
    let data = state.snapshot();
    if !data.has_layer(name) {
        return Err(ApiError::not_found(format!("unknown layer `{name}`")));
    }
    if name != LayerName::Events {
        return Err(ApiError::bad_request("frames are built from the events layer"));
    }
    let interval = number::<u64>(&p, "interval")?.ok_or_else(|| ApiError::bad_request("missing `interval`"))?;
    if interval == 0 {
        return Err(ApiError::bad_request("`interval` must be positive"));
    }
    let order = order_param(&p)?.unwrap_or(Order::new(DEFAULT_FRAME_ORDER).expect("valid order"));
    let span = match (data.events.iter().map(|e| e.timestamp).min(), data.events.iter().map(|e| e.timestamp).max()) {
        (Some(lo), Some(hi)) => (hi - lo) / interval + 1,
        _ => 0,
    };
    if span.saturating_mul(order.len()) > MAX_FRAME_CELLS {
        return Err(ApiError::bad_request(format!(
            "{span} frames at order {} exceed the {MAX_FRAME_CELLS}-cell response limit",
            order.get()
        )));
    }
    let body = blocking(move || {
        let frames = make_frames(&data.events, interval, order).map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok(frames_body(&frames, interval, order))
    })
    .await?;
    Ok(Json(body).into_response())
}

async fn api_fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

/// The full application: API routes plus, when given, static files.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/layers", get(layers))
        .route("/tile", get(tile))
        .route("/resolve", get(resolve))
        .route("/cell", get(cell))
        .route("/as/{asn}", get(as_info))
        .route("/frames", get(frames))
        .fallback(api_fallback);
    let app = Router::new().nest("/api/v1", api).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_fallback),
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
