//! HTTP service over CyberMap layers: tiles addressed by grid rect,
//! address and cell lookups, AS details and event frames.

pub mod api;
pub mod catalog;

pub use api::{as_body, cell_body, frames_body, resolve_body, router, serve, AppState};
pub use catalog::{render_tile, render_tile_image, Dataset, LayerName, LayerRequest, TileRequest};
