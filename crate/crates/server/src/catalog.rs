//! Data directory loading, the layer catalog, and tile rendering shared
//! with the command line.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use cybermap::aggregate::{
    as_ip_counts, as_layer, rasterize_allocations, rasterize_events, rasterize_flows, AggregateError, AsHeightMap,
    Endpoint, GridLayer, LayerKind,
};
use cybermap::coords::{as_order, Asn};
use cybermap::hilbert::{Order, Rect};
use cybermap::ingest::{
    build_store, parse_as_links, parse_events_csv, parse_flows_csv, parse_iana_csv, parse_pfx2as, AsLink, EventRecord,
    FlowRecord, LineError, Parsed, PrefixAsRecord, PrefixStore,
};
use cybermap::render::{render_layer, Image, Palette, RenderError, RenderOptions};
use serde::Serialize;
use thiserror::Error;

pub const IANA_FILE: &str = "iana.csv";
pub const PFX2AS_FILE: &str = "pfx2as.txt";
pub const FLOWS_FILE: &str = "flows.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const LINKS_FILE: &str = "as-links.txt";

/// Full-grid layers up to this order are cached and cropped; finer tiles
/// are aggregated for the requested window only.
pub const CACHE_MAX_ORDER: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerName {
    Allocation,
    Traffic,
    Events,
    AsHeights,
}

impl LayerName {
    pub const ALL: [LayerName; 4] =
        [LayerName::Allocation, LayerName::Traffic, LayerName::Events, LayerName::AsHeights];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerName::Allocation => "allocation",
            LayerName::Traffic => "traffic",
            LayerName::Events => "events",
            LayerName::AsHeights => "as_heights",
        }
    }

    pub fn kind(self) -> LayerKind {
        match self {
            LayerName::Allocation => LayerKind::Category,
            LayerName::Traffic => LayerKind::Updown,
            LayerName::Events | LayerName::AsHeights => LayerKind::Scalar,
        }
    }

    /// Orders a tile may be requested at.
    pub fn orders(self) -> (u8, u8) {
        match self {
            LayerName::AsHeights => (as_order().get(), as_order().get()),
            _ => (1, 16),
        }
    }
}

impl fmt::Display for LayerName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerName::ALL.into_iter().find(|l| l.as_str() == s).ok_or_else(|| format!("unknown layer `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("data directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// One input file as loaded.
#[derive(Debug, Clone, Serialize)]
pub struct SourceFile {
    pub file: String,
    pub records: usize,
    pub skipped: usize,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: LayerName,
    pub kind: LayerKind,
    pub palette: Palette,
    pub min_order: u8,
    pub max_order: u8,
    pub cached_max_order: u8,
    pub sources: Vec<String>,
    /// Seconds since the epoch at which the data was loaded.
    pub built_at: u64,
}

/// Everything loaded from one data directory. Immutable once built, apart
/// from the layer cache.
#[derive(Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub store: PrefixStore,
    pub origins: Vec<PrefixAsRecord>,
    pub heights: AsHeightMap,
    pub links: Vec<AsLink>,
    pub flows: Vec<FlowRecord>,
    pub events: Vec<EventRecord>,
    pub sources: Vec<SourceFile>,
    pub built_at: u64,
    layers: Vec<LayerName>,
    cache: Mutex<HashMap<(LayerName, u8, Endpoint), Arc<GridLayer>>>,
}

fn read_optional<T>(
    dir: &Path,
    file: &str,
    parse: fn(File) -> io::Result<Parsed<T>>,
    sources: &mut Vec<SourceFile>,
) -> Result<Option<Vec<T>>, LoadError> {
    let path = dir.join(file);
    let handle = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(source) => return Err(LoadError::Io { path, source }),
    };
    let parsed = parse(handle).map_err(|source| LoadError::Io { path, source })?;
    sources.push(SourceFile {
        file: file.to_string(),
        records: parsed.records.len(),
        skipped: parsed.skipped,
        errors: parsed.errors,
    });
    Ok(Some(parsed.records))
}

impl Dataset {
    /// Loads whichever of the known files exist in `dir`. Bad lines are
    /// kept in [`Dataset::sources`] rather than failing the load.
    pub fn load(dir: impl AsRef<Path>) -> Result<Dataset, LoadError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(LoadError::MissingDir(dir.to_path_buf()));
        }
        let mut sources = Vec::new();
        let alloc = read_optional(dir, IANA_FILE, parse_iana_csv, &mut sources)?;
        let origins = read_optional(dir, PFX2AS_FILE, parse_pfx2as, &mut sources)?;
        let links = read_optional(dir, LINKS_FILE, parse_as_links, &mut sources)?;
        let flows = read_optional(dir, FLOWS_FILE, parse_flows_csv, &mut sources)?;
        let events = read_optional(dir, EVENTS_FILE, parse_events_csv, &mut sources)?;

        let mut layers = Vec::new();
        if alloc.is_some() || origins.is_some() {
            layers.push(LayerName::Allocation);
        }
        if flows.is_some() {
            layers.push(LayerName::Traffic);
        }
        if events.is_some() {
            layers.push(LayerName::Events);
        }
        if origins.is_some() {
            layers.push(LayerName::AsHeights);
        }
        let origins = origins.unwrap_or_default();
        let built_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Dataset {
            dir: dir.to_path_buf(),
            store: build_store(&alloc.unwrap_or_default(), &origins),
            heights: as_ip_counts(&origins),
            origins,
            links: links.unwrap_or_default(),
            flows: flows.unwrap_or_default(),
            events: events.unwrap_or_default(),
            sources,
            built_at,
            layers,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// A dataset with no files, for lookups that need no data.
    pub fn empty() -> Dataset {
        Dataset {
            dir: PathBuf::new(),
            store: PrefixStore::new(),
            origins: Vec::new(),
            heights: AsHeightMap::new(),
            links: Vec::new(),
            flows: Vec::new(),
            events: Vec::new(),
            sources: Vec::new(),
            built_at: 0,
            layers: Vec::new(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn error_count(&self) -> usize {
        self.sources.iter().map(|s| s.errors.len()).sum()
    }

    pub fn has_layer(&self, name: LayerName) -> bool {
        self.layers.contains(&name)
    }

    pub fn catalog(&self) -> Vec<CatalogEntry> {
        self.layers
            .iter()
            .map(|&name| {
                let files: &[&str] = match name {
                    LayerName::Allocation => &[IANA_FILE, PFX2AS_FILE],
                    LayerName::Traffic => &[FLOWS_FILE],
                    LayerName::Events => &[EVENTS_FILE],
                    LayerName::AsHeights => &[PFX2AS_FILE, LINKS_FILE],
                };
                let (min_order, max_order) = name.orders();
                CatalogEntry {
                    name,
                    kind: name.kind(),
                    palette: Palette::for_kind(name.kind()),
                    min_order,
                    max_order,
                    cached_max_order: CACHE_MAX_ORDER.min(max_order),
                    sources: self
                        .sources
                        .iter()
                        .filter(|s| files.contains(&s.file.as_str()))
                        .map(|s| s.file.clone())
                        .collect(),
                    built_at: self.built_at,
                }
            })
            .collect()
    }

    fn aggregate(
        &self,
        name: LayerName,
        order: Order,
        window: Rect,
        endpoint: Endpoint,
    ) -> Result<GridLayer, AggregateError> {
        match name {
            LayerName::Allocation => rasterize_allocations(&self.store, order, window),
            LayerName::Traffic => rasterize_flows(&self.flows, order, endpoint, window),
            LayerName::Events => rasterize_events(&self.events, order, window),
            LayerName::AsHeights => as_layer(&self.heights).crop(window),
        }
    }

    /// Layer values over `window`. Coarse orders come from a cached full
    /// layer; finer ones are aggregated for the window alone. Both give the
    /// same values.
    pub fn layer(&self, req: &LayerRequest) -> Result<GridLayer, TileError> {
        let LayerRequest { name, order, window, endpoint } = *req;
        if !self.has_layer(name) {
            return Err(TileError::UnknownLayer(name.to_string()));
        }
        let (lo, hi) = name.orders();
        if order.get() < lo || order.get() > hi {
            return Err(TileError::BadOrder { layer: name, order: order.get() });
        }
        let window = window.unwrap_or_else(|| order.full_rect());
        if !window.fits(order) {
            return Err(TileError::Aggregate(AggregateError::WindowOutOfGrid { window, order: order.get() }));
        }
        // endpoint only matters for traffic
        let endpoint = if name == LayerName::Traffic { endpoint } else { Endpoint::default() };
        if order.get() > CACHE_MAX_ORDER {
            return Ok(self.aggregate(name, order, window, endpoint)?);
        }
        let key = (name, order.get(), endpoint);
        let cached = self.cache.lock().expect("cache lock").get(&key).cloned();
        let full = match cached {
            Some(full) => full,
            None => {
                let full = Arc::new(self.aggregate(name, order, order.full_rect(), endpoint)?);
                self.cache.lock().expect("cache lock").entry(key).or_insert(full).clone()
            }
        };
        if window == order.full_rect() {
            return Ok((*full).clone());
        }
        Ok(full.crop(window)?)
    }

    /// Prefixes announced by `asn`, in address order.
    pub fn as_prefixes(&self, asn: Asn) -> Vec<cybermap::coords::Cidr> {
        let mut out: Vec<_> =
            self.origins.iter().filter(|r| r.asn == asn || r.other_origins.contains(&asn)).map(|r| r.prefix).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn as_links(&self, asn: Asn) -> Vec<&AsLink> {
        self.links.iter().filter(|l| l.a == asn || l.b == asn).collect()
    }

    /// ASNs mentioned anywhere in the data.
    pub fn known_asns(&self) -> BTreeMap<Asn, ()> {
        self.origins
            .iter()
            .flat_map(|r| std::iter::once(r.asn).chain(r.other_origins.iter().copied()))
            .chain(self.links.iter().flat_map(|l| [l.a, l.b]))
            .map(|a| (a, ()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerRequest {
    pub name: LayerName,
    pub order: Order,
    /// Whole grid when `None`.
    pub window: Option<Rect>,
    pub endpoint: Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRequest {
    pub layer: LayerRequest,
    pub cell_px: u32,
}

#[derive(Debug, Error)]
pub enum TileError {
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("layer {layer} has no order {order}")]
    BadOrder { layer: LayerName, order: u8 },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// The layer values and image of one tile. The server and the `render ip`
/// command both go through here.
pub fn render_tile_image(data: &Dataset, req: &TileRequest) -> Result<(GridLayer, Image), TileError> {
    let layer = data.layer(&req.layer)?;
    let opts = RenderOptions { cell_px: req.cell_px, ..Default::default() };
    let image = render_layer(&layer, Palette::for_kind(layer.kind()), opts)?;
    Ok((layer, image))
}

/// PNG bytes of one tile.
pub fn render_tile(data: &Dataset, req: &TileRequest) -> Result<Vec<u8>, TileError> {
    Ok(render_tile_image(data, req)?.1.to_png()?)
}
