//! Reduction of ingested records into dense grids.
//!
//! A [`GridLayer`] covers a window of the order-`n` grid (the whole grid by
//! default). Windowed layers hold exactly the values the full layer holds
//! inside that window, so a tile can be built either way.

use std::collections::{BTreeMap, HashMap};
use std::net::Ipv4Addr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coords::{as_order, asn_to_cell, ip_to_cell, prefix_to_region, Asn, Cidr};
use crate::hilbert::{GridPoint, Order, Rect};
use crate::ingest::{Coverage, Direction, EventRecord, FlowRecord, PrefixAsRecord, PrefixStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("window {window} outside the order-{order} grid")]
    WindowOutOfGrid { window: Rect, order: u8 },
    #[error("bucket size {0} does not divide 65536")]
    BadBucket(u32),
    #[error("block {0} is wider than /16")]
    BlockTooLarge(Cidr),
    #[error("frame interval must be positive")]
    ZeroInterval,
    #[error("layers differ in order, window or kind")]
    Incompatible,
    #[error("malformed layer envelope: {0}")]
    Envelope(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Category,
    Scalar,
    Updown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CategoryCell {
    pub id: u32,
    pub mixed: bool,
}

/// Value of one cell, by layer kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellValue {
    Category(CategoryCell),
    Scalar(u64),
    UpDown { up: u64, down: u64 },
}

impl CellValue {
    pub fn is_zero(&self) -> bool {
        match *self {
            CellValue::Category(c) => c.id == 0,
            CellValue::Scalar(v) => v == 0,
            CellValue::UpDown { up, down } => up == 0 && down == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Cells {
    Category(Vec<CategoryCell>),
    Scalar(Vec<u64>),
    UpDown(Vec<[u64; 2]>),
}

/// Dense values over a window of the grid, stored row-major from the
/// window's lowest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayer {
    order: Order,
    window: Rect,
    cells: Cells,
    /// Category names by id; id 0 is always unallocated.
    labels: Vec<String>,
}

pub const UNALLOCATED: &str = "unallocated";

impl GridLayer {
    pub fn new(kind: LayerKind, order: Order, window: Rect) -> Result<GridLayer, AggregateError> {
        if !window.fits(order) {
            return Err(AggregateError::WindowOutOfGrid { window, order: order.get() });
        }
        let n = window.area() as usize;
        let cells = match kind {
            LayerKind::Category => Cells::Category(vec![CategoryCell::default(); n]),
            LayerKind::Scalar => Cells::Scalar(vec![0; n]),
            LayerKind::Updown => Cells::UpDown(vec![[0, 0]; n]),
        };
        let labels = if kind == LayerKind::Category { vec![UNALLOCATED.to_string()] } else { Vec::new() };
        Ok(GridLayer { order, window, cells, labels })
    }

    pub fn full(kind: LayerKind, order: Order) -> GridLayer {
        Self::new(kind, order, order.full_rect()).expect("full grid fits")
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn window(&self) -> Rect {
        self.window
    }

    pub fn kind(&self) -> LayerKind {
        match self.cells {
            Cells::Category(_) => LayerKind::Category,
            Cells::Scalar(_) => LayerKind::Scalar,
            Cells::UpDown(_) => LayerKind::Updown,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_id(&self, label: &str) -> Option<u32> {
        self.labels.iter().position(|l| l == label).map(|i| i as u32)
    }

    fn slot(&self, p: GridPoint) -> Option<usize> {
        self.window
            .contains(p)
            .then(|| ((p.y - self.window.y0) as usize) * self.window.width() as usize + (p.x - self.window.x0) as usize)
    }

    /// Value at a grid point; `None` outside the window.
    pub fn get(&self, p: GridPoint) -> Option<CellValue> {
        let i = self.slot(p)?;
        Some(self.value_at(i))
    }

    fn value_at(&self, i: usize) -> CellValue {
        match &self.cells {
            Cells::Category(v) => CellValue::Category(v[i]),
            Cells::Scalar(v) => CellValue::Scalar(v[i]),
            Cells::UpDown(v) => CellValue::UpDown { up: v[i][0], down: v[i][1] },
        }
    }

    /// Values in storage order (row-major, lowest row first).
    pub fn values(&self) -> impl Iterator<Item = CellValue> + '_ {
        (0..self.window.area() as usize).map(|i| self.value_at(i))
    }

    /// Points paired with values, in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (GridPoint, CellValue)> + '_ {
        self.window.points().zip(self.values())
    }

    pub fn nonzero_cells(&self) -> usize {
        self.values().filter(|v| !v.is_zero()).count()
    }

    /// Sum of scalar values, or of up plus down bytes.
    pub fn total(&self) -> u64 {
        match &self.cells {
            Cells::Category(_) => 0,
            Cells::Scalar(v) => v.iter().sum(),
            Cells::UpDown(v) => v.iter().map(|[u, d]| u + d).sum(),
        }
    }

    /// Largest scalar value, or largest up plus down.
    pub fn max_magnitude(&self) -> u64 {
        match &self.cells {
            Cells::Category(_) => 0,
            Cells::Scalar(v) => v.iter().copied().max().unwrap_or(0),
            Cells::UpDown(v) => v.iter().map(|[u, d]| u.saturating_add(*d)).max().unwrap_or(0),
        }
    }

    pub fn add_scalar(&mut self, p: GridPoint, amount: u64) {
        if let (Some(i), Cells::Scalar(v)) = (self.slot(p), &mut self.cells) {
            v[i] = v[i].saturating_add(amount);
        }
    }

    pub fn add_updown(&mut self, p: GridPoint, up: u64, down: u64) {
        if let (Some(i), Cells::UpDown(v)) = (self.slot(p), &mut self.cells) {
            v[i][0] = v[i][0].saturating_add(up);
            v[i][1] = v[i][1].saturating_add(down);
        }
    }

    pub fn set_category(&mut self, p: GridPoint, cell: CategoryCell) {
        if let (Some(i), Cells::Category(v)) = (self.slot(p), &mut self.cells) {
            v[i] = cell;
        }
    }

    fn fill_category(&mut self, rect: Rect, cell: CategoryCell) {
        let Some(r) = rect.intersect(&self.window) else { return };
        let width = self.window.width() as usize;
        let Cells::Category(v) = &mut self.cells else { return };
        for y in r.y0..=r.y1 {
            let row = (y - self.window.y0) as usize * width;
            let from = row + (r.x0 - self.window.x0) as usize;
            let to = row + (r.x1 - self.window.x0) as usize;
            v[from..=to].fill(cell);
        }
    }

    /// Adds another layer's values cell by cell. Category layers cannot merge.
    pub fn merge(&mut self, other: &GridLayer) -> Result<(), AggregateError> {
        if self.order != other.order || self.window != other.window {
            return Err(AggregateError::Incompatible);
        }
        match (&mut self.cells, &other.cells) {
            (Cells::Scalar(a), Cells::Scalar(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x = x.saturating_add(*y));
            }
            (Cells::UpDown(a), Cells::UpDown(b)) => a.iter_mut().zip(b).for_each(|(x, y)| {
                x[0] = x[0].saturating_add(y[0]);
                x[1] = x[1].saturating_add(y[1]);
            }),
            _ => return Err(AggregateError::Incompatible),
        }
        Ok(())
    }

    /// Copy of the values inside `rect`.
    pub fn crop(&self, rect: Rect) -> Result<GridLayer, AggregateError> {
        if !self.window.contains_rect(&rect) {
            return Err(AggregateError::WindowOutOfGrid { window: rect, order: self.order.get() });
        }
        let mut out = GridLayer::new(self.kind(), self.order, rect)?;
        out.labels.clone_from(&self.labels);
        let width = self.window.width() as usize;
        let rows = (rect.y0..=rect.y1).map(|y| {
            let start = (y - self.window.y0) as usize * width + (rect.x0 - self.window.x0) as usize;
            start..start + rect.width() as usize
        });
        match (&self.cells, &mut out.cells) {
            (Cells::Category(src), Cells::Category(dst)) => *dst = rows.flat_map(|r| src[r].iter().copied()).collect(),
            (Cells::Scalar(src), Cells::Scalar(dst)) => *dst = rows.flat_map(|r| src[r].iter().copied()).collect(),
            (Cells::UpDown(src), Cells::UpDown(dst)) => *dst = rows.flat_map(|r| src[r].iter().copied()).collect(),
            _ => unreachable!("same kind"),
        }
        Ok(out)
    }

    /// Full-grid layer one order coarser, each cell the sum of its four
    /// children. `None` for category layers, windowed layers and order 1.
    pub fn coarsen(&self) -> Option<GridLayer> {
        if self.window != self.order.full_rect() || self.kind() == LayerKind::Category {
            return None;
        }
        let coarse = Order::new(self.order.get() as u32 - 1).ok()?;
        let mut out = GridLayer::full(self.kind(), coarse);
        for (p, v) in self.iter() {
            let q = GridPoint { x: p.x / 2, y: p.y / 2 };
            match v {
                CellValue::Scalar(s) => out.add_scalar(q, s),
                CellValue::UpDown { up, down } => out.add_updown(q, up, down),
                CellValue::Category(_) => unreachable!(),
            }
        }
        Some(out)
    }
}

/// Which address of a flow places it on the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Src,
    #[default]
    Dst,
}

impl Endpoint {
    pub fn ip(self, f: &FlowRecord) -> Ipv4Addr {
        match self {
            Endpoint::Src => f.src_ip,
            Endpoint::Dst => f.dst_ip,
        }
    }

    pub fn port(self, f: &FlowRecord) -> u16 {
        match self {
            Endpoint::Src => f.src_port,
            Endpoint::Dst => f.dst_port,
        }
    }
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "src" => Ok(Endpoint::Src),
            "dst" => Ok(Endpoint::Dst),
            other => Err(format!("endpoint must be src or dst, got `{other}`")),
        }
    }
}

/// Category labels of a store, indexed by id. Ids follow the first
/// appearance of each label in address order, after `unallocated` at 0, so
/// they do not depend on the order or window being rasterized.
pub fn store_labels(store: &PrefixStore) -> Vec<String> {
    let mut labels = vec![UNALLOCATED.to_string()];
    let mut seen: HashMap<String, ()> = HashMap::new();
    seen.insert(UNALLOCATED.to_string(), ());
    for (_, attrs) in store.iter() {
        let label = attrs.label();
        if seen.insert(label.clone(), ()).is_none() {
            labels.push(label);
        }
    }
    labels
}

fn region_hits(prefix: Cidr, order: Order, window: &Rect) -> bool {
    prefix_to_region(prefix, order).map(|rects| rects.iter().any(|r| r.intersect(window).is_some())).unwrap_or(false)
}

/// Allocation occupancy: each cell takes the label of the longest matching
/// stored prefix. A cell split between several entries takes the label
/// holding the most addresses (ties to the lower id) and is flagged mixed.
pub fn rasterize_allocations(store: &PrefixStore, order: Order, window: Rect) -> Result<GridLayer, AggregateError> {
    let mut layer = GridLayer::new(LayerKind::Category, order, window)?;
    layer.labels = store_labels(store);
    let ids: HashMap<&str, u32> = layer.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
    let id_of = |attrs: &crate::ingest::PrefixAttrs| ids[attrs.label().as_str()];

    let mut uniform: Vec<(Cidr, u32)> = Vec::new();
    let mut split: Vec<(Cidr, CategoryCell)> = Vec::new();
    store.partition(
        2 * order.get(),
        |prefix| region_hits(prefix, order, &window),
        |prefix, coverage| match coverage {
            Coverage::Uniform(who) => {
                let id = who.map(|(_, a)| id_of(a)).unwrap_or(0);
                if id != 0 {
                    uniform.push((prefix, id));
                }
            }
            Coverage::Split(parts) => {
                let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
                for (who, n) in parts {
                    *counts.entry(who.map(|(_, a)| id_of(a)).unwrap_or(0)).or_default() += n;
                }
                let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(id, _)| *id);
                split.push((prefix, CategoryCell { id: best.unwrap_or(0), mixed: counts.len() > 1 }));
            }
        },
    );
    for (prefix, id) in uniform {
        for rect in prefix_to_region(prefix, order).expect("partition stays at cell resolution") {
            layer.fill_category(rect, CategoryCell { id, mixed: false });
        }
    }
    for (prefix, cell) in split {
        layer.set_category(ip_to_cell(prefix.base(), order).point(), cell);
    }
    Ok(layer)
}

/// Upload and download bytes per cell of the chosen flow endpoint.
pub fn rasterize_flows(
    flows: &[FlowRecord],
    order: Order,
    endpoint: Endpoint,
    window: Rect,
) -> Result<GridLayer, AggregateError> {
    let mut layer = GridLayer::new(LayerKind::Updown, order, window)?;
    let hits: Vec<(GridPoint, u64, u64)> = flows
        .par_iter()
        .filter_map(|f| {
            let p = ip_to_cell(endpoint.ip(f), order).point();
            window.contains(p).then_some(match f.direction {
                Direction::Upload => (p, f.bytes, 0),
                Direction::Download => (p, 0, f.bytes),
            })
        })
        .collect();
    for (p, up, down) in hits {
        layer.add_updown(p, up, down);
    }
    Ok(layer)
}

/// Event counts per source-address cell.
pub fn rasterize_events(events: &[EventRecord], order: Order, window: Rect) -> Result<GridLayer, AggregateError> {
    let mut layer = GridLayer::new(LayerKind::Scalar, order, window)?;
    let hits: Vec<GridPoint> =
        events.par_iter().map(|e| ip_to_cell(e.src_ip, order).point()).filter(|p| window.contains(*p)).collect();
    for p in hits {
        layer.add_scalar(p, 1);
    }
    Ok(layer)
}

/// Announced address count per AS.
pub type AsHeightMap = BTreeMap<Asn, u64>;

/// Addresses announced by each AS. Overlapping announcements of one AS
/// count each address once; overlaps between different ASes count for both.
pub fn as_ip_counts(records: &[PrefixAsRecord]) -> AsHeightMap {
    let mut by_asn: BTreeMap<Asn, Vec<(u64, u64)>> = BTreeMap::new();
    for r in records {
        by_asn.entry(r.asn).or_default().push((r.prefix.first() as u64, r.prefix.first() as u64 + r.prefix.size()));
    }
    by_asn
        .into_iter()
        .map(|(asn, mut spans)| {
            spans.sort_unstable();
            let mut total = 0u64;
            let mut reach = 0u64;
            for (start, end) in spans {
                let start = start.max(reach);
                if end > start {
                    total += end - start;
                    reach = end;
                }
            }
            (asn, total)
        })
        .collect()
}

/// Heights on the 256 x 256 AS grid. ASes beyond 16 bits are left out.
pub fn as_layer(heights: &AsHeightMap) -> GridLayer {
    let mut layer = GridLayer::full(LayerKind::Scalar, as_order());
    for (asn, count) in heights {
        if let Ok(cell) = asn_to_cell(*asn) {
            layer.add_scalar(cell.point(), *count);
        }
    }
    layer
}

/// Bytes per (address within a block, port bucket).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortHistogram {
    pub block: Cidr,
    pub bucket_size: u32,
    /// `[upload, download]`, indexed `offset * buckets + bucket`.
    cells: Vec<[u64; 2]>,
}

impl PortHistogram {
    pub fn addresses(&self) -> usize {
        self.block.size() as usize
    }

    pub fn buckets(&self) -> usize {
        (65536 / self.bucket_size) as usize
    }

    /// `(upload, download)` bytes.
    pub fn get(&self, offset: usize, bucket: usize) -> (u64, u64) {
        let [u, d] = self.cells[offset * self.buckets() + bucket];
        (u, d)
    }

    pub fn bucket_of(&self, port: u16) -> usize {
        port as usize / self.bucket_size as usize
    }

    /// Ports covered by a bucket, inclusive.
    pub fn bucket_ports(&self, bucket: usize) -> (u32, u32) {
        let lo = bucket as u32 * self.bucket_size;
        (lo, lo + self.bucket_size - 1)
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().map(|[u, d]| u + d).sum()
    }

    pub fn max_magnitude(&self) -> u64 {
        self.cells.iter().map(|[u, d]| u.saturating_add(*d)).max().unwrap_or(0)
    }

    /// Bytes summed per bucket over all addresses.
    pub fn bucket_totals(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.buckets()];
        for (i, [u, d]) in self.cells.iter().enumerate() {
            out[i % self.buckets()] += u + d;
        }
        out
    }
}

/// IP-port matrix of a block: flows whose chosen endpoint falls in `block`,
/// bytes split by direction. Other flows are ignored.
pub fn ipport_histogram(
    flows: &[FlowRecord],
    block: Cidr,
    bucket_size: u32,
    endpoint: Endpoint,
) -> Result<PortHistogram, AggregateError> {
    if bucket_size == 0 || 65536 % bucket_size != 0 {
        return Err(AggregateError::BadBucket(bucket_size));
    }
    if block.len() < 16 {
        return Err(AggregateError::BlockTooLarge(block));
    }
    let mut hist = PortHistogram { block, bucket_size, cells: Vec::new() };
    hist.cells = vec![[0, 0]; hist.addresses() * hist.buckets()];
    for f in flows {
        let ip = endpoint.ip(f);
        if !block.contains(ip) {
            continue;
        }
        let offset = (u32::from(ip) - block.first()) as usize;
        let i = offset * hist.buckets() + hist.bucket_of(endpoint.port(f));
        let slot = match f.direction {
            Direction::Upload => 0,
            Direction::Download => 1,
        };
        hist.cells[i][slot] = hist.cells[i][slot].saturating_add(f.bytes);
    }
    Ok(hist)
}

/// Events in one fixed interval `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub start: u64,
    pub end: u64,
    pub layer: GridLayer,
}

/// Splits events into contiguous equal-width frames starting at the first
/// event; the last frame is padded to full width. Each frame counts events
/// per source cell.
pub fn make_frames(events: &[EventRecord], interval: u64, order: Order) -> Result<Vec<Frame>, AggregateError> {
    if interval == 0 {
        return Err(AggregateError::ZeroInterval);
    }
    let (Some(first), Some(last)) =
        (events.iter().map(|e| e.timestamp).min(), events.iter().map(|e| e.timestamp).max())
    else {
        return Ok(Vec::new());
    };
    let count = ((last - first) / interval + 1) as usize;
    let mut frames: Vec<Frame> = (0..count as u64)
        .map(|i| Frame {
            start: first + i * interval,
            end: first + (i + 1) * interval,
            layer: GridLayer::full(LayerKind::Scalar, order),
        })
        .collect();
    for e in events {
        let i = ((e.timestamp - first) / interval) as usize;
        frames[i].layer.add_scalar(ip_to_cell(e.src_ip, order).point(), 1);
    }
    Ok(frames)
}

/// JSON form of a layer: values run-length encoded in storage order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEnvelope {
    pub order: u8,
    pub kind: LayerKind,
    pub window: Rect,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    /// `[run length, value]` pairs. Values are a number (scalar),
    /// `[up, down]` (updown) or `[id, mixed]` (category).
    pub runs: Vec<(u64, serde_json::Value)>,
}

fn encode_value(v: CellValue) -> serde_json::Value {
    match v {
        CellValue::Scalar(s) => s.into(),
        CellValue::UpDown { up, down } => serde_json::json!([up, down]),
        CellValue::Category(c) => serde_json::json!([c.id, c.mixed]),
    }
}

impl GridLayer {
    pub fn to_envelope(&self) -> LayerEnvelope {
        let mut runs: Vec<(u64, CellValue)> = Vec::new();
        for v in self.values() {
            match runs.last_mut() {
                Some((n, last)) if *last == v => *n += 1,
                _ => runs.push((1, v)),
            }
        }
        LayerEnvelope {
            order: self.order.get(),
            kind: self.kind(),
            window: self.window,
            labels: self.labels.clone(),
            runs: runs.into_iter().map(|(n, v)| (n, encode_value(v))).collect(),
        }
    }

    pub fn from_envelope(env: &LayerEnvelope) -> Result<GridLayer, AggregateError> {
        let bad = |m: &str| AggregateError::Envelope(m.to_string());
        let order = Order::new(env.order as u32).map_err(|e| AggregateError::Envelope(e.to_string()))?;
        let mut layer = GridLayer::new(env.kind, order, env.window)?;
        if env.kind == LayerKind::Category {
            layer.labels.clone_from(&env.labels);
        }
        let expected = env.window.area();
        if env.runs.iter().map(|(n, _)| *n).sum::<u64>() != expected {
            return Err(bad("run lengths do not cover the window"));
        }
        let mut i = 0usize;
        for (n, value) in &env.runs {
            for _ in 0..*n {
                match (&mut layer.cells, value) {
                    (Cells::Scalar(v), serde_json::Value::Number(x)) => {
                        v[i] = x.as_u64().ok_or_else(|| bad("scalar must be a non-negative integer"))?
                    }
                    (Cells::UpDown(v), serde_json::Value::Array(pair)) if pair.len() == 2 => {
                        let get = |k: usize| pair[k].as_u64().ok_or_else(|| bad("byte counts must be integers"));
                        v[i] = [get(0)?, get(1)?];
                    }
                    (Cells::Category(v), serde_json::Value::Array(pair)) if pair.len() == 2 => {
                        let id = pair[0].as_u64().and_then(|x| u32::try_from(x).ok()).ok_or_else(|| bad("bad id"))?;
                        let mixed = pair[1].as_bool().ok_or_else(|| bad("bad mixed flag"))?;
                        v[i] = CategoryCell { id, mixed };
                    }
                    _ => return Err(bad("value does not match layer kind")),
                }
                i += 1;
            }
        }
        Ok(layer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEnvelope {
    pub start: u64,
    pub end: u64,
    pub layer: LayerEnvelope,
}

impl From<&Frame> for FrameEnvelope {
    fn from(f: &Frame) -> Self {
        FrameEnvelope { start: f.start, end: f.end, layer: f.layer.to_envelope() }
    }
}
