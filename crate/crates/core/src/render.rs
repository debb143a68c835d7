//! Deterministic rasterization of layers and curves to RGB images.
//!
//! Grid y points up; screen rows count down from the top. The flip happens
//! here and nowhere else: grid row `y` of a window lands on screen row
//! `window.y1 - y` (times the cell size).

use std::io;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::aggregate::{as_layer, AsHeightMap, CellValue, GridLayer, LayerKind, PortHistogram};
use crate::coords::{asn_to_cell, Asn};
use crate::hilbert::{curve_polyline, GridPoint, Order};
use crate::ingest::AsLink;

pub type Rgb = [u8; 3];

pub const DEFAULT_MAX_SIDE: u32 = 8192;
pub const BACKGROUND: Rgb = [0, 0, 0];
pub const LINK_COLOR: Rgb = [235, 235, 235];
pub const HIGHLIGHT_COLOR: Rgb = [0, 255, 255];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("image {width}x{height} exceeds the {max} px limit")]
    TooLarge { width: u64, height: u64, max: u32 },
    #[error("cell size must be at least 1 px")]
    ZeroCellSize,
    #[error("{palette:?} palette cannot draw a {kind:?} layer")]
    PaletteMismatch { palette: Palette, kind: LayerKind },
    #[error("curve figures go up to order 8, got {0}")]
    CurveOrder(u8),
    #[error("PNG encoding failed: {0}")]
    Png(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major RGB8 raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Image {
        let pixels = fill.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Image { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Sets a pixel; coordinates outside the image are ignored.
    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    pub fn count_not(&self, c: Rgb) -> usize {
        self.pixels.chunks_exact(3).filter(|p| *p != c).count()
    }

    /// Straight 1 px line between two pixels, endpoints included.
    pub fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    /// One-pixel frame just outside the square at `(x, y)` of side `size`.
    pub fn outline(&mut self, x: i64, y: i64, size: i64, c: Rgb) {
        let (x0, y0, x1, y1) = (x - 1, y - 1, x + size, y + size);
        self.line((x0, y0), (x1, y0), c);
        self.line((x1, y0), (x1, y1), c);
        self.line((x1, y1), (x0, y1), c);
        self.line((x0, y1), (x0, y0), c);
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Balanced);
            let mut writer = enc.write_header().map_err(|e| RenderError::Png(e.to_string()))?;
            writer.write_image_data(&self.pixels).map_err(|e| RenderError::Png(e.to_string()))?;
            writer.finish().map_err(|e| RenderError::Png(e.to_string()))?;
        }
        Ok(out)
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Output container, picked from a file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &std::path::Path) -> ImageFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ppm") => ImageFormat::Ppm,
            _ => ImageFormat::Png,
        }
    }

    pub fn encode(self, img: &Image) -> Result<Vec<u8>, RenderError> {
        match self {
            ImageFormat::Png => img.to_png(),
            ImageFormat::Ppm => Ok(img.to_ppm()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    /// Fixed color per category id; mixed cells are drawn darker.
    Categorical,
    /// Log-scaled magnitude ramp.
    Sequential,
    /// Upload in blue, download in red, brightness from log-scaled total.
    Diverging,
}

const CATEGORY_COLORS: [Rgb; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

const RAMP: [Rgb; 5] = [[48, 18, 96], [120, 28, 109], [200, 55, 80], [245, 125, 21], [252, 230, 80]];

/// Maps `v` into `(0, 1]` by `log2(1 + v) / log2(1 + max)`; 0 stays 0.
pub fn log_scale(v: u64, max: u64) -> f64 {
    if v == 0 || max == 0 {
        return 0.0;
    }
    ((1.0 + v as f64).log2() / (1.0 + max as f64).log2()).min(1.0)
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

impl Palette {
    pub fn for_kind(kind: LayerKind) -> Palette {
        match kind {
            LayerKind::Category => Palette::Categorical,
            LayerKind::Scalar => Palette::Sequential,
            LayerKind::Updown => Palette::Diverging,
        }
    }

    fn accepts(self, kind: LayerKind) -> bool {
        Palette::for_kind(kind) == self
    }

    pub fn category(id: u32, mixed: bool) -> Rgb {
        if id == 0 {
            return BACKGROUND;
        }
        let c = CATEGORY_COLORS[(id as usize - 1) % CATEGORY_COLORS.len()];
        if mixed {
            c.map(|ch| ((ch as u16 * 3) / 4).max(1) as u8)
        } else {
            c
        }
    }

    /// Ramp color for `t` in `(0, 1]`; background for 0.
    pub fn sequential(t: f64) -> Rgb {
        if t <= 0.0 {
            return BACKGROUND;
        }
        let scaled = t.min(1.0) * (RAMP.len() - 1) as f64;
        let i = (scaled.floor() as usize).min(RAMP.len() - 2);
        let f = scaled - i as f64;
        [0, 1, 2].map(|k| lerp(RAMP[i][k], RAMP[i + 1][k], f))
    }

    pub fn diverging(up: u64, down: u64, max: u64) -> Rgb {
        let total = up.saturating_add(down);
        if total == 0 {
            return BACKGROUND;
        }
        let brightness = 64.0 + 191.0 * log_scale(total, max);
        let down_share = down as f64 / total as f64;
        let r = (brightness * down_share).round() as u8;
        let b = (brightness * (1.0 - down_share)).round() as u8;
        [r, 0, b]
    }

    /// Color of one cell given the layer-wide maximum magnitude.
    pub fn color(self, v: CellValue, max: u64) -> Rgb {
        match v {
            CellValue::Category(c) => Palette::category(c.id, c.mixed),
            CellValue::Scalar(s) => Palette::sequential(log_scale(s, max)),
            CellValue::UpDown { up, down } => Palette::diverging(up, down, max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendEntry {
    pub label: String,
    pub color: Rgb,
}

/// Sidecar describing how values map to colors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Legend {
    pub palette: Palette,
    pub scale: &'static str,
    pub max: u64,
    pub entries: Vec<LegendEntry>,
}

pub fn legend(layer: &GridLayer) -> Legend {
    let palette = Palette::for_kind(layer.kind());
    let max = layer.max_magnitude();
    let entries = match palette {
        Palette::Categorical => layer
            .labels()
            .iter()
            .enumerate()
            .map(|(id, label)| LegendEntry { label: label.clone(), color: Palette::category(id as u32, false) })
            .collect(),
        Palette::Sequential => [0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|t| {
                let v = (2f64.powf(t * (1.0 + max as f64).log2()) - 1.0).round() as u64;
                LegendEntry { label: v.to_string(), color: Palette::sequential(*t) }
            })
            .collect(),
        Palette::Diverging => vec![
            LegendEntry { label: "upload".into(), color: Palette::diverging(max, 0, max) },
            LegendEntry { label: "download".into(), color: Palette::diverging(0, max, max) },
        ],
    };
    Legend { palette, scale: "log2(1+v)/log2(1+max)", max, entries }
}

fn check_size(width: u64, height: u64, max: u32) -> Result<(), RenderError> {
    if width > max as u64 || height > max as u64 {
        return Err(RenderError::TooLarge { width, height, max });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub cell_px: u32,
    pub max_side: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { cell_px: 1, max_side: DEFAULT_MAX_SIDE }
    }
}

/// Draws a layer's window, `cell_px` pixels per cell, zero cells in the
/// background color.
pub fn render_layer(layer: &GridLayer, palette: Palette, opts: RenderOptions) -> Result<Image, RenderError> {
    if opts.cell_px == 0 {
        return Err(RenderError::ZeroCellSize);
    }
    if !palette.accepts(layer.kind()) {
        return Err(RenderError::PaletteMismatch { palette, kind: layer.kind() });
    }
    let win = layer.window();
    let (w, h) = (win.width() as u64 * opts.cell_px as u64, win.height() as u64 * opts.cell_px as u64);
    check_size(w, h, opts.max_side)?;
    let max = layer.max_magnitude();
    let cell_px = opts.cell_px;
    let mut img = Image::new(w as u32, h as u32, BACKGROUND);
    let row_bytes = w as usize * 3;
    img.pixels.par_chunks_mut(row_bytes).enumerate().for_each(|(row, out)| {
        let gy = win.y1 - row as u32 / cell_px;
        for gx in win.x0..=win.x1 {
            let v = layer.get(GridPoint { x: gx, y: gy }).expect("inside window");
            if v.is_zero() {
                continue;
            }
            let c = palette.color(v, max);
            let start = (gx - win.x0) as usize * cell_px as usize * 3;
            for px in out[start..start + cell_px as usize * 3].chunks_exact_mut(3) {
                px.copy_from_slice(&c);
            }
        }
    });
    Ok(img)
}

#[derive(Debug, Clone)]
pub struct AsMapImage {
    pub image: Image,
    /// Links with an endpoint outside the 16-bit AS grid.
    pub skipped_links: usize,
}

/// Top-left pixel of a grid cell in a full-grid image.
fn cell_origin(p: GridPoint, side: u32, cell_px: u32) -> (i64, i64) {
    (p.x as i64 * cell_px as i64, (side - 1 - p.y) as i64 * cell_px as i64)
}

fn cell_center(p: GridPoint, side: u32, cell_px: u32) -> (i64, i64) {
    let (x, y) = cell_origin(p, side, cell_px);
    (x + cell_px as i64 / 2, y + cell_px as i64 / 2)
}

/// AS grid colored by announced address count, with links drawn between
/// cell centers and an optional highlighted AS outlined.
pub fn render_as_map(
    heights: &AsHeightMap,
    links: &[AsLink],
    highlight: Option<Asn>,
    cell_px: u32,
) -> Result<AsMapImage, RenderError> {
    let layer = as_layer(heights);
    let mut image = render_layer(&layer, Palette::Sequential, RenderOptions { cell_px, ..Default::default() })?;
    let side = layer.order().side();
    let mut skipped_links = 0;
    for link in links {
        match (asn_to_cell(link.a), asn_to_cell(link.b)) {
            (Ok(a), Ok(b)) => {
                image.line(cell_center(a.point(), side, cell_px), cell_center(b.point(), side, cell_px), LINK_COLOR)
            }
            _ => skipped_links += 1,
        }
    }
    if let Some(cell) = highlight.and_then(|a| asn_to_cell(a).ok()) {
        let (x, y) = cell_origin(cell.point(), side, cell_px);
        image.outline(x, y, cell_px as i64, HIGHLIGHT_COLOR);
    }
    Ok(AsMapImage { image, skipped_links })
}

/// IP-port matrix: x is the address offset in the block, y the port bucket
/// with low ports at the bottom.
pub fn render_ipport(hist: &PortHistogram, palette: Palette, max_side: u32) -> Result<Image, RenderError> {
    if palette != Palette::Diverging {
        return Err(RenderError::PaletteMismatch { palette, kind: LayerKind::Updown });
    }
    let (w, h) = (hist.addresses(), hist.buckets());
    check_size(w as u64, h as u64, max_side)?;
    let max = hist.max_magnitude();
    let mut img = Image::new(w as u32, h as u32, BACKGROUND);
    img.pixels.par_chunks_mut(w * 3).enumerate().for_each(|(row, out)| {
        let bucket = h - 1 - row;
        for (offset, px) in out.chunks_exact_mut(3).enumerate() {
            let (up, down) = hist.get(offset, bucket);
            px.copy_from_slice(&Palette::diverging(up, down, max));
        }
    });
    Ok(img)
}

pub const CURVE_BACKGROUND: Rgb = [255, 255, 255];
pub const CURVE_COLOR: Rgb = [20, 60, 160];

/// Cell size used for curve figures: 512 px square for every order.
pub fn curve_cell_px(order: Order) -> u32 {
    (512u32 >> order.get()).max(2)
}

/// The order-`order` curve as a polyline through cell centers.
pub fn render_curve(order: Order) -> Result<Image, RenderError> {
    if order.get() > 8 {
        return Err(RenderError::CurveOrder(order.get()));
    }
    let cell_px = curve_cell_px(order);
    let side = order.side() * cell_px;
    let mut img = Image::new(side, side, CURVE_BACKGROUND);
    let points = curve_polyline(order);
    for pair in points.windows(2) {
        img.line(cell_center(pair[0], order.side(), cell_px), cell_center(pair[1], order.side(), cell_px), CURVE_COLOR);
    }
    Ok(img)
}
