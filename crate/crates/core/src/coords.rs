//! IPv4, IP-port and AS-number coordinates on the Hilbert grid.
//!
//! At order `n` a cell holds one `/2n` prefix: the curve index of an address
//! is its top `2n` bits. `1:/2n` is the scale notation for that grid.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{self, block_rect, index_to_point, point_to_index, GridPoint, Order, Rect};

/// Order of the AS grid: 16-bit AS numbers on a 256 x 256 square.
pub const AS_ORDER: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoordError {
    #[error("invalid CIDR `{0}`")]
    MalformedCidr(String),
    #[error("prefix length {0} exceeds 32")]
    PrefixTooLong(u32),
    #[error("{base}/{len} has host bits set")]
    Misaligned { base: Ipv4Addr, len: u8 },
    #[error("/{len} is finer than one cell at order {order} (/{})", 2 * *order as u32)]
    PrefixFinerThanCell { len: u8, order: u8 },
    #[error("AS{0} does not fit the 16-bit AS grid")]
    AsnNotMappable(u32),
    #[error("malformed scale `{0}`, expected 1:/<even length>")]
    MalformedScale(String),
    #[error("scale /{0} has odd length; cells are square only for even lengths")]
    OddScale(u32),
    #[error(transparent)]
    Curve(#[from] hilbert::CurveError),
}

/// An aligned IPv4 prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cidr {
    base: Ipv4Addr,
    len: u8,
}

fn mask(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - len as u32)
    }
}

impl Cidr {
    /// Aligned prefix; host bits below `len` must be zero.
    pub fn new(base: Ipv4Addr, len: u8) -> Result<Cidr, CoordError> {
        if len > 32 {
            return Err(CoordError::PrefixTooLong(len as u32));
        }
        if u32::from(base) & !mask(len) != 0 {
            return Err(CoordError::Misaligned { base, len });
        }
        Ok(Cidr { base, len })
    }

    /// The `/len` prefix containing `ip`.
    pub fn containing(ip: Ipv4Addr, len: u8) -> Cidr {
        let len = len.min(32);
        Cidr { base: Ipv4Addr::from(u32::from(ip) & mask(len)), len }
    }

    pub const ALL: Cidr = Cidr { base: Ipv4Addr::UNSPECIFIED, len: 0 };

    pub fn base(&self) -> Ipv4Addr {
        self.base
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> u32 {
        u32::from(self.base)
    }

    pub fn last(&self) -> u32 {
        self.first() | !mask(self.len)
    }

    /// Number of addresses covered.
    pub fn size(&self) -> u64 {
        1u64 << (32 - self.len as u32)
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & mask(self.len) == self.first()
    }

    pub fn covers(&self, other: &Cidr) -> bool {
        self.len <= other.len && self.contains(other.base)
    }

    /// The two halves one bit longer, or `None` for a /32.
    pub fn halves(&self) -> Option<[Cidr; 2]> {
        if self.len == 32 {
            return None;
        }
        let len = self.len + 1;
        let upper = self.first() | (1u32 << (32 - len as u32));
        Some([Cidr { base: self.base, len }, Cidr { base: Ipv4Addr::from(upper), len }])
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.len)
    }
}

impl FromStr for Cidr {
    type Err = CoordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || CoordError::MalformedCidr(s.to_string());
        let (base, len) = s.trim().split_once('/').ok_or_else(malformed)?;
        let base: Ipv4Addr = base.parse().map_err(|_| malformed())?;
        if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let len: u32 = len.parse().map_err(|_| malformed())?;
        if len > 32 {
            return Err(CoordError::PrefixTooLong(len));
        }
        Cidr::new(base, len as u8)
    }
}

impl Serialize for Cidr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cidr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// One grid square at a given order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub order: Order,
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub fn new(order: Order, x: u32, y: u32) -> Result<Cell, CoordError> {
        if x >= order.side() || y >= order.side() {
            return Err(hilbert::CurveError::PointOutOfRange { order: order.get(), x, y }.into());
        }
        Ok(Cell { order, x, y })
    }

    pub fn point(&self) -> GridPoint {
        GridPoint { x: self.x, y: self.y }
    }

    pub fn index(&self) -> u64 {
        point_to_index(self.order, self.point()).expect("cell invariant")
    }

    /// The four cells of the next order inside this one, in curve order.
    pub fn children(&self) -> Vec<Cell> {
        let Some(finer) = self.order.finer() else {
            return Vec::new();
        };
        let first = self.index() << 2;
        (first..first + 4)
            .map(|i| {
                let p = index_to_point(finer, i).expect("child index in range");
                Cell { order: finer, x: p.x, y: p.y }
            })
            .collect()
    }
}

/// Cell holding `ip` at `order`.
pub fn ip_to_cell(ip: Ipv4Addr, order: Order) -> Cell {
    let index = u32::from(ip) as u64 >> (32 - 2 * order.get() as u32);
    let p = index_to_point(order, index).expect("index below 4^order");
    Cell { order, x: p.x, y: p.y }
}

/// The `/2n` prefix whose addresses land in `cell`.
pub fn cell_to_prefix(cell: Cell) -> Cidr {
    let shift = 32 - 2 * cell.order.get() as u32;
    let base = (cell.index() << shift) as u32;
    Cidr { base: Ipv4Addr::from(base), len: 2 * cell.order.get() }
}

/// Cells covered by a prefix: one square for even lengths, two adjacent
/// squares (the aligned halves) for odd lengths.
pub fn prefix_to_region(cidr: Cidr, order: Order) -> Result<Vec<Rect>, CoordError> {
    let cell_len = 2 * order.get();
    if cidr.len > cell_len {
        return Err(CoordError::PrefixFinerThanCell { len: cidr.len, order: order.get() });
    }
    if cidr.len % 2 == 1 {
        let halves = cidr.halves().expect("odd length is below 32");
        return halves.iter().map(|h| even_region(*h, order)).collect();
    }
    Ok(vec![even_region(cidr, order)?])
}

fn even_region(cidr: Cidr, order: Order) -> Result<Rect, CoordError> {
    let level = order.get() - cidr.len / 2;
    let block = if cidr.len == 0 { 0 } else { (cidr.first() >> (32 - cidr.len as u32)) as u64 };
    Ok(block_rect(order, block, level)?)
}

/// AS number. Values above 65535 are valid but have no AS-grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Asn {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let digits = s.strip_prefix("AS").or_else(|| s.strip_prefix("as")).unwrap_or(s);
        digits.parse().map(Asn)
    }
}

pub fn as_order() -> Order {
    Order::new(AS_ORDER as u32).expect("constant order")
}

/// Cell of a 16-bit AS number on the 256 x 256 AS grid.
pub fn asn_to_cell(asn: Asn) -> Result<Cell, CoordError> {
    if asn.0 > u16::MAX as u32 {
        return Err(CoordError::AsnNotMappable(asn.0));
    }
    let order = as_order();
    let p = index_to_point(order, asn.0 as u64)?;
    Ok(Cell { order, x: p.x, y: p.y })
}

/// Inverse of [`asn_to_cell`].
pub fn cell_to_asn(cell: Cell) -> Option<Asn> {
    (cell.order == as_order()).then(|| Asn(cell.index() as u32))
}

/// A point in the IP-port space: IP-plane cell plus port on the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IpPortCoord {
    pub cell: Cell,
    pub port: u16,
}

pub fn ipport_coord(ip: Ipv4Addr, port: u16, order: Order) -> IpPortCoord {
    IpPortCoord { cell: ip_to_cell(ip, order), port }
}

/// `1:/2n` for order `n`.
pub fn scale_notation(order: Order) -> String {
    format!("1:/{}", 2 * order.get() as u32)
}

/// Parses `1:/2n` back into order `n`.
pub fn parse_scale(text: &str) -> Result<Order, CoordError> {
    let malformed = || CoordError::MalformedScale(text.to_string());
    let digits = text.trim().strip_prefix("1:/").ok_or_else(malformed)?;
    if digits.is_empty() || digits.len() > 2 || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    let len: u32 = digits.parse().map_err(|_| malformed())?;
    if len % 2 == 1 {
        return Err(CoordError::OddScale(len));
    }
    if len == 0 || len > 32 {
        return Err(malformed());
    }
    Ok(Order::new(len / 2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ord(n: u32) -> Order {
        Order::new(n).unwrap()
    }

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    #[test]
    fn cidr_parsing() {
        let c: Cidr = "10.0.0.0/8".parse().unwrap();
        assert_eq!((c.first(), c.last(), c.size()), (0x0a00_0000, 0x0aff_ffff, 1 << 24));
        assert_eq!("0.0.0.0/0".parse::<Cidr>().unwrap(), Cidr::ALL);
        assert!(matches!("10.0.0.1/8".parse::<Cidr>(), Err(CoordError::Misaligned { .. })));
        assert!(matches!("1.0.0.0/33".parse::<Cidr>(), Err(CoordError::PrefixTooLong(33))));
        assert!("1.0.0.0".parse::<Cidr>().is_err());
        assert!("1.0.0.0/+8".parse::<Cidr>().is_err());
        assert!("256.0.0.0/8".parse::<Cidr>().is_err());
        assert_eq!(Cidr::containing(ip("10.1.2.3"), 16).to_string(), "10.1.0.0/16");
    }

    #[test]
    fn ip_cell_examples() {
        assert_eq!(ip_to_cell(ip("0.0.0.0"), ord(10)).point(), GridPoint::new(0, 0));
        assert_eq!(ip_to_cell(ip("10.0.16.1"), ord(10)), ip_to_cell(ip("10.0.31.255"), ord(10)));
        assert_ne!(ip_to_cell(ip("10.0.16.1"), ord(10)), ip_to_cell(ip("10.0.32.0"), ord(10)));
        assert_eq!(ip_to_cell(ip("255.255.255.255"), ord(16)).point(), GridPoint::new(65535, 0));
        assert_eq!(cell_to_prefix(Cell::new(ord(10), 0, 0).unwrap()).to_string(), "0.0.0.0/20");
        assert_eq!(cell_to_prefix(Cell::new(ord(14), 77, 9000).unwrap()).len(), 28);
        assert_eq!(cell_to_prefix(Cell::new(ord(16), 5, 5).unwrap()).len(), 32);
    }

    #[test]
    fn region_examples() {
        assert_eq!(prefix_to_region(Cidr::ALL, ord(4)).unwrap(), vec![ord(4).full_rect()]);
        let slash8 = prefix_to_region("58.0.0.0/8".parse().unwrap(), ord(10)).unwrap();
        assert_eq!(slash8.len(), 1);
        assert_eq!((slash8[0].width(), slash8[0].height()), (64, 64));
        let slash9 = prefix_to_region("58.128.0.0/9".parse().unwrap(), ord(10)).unwrap();
        assert_eq!(slash9.len(), 2);
        assert!(slash9.iter().all(|r| r.area() == 1024));
        assert!(matches!(
            prefix_to_region("1.0.0.0/24".parse().unwrap(), ord(10)),
            Err(CoordError::PrefixFinerThanCell { len: 24, order: 10 })
        ));
    }

    #[test]
    fn slash8_region_matches_membership() {
        let c: Cidr = "58.0.0.0/8".parse().unwrap();
        let rect = prefix_to_region(c, ord(10)).unwrap()[0];
        let brute: HashSet<_> =
            (0..4096u32).map(|k| ip_to_cell(Ipv4Addr::from(c.first() + (k << 12)), ord(10)).point()).collect();
        let region: HashSet<_> = rect.points().collect();
        assert_eq!(brute, region);
    }

    #[test]
    fn asn_cells() {
        assert_eq!(asn_to_cell(Asn(0)).unwrap().point(), GridPoint::new(0, 0));
        assert_eq!(asn_to_cell(Asn(4538)).unwrap().point(), index_to_point(ord(8), 4538).unwrap());
        assert_eq!(asn_to_cell(Asn(65535)).unwrap().point(), GridPoint::new(255, 0));
        assert_eq!(asn_to_cell(Asn(65536)), Err(CoordError::AsnNotMappable(65536)));
        assert_eq!(cell_to_asn(asn_to_cell(Asn(4538)).unwrap()), Some(Asn(4538)));
        assert_eq!("AS13335".parse::<Asn>().unwrap(), Asn(13335));
    }

    #[test]
    fn ipport() {
        let c = ipport_coord(ip("10.0.0.5"), 80, ord(12));
        assert_eq!((c.cell, c.port), (ip_to_cell(ip("10.0.0.5"), ord(12)), 80));
        assert_eq!(ipport_coord(ip("10.0.0.5"), 502, ord(12)).port, 502);
        let z = ipport_coord(ip("0.0.0.0"), 0, ord(3));
        assert_eq!((z.cell.point(), z.port), (GridPoint::new(0, 0), 0));
    }

    #[test]
    fn scales() {
        assert_eq!(scale_notation(ord(10)), "1:/20");
        assert_eq!(scale_notation(ord(14)), "1:/28");
        assert_eq!(parse_scale("1:/32").unwrap(), ord(16));
        assert_eq!(parse_scale("1:/21"), Err(CoordError::OddScale(21)));
        for bad in ["1:/", "1:/0", "1:/34", "2:/20", "1:/2x", "1:/-2", "1:/+4", "1:/020"] {
            assert!(parse_scale(bad).is_err(), "{bad}");
        }
        for o in Order::all() {
            assert_eq!(parse_scale(&scale_notation(o)).unwrap(), o);
        }
    }

    #[test]
    fn children_refine_prefix() {
        let parent = Cell::new(ord(5), 7, 19).unwrap();
        let p = cell_to_prefix(parent);
        let kids = parent.children();
        assert_eq!(kids.len(), 4);
        for k in &kids {
            assert!(p.covers(&cell_to_prefix(*k)));
            assert_eq!(cell_to_prefix(*k).len(), p.len() + 2);
        }
        assert!(Cell::new(ord(16), 0, 0).unwrap().children().is_empty());
    }
}
