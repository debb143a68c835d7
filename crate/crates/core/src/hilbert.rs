//! Hilbert curve mappings between curve indices and lattice points.
//!
//! Orientation: index 0 sits at `(0, 0)`, the first step goes up (+y), and the
//! last index of an order-`n` curve sits at `(2^n - 1, 0)`. The y axis points
//! up; flipping to screen rows is left to the renderer.
//!
//! [`index_to_point`] and [`point_to_index`] are the integer routes used
//! everywhere else. [`curve_polyline`] runs the classic recursive midpoint
//! construction on real-valued frames and exists as an independent route to
//! cross-check them.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported order: a 65536 x 65536 grid, one cell per IPv4 address.
pub const MAX_ORDER: u8 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurveError {
    #[error("curve order {0} outside 1..=16")]
    InvalidOrder(u32),
    #[error("index {index} out of range for order {order}")]
    IndexOutOfRange { order: u8, index: u64 },
    #[error("point ({x}, {y}) out of range for order {order}")]
    PointOutOfRange { order: u8, x: u32, y: u32 },
    #[error("block {block} at level {level} out of range for order {order}")]
    BlockOutOfRange { order: u8, block: u64, level: u8 },
}

/// Curve order (recursion depth). The grid side is `2^order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Order(u8);

impl Order {
    pub fn new(n: u32) -> Result<Self, CurveError> {
        if (1..=MAX_ORDER as u32).contains(&n) {
            Ok(Order(n as u8))
        } else {
            Err(CurveError::InvalidOrder(n))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Cells along one side of the grid.
    pub fn side(self) -> u32 {
        1 << self.0
    }

    /// Number of curve positions, `4^order`.
    pub fn len(self) -> u64 {
        1u64 << (2 * self.0)
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// The next finer order, if any.
    pub fn finer(self) -> Option<Order> {
        Order::new(self.0 as u32 + 1).ok()
    }

    pub fn all() -> impl Iterator<Item = Order> {
        (1..=MAX_ORDER).map(Order)
    }

    pub fn full_rect(self) -> Rect {
        let max = self.side() - 1;
        Rect { x0: 0, y0: 0, x1: max, y1: max }
    }
}

impl TryFrom<u8> for Order {
    type Error = CurveError;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        Order::new(n as u32)
    }
}

impl From<Order> for u8 {
    fn from(o: Order) -> u8 {
        o.0
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: u32,
    pub y: u32,
}

impl GridPoint {
    pub const fn new(x: u32, y: u32) -> Self {
        GridPoint { x, y }
    }

    pub fn manhattan(self, other: GridPoint) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn euclidean(self, other: GridPoint) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Axis-aligned region of grid cells with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    /// Returns `None` when the bounds are inverted.
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Option<Rect> {
        (x0 <= x1 && y0 <= y1).then_some(Rect { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        (self.x0..=self.x1).contains(&p.x) && (self.y0..=self.y1).contains(&p.y)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.x0 <= other.x0 && other.x1 <= self.x1 && self.y0 <= other.y0 && other.y1 <= self.y1
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        Rect::new(self.x0.max(other.x0), self.y0.max(other.y0), self.x1.min(other.x1), self.y1.min(other.y1))
    }

    /// True when the rect lies inside the grid of `order`.
    pub fn fits(&self, order: Order) -> bool {
        order.full_rect().contains_rect(self)
    }

    /// Row-major iteration over the cells, bottom row first.
    pub fn points(&self) -> impl Iterator<Item = GridPoint> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| GridPoint { x, y }))
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.x1, self.y1)
    }
}

// Rotates/reflects a point inside a quadrant of side `s`.
#[inline]
fn rotate(s: u32, x: &mut u32, y: &mut u32, rx: u32, ry: u32) {
    if ry == 0 {
        if rx == 1 {
            *x = s.wrapping_sub(1).wrapping_sub(*x);
            *y = s.wrapping_sub(1).wrapping_sub(*y);
        }
        std::mem::swap(x, y);
    }
}

/// Lattice point visited at position `index` of the order-`order` curve.
pub fn index_to_point(order: Order, index: u64) -> Result<GridPoint, CurveError> {
    if index >= order.len() {
        return Err(CurveError::IndexOutOfRange { order: order.get(), index });
    }
    let (mut x, mut y) = (0u32, 0u32);
    let mut t = index;
    let mut s = 1u32;
    while s < order.side() {
        let rx = (1 & (t / 2)) as u32;
        let ry = (1 & (t ^ rx as u64)) as u32;
        rotate(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s <<= 1;
    }
    Ok(GridPoint { x, y })
}

/// Inverse of [`index_to_point`].
pub fn point_to_index(order: Order, p: GridPoint) -> Result<u64, CurveError> {
    let side = order.side();
    if p.x >= side || p.y >= side {
        return Err(CurveError::PointOutOfRange { order: order.get(), x: p.x, y: p.y });
    }
    let (mut x, mut y) = (p.x, p.y);
    let mut index = 0u64;
    let mut s = side / 2;
    while s > 0 {
        let rx = u32::from(x & s > 0);
        let ry = u32::from(y & s > 0);
        index += s as u64 * s as u64 * ((3 * rx) ^ ry) as u64;
        // Only the low bits matter below this level; strip the quadrant bit
        // before reflecting so the arithmetic stays inside the quadrant.
        x &= s - 1;
        y &= s - 1;
        rotate(s, &mut x, &mut y, rx, ry);
        s /= 2;
    }
    Ok(index)
}

/// State of one step of the recursive midpoint construction: the origin of
/// the current subsquare and the two vectors spanning it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFrame {
    pub x: f64,
    pub y: f64,
    pub x_i: f64,
    pub x_j: f64,
    pub y_i: f64,
    pub y_j: f64,
}

impl CurveFrame {
    /// Top-level frame over the unit square: `(x_i, x_j) = (0, 1)`,
    /// `(y_i, y_j) = (1, 0)`, origin at `(0, 0)`.
    pub const UNIT: CurveFrame = CurveFrame { x: 0.0, y: 0.0, x_i: 0.0, x_j: 1.0, y_i: 1.0, y_j: 0.0 };

    /// Center of the subsquare spanned by this frame.
    pub fn midpoint(&self) -> (f64, f64) {
        (self.x + (self.x_i + self.y_i) / 2.0, self.y + (self.x_j + self.y_j) / 2.0)
    }

    /// The four child frames, in curve order.
    pub fn split(&self) -> [CurveFrame; 4] {
        let CurveFrame { x, y, x_i, x_j, y_i, y_j } = *self;
        [
            CurveFrame { x, y, x_i: y_i / 2.0, x_j: y_j / 2.0, y_i: x_i / 2.0, y_j: x_j / 2.0 },
            CurveFrame {
                x: x + x_i / 2.0,
                y: y + x_j / 2.0,
                x_i: x_i / 2.0,
                x_j: x_j / 2.0,
                y_i: y_i / 2.0,
                y_j: y_j / 2.0,
            },
            CurveFrame {
                x: x + (x_i + y_i) / 2.0,
                y: y + (x_j + y_j) / 2.0,
                x_i: x_i / 2.0,
                x_j: x_j / 2.0,
                y_i: y_i / 2.0,
                y_j: y_j / 2.0,
            },
            CurveFrame {
                x: x + x_i / 2.0 + y_i,
                y: y + x_j / 2.0 + y_j,
                x_i: -y_i / 2.0,
                x_j: -y_j / 2.0,
                y_i: -x_i / 2.0,
                y_j: -x_j / 2.0,
            },
        ]
    }
}

/// Points of the order-`order` curve produced by the recursive midpoint
/// construction, each midpoint snapped to its lattice cell.
pub fn curve_polyline(order: Order) -> Vec<GridPoint> {
    fn walk(frame: CurveFrame, depth: u8, side: f64, out: &mut Vec<GridPoint>) {
        if depth == 0 {
            let (px, py) = frame.midpoint();
            // Midpoints sit at odd multiples of 1/(2 side); flooring recovers the cell.
            out.push(GridPoint { x: (px * side).floor() as u32, y: (py * side).floor() as u32 });
            return;
        }
        for child in frame.split() {
            walk(child, depth - 1, side, out);
        }
    }

    let mut out = Vec::with_capacity(order.len() as usize);
    walk(CurveFrame::UNIT, order.get(), order.side() as f64, &mut out);
    out
}

/// Square covering curve indices `[block * 4^level, (block + 1) * 4^level)`.
pub fn block_rect(order: Order, block: u64, level: u8) -> Result<Rect, CurveError> {
    let out_of_range = CurveError::BlockOutOfRange { order: order.get(), block, level };
    if level > order.get() {
        return Err(out_of_range);
    }
    let shift = 2 * level as u32;
    if block >= order.len() >> shift {
        return Err(out_of_range);
    }
    let first = index_to_point(order, block << shift)?;
    let mask = !((1u32 << level) - 1);
    let (x0, y0) = (first.x & mask, first.y & mask);
    let span = (1u32 << level) - 1;
    Ok(Rect { x0, y0, x1: x0 + span, y1: y0 + span })
}

/// Z-order decode: even index bits to x, odd bits to y.
pub fn morton_index_to_point(order: Order, index: u64) -> Result<GridPoint, CurveError> {
    if index >= order.len() {
        return Err(CurveError::IndexOutOfRange { order: order.get(), index });
    }
    let (mut x, mut y) = (0u32, 0u32);
    for bit in 0..order.get() as u32 {
        x |= (((index >> (2 * bit)) & 1) as u32) << bit;
        y |= (((index >> (2 * bit + 1)) & 1) as u32) << bit;
    }
    Ok(GridPoint { x, y })
}

pub fn morton_point_to_index(order: Order, p: GridPoint) -> Result<u64, CurveError> {
    let side = order.side();
    if p.x >= side || p.y >= side {
        return Err(CurveError::PointOutOfRange { order: order.get(), x: p.x, y: p.y });
    }
    let mut index = 0u64;
    for bit in 0..order.get() as u32 {
        index |= (((p.x >> bit) & 1) as u64) << (2 * bit);
        index |= (((p.y >> bit) & 1) as u64) << (2 * bit + 1);
    }
    Ok(index)
}

/// Mean Euclidean distance between consecutive points of a sequence.
pub fn mean_step(points: &[GridPoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let total: f64 = points.windows(2).map(|w| w[0].euclidean(w[1])).sum();
    total / (points.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ord(n: u32) -> Order {
        Order::new(n).unwrap()
    }

    #[test]
    fn order_bounds() {
        assert!(Order::new(0).is_err());
        assert!(Order::new(17).is_err());
        assert_eq!(ord(16).side(), 65536);
        assert_eq!(ord(16).len(), 1 << 32);
    }

    #[test]
    fn order_one_is_a_u() {
        let pts: Vec<_> = (0..4).map(|i| index_to_point(ord(1), i).unwrap()).collect();
        assert_eq!(pts, vec![GridPoint::new(0, 0), GridPoint::new(0, 1), GridPoint::new(1, 1), GridPoint::new(1, 0)]);
    }

    #[test]
    fn order_two_endpoint() {
        assert_eq!(index_to_point(ord(2), 15).unwrap(), GridPoint::new(3, 0));
        assert_eq!(point_to_index(ord(2), GridPoint::new(3, 0)).unwrap(), 15);
        assert_eq!(point_to_index(ord(1), GridPoint::new(0, 0)).unwrap(), 0);
    }

    #[test]
    fn endpoints_every_order() {
        for o in Order::all() {
            let last = index_to_point(o, o.len() - 1).unwrap();
            assert_eq!(last, GridPoint::new(o.side() - 1, 0), "order {o}");
            assert_eq!(point_to_index(o, last).unwrap(), o.len() - 1);
        }
    }

    #[test]
    fn out_of_range() {
        assert_eq!(index_to_point(ord(1), 4), Err(CurveError::IndexOutOfRange { order: 1, index: 4 }));
        assert!(point_to_index(ord(2), GridPoint::new(4, 0)).is_err());
        assert!(morton_index_to_point(ord(1), 4).is_err());
        assert!(block_rect(ord(2), 0, 3).is_err());
        assert!(block_rect(ord(2), 4, 1).is_err());
    }

    #[test]
    fn polyline_small_orders() {
        assert_eq!(curve_polyline(ord(1)), (0..4).map(|i| index_to_point(ord(1), i).unwrap()).collect::<Vec<_>>());
        let two = curve_polyline(ord(2));
        assert_eq!(two.len(), 16);
        assert!(two.windows(2).all(|w| w[0].manhattan(w[1]) == 1));
        let three = curve_polyline(ord(3));
        assert_eq!(three.len(), 64);
        assert_eq!(three.iter().collect::<HashSet<_>>().len(), 64);
    }

    #[test]
    fn polyline_matches_bitwise_route() {
        for n in 1..=6 {
            let o = ord(n);
            let bitwise: Vec<_> = (0..o.len()).map(|i| index_to_point(o, i).unwrap()).collect();
            assert_eq!(curve_polyline(o), bitwise, "order {n}");
        }
    }

    #[test]
    fn block_rect_examples() {
        assert_eq!(block_rect(ord(3), 0, 3).unwrap(), ord(3).full_rect());
        // indices 0..3 of the order-2 curve: (0,0) (1,0) (1,1) (0,1)
        assert_eq!(block_rect(ord(2), 0, 1).unwrap(), Rect { x0: 0, y0: 0, x1: 1, y1: 1 });
        for b in 0..4 {
            assert_eq!(block_rect(ord(2), b, 1).unwrap().area(), 4);
        }
        assert_eq!(block_rect(ord(2), 15, 0).unwrap(), Rect { x0: 3, y0: 0, x1: 3, y1: 0 });
    }

    #[test]
    fn morton_examples() {
        assert_eq!(morton_index_to_point(ord(1), 0).unwrap(), GridPoint::new(0, 0));
        assert_eq!(morton_index_to_point(ord(1), 3).unwrap(), GridPoint::new(1, 1));
        let a = morton_index_to_point(ord(2), 3).unwrap();
        let b = morton_index_to_point(ord(2), 4).unwrap();
        assert!(a.euclidean(b) > 1.0);
        for i in 0..ord(4).len() {
            let p = morton_index_to_point(ord(4), i).unwrap();
            assert_eq!(morton_point_to_index(ord(4), p).unwrap(), i);
        }
    }

    #[test]
    fn rect_helpers() {
        let r = Rect::new(1, 2, 3, 5).unwrap();
        assert_eq!((r.width(), r.height(), r.area()), (3, 4, 12));
        assert_eq!(r.points().count(), 12);
        assert!(Rect::new(2, 0, 1, 0).is_none());
        assert_eq!(r.intersect(&Rect::new(3, 5, 9, 9).unwrap()), Rect::new(3, 5, 3, 5));
        assert_eq!(r.intersect(&Rect::new(4, 0, 9, 9).unwrap()), None);
    }
}
