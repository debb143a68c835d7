//! Coordinates and maps for the IPv4, port and AS number spaces.
//!
//! Addresses are laid out on a Hilbert curve so that every aligned prefix
//! occupies a compact region of the grid. The modules build on each other:
//!
//! - [`hilbert`]: index/point mappings and the recursive curve construction
//! - [`coords`]: IP, prefix, IP-port and AS cells, and `1:/2n` scales
//! - [`ingest`]: parsers and the longest-prefix-match store
//! - [`aggregate`]: dense layers, AS heights, port histograms, event frames
//! - [`render`]: deterministic PNG/PPM output

pub mod aggregate;
pub mod coords;
pub mod hilbert;
pub mod ingest;
pub mod render;

pub use coords::{Asn, Cell, Cidr};
pub use hilbert::{GridPoint, Order, Rect};
