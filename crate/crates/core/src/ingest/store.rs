//! Binary prefix trie with longest-prefix-match lookup.

use std::io::{self, BufRead, Write};
use std::net::Ipv4Addr;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{Category, IngestError};
use crate::coords::{Asn, Cidr};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node<V> {
    children: [u32; 2],
    value: Option<V>,
}

impl<V> Node<V> {
    fn empty() -> Self {
        Node { children: [NONE, NONE], value: None }
    }

    fn is_leaf(&self) -> bool {
        self.children == [NONE, NONE]
    }
}

/// Map from IPv4 prefixes to values. Nodes live in an arena; node 0 is the
/// root (`0.0.0.0/0`).
#[derive(Debug, Clone)]
pub struct PrefixTrie<V> {
    nodes: Vec<Node<V>>,
    len: usize,
}

impl<V> Default for PrefixTrie<V> {
    fn default() -> Self {
        PrefixTrie { nodes: vec![Node::empty()], len: 0 }
    }
}

fn bit(addr: u32, depth: u8) -> usize {
    ((addr >> (31 - depth as u32)) & 1) as usize
}

/// What the trie says about the addresses of one prefix, as reported by
/// [`PrefixTrie::partition`].
#[derive(Debug, PartialEq)]
pub enum Coverage<'a, V> {
    /// Every address resolves to the same entry (or to none).
    Uniform(Option<(Cidr, &'a V)>),
    /// Addresses resolve to several entries; counts sum to the prefix size.
    Split(Vec<(Option<(Cidr, &'a V)>, u64)>),
}

impl<V> PrefixTrie<V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn child(&self, node: u32, b: usize) -> Option<u32> {
        let c = self.nodes[node as usize].children[b];
        (c != NONE).then_some(c)
    }

    /// Inserts a value at an exact prefix, returning the value it replaced.
    pub fn insert(&mut self, prefix: Cidr, value: V) -> Option<V> {
        let node = self.node_for(prefix);
        let old = self.nodes[node].value.replace(value);
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    /// Mutable slot for an exact prefix, creating the path if needed.
    pub fn entry_or_insert_with(&mut self, prefix: Cidr, make: impl FnOnce() -> V) -> &mut V {
        let node = self.node_for(prefix);
        if self.nodes[node].value.is_none() {
            self.len += 1;
        }
        self.nodes[node].value.get_or_insert_with(make)
    }

    fn node_for(&mut self, prefix: Cidr) -> usize {
        let addr = prefix.first();
        let mut node = 0usize;
        for depth in 0..prefix.len() {
            let b = bit(addr, depth);
            let next = self.nodes[node].children[b];
            node = if next == NONE {
                let fresh = self.nodes.len() as u32;
                self.nodes.push(Node::empty());
                self.nodes[node].children[b] = fresh;
                fresh as usize
            } else {
                next as usize
            };
        }
        node
    }

    pub fn get(&self, prefix: Cidr) -> Option<&V> {
        let addr = prefix.first();
        let mut node = 0u32;
        for depth in 0..prefix.len() {
            node = self.child(node, bit(addr, depth))?;
        }
        self.nodes[node as usize].value.as_ref()
    }

    /// Longest inserted prefix containing `ip`, with its value.
    pub fn lookup(&self, ip: Ipv4Addr) -> Option<(Cidr, &V)> {
        self.lookup_within(ip, 32)
    }

    /// Like [`lookup`](Self::lookup) but ignores prefixes longer than `max_len`.
    pub fn lookup_within(&self, ip: Ipv4Addr, max_len: u8) -> Option<(Cidr, &V)> {
        let addr = u32::from(ip);
        let mut best = self.nodes[0].value.as_ref().map(|v| (0u8, v));
        let mut node = 0u32;
        for depth in 0..max_len.min(32) {
            match self.child(node, bit(addr, depth)) {
                Some(next) => node = next,
                None => break,
            }
            if let Some(v) = self.nodes[node as usize].value.as_ref() {
                best = Some((depth + 1, v));
            }
        }
        best.map(|(len, v)| (Cidr::containing(ip, len), v))
    }

    /// All entries in address order (shorter prefix first on ties).
    pub fn iter(&self) -> impl Iterator<Item = (Cidr, &V)> + '_ {
        let mut out = Vec::with_capacity(self.len);
        self.collect(0, Cidr::ALL, &mut out);
        out.into_iter()
    }

    fn collect<'a>(&'a self, node: u32, prefix: Cidr, out: &mut Vec<(Cidr, &'a V)>) {
        let n = &self.nodes[node as usize];
        if let Some(v) = n.value.as_ref() {
            out.push((prefix, v));
        }
        if let Some(halves) = prefix.halves() {
            for (b, half) in halves.into_iter().enumerate() {
                if let Some(c) = self.child(node, b) {
                    self.collect(c, half, out);
                }
            }
        }
    }

    /// Splits the address space into prefixes no longer than `len` and
    /// reports how each resolves under longest-prefix match.
    ///
    /// Prefixes with no entries below them are reported once as `Uniform`,
    /// however short. A `/len` prefix with more-specific entries inside it is
    /// reported with per-entry address counts. `keep` prunes subtrees: a
    /// prefix for which it returns false is skipped with everything under it.
    pub fn partition<'a>(
        &'a self,
        len: u8,
        mut keep: impl FnMut(Cidr) -> bool,
        mut emit: impl FnMut(Cidr, Coverage<'a, V>),
    ) {
        self.partition_at(Some(0), Cidr::ALL, None, len.min(32), &mut keep, &mut emit);
    }

    fn partition_at<'a>(
        &'a self,
        node: Option<u32>,
        prefix: Cidr,
        inherited: Option<(Cidr, &'a V)>,
        len: u8,
        keep: &mut impl FnMut(Cidr) -> bool,
        emit: &mut impl FnMut(Cidr, Coverage<'a, V>),
    ) {
        if !keep(prefix) {
            return;
        }
        let Some(node) = node else {
            emit(prefix, Coverage::Uniform(inherited));
            return;
        };
        let n = &self.nodes[node as usize];
        let here = n.value.as_ref().map(|v| (prefix, v)).or(inherited);
        if n.is_leaf() {
            emit(prefix, Coverage::Uniform(here));
        } else if prefix.len() == len {
            let mut parts = Vec::new();
            self.tally(node, prefix, here, &mut parts);
            emit(prefix, Coverage::Split(parts));
        } else {
            let halves = prefix.halves().expect("shorter than len");
            for (b, half) in halves.into_iter().enumerate() {
                self.partition_at(self.child(node, b), half, here, len, keep, emit);
            }
        }
    }

    // Address counts per resolving entry below `node`, merged by entry.
    fn tally<'a>(
        &'a self,
        node: u32,
        prefix: Cidr,
        here: Option<(Cidr, &'a V)>,
        parts: &mut Vec<(Option<(Cidr, &'a V)>, u64)>,
    ) {
        let n = &self.nodes[node as usize];
        let here = n.value.as_ref().map(|v| (prefix, v)).or(here);
        let halves = match prefix.halves() {
            Some(h) if !n.is_leaf() => h,
            _ => return bump(parts, here, prefix.size()),
        };
        for (b, half) in halves.into_iter().enumerate() {
            match self.child(node, b) {
                Some(c) => self.tally(c, half, here, parts),
                None => bump(parts, here, half.size()),
            }
        }
    }

    /// Entries at or below `prefix`.
    pub fn within(&self, prefix: Cidr) -> Vec<(Cidr, &V)> {
        let addr = prefix.first();
        let mut node = 0u32;
        for depth in 0..prefix.len() {
            match self.child(node, bit(addr, depth)) {
                Some(next) => node = next,
                None => return Vec::new(),
            }
        }
        let mut out = Vec::new();
        self.collect(node, prefix, &mut out);
        out
    }
}

fn bump<'a, V>(parts: &mut Vec<(Option<(Cidr, &'a V)>, u64)>, who: Option<(Cidr, &'a V)>, count: u64) {
    let key = who.map(|(c, _)| c);
    match parts.iter_mut().find(|(w, _)| w.map(|(c, _)| c) == key) {
        Some(slot) => slot.1 += count,
        None => parts.push((who, count)),
    }
}

/// Attributes stored per prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixAttrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asn: Option<Asn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_class: Option<u32>,
}

impl PrefixAttrs {
    /// Map label used to color a prefix: explicit class, then origin AS,
    /// then designation, then category.
    pub fn label(&self) -> String {
        if let Some(class) = self.color_class {
            format!("class {class}")
        } else if let Some(asn) = self.asn {
            format!("AS{asn}")
        } else if let Some(d) = self.designation.as_deref().filter(|d| !d.is_empty()) {
            d.to_string()
        } else if let Some(c) = self.category {
            c.as_str().to_string()
        } else {
            "unlabeled".to_string()
        }
    }

    /// Fills fields that are unset here from `other`.
    pub fn merge_missing(&mut self, other: &PrefixAttrs) {
        self.asn = self.asn.or(other.asn);
        self.category = self.category.or(other.category);
        self.color_class = self.color_class.or(other.color_class);
        if self.designation.is_none() {
            self.designation.clone_from(&other.designation);
        }
    }
}

pub type PrefixStore = PrefixTrie<PrefixAttrs>;

impl<V: Serialize> PrefixTrie<V> {
    /// Writes one `prefix<TAB>json` line per entry, in address order.
    pub fn dump(&self, mut out: impl Write) -> io::Result<()> {
        for (prefix, value) in self.iter() {
            let json = serde_json::to_string(value).map_err(io::Error::other)?;
            writeln!(out, "{prefix}\t{json}")?;
        }
        Ok(())
    }
}

impl<V: DeserializeOwned> PrefixTrie<V> {
    /// Reads the format written by [`dump`](Self::dump). Later lines replace
    /// earlier ones for the same prefix.
    pub fn load(input: impl BufRead) -> Result<Self, IngestError> {
        let mut trie = PrefixTrie::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let bad = |detail: String| IngestError::Dump { line: i + 1, detail };
            let (prefix, json) = line.split_once('\t').ok_or_else(|| bad("missing tab".into()))?;
            let prefix: Cidr = prefix.parse().map_err(|e| bad(format!("{e}")))?;
            let value: V = serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
            trie.insert(prefix, value);
        }
        Ok(trie)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> Cidr {
        s.parse().unwrap()
    }

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    #[test]
    fn empty_store() {
        let t: PrefixTrie<u32> = PrefixTrie::new();
        assert_eq!(t.lookup(ip("1.2.3.4")), None);
        assert!(t.is_empty());
    }

    #[test]
    fn default_route() {
        let mut t = PrefixTrie::new();
        t.insert(Cidr::ALL, "root");
        assert_eq!(t.lookup(ip("203.0.113.9")), Some((Cidr::ALL, &"root")));
    }

    #[test]
    fn longest_match_wins() {
        let mut t = PrefixTrie::new();
        t.insert(c("1.0.0.0/8"), 'a');
        t.insert(c("1.0.0.0/24"), 'b');
        assert_eq!(t.lookup(ip("1.0.0.77")), Some((c("1.0.0.0/24"), &'b')));
        assert_eq!(t.lookup(ip("1.0.1.1")), Some((c("1.0.0.0/8"), &'a')));
        assert_eq!(t.lookup(ip("2.0.0.0")), None);
        assert_eq!(t.lookup_within(ip("1.0.0.77"), 16), Some((c("1.0.0.0/8"), &'a')));
    }

    #[test]
    fn containment_only() {
        let mut t = PrefixTrie::new();
        t.insert(c("1.0.0.0/24"), 'a');
        assert_eq!(t.lookup(ip("1.0.0.77")).map(|(_, v)| *v), Some('a'));
        assert_eq!(t.lookup(ip("1.0.1.1")), None);
    }

    #[test]
    fn duplicate_insert_replaces() {
        let mut t = PrefixTrie::new();
        assert_eq!(t.insert(c("10.0.0.0/24"), 1), None);
        assert_eq!(t.insert(c("10.0.0.0/24"), 2), Some(1));
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(c("10.0.0.0/24")), Some(&2));
    }

    #[test]
    fn host_routes() {
        let mut t = PrefixTrie::new();
        t.insert(c("10.0.0.1/32"), 1);
        assert_eq!(t.lookup(ip("10.0.0.1")), Some((c("10.0.0.1/32"), &1)));
        assert_eq!(t.lookup(ip("10.0.0.0")), None);
    }

    #[test]
    fn iter_and_within() {
        let mut t = PrefixTrie::new();
        for (p, v) in [("10.0.0.0/8", 1), ("9.0.0.0/8", 2), ("10.1.0.0/16", 3), ("10.0.0.0/9", 4)] {
            t.insert(c(p), v);
        }
        let order: Vec<_> = t.iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(order, ["9.0.0.0/8", "10.0.0.0/8", "10.0.0.0/9", "10.1.0.0/16"]);
        let inner: Vec<_> = t.within(c("10.0.0.0/9")).into_iter().map(|(_, v)| *v).collect();
        assert_eq!(inner, [4, 3]);
    }

    #[test]
    fn partition_counts() {
        let mut t = PrefixTrie::new();
        t.insert(c("10.0.0.0/8"), 'a');
        t.insert(c("10.0.0.0/24"), 'b');
        let mut seen = Vec::new();
        t.partition(16, |_| true, |p, cov| seen.push((p, cov)));
        let total: u64 = seen.iter().map(|(p, _)| p.size()).sum();
        assert_eq!(total, 1 << 32);
        let split: Vec<_> = seen
            .iter()
            .filter_map(|(p, cov)| match cov {
                Coverage::Split(parts) => Some((*p, parts.clone())),
                _ => None,
            })
            .collect();
        assert_eq!(split.len(), 1);
        assert_eq!(split[0].0, c("10.0.0.0/16"));
        let counts: Vec<_> = split[0].1.iter().map(|(w, n)| (w.map(|(_, v)| *v), *n)).collect();
        assert_eq!(counts, [(Some('b'), 256), (Some('a'), 65536 - 256)]);
    }

    #[test]
    fn dump_round_trip() {
        let mut t = PrefixStore::new();
        t.insert(
            c("58.0.0.0/8"),
            PrefixAttrs { asn: Some(Asn(4538)), designation: Some("CERNET".into()), ..Default::default() },
        );
        t.insert(c("0.0.0.0/8"), PrefixAttrs { category: Some(Category::Reserved), ..Default::default() });
        let mut buf = Vec::new();
        t.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("0.0.0.0/8\t{\"category\":\"reserved\"}\n"));
        let back = PrefixStore::load(&buf[..]).unwrap();
        assert_eq!(back.iter().collect::<Vec<_>>(), t.iter().collect::<Vec<_>>());
        assert!(PrefixStore::load(&b"1.0.0.0/8 {}\n"[..]).is_err());
    }
}
