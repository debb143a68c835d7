//! Parsers for allocation tables, pfx2as dumps, flow and event exports and
//! AS relationship files, plus the prefix store they feed.
//!
//! Every parser accumulates per-line errors instead of stopping at the first
//! bad line. Each non-header input line ends up as exactly one record, one
//! error, or one skipped (blank or comment) line.

mod store;

use std::fmt;
use std::io::{self, Read};
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::{Coverage, PrefixAttrs, PrefixStore, PrefixTrie};

use crate::coords::{Asn, Cidr};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("store dump line {line}: {detail}")]
    Dump { line: usize, detail: String },
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    /// 1-based line number in the input.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
    /// Blank and comment lines.
    pub skipped: usize,
    pub header: bool,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed { records: Vec::new(), errors: Vec::new(), skipped: 0, header: false }
    }
}

impl<T> Parsed<T> {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Allocated,
    Reserved,
    Legacy,
    Available,
    Unallocated,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Allocated => "allocated",
            Category::Reserved => "reserved",
            Category::Legacy => "legacy",
            Category::Available => "available",
            Category::Unallocated => "unallocated",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "allocated" => Ok(Category::Allocated),
            "reserved" => Ok(Category::Reserved),
            "legacy" => Ok(Category::Legacy),
            "available" => Ok(Category::Available),
            "unallocated" => Ok(Category::Unallocated),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub prefix: Cidr,
    pub designation: String,
    pub category: Category,
    pub date: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixAsRecord {
    pub prefix: Cidr,
    /// First listed origin.
    pub asn: Asn,
    /// Further origins of a multi-origin line, in input order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub other_origins: Vec<Asn>,
}

impl PrefixAsRecord {
    pub fn new(prefix: Cidr, asn: Asn) -> Self {
        PrefixAsRecord { prefix, asn, other_origins: Vec::new() }
    }

    pub fn multi_origin(&self) -> bool {
        !self.other_origins.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Tcp,
    Udp,
    Other,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::Other => "other",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "tcp" | "6" => Ok(Protocol::Tcp),
            "udp" | "17" => Ok(Protocol::Udp),
            "" => Err("empty protocol".into()),
            _ if s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-') => Ok(Protocol::Other),
            _ => Err(format!("bad protocol `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upload,
    Download,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Upload => "up",
            Direction::Download => "down",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Ok(Direction::Upload),
            "down" => Ok(Direction::Download),
            other => Err(format!("direction must be up or down, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowRecord {
    pub timestamp: u64,
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub protocol: Protocol,
    pub bytes: u64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: u64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub kind: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relationship {
    Peer,
    ProviderCustomer,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AsLink {
    pub a: Asn,
    pub b: Asn,
    pub relationship: Relationship,
}

enum LineKind<'a> {
    Data(&'a str),
    Skip,
    Invalid(String),
}

// Splits a byte stream into lines (LF or CRLF), yielding 1-based numbers.
fn lines(bytes: &[u8]) -> impl Iterator<Item = (usize, LineKind<'_>)> {
    let mut body = bytes;
    if body.last() == Some(&b'\n') {
        body = &body[..body.len() - 1];
    }
    let empty = bytes.is_empty();
    body.split(|&b| b == b'\n').enumerate().filter(move |_| !empty).map(|(i, raw)| {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let kind = match std::str::from_utf8(raw) {
            Err(e) => LineKind::Invalid(format!("invalid UTF-8: {e}")),
            Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#') => LineKind::Skip,
            Ok(s) => LineKind::Data(s.strip_prefix('\u{feff}').unwrap_or(s)),
        };
        (i + 1, kind)
    })
}

fn read_all(mut input: impl Read) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    Ok(buf)
}

// Comma-separated fields with CSV quoting.
fn csv_fields(line: &str) -> Result<Vec<String>, String> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(line.as_bytes());
    let mut record = csv::StringRecord::new();
    match reader.read_record(&mut record) {
        Ok(true) => Ok(record.iter().map(|f| f.trim().to_string()).collect()),
        Ok(false) => Ok(Vec::new()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_ip(field: &str, what: &str) -> Result<Ipv4Addr, String> {
    field.trim().parse().map_err(|_| format!("bad {what} `{field}`"))
}

fn parse_num<T: FromStr>(field: &str, what: &str) -> Result<T, String> {
    let f = field.trim();
    if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad {what} `{field}`"));
    }
    f.parse().map_err(|_| format!("{what} `{field}` out of range"))
}

/// Generic line-driven driver: detects an optional header on the first data
/// line and hands every other data line to `parse`.
fn drive<T, H>(
    bytes: &[u8],
    is_header: impl Fn(&str) -> Option<H>,
    mut parse: impl FnMut(&str, Option<&H>) -> Result<T, String>,
) -> Parsed<T> {
    let mut out = Parsed::default();
    let mut header: Option<H> = None;
    let mut first = true;
    for (line, kind) in lines(bytes) {
        match kind {
            LineKind::Skip => out.skipped += 1,
            LineKind::Invalid(message) => {
                first = false;
                out.errors.push(LineError { line, message });
            }
            LineKind::Data(text) => {
                if std::mem::take(&mut first) {
                    if let Some(h) = is_header(text) {
                        header = Some(h);
                        out.header = true;
                        continue;
                    }
                }
                match parse(text, header.as_ref()) {
                    Ok(r) => out.records.push(r),
                    Err(message) => out.errors.push(LineError { line, message }),
                }
            }
        }
    }
    out
}

/// Column positions in an allocation table.
#[derive(Debug, Clone, Copy)]
struct IanaColumns {
    designation: usize,
    date: usize,
    status: usize,
}

impl Default for IanaColumns {
    fn default() -> Self {
        IanaColumns { designation: 1, date: 2, status: 3 }
    }
}

/// Prefix field of an allocation table: `NNN/len` (IANA style, one octet
/// with optional leading zeros) or a dotted CIDR.
fn parse_iana_prefix(field: &str) -> Result<Cidr, String> {
    let field = field.trim();
    if field.contains('.') {
        return field.parse().map_err(|e| format!("{e}"));
    }
    let (octet, len) = field.split_once('/').ok_or_else(|| format!("bad prefix `{field}`"))?;
    let octet: u32 = parse_num(octet, "prefix octet")?;
    if octet > 255 {
        return Err(format!("prefix octet {octet} out of range"));
    }
    let len: u8 = parse_num(len, "prefix length")?;
    if len > 8 {
        return Err(format!("octet prefix `{field}` needs length <= 8"));
    }
    Cidr::new(Ipv4Addr::from(octet << 24), len).map_err(|e| e.to_string())
}

/// Allocation table: `prefix,designation,date,status`. A header whose first
/// column is `Prefix` is recognised; when it names a `Status` column that
/// column is used, so the full IANA export layout also parses.
pub fn parse_iana_csv(input: impl Read) -> io::Result<Parsed<AllocationRecord>> {
    let bytes = read_all(input)?;
    Ok(drive(
        &bytes,
        |line| {
            let fields = csv_fields(line).ok()?;
            if !fields.first()?.eq_ignore_ascii_case("prefix") {
                return None;
            }
            let find = |name: &str| fields.iter().position(|f| f.to_ascii_lowercase().starts_with(name));
            let d = IanaColumns::default();
            Some(IanaColumns {
                designation: find("designation").unwrap_or(d.designation),
                date: find("date").unwrap_or(d.date),
                status: find("status").unwrap_or(d.status),
            })
        },
        |line, header| {
            let cols = header.copied().unwrap_or_default();
            let fields = csv_fields(line)?;
            let get = |i: usize| fields.get(i).map(String::as_str).unwrap_or("");
            let prefix = parse_iana_prefix(get(0))?;
            if fields.len() <= cols.status {
                return Err(format!("expected at least {} fields", cols.status + 1));
            }
            let category = get(cols.status).parse()?;
            let date = Some(get(cols.date).to_string()).filter(|d| !d.is_empty());
            Ok(AllocationRecord { prefix, designation: get(cols.designation).to_string(), category, date })
        },
    ))
}

/// Prefix-to-origin table: `<base> <len> <asn>` separated by tabs (or other
/// whitespace). Multi-origin fields (`a_b`, `a,b`) keep the first AS.
pub fn parse_pfx2as(input: impl Read) -> io::Result<Parsed<PrefixAsRecord>> {
    let bytes = read_all(input)?;
    Ok(drive(
        &bytes,
        |_| None::<()>,
        |line, _| {
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            let [base, len, origin] = fields[..] else {
                return Err(format!("expected 3 fields, got {}", fields.len()));
            };
            let base = parse_ip(base, "prefix base")?;
            let len: u32 = parse_num(len, "prefix length")?;
            if len > 32 {
                return Err(format!("prefix length {len} exceeds 32"));
            }
            let prefix = Cidr::new(base, len as u8).map_err(|e| e.to_string())?;
            let mut origins = origin.split(['_', ',']);
            let asn = origins.next().unwrap_or_default();
            let asn = Asn(parse_num(asn, "origin AS")?);
            let other_origins = origins.map(|o| parse_num(o, "origin AS").map(Asn)).collect::<Result<_, _>>()?;
            Ok(PrefixAsRecord { prefix, asn, other_origins })
        },
    ))
}

fn is_named_header(first_column: &'static [&'static str]) -> impl Fn(&str) -> Option<()> {
    move |line| {
        let first = line.split(',').next()?.trim().to_ascii_lowercase();
        first_column.contains(&first.as_str()).then_some(())
    }
}

/// Flow export: `ts,src_ip,src_port,dst_ip,dst_port,proto,bytes,direction`.
pub fn parse_flows_csv(input: impl Read) -> io::Result<Parsed<FlowRecord>> {
    let bytes = read_all(input)?;
    Ok(drive(&bytes, is_named_header(&["ts", "timestamp"]), |line, _| {
        let f = csv_fields(line)?;
        if f.len() != 8 {
            return Err(format!("expected 8 fields, got {}", f.len()));
        }
        Ok(FlowRecord {
            timestamp: parse_num(&f[0], "timestamp")?,
            src_ip: parse_ip(&f[1], "source IP")?,
            src_port: parse_num(&f[2], "source port")?,
            dst_ip: parse_ip(&f[3], "destination IP")?,
            dst_port: parse_num(&f[4], "destination port")?,
            protocol: Protocol::parse(&f[5])?,
            bytes: parse_num(&f[6], "byte count")?,
            direction: Direction::parse(&f[7])?,
        })
    }))
}

/// Event export: `ts,src_ip,dst_ip,kind`.
pub fn parse_events_csv(input: impl Read) -> io::Result<Parsed<EventRecord>> {
    let bytes = read_all(input)?;
    Ok(drive(&bytes, is_named_header(&["ts", "timestamp"]), |line, _| {
        let f = csv_fields(line)?;
        if f.len() != 4 {
            return Err(format!("expected 4 fields, got {}", f.len()));
        }
        if f[3].is_empty() {
            return Err("empty event kind".into());
        }
        Ok(EventRecord {
            timestamp: parse_num(&f[0], "timestamp")?,
            src_ip: parse_ip(&f[1], "source IP")?,
            dst_ip: parse_ip(&f[2], "destination IP")?,
            kind: f[3].to_ascii_lowercase(),
        })
    }))
}

/// AS relationships, `a|b|rel` with rel `0` (peer) or `-1` (a provides
/// transit to b); a missing or other rel is `unknown`.
pub fn parse_as_links(input: impl Read) -> io::Result<Parsed<AsLink>> {
    let bytes = read_all(input)?;
    Ok(drive(
        &bytes,
        |_| None::<()>,
        |line, _| {
            let f: Vec<&str> = line.split('|').map(str::trim).collect();
            if f.len() < 2 {
                return Err("expected `a|b|rel`".into());
            }
            let a = Asn(parse_num(f[0], "AS")?);
            let b = Asn(parse_num(f[1], "AS")?);
            if a == b {
                return Err(format!("self link on AS{a}"));
            }
            let relationship = match f.get(2).copied() {
                Some("0") => Relationship::Peer,
                Some("-1") => Relationship::ProviderCustomer,
                _ => Relationship::Unknown,
            };
            Ok(AsLink { a, b, relationship })
        },
    ))
}

/// Marks flows as uploads when the source is local and downloads when the
/// destination is; flows touching no local prefix keep their direction.
pub fn infer_direction(flows: &mut [FlowRecord], local: &[Cidr]) {
    let is_local = |ip: Ipv4Addr| local.iter().any(|c| c.contains(ip));
    for f in flows {
        if is_local(f.src_ip) && !is_local(f.dst_ip) {
            f.direction = Direction::Upload;
        } else if is_local(f.dst_ip) && !is_local(f.src_ip) {
            f.direction = Direction::Download;
        }
    }
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) || field != field.trim() {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

impl AllocationRecord {
    /// Line in the four-column table layout, with the prefix in dotted form.
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.prefix,
            csv_quote(&self.designation),
            self.date.as_deref().map(csv_quote).unwrap_or_default(),
            self.category.as_str().to_ascii_uppercase()
        )
    }
}

impl PrefixAsRecord {
    pub fn to_line(&self) -> String {
        let mut origins = self.asn.to_string();
        for o in &self.other_origins {
            origins.push('_');
            origins.push_str(&o.to_string());
        }
        format!("{}\t{}\t{}", self.prefix.base(), self.prefix.len(), origins)
    }
}

impl FlowRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.timestamp,
            self.src_ip,
            self.src_port,
            self.dst_ip,
            self.dst_port,
            self.protocol.as_str(),
            self.bytes,
            self.direction.as_str()
        )
    }
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        format!("{},{},{},{}", self.timestamp, self.src_ip, self.dst_ip, csv_quote(&self.kind))
    }
}

impl AsLink {
    pub fn to_line(&self) -> String {
        let rel = match self.relationship {
            Relationship::Peer => "0",
            Relationship::ProviderCustomer => "-1",
            Relationship::Unknown => "?",
        };
        format!("{}|{}|{}", self.a, self.b, rel)
    }
}

pub const IANA_HEADER: &str = "Prefix,Designation,Date,Status";
pub const FLOWS_HEADER: &str = "ts,src_ip,src_port,dst_ip,dst_port,proto,bytes,direction";
pub const EVENTS_HEADER: &str = "ts,src_ip,dst_ip,kind";

/// Builds the prefix store from allocation and origin records. Origins are
/// merged onto allocation entries with the same exact prefix.
pub fn build_store(allocations: &[AllocationRecord], origins: &[PrefixAsRecord]) -> PrefixStore {
    let mut store = PrefixStore::new();
    for a in allocations {
        store.insert(
            a.prefix,
            PrefixAttrs { designation: Some(a.designation.clone()), category: Some(a.category), ..Default::default() },
        );
    }
    for r in origins {
        store.entry_or_insert_with(r.prefix, PrefixAttrs::default).asn = Some(r.asn);
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iana_lines() {
        let text = "Prefix,Designation,Date,Status\n001/8,APNIC,1983-09,ALLOCATED\n224/8,Multicast,,RESERVED\n300/8,Bogus,,ALLOCATED\n";
        let p = parse_iana_csv(text.as_bytes()).unwrap();
        assert!(p.header);
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0].prefix.to_string(), "1.0.0.0/8");
        assert_eq!(p.records[0].category, Category::Allocated);
        assert_eq!(p.records[0].date.as_deref(), Some("1983-09"));
        assert_eq!(p.records[1].category, Category::Reserved);
        assert_eq!(p.records[1].date, None);
        assert_eq!(p.errors.len(), 1);
        assert_eq!(p.errors[0].line, 4);
    }

    #[test]
    fn iana_zero_prefix_and_full_layout() {
        let text = "Prefix,Designation,Date,WHOIS,RDAP,Status [1],Note\r\n\
                    000/8,\"IANA - Local Identification\",1981-09,,,RESERVED,[2]\r\n\
                    003/8,Administered by ARIN,1994-05,whois.arin.net,\"https://rdap.arin.net/registry\",LEGACY,\r\n";
        let p = parse_iana_csv(text.as_bytes()).unwrap();
        assert!(p.is_clean(), "{:?}", p.errors);
        assert_eq!(p.records[0].prefix.to_string(), "0.0.0.0/8");
        assert_eq!(p.records[0].category, Category::Reserved);
        assert_eq!(p.records[1].category, Category::Legacy);
        assert_eq!(p.records[1].designation, "Administered by ARIN");
    }

    #[test]
    fn iana_without_header() {
        let p = parse_iana_csv("001/8,APNIC,1983-09,ALLOCATED".as_bytes()).unwrap();
        assert!(!p.header);
        assert_eq!(p.records.len(), 1);
    }

    #[test]
    fn pfx2as_lines() {
        let text =
            "1.0.0.0\t24\t13335\n9.9.9.0\t24\t19281,19282\n1.0.0.0\t33\t1\n8.8.8.0\t24\t15169_36040\n1.0.0.1\t24\t5\n";
        let p = parse_pfx2as(text.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 3);
        assert_eq!(p.records[0], PrefixAsRecord::new("1.0.0.0/24".parse().unwrap(), Asn(13335)));
        assert_eq!((p.records[1].asn, p.records[1].multi_origin()), (Asn(19281), true));
        assert_eq!((p.records[2].asn, p.records[2].multi_origin()), (Asn(15169), true));
        assert_eq!(p.records[2].to_line(), "8.8.8.0\t24\t15169_36040");
        assert_eq!(p.errors.iter().map(|e| e.line).collect::<Vec<_>>(), [3, 5]);
    }

    #[test]
    fn flow_lines() {
        let text = "ts,src_ip,src_port,dst_ip,dst_port,proto,bytes,direction\n\
                    1714000000,10.0.0.5,51000,93.184.216.34,443,tcp,12000,down\n\
                    1714000001,10.0.0.5,51001,93.184.216.34,53,UDP,0,up\n\
                    1714000002,10.0.0.5,51001,93.184.216.34,53,udp,10,sideways\n";
        let p = parse_flows_csv(text.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0].direction, Direction::Download);
        assert_eq!(p.records[0].bytes, 12000);
        assert_eq!((p.records[1].protocol, p.records[1].bytes), (Protocol::Udp, 0));
        assert_eq!(p.errors.len(), 1);
        assert_eq!(p.errors[0].line, 4);
    }

    #[test]
    fn event_lines() {
        let p = parse_events_csv("1714000060,198.51.100.7,10.0.0.1,ddos\n".as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].kind, "ddos");
        let empty = parse_events_csv(&b""[..]).unwrap();
        assert!(empty.records.is_empty() && empty.errors.is_empty());
        let bad = parse_events_csv("1,198.51.100.300,10.0.0.1,ddos\n-5,1.1.1.1,2.2.2.2,x\n".as_bytes()).unwrap();
        assert_eq!(bad.errors.len(), 2);
    }

    #[test]
    fn as_link_lines() {
        let text = "# comment\n1|2|0\n3|4|-1\n5|5|0\n6|7\n";
        let p = parse_as_links(text.as_bytes()).unwrap();
        assert_eq!(p.skipped, 1);
        assert_eq!(p.records.len(), 3);
        assert_eq!(p.records[0].relationship, Relationship::Peer);
        assert_eq!(p.records[1].relationship, Relationship::ProviderCustomer);
        assert_eq!(p.records[2].relationship, Relationship::Unknown);
        assert_eq!(p.errors[0].line, 4);
    }

    #[test]
    fn invalid_utf8_is_a_line_error() {
        let p = parse_events_csv(&b"1,1.1.1.1,2.2.2.2,x\n\xff\xfe\n"[..]).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.errors[0].line, 2);
    }

    #[test]
    fn direction_inference() {
        let text = "1,10.0.0.5,1000,8.8.8.8,53,udp,10,down\n2,8.8.8.8,53,10.0.0.5,1000,udp,10,up\n";
        let mut flows = parse_flows_csv(text.as_bytes()).unwrap().records;
        infer_direction(&mut flows, &["10.0.0.0/24".parse().unwrap()]);
        assert_eq!(flows[0].direction, Direction::Upload);
        assert_eq!(flows[1].direction, Direction::Download);
    }

    #[test]
    fn store_merges_origins() {
        let alloc = parse_iana_csv("058/8,APNIC,2004-04,ALLOCATED\n".as_bytes()).unwrap().records;
        let origins = parse_pfx2as("58.0.0.0\t8\t4538\n58.1.0.0\t16\t7\n".as_bytes()).unwrap().records;
        let store = build_store(&alloc, &origins);
        let (p, attrs) = store.lookup("58.0.0.1".parse().unwrap()).unwrap();
        assert_eq!(p.to_string(), "58.0.0.0/8");
        assert_eq!(attrs.asn, Some(Asn(4538)));
        assert_eq!(attrs.designation.as_deref(), Some("APNIC"));
        assert_eq!(attrs.label(), "AS4538");
        assert_eq!(store.lookup("58.1.2.3".parse().unwrap()).unwrap().1.label(), "AS7");
    }
}
