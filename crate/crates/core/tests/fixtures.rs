use std::fs::File;
use std::path::PathBuf;

use cybermap::aggregate::{as_ip_counts, ipport_histogram, make_frames, rasterize_allocations, CellValue, Endpoint};
use cybermap::coords::{parse_scale, prefix_to_region, Asn, Cidr};
use cybermap::hilbert::GridPoint;
use cybermap::ingest::{
    build_store, parse_as_links, parse_events_csv, parse_flows_csv, parse_iana_csv, parse_pfx2as, Parsed,
};

fn fixture(name: &str) -> File {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    File::open(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn clean<T>(p: Parsed<T>) -> Vec<T> {
    assert!(p.errors.is_empty(), "{:?}", p.errors);
    p.records
}

#[test]
fn fixtures_parse_cleanly() {
    assert_eq!(clean(parse_iana_csv(fixture("iana.csv")).unwrap()).len(), 256);
    assert_eq!(clean(parse_pfx2as(fixture("pfx2as.txt")).unwrap()).len(), 18);
    assert_eq!(clean(parse_as_links(fixture("as-links.txt")).unwrap()).len(), 7);
    assert_eq!(clean(parse_flows_csv(fixture("flows.csv")).unwrap()).len(), 4500);
    assert_eq!(clean(parse_events_csv(fixture("events.csv")).unwrap()).len(), 6000);
}

#[test]
fn stand_in_as_holds_two_slash8s() {
    let origins = clean(parse_pfx2as(fixture("pfx2as.txt")).unwrap());
    let heights = as_ip_counts(&origins);
    assert_eq!(heights[&Asn(4538)], 33_554_432);
    assert_eq!(heights[&Asn(4538)], 2 * (1 << 24));
    assert_eq!(heights[&Asn(9808)], (1 << 19) + 256);

    let alloc = clean(parse_iana_csv(fixture("iana.csv")).unwrap());
    let store = build_store(&alloc, &origins);
    let o = parse_scale("1:/20").unwrap();
    let layer = rasterize_allocations(&store, o, o.full_rect()).unwrap();
    let id = layer.label_id("AS4538").unwrap();
    let cells = layer.values().filter(|v| matches!(v, CellValue::Category(c) if c.id == id)).count();
    assert_eq!(cells, 8192);
    assert_eq!(o.len(), 1_048_576);
    assert!((cells as f64 / o.len() as f64 * 100.0 - 0.78).abs() < 0.005);

    // the highlighted region of the AS's announcements covers the same cells
    let mut region = std::collections::HashSet::<GridPoint>::new();
    for r in origins.iter().filter(|r| r.asn == Asn(4538)) {
        for rect in prefix_to_region(r.prefix, o).unwrap() {
            region.extend(rect.points());
        }
    }
    assert_eq!(region.len(), 8192);
}

#[test]
fn campus_ports_are_mostly_low_or_ephemeral() {
    let flows = clean(parse_flows_csv(fixture("flows.csv")).unwrap());
    let block: Cidr = "10.0.0.0/24".parse().unwrap();
    let hist = ipport_histogram(&flows, block, 1, Endpoint::Dst).unwrap();
    let per_port = hist.bucket_totals();
    let edge: u64 = per_port.iter().enumerate().filter(|(p, _)| *p < 1000 || *p > 49000).map(|(_, b)| b).sum();
    assert!(edge as f64 >= 0.6 * hist.total() as f64, "{edge} of {}", hist.total());

    // with 256-port buckets, buckets lying wholly in those ranges still carry the majority
    let coarse = ipport_histogram(&flows, block, 256, Endpoint::Dst).unwrap();
    let totals = coarse.bucket_totals();
    let whole: u64 = (0..coarse.buckets())
        .filter(|b| {
            let (lo, hi) = coarse.bucket_ports(*b);
            hi < 1000 || lo > 49000
        })
        .map(|b| totals[b])
        .sum();
    assert!(whole as f64 >= 0.6 * coarse.total() as f64);
    assert_eq!(coarse.total(), hist.total());
}

#[test]
fn ddos_fixture_gives_ten_minute_frames() {
    let events = clean(parse_events_csv(fixture("events.csv")).unwrap());
    let first = events.iter().map(|e| e.timestamp).min().unwrap();
    let last = events.iter().map(|e| e.timestamp).max().unwrap();
    assert_eq!(last - first, 599);
    let frames = make_frames(&events, 60, parse_scale("1:/16").unwrap()).unwrap();
    assert_eq!(frames.len(), 10);
    assert_eq!(frames.iter().map(|f| f.layer.total()).sum::<u64>(), 6000);
    assert!(frames.windows(2).all(|w| w[0].end == w[1].start));
}
