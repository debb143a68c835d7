use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn cybermap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cybermap")).args(args).env_remove("CYBERMAP_DATA_DIR").output().unwrap()
}

fn with_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cybermap"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn png_size(path: &Path) -> (u32, u32) {
    let reader = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(path).unwrap())).read_info().unwrap();
    (reader.info().width, reader.info().height)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn query_cell_prints_the_prefix() {
    let out = cybermap(&["query", "cell", "10", "0", "0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0.0.0.0/20\n");
    let out = cybermap(&["query", "cell", "16", "65535", "0"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "255.255.255.255/32\n");
    assert_eq!(code(&cybermap(&["query", "cell", "10", "1024", "0"])), 2);
    assert_eq!(code(&cybermap(&["query", "cell", "17", "0", "0"])), 2);
}

#[test]
fn query_json_matches_fixture() {
    let data = fixtures();
    let out = cybermap(&["query", "ip", "58.200.1.9", "--data", s(&data)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["asn"], 9808);
    let out = cybermap(&["query", "cell", "10", "0", "0", "--json", "--data", s(&data)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["children"].as_array().unwrap().len(), 4);
    let out = cybermap(&["query", "as", "AS4538", "--data", s(&data)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["height"], 33_554_432u64);
    assert_eq!(code(&cybermap(&["query", "as", "64999", "--data", s(&data)])), 1);
}

#[test]
fn render_ip_at_scale_20() {
    let dir = tempfile::tempdir().unwrap();
    let out_png = dir.path().join("map.png");
    let legend = dir.path().join("legend.json");
    let out = cybermap(&[
        "render",
        "ip",
        "--scale",
        "1:/20",
        "--layer",
        "allocation",
        "--data",
        s(&fixtures()),
        "-o",
        s(&out_png),
        "--legend",
        s(&legend),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(png_size(&out_png), (1024, 1024));
    let legend: serde_json::Value = serde_json::from_slice(&std::fs::read(legend).unwrap()).unwrap();
    assert!(legend["entries"].as_array().unwrap().iter().any(|e| e["label"] == "AS4538"));

    let ppm = dir.path().join("map.ppm");
    let out = cybermap(&["render", "ip", "--order", "6", "--cell-px", "3", "--data", s(&fixtures()), "-o", s(&ppm)]);
    assert_eq!(code(&out), 0);
    assert!(std::fs::read(&ppm).unwrap().starts_with(b"P6\n192 192\n255\n"));
}

#[test]
fn render_other_maps() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixtures();
    let curve = dir.path().join("curve.png");
    assert_eq!(code(&cybermap(&["render", "curve", "--order", "3", "-o", s(&curve)])), 0);
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/goldens/curve_order3.png");
    assert_eq!(std::fs::read(&curve).unwrap(), std::fs::read(golden).unwrap());
    assert_eq!(code(&cybermap(&["render", "curve", "--order", "9", "-o", s(&curve)])), 2);

    let as_map = dir.path().join("as.png");
    let out = cybermap(&["render", "as", "--highlight", "4538", "--data", s(&data), "-o", s(&as_map)]);
    assert_eq!(code(&out), 0);
    assert_eq!(png_size(&as_map), (512, 512));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 links"));

    let ipport = dir.path().join("ipport.png");
    let args = ["render", "ipport", "--block", "10.0.0.0/24", "--bucket", "256", "--data", s(&data), "-o", s(&ipport)];
    assert_eq!(code(&cybermap(&args)), 0);
    assert_eq!(png_size(&ipport), (256, 256));
    let bad = ["render", "ipport", "--block", "10.0.0.0/24", "--bucket", "300", "--data", s(&data), "-o", s(&ipport)];
    assert_eq!(code(&cybermap(&bad)), 2);
    let wide = ["render", "ipport", "--block", "10.0.0.0/8", "--data", s(&data), "-o", s(&ipport)];
    assert_eq!(code(&cybermap(&wide)), 2);
}

#[test]
fn frames_and_stills() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("frames.json");
    let stills = dir.path().join("stills");
    let out =
        cybermap(&["frames", "--interval", "60", "--data", s(&fixtures()), "-o", s(&json), "--stills", s(&stills)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["frames"].as_array().unwrap().len(), 10);
    assert_eq!(v["event_count"], 6000);
    assert_eq!(std::fs::read_dir(&stills).unwrap().count(), 10);
    assert_eq!(png_size(&stills.join("frame_0009.png")), (256, 256));
    assert_eq!(code(&cybermap(&["frames", "--interval", "0", "--data", s(&fixtures()), "-o", s(&json)])), 2);
}

#[test]
fn ingest_exit_codes() {
    let good = b"ts,src_ip,dst_ip,kind\n1714000000,1.2.3.4,10.0.0.1,ddos\n";
    let dirty = b"ts,src_ip,dst_ip,kind\n1714000000,1.2.3.4,10.0.0.1,ddos\n1714000001,1.2.3,10.0.0.1,ddos\n";
    let garbage = b"\x00\xff\xfe binary \x01\x02\nnot,a,record\n";
    assert_eq!(code(&with_stdin(&["ingest", "--kind", "events", "-"], good)), 0);
    let out = with_stdin(&["ingest", "--kind", "events", "-"], dirty);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("-:3:"));
    assert_eq!(code(&with_stdin(&["ingest", "--kind", "events", "-"], garbage)), 1);
    for kind in ["iana", "pfx2as", "flows", "links"] {
        assert_eq!(code(&with_stdin(&["ingest", "--kind", kind, "-"], garbage)), 1, "{kind}");
        assert_eq!(code(&with_stdin(&["ingest", "--kind", kind, "-"], b"")), 0, "{kind}");
    }
    assert_eq!(code(&cybermap(&["ingest", "--kind", "events", "/nonexistent/file.csv"])), 1);
    assert_eq!(code(&cybermap(&["ingest", "--kind", "nope", "-"])), 2);
    assert_eq!(code(&cybermap(&["ingest", "--kind", "iana", "--local-prefix", "10.0.0.0/8", "-"])), 2);
}

#[test]
fn ingest_output_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, file) in [
        ("iana", "iana.csv"),
        ("pfx2as", "pfx2as.txt"),
        ("flows", "flows.csv"),
        ("events", "events.csv"),
        ("links", "as-links.txt"),
    ] {
        let once = dir.path().join(format!("once-{file}"));
        let twice = dir.path().join(format!("twice-{file}"));
        let input = fixtures().join(file);
        assert_eq!(code(&cybermap(&["ingest", "--kind", kind, s(&input), "-o", s(&once)])), 0, "{kind}");
        assert_eq!(code(&cybermap(&["ingest", "--kind", kind, s(&once), "-o", s(&twice)])), 0, "{kind}");
        assert_eq!(std::fs::read(&once).unwrap(), std::fs::read(&twice).unwrap(), "{kind}");
    }
}

#[test]
fn local_prefix_sets_direction() {
    let flows = b"ts,src_ip,src_port,dst_ip,dst_port,proto,bytes,direction\n\
        1,10.0.0.5,50000,8.8.8.8,53,udp,100,down\n\
        2,8.8.8.8,53,10.0.0.5,50000,udp,300,up\n";
    let out = with_stdin(&["ingest", "--kind", "flows", "--local-prefix", "10.0.0.0/24", "-", "-o", "-"], flows);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let dirs: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(dirs, ["up", "down"]);
}

#[test]
fn usage_errors_exit_2() {
    let data = fixtures();
    let cases: Vec<Vec<&str>> = vec![
        vec!["bogus"],
        vec![],
        vec!["render", "ip", "--data", s(&data), "-o", "x.png"],
        vec!["render", "ip", "--scale", "1:/21", "--data", s(&data), "-o", "x.png"],
        vec!["render", "ip", "--scale", "1:/20", "--order", "9", "--data", s(&data), "-o", "x.png"],
        vec!["render", "ip", "--order", "4", "--rect", "0,0,16,3", "--data", s(&data), "-o", "x.png"],
        vec!["render", "ip", "--order", "4", "--rect", "0,0,3", "--data", s(&data), "-o", "x.png"],
        vec!["render", "ip", "--order", "14", "--data", s(&data), "-o", "x.png"],
        vec!["render", "ip", "--order", "4", "--frobnicate", "--data", s(&data), "-o", "x.png"],
        vec!["query", "ip", "256.1.1.1"],
        vec!["serve", "--listen", "nonsense", "--data", s(&data)],
    ];
    for args in cases {
        let out = cybermap(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn data_problems_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("x.png");
    let missing = cybermap(&["render", "ip", "--order", "4", "--data", "/nonexistent/dir", "-o", s(&img)]);
    assert_eq!(code(&missing), 1);
    // no flows file, so no traffic layer
    std::fs::write(dir.path().join("pfx2as.txt"), "58.0.0.0\t8\t4538\nbroken line\n").unwrap();
    let out = cybermap(&["render", "ip", "--order", "4", "--layer", "traffic", "--data", s(dir.path()), "-o", s(&img)]);
    assert_eq!(code(&out), 1);
    // bad lines are reported, the map is still drawn
    let out = cybermap(&["render", "ip", "--order", "4", "--data", s(dir.path()), "-o", s(&img)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pfx2as.txt:2:"));
    assert_eq!(png_size(&img), (16, 16));
}

#[test]
fn data_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("x.png");
    let out = Command::new(env!("CARGO_BIN_EXE_cybermap"))
        .args(["render", "ip", "--order", "5", "--layer", "events", "-o", s(&img)])
        .env("CYBERMAP_DATA_DIR", fixtures())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(png_size(&img), (32, 32));
}
