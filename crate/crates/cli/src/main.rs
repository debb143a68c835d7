use std::fs;
use std::io::{self, Read, Write};
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cybermap::aggregate::{ipport_histogram, make_frames, Endpoint};
use cybermap::coords::{cell_to_prefix, parse_scale, Asn, Cell, Cidr};
use cybermap::hilbert::{Order, Rect};
use cybermap::ingest::{
    infer_direction, parse_as_links, parse_events_csv, parse_flows_csv, parse_iana_csv, parse_pfx2as, LineError,
    Parsed, EVENTS_HEADER, FLOWS_HEADER, IANA_HEADER,
};
use cybermap::render::{
    legend, render_as_map, render_curve, render_ipport, render_layer, ImageFormat, Palette, RenderOptions,
    DEFAULT_MAX_SIDE,
};
use cybermap_server::catalog::{LoadError, TileError};
use cybermap_server::{
    as_body, cell_body, frames_body, render_tile_image, resolve_body, router, AppState, Dataset, LayerName,
    LayerRequest, TileRequest,
};

const MAX_REPORTED_ERRORS: usize = 20;

#[derive(Parser)]
#[command(name = "cybermap", version, about = "Hilbert-curve maps of the IPv4, port and AS number spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an input file and write it back in canonical form.
    Ingest(IngestArgs),
    /// Draw a map image.
    #[command(subcommand)]
    Render(RenderCommand),
    /// Look up addresses, cells and ASes.
    #[command(subcommand)]
    Query(QueryCommand),
    /// Split events into fixed-interval frames.
    Frames(FramesArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    Iana,
    Pfx2as,
    Flows,
    Events,
    Links,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, value_enum)]
    kind: InputKind,
    /// Input file, or `-` for stdin.
    input: PathBuf,
    /// Where to write the canonical records; `-` for stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Flows whose source is in one of these prefixes become uploads,
    /// overriding the direction column.
    #[arg(long = "local-prefix")]
    local_prefix: Vec<Cidr>,
}

#[derive(Args)]
struct DataDir {
    /// Directory holding iana.csv, pfx2as.txt, as-links.txt, flows.csv, events.csv.
    #[arg(long = "data", env = "CYBERMAP_DATA_DIR")]
    dir: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct Zoom {
    /// Map scale in `1:/2n` notation, e.g. `1:/20`.
    #[arg(long, value_parser = scale_arg)]
    scale: Option<Order>,
    /// Curve order 1-16.
    #[arg(long, value_parser = order_arg)]
    order: Option<Order>,
}

impl Zoom {
    fn order(&self) -> Result<Order, Failure> {
        match (self.scale, self.order) {
            (Some(a), Some(b)) if a != b => Err(Failure::Usage("--scale and --order disagree".into())),
            (a, b) => Ok(a.or(b).expect("clap requires one")),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum IpLayer {
    Allocation,
    Traffic,
    Events,
}

impl From<IpLayer> for LayerName {
    fn from(l: IpLayer) -> Self {
        match l {
            IpLayer::Allocation => LayerName::Allocation,
            IpLayer::Traffic => LayerName::Traffic,
            IpLayer::Events => LayerName::Events,
        }
    }
}

#[derive(Subcommand)]
enum RenderCommand {
    /// IP address map of one layer.
    Ip {
        #[command(flatten)]
        zoom: Zoom,
        #[arg(long, value_enum, default_value = "allocation")]
        layer: IpLayer,
        /// Grid window `x0,y0,x1,y1`, inclusive; whole grid by default.
        #[arg(long, value_parser = rect_arg)]
        rect: Option<Rect>,
        #[arg(long, default_value_t = 1)]
        cell_px: u32,
        /// Which flow address places traffic on the map.
        #[arg(long, default_value = "dst", value_parser = endpoint_arg)]
        endpoint: Endpoint,
        #[command(flatten)]
        data: DataDir,
        /// Output image, `.png` or `.ppm`.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the legend as JSON.
        #[arg(long)]
        legend: Option<PathBuf>,
    },
    /// AS number map with announced address counts and links.
    As {
        #[arg(long, default_value_t = 2)]
        cell_px: u32,
        /// Outline this AS.
        #[arg(long)]
        highlight: Option<Asn>,
        #[command(flatten)]
        data: DataDir,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Address-by-port traffic matrix of one block.
    Ipport {
        #[arg(long)]
        block: Cidr,
        /// Ports per row; must divide 65536.
        #[arg(long, default_value_t = 256)]
        bucket: u32,
        #[arg(long, default_value = "dst", value_parser = endpoint_arg)]
        endpoint: Endpoint,
        #[command(flatten)]
        data: DataDir,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// The curve itself, orders 1-8.
    Curve {
        #[arg(long, value_parser = order_arg)]
        order: Order,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Cells of an address at every order and its longest matching prefix.
    Ip {
        addr: Ipv4Addr,
        #[arg(long = "data", env = "CYBERMAP_DATA_DIR")]
        data: Option<PathBuf>,
    },
    /// The prefix of a cell.
    Cell {
        #[arg(value_parser = order_arg)]
        order: Order,
        x: u32,
        y: u32,
        /// Print attributes and refinements as JSON.
        #[arg(long)]
        json: bool,
        #[arg(long = "data", env = "CYBERMAP_DATA_DIR")]
        data: Option<PathBuf>,
    },
    /// Height, prefixes and links of an AS.
    As {
        asn: Asn,
        #[command(flatten)]
        data: DataDir,
    },
}

#[derive(Args)]
struct FramesArgs {
    /// Frame width in seconds.
    #[arg(long)]
    interval: u64,
    #[arg(long, value_parser = order_arg, default_value = "8")]
    order: Order,
    #[command(flatten)]
    data: DataDir,
    /// Frame envelopes as JSON.
    #[arg(short, long)]
    output: PathBuf,
    /// Also write one PNG per frame into this directory.
    #[arg(long)]
    stills: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    cell_px: u32,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[command(flatten)]
    data: DataDir,
    /// Directory of viewer assets served at `/`.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

fn scale_arg(s: &str) -> Result<Order, String> {
    parse_scale(s).map_err(|e| e.to_string())
}

fn order_arg(s: &str) -> Result<Order, String> {
    let n: u32 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    Order::new(n).map_err(|e| e.to_string())
}

fn rect_arg(s: &str) -> Result<Rect, String> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("`{p}` is not a grid coordinate")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x0, y0, x1, y1] => Rect::new(x0, y0, x1, y1).ok_or_else(|| "rect bounds are inverted".to_string()),
        _ => Err("expected x0,y0,x1,y1".to_string()),
    }
}

fn endpoint_arg(s: &str) -> Result<Endpoint, String> {
    s.parse()
}

enum Failure {
    /// Bad arguments: exit 2.
    Usage(String),
    /// Unreadable or unusable data: exit 1.
    Data(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<TileError> for Failure {
    fn from(e: TileError) -> Self {
        match e {
            TileError::UnknownLayer(_) => Failure::Data(format!("{e} in the data directory")),
            TileError::Render(cybermap::render::RenderError::Io(_) | cybermap::render::RenderError::Png(_)) => {
                Failure::Data(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn report_errors(source: &str, errors: &[LineError]) {
    for e in errors.iter().take(MAX_REPORTED_ERRORS) {
        eprintln!("{source}:{}: {}", e.line, e.message);
    }
    if errors.len() > MAX_REPORTED_ERRORS {
        eprintln!("{source}: {} more errors", errors.len() - MAX_REPORTED_ERRORS);
    }
}

fn status(errors: usize) -> ExitCode {
    if errors == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn load(dir: &Path) -> Result<Dataset, Failure> {
    let data = Dataset::load(dir)?;
    for s in &data.sources {
        report_errors(&dir.join(&s.file).display().to_string(), &s.errors);
    }
    Ok(data)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if path == Path::new("-") {
        return match io::stdout().write_all(bytes) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        };
    }
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn canonical<T>(parsed: &Parsed<T>, header: Option<&str>, line: impl Fn(&T) -> String) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    for r in &parsed.records {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn ingest(args: IngestArgs) -> Result<ExitCode, Failure> {
    let source = args.input.display().to_string();
    let bytes = if args.input == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        buf
    } else {
        fs::read(&args.input).map_err(|e| Failure::Data(format!("{source}: {e}")))?
    };
    if !args.local_prefix.is_empty() && !matches!(args.kind, InputKind::Flows) {
        return Err(usage("--local-prefix applies to flows only"));
    }
    let input = &bytes[..];
    let (text, records, errors, skipped) = match args.kind {
        InputKind::Iana => {
            let p = parse_iana_csv(input)?;
            report_errors(&source, &p.errors);
            (canonical(&p, Some(IANA_HEADER), |r| r.to_line()), p.records.len(), p.errors.len(), p.skipped)
        }
        InputKind::Pfx2as => {
            let p = parse_pfx2as(input)?;
            report_errors(&source, &p.errors);
            (canonical(&p, None, |r| r.to_line()), p.records.len(), p.errors.len(), p.skipped)
        }
        InputKind::Flows => {
            let mut p = parse_flows_csv(input)?;
            infer_direction(&mut p.records, &args.local_prefix);
            report_errors(&source, &p.errors);
            (canonical(&p, Some(FLOWS_HEADER), |r| r.to_line()), p.records.len(), p.errors.len(), p.skipped)
        }
        InputKind::Events => {
            let p = parse_events_csv(input)?;
            report_errors(&source, &p.errors);
            (canonical(&p, Some(EVENTS_HEADER), |r| r.to_line()), p.records.len(), p.errors.len(), p.skipped)
        }
        InputKind::Links => {
            let p = parse_as_links(input)?;
            report_errors(&source, &p.errors);
            (canonical(&p, None, |r| r.to_line()), p.records.len(), p.errors.len(), p.skipped)
        }
    };
    eprintln!("{source}: {records} records, {errors} errors, {skipped} skipped");
    if let Some(out) = &args.output {
        write_output(out, text.as_bytes())?;
    }
    Ok(status(errors))
}

fn render(cmd: RenderCommand) -> Result<ExitCode, Failure> {
    match cmd {
        RenderCommand::Ip { zoom, layer, rect, cell_px, endpoint, data, output, legend: legend_out } => {
            let data = load(&data.dir)?;
            let req = TileRequest {
                layer: LayerRequest { name: layer.into(), order: zoom.order()?, window: rect, endpoint },
                cell_px,
            };
            let (grid, image) = render_tile_image(&data, &req)?;
            let bytes = ImageFormat::from_path(&output).encode(&image).map_err(|e| Failure::Data(e.to_string()))?;
            write_output(&output, &bytes)?;
            if let Some(path) = legend_out {
                let json = serde_json::to_vec_pretty(&legend(&grid)).expect("legend serializes");
                write_output(&path, &json)?;
            }
            Ok(status(data.error_count()))
        }
        RenderCommand::As { cell_px, highlight, data, output } => {
            let data = load(&data.dir)?;
            let map = render_as_map(&data.heights, &data.links, highlight, cell_px).map_err(usage)?;
            if map.skipped_links > 0 {
                eprintln!("{} links touch ASes beyond the 16-bit grid and were not drawn", map.skipped_links);
            }
            let bytes = ImageFormat::from_path(&output).encode(&map.image).map_err(|e| Failure::Data(e.to_string()))?;
            write_output(&output, &bytes)?;
            Ok(status(data.error_count()))
        }
        RenderCommand::Ipport { block, bucket, endpoint, data, output } => {
            let data = load(&data.dir)?;
            let hist = ipport_histogram(&data.flows, block, bucket, endpoint).map_err(usage)?;
            let image = render_ipport(&hist, Palette::Diverging, DEFAULT_MAX_SIDE).map_err(usage)?;
            let bytes = ImageFormat::from_path(&output).encode(&image).map_err(|e| Failure::Data(e.to_string()))?;
            write_output(&output, &bytes)?;
            Ok(status(data.error_count()))
        }
        RenderCommand::Curve { order, output } => {
            let image = render_curve(order).map_err(usage)?;
            let bytes = ImageFormat::from_path(&output).encode(&image).map_err(|e| Failure::Data(e.to_string()))?;
            write_output(&output, &bytes)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Writes a line to stdout; a closed pipe is not an error.
fn print_line(text: &str) -> Result<(), Failure> {
    match writeln!(io::stdout(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &serde_json::Value) -> Result<(), Failure> {
    print_line(&serde_json::to_string_pretty(value).expect("json serializes"))
}

fn query(cmd: QueryCommand) -> Result<ExitCode, Failure> {
    let optional = |dir: Option<PathBuf>| match dir {
        Some(d) => load(&d),
        None => Ok(Dataset::empty()),
    };
    match cmd {
        QueryCommand::Ip { addr, data } => {
            let data = optional(data)?;
            print_json(&resolve_body(&data, addr))?;
            Ok(status(data.error_count()))
        }
        QueryCommand::Cell { order, x, y, json, data } => {
            let cell = Cell::new(order, x, y).map_err(usage)?;
            if !json {
                print_line(&cell_to_prefix(cell).to_string())?;
                return Ok(ExitCode::SUCCESS);
            }
            let data = optional(data)?;
            print_json(&cell_body(&data, cell))?;
            Ok(status(data.error_count()))
        }
        QueryCommand::As { asn, data } => {
            let data = load(&data.dir)?;
            let body =
                as_body(&data, asn).ok_or_else(|| Failure::Data(format!("AS{asn} does not appear in the data")))?;
            print_json(&body)?;
            Ok(status(data.error_count()))
        }
    }
}

fn frames(args: FramesArgs) -> Result<ExitCode, Failure> {
    let data = load(&args.data.dir)?;
    let frames = make_frames(&data.events, args.interval, args.order).map_err(usage)?;
    let body = frames_body(&frames, args.interval, args.order);
    write_output(&args.output, serde_json::to_string(&body).expect("json serializes").as_bytes())?;
    if let Some(dir) = &args.stills {
        fs::create_dir_all(dir)?;
        let opts = RenderOptions { cell_px: args.cell_px, ..Default::default() };
        for (i, f) in frames.iter().enumerate() {
            let image = render_layer(&f.layer, Palette::Sequential, opts).map_err(usage)?;
            let png = image.to_png().map_err(|e| Failure::Data(e.to_string()))?;
            write_output(&dir.join(format!("frame_{i:04}.png")), &png)?;
        }
    }
    let total: u64 = frames.iter().map(|f| f.layer.total()).sum();
    eprintln!("{} frames, {total} events", frames.len());
    Ok(status(data.error_count()))
}

fn serve(args: ServeArgs) -> Result<ExitCode, Failure> {
    let data = load(&args.data.dir)?;
    let state = AppState::new(data);
    let app = router(state.clone(), args.static_dir);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        #[cfg(unix)]
        tokio::spawn(reload_on_hangup(state, args.data.dir));
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        cybermap_server::serve(listener, app, shutdown).await
    })?;
    Ok(ExitCode::SUCCESS)
}

/// Reloads the data directory on SIGHUP and swaps it in.
#[cfg(unix)]
async fn reload_on_hangup(state: AppState, dir: PathBuf) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hangups) = signal(SignalKind::hangup()) else { return };
    while hangups.recv().await.is_some() {
        match Dataset::load(&dir) {
            Ok(data) => {
                eprintln!("reloaded {} ({} errors)", dir.display(), data.error_count());
                state.swap(data);
            }
            Err(e) => eprintln!("reload failed: {e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Render(cmd) => render(cmd),
        Command::Query(cmd) => query(cmd),
        Command::Frames(args) => frames(args),
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
