//! `vorx` command-line front end.

pub mod render;

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamic::{interior, run_dynamic, DynamicError, MotionConfig, MotionKind};
use crate::etl_sim::{simulate, PipelineConfig, SimError};
use crate::fortune::{build_voronoi, VoronoiDiagram, VoronoiError};
use crate::geometry::{BoundingBox, Point, Site};
use crate::spatial_index::{IndexError, OrderedIndex, Record, DEFAULT_PAGE_CAPACITY};
use crate::zcurve::{
    GridQuantizer, MortonGrid, MortonKey, SearchExtent, ZCurveError, DEFAULT_BITS, MAX_BITS,
};
use render::{render_svg, ColorScheme, RenderStyle};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "vorx",
    version,
    about = "Voronoi diagrams, Morton-key indexing and pipeline simulation"
)]
pub struct Cli {
    /// RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Grid resolution in bits per dimension (1..=32).
    #[arg(long, global = true, default_value_t = DEFAULT_BITS, value_parser = clap::value_parser!(u8).range(1..=MAX_BITS as i64))]
    pub bits: u8,
    /// World box as x0,y0,x1,y1.
    #[arg(long = "box", global = true, default_value = "0,0,1000,1000", allow_hyphen_values = true, value_parser = parse_box)]
    pub world_box: BoxArg,
    /// Output path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxArg(pub BoundingBox);

impl fmt::Display for BoxArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(f, "{},{},{},{}", b.min.x, b.min.y, b.max.x, b.max.y)
    }
}

fn parse_box(s: &str) -> Result<BoxArg, String> {
    let v = parse_list::<f64>(s, 4)?;
    BoundingBox::from_coords(v[0], v[1], v[2], v[3])
        .map(BoxArg)
        .map_err(|e| e.to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str, n: usize) -> Result<Vec<T>, String> {
    let v: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected {n} comma-separated numbers, got '{s}'"))?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got '{s}'"));
    }
    Ok(v)
}

fn parse_u32x4(s: &str) -> Result<[u32; 4], String> {
    let v = parse_list::<u32>(s, 4)?;
    Ok([v[0], v[1], v[2], v[3]])
}

fn parse_f64x4(s: &str) -> Result<[f64; 4], String> {
    let v = parse_list::<f64>(s, 4)?;
    Ok([v[0], v[1], v[2], v[3]])
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write N uniform random sites as `id,x,y` CSV.
    GenSites {
        #[arg(long, short)]
        n: usize,
    },
    /// Build a static diagram and render it as SVG.
    Voronoi {
        sites: PathBuf,
        /// Stats JSON path; defaults to the SVG path with `.stats.json`.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[command(flatten)]
        style: StyleArgs,
    },
    /// Move sites over ticks and render one SVG per frame.
    Dynamic {
        sites: PathBuf,
        #[arg(long)]
        ticks: usize,
        /// Motion config JSON; overrides the motion flags below.
        #[arg(long)]
        motion: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "static")]
        model: ModelArg,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value_t = crate::dynamic::DEFAULT_DT)]
        dt: f64,
        #[command(flatten)]
        style: StyleArgs,
    },
    /// Morton key tools.
    Morton {
        #[command(subcommand)]
        op: MortonOp,
    },
    /// Run the pipeline simulation from a JSON config.
    Simulate { config: PathBuf },
    /// Range query against an index snapshot.
    Query {
        snapshot: PathBuf,
        /// Cell extent ix0,iy0,ix1,iy1.
        #[arg(long, value_parser = parse_u32x4, conflicts_with = "region")]
        extent: Option<[u32; 4]>,
        /// World-coordinate region x0,y0,x1,y1.
        #[arg(long, value_parser = parse_f64x4, allow_hyphen_values = true)]
        region: Option<[f64; 4]>,
    },
    /// Index maintenance.
    Index {
        #[command(subcommand)]
        op: IndexOp,
    },
    /// Re-run the command recorded in a run manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModelArg {
    Static,
    Bounce,
    WaypointLoop,
    RandomWalk,
}

#[derive(Debug, Clone, Args)]
pub struct StyleArgs {
    /// Image width in pixels.
    #[arg(long, default_value_t = 800)]
    pub size: u32,
    #[arg(long, default_value_t = 1.0)]
    pub stroke: f64,
    #[arg(long, default_value_t = 2.5)]
    pub radius: f64,
    #[arg(long, default_value = "pastel", value_parser = ["pastel", "mono"])]
    pub scheme: String,
}

impl StyleArgs {
    fn style(&self) -> Result<RenderStyle, CliError> {
        let s = RenderStyle {
            stroke_width: self.stroke,
            site_radius: self.radius,
            scheme: if self.scheme == "mono" {
                ColorScheme::Mono
            } else {
                ColorScheme::Pastel
            },
            size_px: self.size,
        };
        s.validate().map_err(|m| CliError::new("USAGE", m))?;
        Ok(s)
    }
}

#[derive(Debug, Subcommand)]
pub enum MortonOp {
    /// Print the key of cell (IX, IY).
    Encode { ix: u64, iy: u64 },
    /// Print `ix iy` for a key.
    Decode { key: u64 },
    /// Print the key ranges covering a cell extent as JSON.
    Decompose {
        ix0: u32,
        iy0: u32,
        ix1: u32,
        iy1: u32,
        #[arg(long)]
        max_ranges: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexOp {
    /// Build a snapshot from `id,x,y[,timestamp_us][,payload]` CSV, or from
    /// the records stored by a simulation run.
    Build {
        #[arg(required_unless_present = "sim")]
        readings: Option<PathBuf>,
        /// Pipeline config to simulate instead of reading CSV.
        #[arg(long, conflicts_with = "readings")]
        sim: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PAGE_CAPACITY)]
        page_capacity: usize,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self::new("IO_ERROR", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        if self.code == "USAGE" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Single line, whatever the source message looked like.
        let msg = self.message.replace('\n', " ");
        write!(f, "ERROR {}: {}", self.code, msg.trim())
    }
}

impl From<VoronoiError> for CliError {
    fn from(e: VoronoiError) -> Self {
        Self::new("BUILD_ERROR", e.to_string())
    }
}

impl From<DynamicError> for CliError {
    fn from(e: DynamicError) -> Self {
        match e {
            DynamicError::InvalidConfig(_) => Self::new("CONFIG_ERROR", e.to_string()),
            _ => Self::new("BUILD_ERROR", e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::new("CONFIG_ERROR", e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::SnapshotFormat(_) => Self::new("SNAPSHOT_FORMAT", e.to_string()),
            IndexError::Io(_) => Self::new("IO_ERROR", e.to_string()),
            _ => Self::new("INDEX_ERROR", e.to_string()),
        }
    }
}

impl From<ZCurveError> for CliError {
    fn from(e: ZCurveError) -> Self {
        let code = match e {
            ZCurveError::CoordOutOfGrid(..) => "COORD_OUT_OF_GRID",
            ZCurveError::KeyOutOfGrid(..) => "KEY_OUT_OF_GRID",
            _ => "USAGE",
        };
        Self::new(code, e.to_string())
    }
}

/// Everything needed to reproduce one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub bits: u8,
    #[serde(rename = "box")]
    pub world_box: [f64; 4],
    pub outputs: Vec<String>,
    pub config: Value,
}

/// Parses `args` (without the program name), runs the command and returns
/// the process exit code. Errors go to stderr as `ERROR <code>: <message>`.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(std::iter::once(OsString::from("vorx")).chain(args.clone()))
    {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return 0;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::new("USAGE", first));
            return 2;
        }
    };
    let argv: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, argv: &[String]) -> Result<(), CliError> {
    let b = cli.world_box.0;
    let ctx = Ctx {
        cli,
        argv,
        world_box: b,
    };
    match &cli.command {
        Command::GenSites { n } => ctx.gen_sites(*n),
        Command::Voronoi {
            sites,
            stats,
            style,
        } => ctx.voronoi(sites, stats.as_deref(), &style.style()?),
        Command::Dynamic {
            sites,
            ticks,
            motion,
            model,
            speed,
            dt,
            style,
        } => {
            let cfg = match motion {
                Some(p) => read_json::<MotionConfig>(p)?,
                None => MotionConfig {
                    model: match model {
                        ModelArg::Static => MotionKind::Static,
                        ModelArg::Bounce => MotionKind::Bounce,
                        ModelArg::WaypointLoop => MotionKind::WaypointLoop,
                        ModelArg::RandomWalk => MotionKind::RandomWalk,
                    },
                    speed: *speed,
                    scale: *speed,
                    dt: *dt,
                    ..MotionConfig::default()
                },
            };
            ctx.dynamic(sites, *ticks, &cfg, &style.style()?)
        }
        Command::Morton { op } => ctx.morton(op),
        Command::Simulate { config } => ctx.simulate(config),
        Command::Query {
            snapshot,
            extent,
            region,
        } => ctx.query(snapshot, *extent, *region),
        Command::Index {
            op:
                IndexOp::Build {
                    readings,
                    sim,
                    page_capacity,
                },
        } => ctx.index_build(readings.as_deref(), sim.as_deref(), *page_capacity),
        Command::Replay { manifest } => replay(manifest),
    }
}

fn replay(path: &Path) -> Result<(), CliError> {
    let m: RunManifest = read_json(path)?;
    if m.tool != "vorx" {
        return Err(CliError::new(
            "CONFIG_ERROR",
            format!("{}: not a vorx manifest", path.display()),
        ));
    }
    if m.subcommand == "replay" {
        return Err(CliError::new(
            "CONFIG_ERROR",
            "refusing to replay a replay manifest",
        ));
    }
    let cli =
        Cli::try_parse_from(std::iter::once("vorx".to_string()).chain(m.args.iter().cloned()))
            .map_err(|e| CliError::new("CONFIG_ERROR", format!("manifest args: {e}")))?;
    execute(&cli, &m.args)
}

struct Ctx<'a> {
    cli: &'a Cli,
    argv: &'a [String],
    world_box: BoundingBox,
}

impl Ctx<'_> {
    fn require_out(&self, what: &str) -> Result<&Path, CliError> {
        self.cli
            .out
            .as_deref()
            .ok_or_else(|| CliError::new("USAGE", format!("{what} needs --out <path>")))
    }

    fn write_manifest(
        &self,
        path: &Path,
        subcommand: &str,
        outputs: &[&Path],
        config: Value,
    ) -> Result<(), CliError> {
        let b = self.world_box;
        let m = RunManifest {
            tool: "vorx".into(),
            version: VERSION.into(),
            subcommand: subcommand.into(),
            args: self.argv.to_vec(),
            seed: self.cli.seed,
            bits: self.cli.bits,
            world_box: [b.min.x, b.min.y, b.max.x, b.max.y],
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            config,
        };
        write_json(path, &m)
    }

    fn gen_sites(&self, n: usize) -> Result<(), CliError> {
        if n == 0 {
            return Err(CliError::new("USAGE", "gen-sites needs n >= 1"));
        }
        let sites = generate_sites(n, &self.world_box, self.cli.seed);
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["id", "x", "y"]).expect("in-memory write");
            for s in &sites {
                w.write_record([
                    s.id.to_string(),
                    s.position.x.to_string(),
                    s.position.y.to_string(),
                ])
                .expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        match &self.cli.out {
            Some(out) => {
                self.write_manifest(&manifest_path(out), "gen-sites", &[out], json!({ "n": n }))?;
                write_bytes(out, &buf)
            }
            None => emit_bytes(&buf),
        }
    }

    fn voronoi(
        &self,
        sites: &Path,
        stats: Option<&Path>,
        style: &RenderStyle,
    ) -> Result<(), CliError> {
        let out = self.require_out("voronoi")?;
        let stats_path = stats
            .map(Path::to_path_buf)
            .unwrap_or_else(|| out.with_extension("stats.json"));
        let sites_v = read_sites(sites)?;
        self.write_manifest(
            &manifest_path(out),
            "voronoi",
            &[out, &stats_path],
            json!({ "sites": sites.display().to_string(), "style": style }),
        )?;
        let d = build_voronoi(&sites_v, self.world_box)?;
        write_bytes(out, render_svg(&d, style).as_bytes())?;
        write_json(&stats_path, &stats_json(&d, self.cli.seed))
    }

    fn dynamic(
        &self,
        sites: &Path,
        ticks: usize,
        cfg: &MotionConfig,
        style: &RenderStyle,
    ) -> Result<(), CliError> {
        if ticks == 0 {
            return Err(CliError::new("USAGE", "dynamic needs --ticks >= 1"));
        }
        let dir = self.require_out("dynamic")?;
        let sites_v = read_sites(sites)?;
        let mut world = cfg.build_world(&sites_v, self.world_box, self.cli.seed)?;
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let index_path = dir.join("frames.json");
        self.write_manifest(
            &dir.join("manifest.json"),
            "dynamic",
            &[dir, &index_path],
            json!({ "sites": sites.display().to_string(), "ticks": ticks, "motion": cfg, "style": style }),
        )?;
        let mut frames = run_dynamic(&mut world, ticks)?;
        frames
            .par_iter_mut()
            .map(|f| {
                let name = format!("frame_{:06}.svg", f.record.tick);
                write_bytes(&dir.join(&name), render_svg(&f.diagram, style).as_bytes())?;
                f.record.file = Some(name);
                Ok(())
            })
            .collect::<Result<Vec<()>, CliError>>()?;
        let records: Vec<_> = frames.iter().map(|f| &f.record).collect();
        write_json(
            &index_path,
            &json!({
                "version": 1,
                "seed": self.cli.seed,
                "n_ticks": ticks,
                "dt": cfg.dt,
                "frames": records,
            }),
        )
    }

    fn morton(&self, op: &MortonOp) -> Result<(), CliError> {
        let grid = MortonGrid::new(self.cli.bits)?;
        let hint = |e: ZCurveError, usage: &str| {
            let mut c = CliError::from(e);
            c.message = format!(
                "{}; usage: {usage} (grid max {})",
                c.message,
                grid.max_coord()
            );
            c
        };
        let line = match op {
            MortonOp::Encode { ix, iy } => grid
                .encode(*ix, *iy)
                .map_err(|e| hint(e, "vorx morton encode <IX> <IY> [--bits B]"))?
                .to_string(),
            MortonOp::Decode { key } => {
                let (ix, iy) = grid.decode(MortonKey(*key)).map_err(|e| {
                    let mut c = CliError::from(e);
                    c.message = format!(
                        "{}; usage: vorx morton decode <KEY> [--bits B] (grid max key {})",
                        c.message,
                        grid.max_key()
                    );
                    c
                })?;
                format!("{ix} {iy}")
            }
            MortonOp::Decompose {
                ix0,
                iy0,
                ix1,
                iy1,
                max_ranges,
            } => {
                for (x, y) in [(*ix0, *iy0), (*ix1, *iy1)] {
                    grid.encode(x as u64, y as u64).map_err(|e| {
                        hint(
                            e,
                            "vorx morton decompose <IX0> <IY0> <IX1> <IY1> [--bits B]",
                        )
                    })?;
                }
                let extent = SearchExtent::new(*ix0, *iy0, *ix1, *iy1)?;
                let ranges = grid.decompose(&extent, max_ranges.unwrap_or(usize::MAX))?;
                let pairs: Vec<[u64; 2]> = ranges.iter().map(|r| [r.lo.0, r.hi.0]).collect();
                serde_json::to_string(&pairs).expect("serializable")
            }
        };
        emit(&format!("{line}\n"))
    }

    fn simulate(&self, config: &Path) -> Result<(), CliError> {
        let mut cfg: PipelineConfig = read_json(config)?;
        if seed_given(self.argv) {
            cfg.seed = self.cli.seed;
        }
        if let Some(out) = &self.cli.out {
            self.write_manifest(
                &manifest_path(out),
                "simulate",
                &[out],
                serde_json::to_value(&cfg).expect("serializable"),
            )?;
        }
        let run = simulate(&cfg)?;
        let r = &run.report;
        let summary = format!(
            "published={} served={} stored={} mean_sojourn_s={:.6} predicted_s={:.6} rho={:.4} seed={}",
            r.published, r.served, r.stored, r.mean_sojourn_s, r.kingman_prediction_s, r.rho, r.seed
        );
        match &self.cli.out {
            Some(out) => {
                write_json(out, r)?;
                emit(&format!("{summary}\n"))?;
            }
            None => {
                let mut s = serde_json::to_string_pretty(r).expect("serializable");
                s.push('\n');
                emit(&s)?;
                eprintln!("{summary}");
            }
        }
        Ok(())
    }

    fn quantizer(&self) -> Result<GridQuantizer, CliError> {
        Ok(GridQuantizer::new(self.world_box, self.cli.bits)?)
    }

    fn query(
        &self,
        snapshot: &Path,
        extent: Option<[u32; 4]>,
        region: Option<[f64; 4]>,
    ) -> Result<(), CliError> {
        let q = self.quantizer()?;
        let f = File::open(snapshot).map_err(|e| CliError::io(snapshot, e))?;
        let index = OrderedIndex::read_snapshot(BufReader::new(f), q, DEFAULT_PAGE_CAPACITY)?;
        let extent = match (extent, region) {
            (Some([a, b, c, d]), _) => {
                for (x, y) in [(a, b), (c, d)] {
                    q.grid.encode(x as u64, y as u64)?;
                }
                Some(SearchExtent::new(a, b, c, d)?)
            }
            (None, Some([x0, y0, x1, y1])) => {
                let wb = q.world_box;
                if x0 > x1 || y0 > y1 {
                    return Err(CliError::new("USAGE", "region needs x0 <= x1 and y0 <= y1"));
                }
                if x1 < wb.min.x || x0 > wb.max.x || y1 < wb.min.y || y0 > wb.max.y {
                    None
                } else {
                    Some(q.extent_of(Point::new(x0, y0), Point::new(x1, y1)))
                }
            }
            (None, None) => Some(q.grid.full_extent()),
        };
        if let Some(out) = &self.cli.out {
            self.write_manifest(
                &manifest_path(out),
                "query",
                &[out],
                json!({ "snapshot": snapshot.display().to_string(), "extent": extent.map(|e| [e.ix_min, e.iy_min, e.ix_max, e.iy_max]) }),
            )?;
        }
        let records = match &extent {
            Some(e) => index.range_search(e)?,
            None => Vec::new(),
        };
        let rows: Vec<Value> = records.iter().map(|r| record_json(r, &q)).collect();
        let doc = json!({
            "extent": extent.map(|e| [e.ix_min, e.iy_min, e.ix_max, e.iy_max]),
            "count": rows.len(),
            "records": rows,
        });
        match &self.cli.out {
            Some(out) => write_json(out, &doc),
            None => {
                let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
                s.push('\n');
                emit(&s)
            }
        }
    }

    fn index_build(
        &self,
        readings: Option<&Path>,
        sim: Option<&Path>,
        capacity: usize,
    ) -> Result<(), CliError> {
        let out = self.require_out("index build")?;
        let index = match (readings, sim) {
            (_, Some(cfg_path)) => {
                let mut cfg: PipelineConfig = read_json(cfg_path)?;
                if seed_given(self.argv) {
                    cfg.seed = self.cli.seed;
                }
                cfg.grid.page_capacity = capacity;
                let b = self.world_box;
                cfg.grid.world_box = [b.min.x, b.min.y, b.max.x, b.max.y];
                cfg.grid.bits = self.cli.bits;
                self.write_manifest(
                    &manifest_path(out),
                    "index build",
                    &[out],
                    serde_json::to_value(&cfg).expect("serializable"),
                )?;
                simulate(&cfg)?.index
            }
            (Some(path), None) => {
                self.write_manifest(
                    &manifest_path(out),
                    "index build",
                    &[out],
                    json!({ "readings": path.display().to_string(), "page_capacity": capacity }),
                )?;
                let mut index = OrderedIndex::with_capacity(self.quantizer()?, capacity)?;
                for r in read_readings(path, &self.world_box)? {
                    index.insert_reading(r.id, r.position, r.timestamp_us, r.payload)?;
                }
                index
            }
            (None, None) => {
                return Err(CliError::new(
                    "USAGE",
                    "index build needs a readings CSV or --sim",
                ))
            }
        };
        let f = File::create(out).map_err(|e| CliError::io(out, e))?;
        index.write_snapshot(BufWriter::new(f))?;
        Ok(())
    }
}

/// True when `--seed` appears explicitly, so it can override a config file.
fn seed_given(argv: &[String]) -> bool {
    argv.iter()
        .any(|a| a == "--seed" || a.starts_with("--seed="))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `n` sites uniform strictly inside `b`, ids `0..n`.
pub fn generate_sites(n: usize, b: &BoundingBox, seed: u64) -> Vec<Site> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x = interior(&mut rng, b.min.x, b.max.x);
            let y = interior(&mut rng, b.min.y, b.max.y);
            Site::new(i as u32, x, y)
        })
        .collect()
}

fn stats_json(d: &VoronoiDiagram, seed: u64) -> Value {
    let interior = d
        .vertices
        .iter()
        .filter(|v| d.clip_box.contains(v.position))
        .count();
    json!({
        "seed": seed,
        "n_sites": d.sites.len(),
        "vertices": d.vertices.len(),
        "interior_vertices": interior,
        "edges": d.edges.len(),
        "cells": d.cells.len(),
        "stats": d.stats,
    })
}

fn record_json(r: &Record, q: &GridQuantizer) -> Value {
    let (ix, iy) = crate::zcurve::deinterleave(r.key.0);
    let p = q.dequantize(ix, iy);
    let hex: String = r.payload.iter().map(|b| format!("{b:02x}")).collect();
    json!({
        "key": r.key.0,
        "ix": ix,
        "iy": iy,
        "x": p.x,
        "y": p.y,
        "site_id": r.site_id,
        "timestamp_us": r.timestamp_us,
        "payload_hex": hex,
    })
}

#[derive(Debug, Deserialize)]
struct SiteRow {
    id: u32,
    x: f64,
    y: f64,
}

/// Reads `id,x,y` CSV; errors carry the offending line number.
pub fn read_sites(path: &Path) -> Result<Vec<Site>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(f));
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SiteRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, i, e))?;
        if !(row.x.is_finite() && row.y.is_finite()) {
            return Err(CliError::new(
                "PARSE_ERROR",
                format!("{}: line {}: non-finite coordinate", path.display(), i + 2),
            ));
        }
        out.push(Site::new(row.id, row.x, row.y));
    }
    Ok(out)
}

fn csv_error(path: &Path, i: usize, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
    let msg = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    CliError::new(
        "PARSE_ERROR",
        format!("{}: line {line}: {msg}", path.display()),
    )
}

#[derive(Debug, Deserialize)]
struct ReadingRow {
    id: u32,
    x: f64,
    y: f64,
    #[serde(default)]
    timestamp_us: Option<u64>,
    #[serde(default)]
    payload: Option<String>,
}

struct Reading {
    id: u32,
    position: Point,
    timestamp_us: u64,
    payload: Vec<u8>,
}

fn read_readings(path: &Path, b: &BoundingBox) -> Result<Vec<Reading>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(f));
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ReadingRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, i, e))?;
        let p = Point::new(row.x, row.y);
        if !(p.is_finite() && b.contains(p)) {
            return Err(CliError::new(
                "PARSE_ERROR",
                format!("{}: line {}: position outside --box", path.display(), i + 2),
            ));
        }
        out.push(Reading {
            id: row.id,
            position: p,
            timestamp_us: row.timestamp_us.unwrap_or(0),
            payload: row.payload.unwrap_or_default().into_bytes(),
        });
    }
    Ok(out)
}

fn emit(s: &str) -> Result<(), CliError> {
    emit_bytes(s.as_bytes())
}

/// Writes to stdout; a closed pipe (`vorx ... | head`) is not an error.
fn emit_bytes(b: &[u8]) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match out.write_all(b).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
            Err(CliError::new("IO_ERROR", format!("stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::new(
            "CONFIG_ERROR",
            format!(
                "{}: line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ),
        )
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
