//! Command-line front end for `ispg-core`.
//!
//! Exit codes: 0 success, 1 comparison outside tolerance, 2 configuration or
//! usage error, 3 I/O or unreadable input file, 4 numeric failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::{json, Map, Value};

use ispg_core::cascade::{cascade_graph, compare_profiles, oracle_skew, ProfileComparison};
use ispg_core::config::{ChannelConfig, GridSpec, Quantity};
use ispg_core::ispg::{counter_sweep, evaluate_profile, export_graph, fit_parameters};
use ispg_core::skew::{delta_tau_from_mixed, extract_skew_mixed, resonance_freqs, skew_zero_freqs};
use ispg_core::sparam::to_mixed_mode;
use ispg_core::table::{comparison_table, delta_tau_table, resonance_table, skew_table, Table, Units};
use ispg_core::touchstone::{
    read_touchstone_with, to_four_port, write_touchstone, DataFormat, MatrixOrder, PortMap,
};
use ispg_core::{Error as CoreError, ErrorClass, FourPortResponse, FrequencyGrid, IspgGraph};

pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Format => 3,
                ErrorClass::Numeric => 4,
            },
            CliError::Io { .. } => 3,
            CliError::Usage(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    OutsideTolerance,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::OutsideTolerance => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ispg", version, about = "Intra-pair skew modeling for cascaded differential channels")]
pub struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize and cascade a channel, write a 4-port Touchstone file.
    Synth(SynthArgs),
    /// Extract skew, delta tau and resonances from a 4-port Touchstone file.
    Skew(SkewArgs),
    /// Evaluate the analytic skew of a channel.
    Ispg(IspgArgs),
    /// Compare analytic skew against the cascaded S-parameter model.
    Compare(CompareArgs),
    /// Fit unknown channel parameters to a measured 4-port file.
    Fit(FitArgs),
    /// Export a channel as a Graphviz graph or as a config file.
    Graph(GraphArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SnpFormat {
    Ri,
    Ma,
    Db,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GraphFormat {
    Dot,
    Toml,
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    /// Channel description (TOML, or a graph exported by `ispg graph`).
    #[arg(long)]
    pub config: PathBuf,
    /// Frequency grid `START:STOP:POINTS[:linear|log]`, e.g. `10MHz:70GHz:7000`.
    /// Overrides the grid in the config.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct TableOut {
    /// Output path, `-` for stdout.
    #[arg(short, long, default_value = "-")]
    pub output: String,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    /// Hz and seconds instead of GHz and ps.
    #[arg(long)]
    pub si: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Output path, `-` for stdout.
    #[arg(short, long, default_value = "-")]
    pub output: String,
    #[arg(long, value_enum, default_value_t = SnpFormat::Ri)]
    pub format: SnpFormat,
}

#[derive(Debug, Args)]
pub struct MeasuredArgs {
    /// 4-port Touchstone file.
    pub input: PathBuf,
    /// File ports for library ports 1,2,3,4 (P-left, P-right, N-left, N-right).
    #[arg(long)]
    pub portmap: String,
    /// Read 4-port records column by column.
    #[arg(long)]
    pub column_major: bool,
}

#[derive(Debug, Args)]
pub struct SkewArgs {
    #[command(flatten)]
    pub measured: MeasuredArgs,
    /// Skew table path; delta tau and resonance tables are written next to
    /// it. With `-` only the skew table is written, to stdout.
    #[command(flatten)]
    pub out: TableOut,
}

#[derive(Debug, Args)]
pub struct IspgArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub out: TableOut,
    /// Also write the graph in Graphviz format.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub out: TableOut,
    /// Allowed RMS error as a fraction of the reference peak-to-peak.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub measured: MeasuredArgs,
    /// Template channel; unknown values are written as "?".
    #[arg(long)]
    pub config: PathBuf,
    /// Starting delta tau, e.g. `88ps`. Defaults to the median extracted from
    /// the file.
    #[arg(long)]
    pub delta_tau_hint: Option<String>,
    /// Output path for the fitted channel (TOML), `-` for stdout.
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Channel description.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(short, long, default_value = "-")]
    pub output: String,
    #[arg(long, value_enum, default_value_t = GraphFormat::Dot)]
    pub format: GraphFormat,
}

/// Caps rayon's worker count from `ISPG_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("ISPG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("ISPG_THREADS must be a positive integer, got {v:?}")))?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        warn!("thread pool already initialized; ISPG_THREADS ignored");
    }
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Skew(a) => cmd_skew(&a),
        Command::Ispg(a) => cmd_ispg(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Graph(a) => cmd_graph(&a),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_out(output: &str, text: &str) -> CliResult<()> {
    let io = |source| CliError::Io {
        path: output.to_string(),
        source,
    };
    if output == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes()).map_err(io)?;
        out.flush().map_err(io)
    } else {
        fs::write(output, text).map_err(io)
    }
}

/// Parses `START:STOP:POINTS[:SPACING]`.
pub fn parse_grid_arg(s: &str) -> CliResult<GridSpec> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(CliError::Usage(format!(
            "--grid expects START:STOP:POINTS[:linear|log], got {s:?}"
        )));
    }
    let points = parts[2]
        .parse()
        .map_err(|_| CliError::Usage(format!("--grid: bad point count {:?}", parts[2])))?;
    Ok(GridSpec {
        start: Quantity::Text(parts[0].to_string()),
        stop: Quantity::Text(parts[1].to_string()),
        points,
        spacing: parts.get(3).map(|s| s.to_string()),
    })
}

struct Channel {
    config: ChannelConfig,
    graph: IspgGraph,
    grid: FrequencyGrid,
}

fn load_channel(args: &ChannelArgs) -> CliResult<Channel> {
    let config = ChannelConfig::parse(&read_text(&args.config)?)?;
    let graph = config.to_graph()?;
    let grid = match &args.grid {
        Some(g) => parse_grid_arg(g)?.build()?,
        None => config.grid()?.ok_or_else(|| {
            CliError::Core(CoreError::Config(
                "no frequency grid; add a [grid] table or pass --grid".into(),
            ))
        })?,
    };
    Ok(Channel { config, graph, grid })
}

fn load_measured(args: &MeasuredArgs) -> CliResult<FourPortResponse> {
    let map = PortMap::parse(&args.portmap)?;
    let order = if args.column_major {
        MatrixOrder::ColumnMajor
    } else {
        MatrixOrder::RowMajor
    };
    let doc = read_touchstone_with(&read_text(&args.input)?, 4, order)?;
    let (resp, discarded) = to_four_port(&doc, &map)?;
    info!(
        "discarded reflection and near-end energy: max {:.3e} per frequency",
        discarded.max
    );
    if !resp.is_reciprocal() {
        warn!(
            "data is not reciprocal (max |Sij - Sji| = {:.3e})",
            resp.max_reciprocity_error()
        );
    }
    Ok(resp)
}

fn units(si: bool) -> Units {
    if si {
        Units::Si
    } else {
        Units::Human
    }
}

fn render(table: &Table, format: TableFormat, meta: Map<String, Value>) -> CliResult<String> {
    match format {
        TableFormat::Csv => Ok(table.to_csv()?),
        TableFormat::Json => Ok(table.to_json(meta)),
    }
}

fn meta(command: &str, units: Units) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("tool".into(), json!(concat!("ispg ", env!("CARGO_PKG_VERSION"))));
    m.insert(
        "units".into(),
        json!(match units {
            Units::Human => "GHz, ps",
            Units::Si => "Hz, s",
        }),
    );
    m
}

/// `out.csv` -> `out.<suffix>.csv`.
fn sibling(output: &str, suffix: &str) -> String {
    let p = Path::new(output);
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match p.extension() {
        Some(ext) => format!("{stem}.{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{suffix}"),
    };
    p.with_file_name(name).display().to_string()
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<Outcome> {
    let ch = load_channel(&a.channel)?;
    let result = cascade_graph(&ch.graph, &ch.grid)?;
    let format = match a.format {
        SnpFormat::Ri => DataFormat::Ri,
        SnpFormat::Ma => DataFormat::Ma,
        SnpFormat::Db => DataFormat::Db,
    };
    write_out(&a.output, &write_touchstone(&result.response, format))?;
    info!(
        "{} segments, {} frequencies, max unitarity error {:.1e}",
        ch.graph.len(),
        ch.grid.len(),
        result.response.max_unitarity_error()
    );
    Ok(Outcome::Ok)
}

pub fn cmd_skew(a: &SkewArgs) -> CliResult<Outcome> {
    let resp = load_measured(&a.measured)?;
    let mm = to_mixed_mode(&resp);
    let profile = extract_skew_mixed(&mm)?;
    let dt = delta_tau_from_mixed(&mm)?;
    let median = dt.median_magnitude();
    let f_max = resp.grid().last();
    // no mode conversion means no resonances to report
    let resonances = if median > 0.0 {
        let n = ((f_max * median - 0.5).floor() as usize + 1).max(1);
        let res = resonance_freqs(median, n)?;
        let zeros = skew_zero_freqs(median, n)?;
        eprintln!(
            "delta tau: median {:.3} ps; first resonance {:.3} GHz",
            median * 1e12,
            res[0] * 1e-9
        );
        Some((res, zeros))
    } else {
        log::warn!("delta tau is zero across the band; no resonances");
        None
    };

    let u = units(a.out.si);
    let mut m = meta("skew", u);
    m.insert("median_delta_tau_s".into(), json!(median));
    m.insert(
        "first_resonance_hz".into(),
        json!(resonances.as_ref().map(|(r, _)| r[0])),
    );
    write_out(&a.out.output, &render(&skew_table(&profile, u), a.out.format, m.clone())?)?;
    if a.out.output != "-" {
        write_out(
            &sibling(&a.out.output, "delta_tau"),
            &render(&delta_tau_table(&dt, u), a.out.format, m.clone())?,
        )?;
        if let Some((res, zeros)) = &resonances {
            write_out(
                &sibling(&a.out.output, "resonances"),
                &render(&resonance_table(res, zeros, u), a.out.format, m)?,
            )?;
        }
    }
    Ok(Outcome::Ok)
}

pub fn cmd_ispg(a: &IspgArgs) -> CliResult<Outcome> {
    let ch = load_channel(&a.channel)?;
    let profile = evaluate_profile(&ch.graph, &ch.grid)?;
    let (low21, _) = counter_sweep(&ch.graph, 0.0);
    let (low12, _) = counter_sweep(&ch.graph.reversed(), 0.0);
    eprintln!(
        "low-frequency limit: skew21 {:.6} ps, skew12 {:.6} ps",
        low21 * 1e12,
        low12 * 1e12
    );
    let u = units(a.out.si);
    let mut m = meta("ispg", u);
    m.insert("low_frequency_skew21_s".into(), json!(low21));
    m.insert("low_frequency_skew12_s".into(), json!(low12));
    write_out(&a.out.output, &render(&skew_table(&profile, u), a.out.format, m)?)?;
    if let Some(dot) = &a.dot {
        write_out(&dot.display().to_string(), &export_graph(&ch.graph))?;
    }
    Ok(Outcome::Ok)
}

fn comparison_meta(c: &ProfileComparison, tolerance: f64, ratio: f64, u: Units) -> Map<String, Value> {
    let mut m = meta("compare", u);
    m.insert("rms_error_s".into(), json!(c.rms));
    m.insert("max_abs_error_s".into(), json!(c.max_abs));
    m.insert("reference_peak_to_peak_s".into(), json!(c.peak_to_peak_ref));
    m.insert("rms_over_peak_to_peak".into(), json!(ratio));
    m.insert("tolerance".into(), json!(tolerance));
    m.insert("within_tolerance".into(), json!(ratio <= tolerance));
    m
}

pub fn cmd_compare(a: &CompareArgs) -> CliResult<Outcome> {
    let ch = load_channel(&a.channel)?;
    let tolerance = a
        .tolerance
        .or(ch.config.compare.as_ref().map(|c| c.tolerance))
        .unwrap_or(DEFAULT_TOLERANCE);
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(CliError::Usage(format!("tolerance must be non-negative, got {tolerance}")));
    }
    let model = evaluate_profile(&ch.graph, &ch.grid)?;
    let reference = oracle_skew(&ch.graph, &ch.grid)?;
    let c = compare_profiles(&model, &reference)?;
    let ratio = if c.peak_to_peak_ref > 0.0 {
        c.rms / c.peak_to_peak_ref
    } else if c.rms == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    eprintln!(
        "rms error {:.4} ps, max {:.4} ps, reference peak-to-peak {:.4} ps, ratio {:.4} (tolerance {})",
        c.rms * 1e12,
        c.max_abs * 1e12,
        c.peak_to_peak_ref * 1e12,
        ratio,
        tolerance
    );
    let u = units(a.out.si);
    let m = comparison_meta(&c, tolerance, ratio, u);
    write_out(&a.out.output, &render(&comparison_table(&model, &reference, u), a.out.format, m)?)?;
    Ok(if ratio <= tolerance {
        Outcome::Ok
    } else {
        Outcome::OutsideTolerance
    })
}

fn parse_time(s: &str) -> CliResult<f64> {
    Ok(Quantity::Text(s.to_string()).seconds("--delta-tau-hint")?)
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<Outcome> {
    let template = ChannelConfig::parse(&read_text(&a.config)?)?.to_template()?;
    let resp = load_measured(&a.measured)?;
    let mm = to_mixed_mode(&resp);
    let measured = extract_skew_mixed(&mm)?;
    let hint = match &a.delta_tau_hint {
        Some(h) => parse_time(h)?,
        None => delta_tau_from_mixed(&mm)?.median_magnitude(),
    };
    let fit = fit_parameters(&measured, &template, hint)?;
    eprintln!(
        "fitted {} values, rms residual {:.4} ps",
        fit.values.len(),
        fit.residual_rms * 1e12
    );
    let mut text = format!(
        "# fitted to {}\n# rms residual {:e} s\n",
        a.measured.input.display(),
        fit.residual_rms
    );
    text.push_str(&ChannelConfig::from_graph(&fit.graph, None).to_toml());
    write_out(&a.output, &text)?;
    Ok(Outcome::Ok)
}

pub fn cmd_graph(a: &GraphArgs) -> CliResult<Outcome> {
    let cfg = ChannelConfig::parse(&read_text(&a.config)?)?;
    let graph = cfg.to_graph()?;
    let text = match a.format {
        GraphFormat::Dot => export_graph(&graph),
        GraphFormat::Toml => ChannelConfig::from_graph(&graph, cfg.grid.clone()).to_toml(),
    };
    write_out(&a.output, &text)?;
    Ok(Outcome::Ok)
}
