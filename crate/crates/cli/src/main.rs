//! Command-line front end for the mcips laboratory.
//!
//! Subcommands: `simulate`, `construct-measure`, `dual-points`, `multiline`,
//! `burke`, `verify`, `oracle`. Every option can also come from a flat
//! `key = value` config file with one `[subcommand]` section per command;
//! command-line flags win over file values, the `MCIPS_SEED` environment
//! variable provides a default seed, and built-in defaults come last.
//!
//! Exit codes: 0 success (all checks passed), 1 check failure, 2 usage or
//! configuration error, 3 runtime error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use mcips_core::dual::{dual_points, multiline_evolve, t_image_check, MultiLineState};
use mcips_core::dynamics::{
    evolve_multiclass, generate_bernoulli_field, generate_poisson, DynamicsKind, PointProcess,
};
use mcips_core::lattice::{
    check_increasing, r_inverse, sample_fixed_count, sample_lines, Configuration, Density,
    MulticlassConfig, Topology,
};
use mcips_core::queue::{construct_measure, m_map, Boundary};
use mcips_core::verify::{
    birth_death_stationary, burke_exact, confirm_violation, drift_detection_test, invariance_test,
    multiline_product_test, poisson_dual_test, sweep_ordering_violation, t_image_trajectory_check,
    DualPoissonConfig, InvarianceConfig, MultilineConfig, TestReport,
};
use mcips_core::{ctmc, io};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

// ---------------------------------------------------------------- arguments

#[derive(Parser)]
#[command(
    name = "mcips",
    version,
    about = "Event-driven laboratory for multiclass interacting particle systems",
    arg_required_else_help = true
)]
struct Cli {
    /// Flat `key = value` config file with one `[subcommand]` section per
    /// command; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a multiclass word under driving noise and log the trajectory.
    Simulate(SimulateArgs),
    /// Sample the multiclass invariant measure built from tandem queues.
    ConstructMeasure(ConstructArgs),
    /// Compute the dual points of a logged trajectory.
    DualPoints(DualPointsArgs),
    /// Evolve the multi-line process; optionally check the collapse identity.
    Multiline(MultilineArgs),
    /// Exact departure-law and queue-length computations for a single queue.
    Burke(BurkeArgs),
    /// Run a verification suite and emit a JSON report.
    Verify(VerifyArgs),
    /// Exact stationary solve of a small ring chain.
    Oracle(OracleArgs),
}

#[derive(Args, Default)]
struct SimulateArgs {
    /// Dynamics: had, tasep, lrep, asep, seq-tasep-lr, seq-tasep-rl, par-tasep
    #[arg(long)]
    kind: Option<String>,
    /// Probability parameter for asep (leftward bias) and the sweep kinds
    /// (per-bond mark probability); default 0.5
    #[arg(long)]
    p: Option<String>,
    /// Number of particle classes; implied by --densities or --counts
    #[arg(long)]
    classes: Option<String>,
    /// ring:SITES or segment:WINDOW:BUFFER
    #[arg(long)]
    topology: Option<String>,
    /// Comma-separated class densities, e.g. 0.2,0.5,0.8; the initial word is
    /// sampled from the invariant measure at these densities
    #[arg(long)]
    densities: Option<String>,
    /// Comma-separated per-line particle counts (ring initial condition)
    #[arg(long)]
    counts: Option<String>,
    /// Time horizon (number of sweeps for the discrete kinds)
    #[arg(long)]
    t: Option<String>,
    /// RNG seed; defaults to MCIPS_SEED, then 0
    #[arg(long)]
    seed: Option<String>,
    /// Write the event trajectory as JSON lines
    #[arg(long, value_name = "FILE")]
    log: Option<String>,
    /// Write the final multiclass word
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// Write gnuplot-ready space-time data (single-class runs only)
    #[arg(long, value_name = "FILE")]
    plot: Option<String>,
    /// Manifest path; defaults next to the first output file
    #[arg(long, value_name = "FILE")]
    manifest: Option<String>,
}

#[derive(Args, Default)]
struct ConstructArgs {
    /// Comma-separated strictly increasing class densities
    #[arg(long)]
    densities: Option<String>,
    /// ring:SITES or segment:WINDOW:BUFFER
    #[arg(long)]
    topology: Option<String>,
    /// Boundary policy: empty or loynes (default: loynes on rings, empty on
    /// segments)
    #[arg(long)]
    boundary: Option<String>,
    /// RNG seed; defaults to MCIPS_SEED, then 0
    #[arg(long)]
    seed: Option<String>,
    /// Output file for the multiclass word (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// Manifest path; defaults next to the output file
    #[arg(long, value_name = "FILE")]
    manifest: Option<String>,
}

#[derive(Args, Default)]
struct DualPointsArgs {
    /// Expected dynamics kind; checked against the trajectory header
    #[arg(long)]
    kind: Option<String>,
    /// Driving point-process file to cross-check against the trajectory
    #[arg(long = "in", value_name = "FILE")]
    input: Option<String>,
    /// Trajectory JSON-lines file produced by `simulate --log`
    #[arg(long, value_name = "FILE")]
    traj: Option<String>,
    /// Output file for the dual points (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// Manifest path; defaults next to the output file
    #[arg(long, value_name = "FILE")]
    manifest: Option<String>,
}

#[derive(Args, Default)]
struct MultilineArgs {
    /// Dynamics: had or tasep
    #[arg(long)]
    kind: Option<String>,
    /// Probability parameter (unused by had/tasep; kept for config symmetry)
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated per-line densities (need not be monotone)
    #[arg(long)]
    densities: Option<String>,
    /// Comma-separated per-line particle counts (ring initial condition)
    #[arg(long)]
    counts: Option<String>,
    /// ring:SITES or segment:WINDOW:BUFFER
    #[arg(long)]
    topology: Option<String>,
    /// Time horizon
    #[arg(long)]
    t: Option<String>,
    /// RNG seed; defaults to MCIPS_SEED, then 0
    #[arg(long)]
    seed: Option<String>,
    /// Pathwise check to run: t-image (exit 1 on any failure)
    #[arg(long)]
    check: Option<String>,
    /// Output file for the final lines (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// Manifest path; defaults next to the output file
    #[arg(long, value_name = "FILE")]
    manifest: Option<String>,
}

#[derive(Args, Default)]
struct BurkeArgs {
    /// Arrival density (0 < rho1 < rho2)
    #[arg(long)]
    rho1: Option<String>,
    /// Service density (rho1 < rho2 < 1)
    #[arg(long)]
    rho2: Option<String>,
    /// Departure window width (1..=12); default 6
    #[arg(long)]
    window: Option<String>,
    /// Total-variation tolerance for the departure law; default 1e-10
    #[arg(long)]
    tolerance: Option<String>,
    /// Queue-length states for the exact stationary solve; default 200
    #[arg(long)]
    states: Option<String>,
    /// Manifest path (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    manifest: Option<String>,
}

#[derive(Args, Default)]
struct VerifyArgs {
    /// Suite: invariance, burke, multiline, duals, pathwise, negative
    #[arg(long)]
    suite: Option<String>,
    /// Dynamics kind (suite-dependent default)
    #[arg(long)]
    kind: Option<String>,
    /// Probability parameter for asep / sweep kinds
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated densities (suite-dependent default)
    #[arg(long)]
    densities: Option<String>,
    /// ring:SITES or segment:WINDOW:BUFFER (suite-dependent default)
    #[arg(long)]
    topology: Option<String>,
    /// Time horizon (suite-dependent default)
    #[arg(long)]
    t: Option<String>,
    /// Replicas / instances per test (suite-dependent default)
    #[arg(long)]
    replicas: Option<String>,
    /// RNG seed; defaults to MCIPS_SEED, then 0
    #[arg(long)]
    seed: Option<String>,
    /// Significance level for the statistical suites; default 0.01
    #[arg(long)]
    alpha: Option<String>,
    /// Write the report as a JSON array of test records
    #[arg(long, value_name = "FILE")]
    json: Option<String>,
    /// Manifest path; defaults next to the JSON report
    #[arg(long, value_name = "FILE")]
    manifest: Option<String>,
}

#[derive(Args, Default)]
struct OracleArgs {
    /// Dynamics kind; default tasep
    #[arg(long)]
    kind: Option<String>,
    /// Probability parameter for asep
    #[arg(long)]
    p: Option<String>,
    /// ring:SITES (the exact solve runs on rings); default ring:5
    #[arg(long)]
    topology: Option<String>,
    /// Particle count; default 2
    #[arg(long)]
    count: Option<String>,
    /// Output CSV `state,probability` (stdout table if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// Manifest path (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    manifest: Option<String>,
}

// ------------------------------------------------------------ error/exit

enum CliError {
    Usage(String),
    Runtime(String),
}

type CliResult<T> = Result<T, CliError>;

impl From<mcips_core::Error> for CliError {
    fn from(e: mcips_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

// ------------------------------------------------------- config-file layer

/// Keys each section of the config file may carry (mirrors the long flags).
const SECTIONS: &[(&str, &[&str])] = &[
    (
        "simulate",
        &[
            "kind",
            "p",
            "classes",
            "topology",
            "densities",
            "counts",
            "t",
            "seed",
            "log",
            "out",
            "plot",
            "manifest",
        ],
    ),
    (
        "construct-measure",
        &["densities", "topology", "boundary", "seed", "out", "manifest"],
    ),
    ("dual-points", &["kind", "in", "traj", "out", "manifest"]),
    (
        "multiline",
        &[
            "kind",
            "p",
            "densities",
            "counts",
            "topology",
            "t",
            "seed",
            "check",
            "out",
            "manifest",
        ],
    ),
    (
        "burke",
        &["rho1", "rho2", "window", "tolerance", "states", "manifest"],
    ),
    (
        "verify",
        &[
            "suite",
            "kind",
            "p",
            "densities",
            "topology",
            "t",
            "replicas",
            "seed",
            "alpha",
            "json",
            "manifest",
        ],
    ),
    (
        "oracle",
        &["kind", "p", "topology", "count", "out", "manifest"],
    ),
];

fn load_config(path: &Path) -> CliResult<BTreeMap<String, BTreeMap<String, String>>> {
    let text = read_file(path)?;
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(usage(format!(
                    "{}:{}: unknown section [{name}]",
                    path.display(),
                    i + 1
                )));
            }
            current = Some(name.to_string());
            sections.entry(name.to_string()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!(
                "{}:{}: expected `key = value` or `[section]`",
                path.display(),
                i + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let section = current.clone().ok_or_else(|| {
            usage(format!(
                "{}:{}: key {key:?} appears before any [section]",
                path.display(),
                i + 1
            ))
        })?;
        let allowed = SECTIONS
            .iter()
            .find(|(s, _)| *s == section)
            .map(|(_, keys)| *keys)
            .unwrap();
        if !allowed.contains(&key) {
            return Err(usage(format!(
                "{}:{}: unknown key {key:?} in section [{section}]",
                path.display(),
                i + 1
            )));
        }
        let entry = sections.entry(section.clone()).or_default();
        if entry.insert(key.to_string(), value.to_string()).is_some() {
            return Err(usage(format!(
                "{}:{}: duplicate key {key:?} in section [{section}]",
                path.display(),
                i + 1
            )));
        }
    }
    Ok(sections)
}

/// The active subcommand's config section; `take` consumes a key so that
/// flag/file precedence can be applied uniformly.
struct Section {
    entries: BTreeMap<String, String>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }
}

fn section_for(cli_config: Option<&PathBuf>, name: &str) -> CliResult<Section> {
    let entries = match cli_config {
        None => BTreeMap::new(),
        Some(path) => load_config(path)?.remove(name).unwrap_or_default(),
    };
    Ok(Section { entries })
}

// --------------------------------------------------------- value parsing

fn parse_val<T: FromStr>(key: &str, raw: &str) -> CliResult<T> {
    raw.parse()
        .map_err(|_| usage(format!("cannot parse {key} value {raw:?}")))
}

/// flag value, else config value, else None; the config key is consumed
/// either way so leftover detection stays exact.
fn pick(flag: &Option<String>, section: &mut Section, key: &str) -> Option<String> {
    let file = section.take(key);
    flag.clone().or(file)
}

fn opt<T: FromStr>(flag: &Option<String>, section: &mut Section, key: &str) -> CliResult<Option<T>> {
    match pick(flag, section, key) {
        None => Ok(None),
        Some(raw) => parse_val(key, &raw).map(Some),
    }
}

fn resolve_seed(flag: &Option<String>, section: &mut Section) -> CliResult<u64> {
    if let Some(raw) = pick(flag, section, "seed") {
        return parse_val("seed", &raw);
    }
    match std::env::var("MCIPS_SEED") {
        Ok(raw) => parse_val("MCIPS_SEED", &raw),
        Err(_) => Ok(0),
    }
}

fn parse_topology(raw: &str) -> CliResult<Topology> {
    let parts: Vec<&str> = raw.split(':').collect();
    let bad = || {
        usage(format!(
            "topology must be ring:SITES or segment:WINDOW:BUFFER, got {raw:?}"
        ))
    };
    match parts.as_slice() {
        ["ring", n] => Ok(Topology::ring(n.parse().map_err(|_| bad())?)),
        ["segment", w, b] => Ok(Topology::segment(
            w.parse().map_err(|_| bad())?,
            b.parse().map_err(|_| bad())?,
        )),
        _ => Err(bad()),
    }
}

fn parse_density(key: &str, v: f64) -> CliResult<Density> {
    Density::new(v).map_err(|_| usage(format!("{key} must lie strictly between 0 and 1, got {v}")))
}

fn parse_densities(raw: &str) -> CliResult<Vec<Density>> {
    raw.split(',')
        .map(|tok| {
            let v: f64 = parse_val("densities", tok.trim())?;
            parse_density("each density", v)
        })
        .collect()
}

fn parse_counts(raw: &str) -> CliResult<Vec<usize>> {
    raw.split(',')
        .map(|tok| parse_val("counts", tok.trim()))
        .collect()
}

fn parse_kind(name: &str, p: Option<f64>) -> CliResult<DynamicsKind> {
    let prob = match p {
        None => 0.5,
        Some(v) if v > 0.0 && v < 1.0 => v,
        Some(v) => return Err(usage(format!("p must lie strictly between 0 and 1, got {v}"))),
    };
    let kind = match name {
        "had" => DynamicsKind::Had,
        "tasep" => DynamicsKind::Tasep,
        "lrep" => DynamicsKind::Lrep,
        "asep" => DynamicsKind::Asep {
            left_probability: prob,
        },
        "seq-tasep-lr" => DynamicsKind::SeqTasepLr {
            mark_probability: prob,
        },
        "seq-tasep-rl" => DynamicsKind::SeqTasepRl {
            mark_probability: prob,
        },
        "par-tasep" => DynamicsKind::ParTasep {
            mark_probability: prob,
        },
        other => {
            return Err(usage(format!(
                "unknown kind {other:?}; expected had, tasep, lrep, asep, \
                 seq-tasep-lr, seq-tasep-rl, or par-tasep"
            )))
        }
    };
    if p.is_some() && !matches!(kind, DynamicsKind::Asep { .. }) && !kind.is_discrete() {
        return Err(usage(format!("--p does not apply to kind {name:?}")));
    }
    Ok(kind)
}

fn increasing_or_usage(densities: &[Density]) -> CliResult<()> {
    check_increasing(densities).map_err(|_| {
        usage(format!(
            "densities must be strictly increasing, got {:?}",
            densities.iter().map(|d| d.value()).collect::<Vec<_>>()
        ))
    })
}

// ------------------------------------------------------------- file layer

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Write or print text: to `path` when given, else to stdout.
fn emit(path: Option<&str>, contents: &str) -> CliResult<()> {
    match path {
        Some(p) => write_file(Path::new(p), contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Every run records its resolved settings. With an explicit path the
/// manifest goes there; otherwise next to the primary output file; a run
/// with no output files prints it to stdout.
fn emit_manifest(
    explicit: Option<&str>,
    primary_output: Option<&str>,
    entries: &[(String, String)],
) -> CliResult<()> {
    let text = io::write_manifest(entries);
    match (explicit, primary_output) {
        (Some(path), _) => write_file(Path::new(path), &text),
        (None, Some(out)) => write_file(Path::new(&format!("{out}.manifest")), &text),
        (None, None) => {
            println!("# manifest");
            print!("{text}");
            Ok(())
        }
    }
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn mix(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

// ------------------------------------------------------------ dispatching

fn run(cli: Cli) -> CliResult<ExitCode> {
    // validate the whole config file up front, whatever the subcommand
    if let Some(path) = &cli.config {
        load_config(path)?;
    }
    match &cli.command {
        Command::Simulate(args) => run_simulate(args, cli.config.as_ref()),
        Command::ConstructMeasure(args) => run_construct(args, cli.config.as_ref()),
        Command::DualPoints(args) => run_dual_points(args, cli.config.as_ref()),
        Command::Multiline(args) => run_multiline(args, cli.config.as_ref()),
        Command::Burke(args) => run_burke(args, cli.config.as_ref()),
        Command::Verify(args) => run_verify(args, cli.config.as_ref()),
        Command::Oracle(args) => run_oracle(args, cli.config.as_ref()),
    }
}

/// Initial condition shared by `simulate`: explicit ring counts, explicit
/// densities, or evenly spaced defaults for `--classes`.
fn resolve_initial(
    topology: Topology,
    densities: Option<Vec<Density>>,
    counts: Option<Vec<usize>>,
    classes: Option<usize>,
    seed: u64,
) -> CliResult<(MulticlassConfig, String)> {
    if densities.is_some() && counts.is_some() {
        return Err(usage("give either --densities or --counts, not both"));
    }
    if let Some(counts) = counts {
        if !topology.is_ring() {
            return Err(usage("--counts is a ring initial condition"));
        }
        if counts.windows(2).any(|w| w[0] >= w[1]) || counts.first() == Some(&0) {
            return Err(usage(format!(
                "counts must be strictly increasing and positive, got {counts:?}"
            )));
        }
        if let Some(c) = classes {
            if c != counts.len() {
                return Err(usage(format!(
                    "--classes {c} disagrees with {} counts",
                    counts.len()
                )));
            }
        }
        let lines: Vec<Configuration> = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| sample_fixed_count(topology, c, mix(seed, k as u64 + 1)))
            .collect::<Result<_, _>>()?;
        let desc = format!(
            "counts {}",
            counts
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        return Ok((m_map(&lines, Boundary::Loynes)?, desc));
    }
    let densities = match densities {
        Some(d) => {
            if let Some(c) = classes {
                if c != d.len() {
                    return Err(usage(format!(
                        "--classes {c} disagrees with {} densities",
                        d.len()
                    )));
                }
            }
            d
        }
        None => {
            let n = classes.unwrap_or(1);
            if n == 0 {
                return Err(usage("classes must be at least 1"));
            }
            (1..=n)
                .map(|k| parse_density("densities", k as f64 / (n + 1) as f64))
                .collect::<CliResult<_>>()?
        }
    };
    increasing_or_usage(&densities)?;
    let boundary = if topology.is_ring() {
        Boundary::Loynes
    } else {
        Boundary::Empty
    };
    let (xi, _) = construct_measure(topology, &densities, boundary, seed)?;
    let desc = format!(
        "densities {}",
        densities
            .iter()
            .map(|d| d.value().to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok((xi, desc))
}

fn generate_noise(
    topology: Topology,
    kind: DynamicsKind,
    t: f64,
    seed: u64,
) -> CliResult<(PointProcess, f64)> {
    if kind.is_discrete() {
        let sweeps = t.round() as usize;
        let points = generate_bernoulli_field(topology, kind, sweeps, seed)?;
        Ok((points, sweeps as f64))
    } else {
        Ok((generate_poisson(topology, kind, t, seed)?, t))
    }
}

fn run_simulate(args: &SimulateArgs, config: Option<&PathBuf>) -> CliResult<ExitCode> {
    let mut sec = section_for(config, "simulate")?;
    let kind_name = pick(&args.kind, &mut sec, "kind").unwrap_or_else(|| "tasep".into());
    let p: Option<f64> = opt(&args.p, &mut sec, "p")?;
    let kind = parse_kind(&kind_name, p)?;
    let topology = parse_topology(
        &pick(&args.topology, &mut sec, "topology")
            .ok_or_else(|| usage("simulate needs --topology"))?,
    )?;
    let classes: Option<usize> = opt(&args.classes, &mut sec, "classes")?;
    let densities = pick(&args.densities, &mut sec, "densities")
        .map(|raw| parse_densities(&raw))
        .transpose()?;
    let counts = pick(&args.counts, &mut sec, "counts")
        .map(|raw| parse_counts(&raw))
        .transpose()?;
    let t: f64 = opt(&args.t, &mut sec, "t")?.unwrap_or(10.0);
    let seed = resolve_seed(&args.seed, &mut sec)?;
    let log = pick(&args.log, &mut sec, "log");
    let out = pick(&args.out, &mut sec, "out");
    let plot = pick(&args.plot, &mut sec, "plot");
    let manifest = pick(&args.manifest, &mut sec, "manifest");

    let (initial, initial_desc) = resolve_initial(topology, densities, counts, classes, seed)?;
    if matches!(kind, DynamicsKind::ParTasep { .. }) && initial.classes() > 1 {
        return Err(usage(
            "par-tasep does not preserve class ordering; use a single class",
        ));
    }
    if plot.is_some() && initial.classes() != 1 {
        return Err(usage("--plot supports single-class runs only"));
    }

    let (points, horizon) = generate_noise(topology, kind, t, mix(seed, 0xA11CE))?;
    let traj = evolve_multiclass(&initial, kind, &points)?;

    if let Some(path) = &log {
        write_file(Path::new(path), &io::write_trajectory_jsonl(&traj, horizon))?;
    }
    if let Some(path) = &out {
        write_file(Path::new(path), &io::write_multiclass(&traj.final_state))?;
    }
    if let Some(path) = &plot {
        let duals = dual_points(&traj)?;
        let before = r_inverse(&traj.initial).into_lines().remove(0);
        let after = r_inverse(&traj.final_state).into_lines().remove(0);
        write_file(
            Path::new(path),
            &io::write_plot_data(&points, &duals, &before, &after),
        )?;
    }

    let mut entries = vec![
        kv("command", "simulate"),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("kind", kind.name()),
        kv("topology", io::topology_to_string(topology)),
        kv("classes", initial.classes()),
        kv("initial", &initial_desc),
        kv("t", horizon),
        kv("seed", seed),
        kv("events", traj.events.len()),
    ];
    if let DynamicsKind::Asep { left_probability } = kind {
        entries.push(kv("p", left_probability));
    }
    if kind.is_discrete() {
        if let Some(p) = p {
            entries.push(kv("p", p));
        } else {
            entries.push(kv("p", 0.5));
        }
    }
    for (key, path) in [("log", &log), ("out", &out), ("plot", &plot)] {
        if let Some(path) = path {
            entries.push(kv(key, path));
        }
    }
    let primary = log.as_deref().or(out.as_deref()).or(plot.as_deref());
    println!(
        "simulated {} events of {} on {} ({initial_desc}, seed {seed})",
        traj.events.len(),
        kind.name(),
        io::topology_to_string(topology),
    );
    emit_manifest(manifest.as_deref(), primary, &entries)?;
    Ok(ExitCode::SUCCESS)
}

fn run_construct(args: &ConstructArgs, config: Option<&PathBuf>) -> CliResult<ExitCode> {
    let mut sec = section_for(config, "construct-measure")?;
    let densities = parse_densities(
        &pick(&args.densities, &mut sec, "densities")
            .ok_or_else(|| usage("construct-measure needs --densities"))?,
    )?;
    increasing_or_usage(&densities)?;
    let topology = parse_topology(
        &pick(&args.topology, &mut sec, "topology")
            .ok_or_else(|| usage("construct-measure needs --topology"))?,
    )?;
    let boundary = match pick(&args.boundary, &mut sec, "boundary").as_deref() {
        None => {
            if topology.is_ring() {
                Boundary::Loynes
            } else {
                Boundary::Empty
            }
        }
        Some("empty") => {
            if topology.is_ring() {
                return Err(usage(
                    "ring construction uses the loynes boundary; empty applies to segments",
                ));
            }
            Boundary::Empty
        }
        Some("loynes") => Boundary::Loynes,
        Some(other) => {
            return Err(usage(format!(
                "unknown boundary {other:?}; expected empty or loynes"
            )))
        }
    };
    let seed = resolve_seed(&args.seed, &mut sec)?;
    let out = pick(&args.out, &mut sec, "out");
    let manifest = pick(&args.manifest, &mut sec, "manifest");

    let (xi, meta) = construct_measure(topology, &densities, boundary, seed)?;
    let densities_str = meta
        .densities
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let boundary_str = match meta.boundary {
        Boundary::Empty => "empty".to_string(),
        Boundary::Loynes => "loynes".to_string(),
        Boundary::Geometric { seed } => format!("geometric:{seed}"),
    };
    let sidecar = [
        ("densities".to_string(), densities_str.clone()),
        ("boundary".to_string(), boundary_str.clone()),
        ("burn-in".to_string(), meta.burn_in.to_string()),
        ("seed".to_string(), meta.seed.to_string()),
    ];
    let text = with_extra_headers(&io::write_multiclass(&xi), &sidecar);
    emit(out.as_deref(), &text)?;

    let entries = [
        kv("command", "construct-measure"),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("densities", &densities_str),
        kv("topology", io::topology_to_string(topology)),
        kv("boundary", &boundary_str),
        kv("burn-in", meta.burn_in),
        kv("seed", seed),
    ];
    if let Some(path) = &out {
        println!(
            "constructed {}-class word on {} (burn-in {}), wrote {path}",
            xi.classes(),
            io::topology_to_string(topology),
            meta.burn_in
        );
        emit_manifest(manifest.as_deref(), Some(path), &entries)?;
    } else if manifest.is_some() {
        emit_manifest(manifest.as_deref(), None, &entries)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Insert extra `# key: value` lines after the existing header block.
fn with_extra_headers(body: &str, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    let mut inserted = false;
    for line in body.lines() {
        if !inserted && !line.starts_with('#') {
            for (k, v) in extra {
                writeln!(out, "# {k}: {v}").unwrap();
            }
            inserted = true;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn run_dual_points(args: &DualPointsArgs, config: Option<&PathBuf>) -> CliResult<ExitCode> {
    let mut sec = section_for(config, "dual-points")?;
    let traj_path = pick(&args.traj, &mut sec, "traj")
        .ok_or_else(|| usage("dual-points needs --traj (a trajectory JSON-lines file)"))?;
    let kind_name = pick(&args.kind, &mut sec, "kind");
    let input = pick(&args.input, &mut sec, "in");
    let out = pick(&args.out, &mut sec, "out");
    let manifest = pick(&args.manifest, &mut sec, "manifest");

    let (traj, horizon) = io::parse_trajectory_jsonl(&read_file(Path::new(&traj_path))?)?;
    if let Some(name) = &kind_name {
        if name != traj.kind.name() {
            return Err(usage(format!(
                "--kind {name} disagrees with the trajectory, which records {}",
                traj.kind.name()
            )));
        }
    }
    if let Some(points_path) = &input {
        let (points, _) = io::parse_points(&read_file(Path::new(points_path))?)?;
        let same = points.len() == traj.events.len()
            && points
                .marks()
                .iter()
                .zip(&traj.events)
                .all(|(m, ev)| m.time == ev.time && m.location == ev.location);
        if !same {
            eprintln!(
                "check failed: {points_path} does not drive {traj_path} \
                 ({} marks vs {} events)",
                points.len(),
                traj.events.len()
            );
            return Ok(ExitCode::FAILURE);
        }
    }

    let duals = dual_points(&traj)?;
    let nulls = duals.iter().filter(|d| d.location.is_none()).count();
    emit(
        out.as_deref(),
        &io::write_dual_points(&duals, traj.topology(), horizon),
    )?;

    let mut entries = vec![
        kv("command", "dual-points"),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("kind", traj.kind.name()),
        kv("traj", &traj_path),
        kv("duals", duals.len()),
        kv("silent", nulls),
    ];
    if let Some(path) = &input {
        entries.push(kv("in", path));
    }
    if let Some(path) = &out {
        entries.push(kv("out", path));
        println!(
            "{} dual points ({} from silent marks), wrote {path}",
            duals.len(),
            nulls
        );
        emit_manifest(manifest.as_deref(), Some(path), &entries)?;
    } else if manifest.is_some() {
        emit_manifest(manifest.as_deref(), None, &entries)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_multiline(args: &MultilineArgs, config: Option<&PathBuf>) -> CliResult<ExitCode> {
    let mut sec = section_for(config, "multiline")?;
    let kind_name = pick(&args.kind, &mut sec, "kind").unwrap_or_else(|| "tasep".into());
    let p: Option<f64> = opt(&args.p, &mut sec, "p")?;
    let kind = parse_kind(&kind_name, p)?;
    if !matches!(kind, DynamicsKind::Had | DynamicsKind::Tasep) {
        return Err(usage("multiline supports kinds had and tasep"));
    }
    let topology = parse_topology(
        &pick(&args.topology, &mut sec, "topology")
            .ok_or_else(|| usage("multiline needs --topology"))?,
    )?;
    let densities = pick(&args.densities, &mut sec, "densities")
        .map(|raw| parse_densities(&raw))
        .transpose()?;
    let counts = pick(&args.counts, &mut sec, "counts")
        .map(|raw| parse_counts(&raw))
        .transpose()?;
    let t: f64 = opt(&args.t, &mut sec, "t")?.unwrap_or(10.0);
    let seed = resolve_seed(&args.seed, &mut sec)?;
    let check = pick(&args.check, &mut sec, "check");
    let out = pick(&args.out, &mut sec, "out");
    let manifest = pick(&args.manifest, &mut sec, "manifest");

    if let Some(c) = &check {
        if c != "t-image" {
            return Err(usage(format!(
                "unknown check {c:?}; the available check is t-image"
            )));
        }
    }
    if densities.is_some() && counts.is_some() {
        return Err(usage("give either --densities or --counts, not both"));
    }

    // Ring lines come as fixed counts (checkable against the collapse map);
    // segment lines are independent Bernoulli fields.
    let lines: Vec<Configuration> = if let Some(counts) = &counts {
        if !topology.is_ring() {
            return Err(usage("--counts is a ring initial condition"));
        }
        counts
            .iter()
            .enumerate()
            .map(|(k, &c)| sample_fixed_count(topology, c, mix(seed, k as u64 + 1)))
            .collect::<Result<_, _>>()?
    } else {
        let densities = densities
            .ok_or_else(|| usage("multiline needs --densities or --counts"))?;
        if topology.is_ring() {
            let sites = topology.total_sites();
            let derived: Vec<usize> = densities
                .iter()
                .map(|d| (d.value() * sites as f64).round() as usize)
                .collect();
            derived
                .iter()
                .enumerate()
                .map(|(k, &c)| sample_fixed_count(topology, c, mix(seed, k as u64 + 1)))
                .collect::<Result<_, _>>()?
        } else {
            sample_lines(topology, &densities, seed)
        }
    };
    if lines.is_empty() {
        return Err(usage("multiline needs at least one line"));
    }

    let (points, horizon) = generate_noise(topology, kind, t, mix(seed, 0xA11CE))?;

    let mut checked = None;
    if check.is_some() {
        let ok = t_image_check(&lines, kind, &points)?;
        let tag = if ok { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] t-image: multi-line cascade collapses to the directly evolved word \
             ({} lines, {} events)",
            lines.len(),
            points.len()
        );
        checked = Some(ok);
    }

    let mut state = MultiLineState::new(lines)?;
    multiline_evolve(&mut state, kind, &points)?;
    if let Some(path) = &out {
        write_file(Path::new(path), &io::write_lines(state.lines()))?;
    }

    let mut entries = vec![
        kv("command", "multiline"),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("kind", kind.name()),
        kv("topology", io::topology_to_string(topology)),
        kv("lines", state.lines().len()),
        kv("t", horizon),
        kv("seed", seed),
        kv("events", points.len()),
    ];
    if let Some(ok) = checked {
        entries.push(kv("check", format!("t-image:{}", if ok { "pass" } else { "fail" })));
    }
    if let Some(path) = &out {
        entries.push(kv("out", path));
    }
    emit_manifest(manifest.as_deref(), out.as_deref(), &entries)?;
    if checked == Some(false) {
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn run_burke(args: &BurkeArgs, config: Option<&PathBuf>) -> CliResult<ExitCode> {
    let mut sec = section_for(config, "burke")?;
    let rho1: f64 = opt(&args.rho1, &mut sec, "rho1")?
        .ok_or_else(|| usage("burke needs --rho1"))?;
    let rho2: f64 = opt(&args.rho2, &mut sec, "rho2")?
        .ok_or_else(|| usage("burke needs --rho2"))?;
    let window: usize = opt(&args.window, &mut sec, "window")?.unwrap_or(6);
    let tolerance: f64 = opt(&args.tolerance, &mut sec, "tolerance")?.unwrap_or(1e-10);
    let states: usize = opt(&args.states, &mut sec, "states")?.unwrap_or(200);
    let manifest = pick(&args.manifest, &mut sec, "manifest");

    let r1 = parse_density("rho1", rho1)?;
    let r2 = parse_density("rho2", rho2)?;
    if rho1 >= rho2 {
        return Err(usage("densities must be strictly increasing: rho1 < rho2"));
    }
    if !(1..=12).contains(&window) {
        return Err(usage("window must lie in 1..=12"));
    }
    if states < 2 {
        return Err(usage("states must be at least 2"));
    }

    let tv = burke_exact(r1, r2, window)?;
    let pi = birth_death_stationary(r1, r2, states)?;
    let solved_ratio = pi[1] / pi[0];
    let simple = rho1 / rho2;
    let norm = (1.0 - simple) / (1.0 - simple.powi(states as i32));
    let gap = pi
        .iter()
        .enumerate()
        .map(|(k, &p)| (p - norm * simple.powi(k as i32)).abs())
        .fold(0.0f64, f64::max);

    println!(
        "departure law over window {window}: TV from the Bernoulli({rho1}) product = {tv:.3e} \
         (tolerance {tolerance:.1e})"
    );
    println!(
        "queue-length law over {states} states: solved geometric ratio {solved_ratio:.12}; \
         the simple ratio rho1/rho2 = {simple:.12} sits {gap:.3e} away in the worst state"
    );
    let entries = [
        kv("command", "burke"),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("rho1", rho1),
        kv("rho2", rho2),
        kv("window", window),
        kv("tolerance", tolerance),
        kv("states", states),
        kv("tv", tv),
        kv("solved-ratio", solved_ratio),
    ];
    if manifest.is_some() {
        emit_manifest(manifest.as_deref(), None, &entries)?;
    }
    if tv <= tolerance {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn run_verify(args: &VerifyArgs, config: Option<&PathBuf>) -> CliResult<ExitCode> {
    let mut sec = section_for(config, "verify")?;
    let suite = pick(&args.suite, &mut sec, "suite").ok_or_else(|| {
        usage("verify needs --suite (invariance, burke, multiline, duals, pathwise, or negative)")
    })?;
    let kind_name = pick(&args.kind, &mut sec, "kind");
    let p: Option<f64> = opt(&args.p, &mut sec, "p")?;
    let densities = pick(&args.densities, &mut sec, "densities")
        .map(|raw| parse_densities(&raw))
        .transpose()?;
    let topology = pick(&args.topology, &mut sec, "topology")
        .map(|raw| parse_topology(&raw))
        .transpose()?;
    let t: Option<f64> = opt(&args.t, &mut sec, "t")?;
    let replicas: Option<u64> = opt(&args.replicas, &mut sec, "replicas")?;
    let seed = resolve_seed(&args.seed, &mut sec)?;
    let alpha: f64 = opt(&args.alpha, &mut sec, "alpha")?.unwrap_or(0.01);
    let json = pick(&args.json, &mut sec, "json");
    let manifest = pick(&args.manifest, &mut sec, "manifest");

    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("alpha must lie strictly between 0 and 1, got {alpha}")));
    }
    let kind_of = |default: &str| -> CliResult<DynamicsKind> {
        parse_kind(kind_name.as_deref().unwrap_or(default), p)
    };

    let reports: Vec<TestReport> = match suite.as_str() {
        "invariance" => {
            let densities = densities.unwrap_or(vec![
                parse_density("densities", 0.3)?,
                parse_density("densities", 0.7)?,
            ]);
            increasing_or_usage(&densities)?;
            let cfg = InvarianceConfig {
                topology: topology.unwrap_or(Topology::segment(200, 100)),
                densities,
                kind: kind_of("tasep")?,
                horizon: t.unwrap_or(2.0),
                replicas: replicas.unwrap_or(200),
                seed,
            };
            vec![invariance_test(&cfg, alpha)?]
        }
        "burke" => {
            let densities = densities.unwrap_or(vec![
                parse_density("densities", 1.0 / 3.0)?,
                parse_density("densities", 2.0 / 3.0)?,
            ]);
            if densities.len() != 2 {
                return Err(usage("the burke suite takes exactly two densities"));
            }
            increasing_or_usage(&densities)?;
            let (r1, r2) = (densities[0], densities[1]);
            let tv = burke_exact(r1, r2, 6)?;
            let pi = birth_death_stationary(r1, r2, 200)?;
            let solved_ratio = pi[1] / pi[0];
            let simple = r1.value() / r2.value();
            let norm = (1.0 - simple) / (1.0 - simple.powi(200));
            let gap = pi
                .iter()
                .enumerate()
                .map(|(k, &q)| (q - norm * simple.powi(k as i32)).abs())
                .fold(0.0f64, f64::max);
            vec![
                TestReport {
                    name: "burke-departures".into(),
                    passed: tv <= 1e-10,
                    statistic: tv,
                    threshold: 1e-10,
                    details: format!(
                        "exact departure law over window 6 vs Bernoulli({}) product",
                        r1.value()
                    ),
                },
                TestReport {
                    name: "queue-geometric-ratio".into(),
                    passed: gap <= 1e-12,
                    statistic: gap,
                    threshold: 1e-12,
                    details: format!(
                        "solved ratio {solved_ratio:.12} vs simple ratio rho1/rho2 = {simple:.12}"
                    ),
                },
            ]
        }
        "multiline" => {
            let (window, buffer) = match topology.unwrap_or(Topology::segment(64, 400)) {
                Topology::Segment { window, buffer } => (window, buffer),
                Topology::Ring { .. } => {
                    return Err(usage("the multiline suite runs on a segment topology"))
                }
            };
            let cfg = MultilineConfig {
                window,
                buffer,
                densities: densities.unwrap_or(vec![
                    parse_density("densities", 0.3)?,
                    parse_density("densities", 0.7)?,
                ]),
                kind: kind_of("tasep")?,
                horizon: t.unwrap_or(8.0),
                replicas: replicas.unwrap_or(100),
                seed,
            };
            vec![multiline_product_test(&cfg)?]
        }
        "duals" => {
            let kind = kind_of("tasep")?;
            if !matches!(
                kind,
                DynamicsKind::Had | DynamicsKind::Tasep | DynamicsKind::Lrep
            ) {
                return Err(usage("the duals suite supports kinds had, tasep, and lrep"));
            }
            let sites = match topology.unwrap_or(Topology::ring(64)) {
                Topology::Ring { sites } => sites,
                Topology::Segment { .. } => {
                    return Err(usage("the duals suite runs on a ring topology"))
                }
            };
            let density = match &densities {
                None => parse_density("densities", 0.5)?,
                Some(d) if d.len() == 1 => d[0],
                Some(_) => return Err(usage("the duals suite takes a single density")),
            };
            let cfg = DualPoissonConfig {
                sites,
                density,
                horizon: t.unwrap_or(16.0),
                replicas: replicas.unwrap_or(200),
                kind,
                seed,
            };
            vec![poisson_dual_test(&cfg, alpha)?]
        }
        "pathwise" => {
            let kind = kind_of("tasep")?;
            if !matches!(kind, DynamicsKind::Had | DynamicsKind::Tasep) {
                return Err(usage("the pathwise suite supports kinds had and tasep"));
            }
            let topology = topology.unwrap_or(Topology::ring(32));
            if !topology.is_ring() {
                return Err(usage("the pathwise suite runs on a ring topology"));
            }
            let sites = topology.total_sites();
            let densities = densities.unwrap_or(vec![
                parse_density("densities", 0.2)?,
                parse_density("densities", 0.5)?,
                parse_density("densities", 0.8)?,
            ]);
            increasing_or_usage(&densities)?;
            let counts: Vec<usize> = densities
                .iter()
                .map(|d| (d.value() * sites as f64).round() as usize)
                .collect();
            if counts.windows(2).any(|w| w[0] >= w[1]) || counts[0] == 0 {
                return Err(usage(format!(
                    "densities give non-increasing line counts {counts:?} on {} sites",
                    sites
                )));
            }
            let instances = replicas.unwrap_or(100);
            let horizon = t.unwrap_or(8.0);
            pathwise_reports(kind, topology, &counts, instances, horizon, seed)?
        }
        "negative" => {
            let densities = densities.unwrap_or(vec![
                parse_density("densities", 0.2)?,
                parse_density("densities", 0.8)?,
            ]);
            increasing_or_usage(&densities)?;
            let cfg = InvarianceConfig {
                topology: topology.unwrap_or(Topology::segment(200, 100)),
                densities,
                kind: kind_of("asep")?,
                horizon: t.unwrap_or(2.0),
                replicas: replicas.unwrap_or(200),
                seed,
            };
            // the drift default is asep(0.7), the canonical non-invariant kind
            let cfg = if kind_name.is_none() && p.is_none() {
                InvarianceConfig {
                    kind: DynamicsKind::Asep {
                        left_probability: 0.7,
                    },
                    ..cfg
                }
            } else {
                cfg
            };
            let mut reports = vec![drift_detection_test(&cfg, 5.0)?];
            let par = DynamicsKind::ParTasep {
                mark_probability: 0.5,
            };
            let found = sweep_ordering_violation(par, 4)?;
            let confirmed = match &found {
                Some(v) => confirm_violation(v, par)?,
                None => false,
            };
            let details = match &found {
                Some(v) => format!(
                    "lower {:?} / upper {:?}, marked bonds {:?}, order breaks at site {}",
                    v.lower, v.upper, v.bonds, v.site
                ),
                None => "no violation found on <= 4 sites".into(),
            };
            reports.push(TestReport {
                name: "parallel-ordering-violation".into(),
                passed: found.is_some() && confirmed,
                statistic: found.as_ref().map_or(0.0, |v| v.topology.total_sites() as f64),
                threshold: 4.0,
                details,
            });
            let lr_clean = sweep_ordering_violation(
                DynamicsKind::SeqTasepLr {
                    mark_probability: 0.5,
                },
                4,
            )?
            .is_none();
            let rl_clean = sweep_ordering_violation(
                DynamicsKind::SeqTasepRl {
                    mark_probability: 0.5,
                },
                4,
            )?
            .is_none();
            reports.push(TestReport {
                name: "sequential-ordering-preserved".into(),
                passed: lr_clean && rl_clean,
                statistic: (!lr_clean as u8 + !rl_clean as u8) as f64,
                threshold: 0.0,
                details: "exhaustive search on <= 4 sites for both sweep orders".into(),
            });
            reports
        }
        other => {
            return Err(usage(format!(
                "unknown suite {other:?}; expected invariance, burke, multiline, duals, \
                 pathwise, or negative"
            )))
        }
    };

    for report in &reports {
        println!("{report}");
    }
    if let Some(path) = &json {
        let body = serde_json::to_string_pretty(&reports)
            .map_err(|e| CliError::Runtime(format!("cannot encode report: {e}")))?;
        write_file(Path::new(path), &(body + "\n"))?;
    }
    let mut entries = vec![
        kv("command", "verify"),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("suite", &suite),
        kv("alpha", alpha),
        kv("seed", seed),
        kv("passed", reports.iter().all(|r| r.passed)),
    ];
    if let Some(path) = &json {
        entries.push(kv("json", path));
    }
    emit_manifest(manifest.as_deref(), json.as_deref(), &entries)?;
    if reports.iter().all(|r| r.passed) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

/// The three deterministic pathwise identities at configurable size.
fn pathwise_reports(
    kind: DynamicsKind,
    topology: Topology,
    counts: &[usize],
    instances: u64,
    horizon: f64,
    seed: u64,
) -> CliResult<Vec<TestReport>> {
    use mcips_core::dual::reverse_check;
    use mcips_core::dynamics::{evolve, evolve_augmented, recover_points, AugmentedState};

    let sites = topology.total_sites();
    let mut collapse_bad = 0usize;
    let mut reverse_bad = 0usize;
    let mut recover_bad = 0usize;
    for s in 0..instances {
        let base = mix(seed, 7 * s);
        let lines: Vec<Configuration> = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| sample_fixed_count(topology, c, mix(base, k as u64 + 1)))
            .collect::<Result<_, _>>()?;
        let points = generate_poisson(topology, kind, horizon, mix(base, 100))?;
        collapse_bad += t_image_trajectory_check(&lines, kind, &points)?;

        let count = 1 + (s as usize) % (sites - 1);
        let eta = sample_fixed_count(topology, count, mix(base, 200))?;
        let points = generate_poisson(topology, kind, horizon, mix(base, 201))?;
        let traj = evolve(&eta, kind, &points)?;
        if !reverse_check(&traj)? {
            reverse_bad += 1;
        }

        let eta = sample_fixed_count(topology, count, mix(base, 300))?;
        let aug = AugmentedState::with_random_spins(eta, mix(base, 301));
        let points = generate_poisson(topology, kind, horizon, mix(base, 302))?;
        let aug_traj = evolve_augmented(&aug, kind, &points)?;
        if recover_points(&aug_traj)? != points {
            recover_bad += 1;
        }
    }
    let make = |name: &str, bad: usize, what: &str| TestReport {
        name: name.into(),
        passed: bad == 0,
        statistic: bad as f64,
        threshold: 0.0,
        details: format!("{what} over {instances} instances of {} ", kind.name())
            + &format!("on {}", io::topology_to_string(topology)),
    };
    Ok(vec![
        make(
            "pathwise-collapse",
            collapse_bad,
            "multi-line cascade collapses to the direct evolution at every event",
        ),
        make(
            "dual-reversal",
            reverse_bad,
            "dual points govern the reflected time-reversed trajectory",
        ),
        make(
            "point-recovery",
            recover_bad,
            "driving marks recovered exactly from the spin-augmented trajectory",
        ),
    ])
}

fn run_oracle(args: &OracleArgs, config: Option<&PathBuf>) -> CliResult<ExitCode> {
    let mut sec = section_for(config, "oracle")?;
    let kind_name = pick(&args.kind, &mut sec, "kind").unwrap_or_else(|| "tasep".into());
    let p: Option<f64> = opt(&args.p, &mut sec, "p")?;
    let kind = parse_kind(&kind_name, p)?;
    let topology = match pick(&args.topology, &mut sec, "topology") {
        Some(raw) => parse_topology(&raw)?,
        None => Topology::ring(5),
    };
    if !topology.is_ring() {
        return Err(usage("the exact solve runs on a ring topology"));
    }
    let count: usize = opt(&args.count, &mut sec, "count")?.unwrap_or(2);
    let out = pick(&args.out, &mut sec, "out");
    let manifest = pick(&args.manifest, &mut sec, "manifest");

    let sites = topology.total_sites();
    if sites > 22 {
        return Err(usage(format!(
            "ring of {sites} sites is too large for the exact solve (limit 22)"
        )));
    }

    let solved = ctmc::stationary(kind, topology, count)?;
    let uniform = 1.0 / solved.states.len() as f64;
    let uniform_gap = solved
        .pi
        .iter()
        .map(|&q| (q - uniform).abs())
        .fold(0.0f64, f64::max);

    let mut table = String::from("state,probability\n");
    for (state, &q) in solved.states.iter().zip(&solved.pi) {
        let bits: String = state.bits().iter().map(|b| b.to_string()).collect();
        writeln!(table, "{bits},{q}").unwrap();
    }
    match &out {
        Some(path) => write_file(Path::new(path), &table)?,
        None => print!("{table}"),
    }
    println!(
        "{} states, residual {:.2e}, max deviation from uniform {:.2e}",
        solved.states.len(),
        solved.residual,
        uniform_gap
    );

    let mut entries = vec![
        kv("command", "oracle"),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("kind", kind.name()),
        kv("topology", io::topology_to_string(topology)),
        kv("count", count),
        kv("states", solved.states.len()),
        kv("residual", solved.residual),
    ];
    if let Some(path) = &out {
        entries.push(kv("out", path));
    }
    emit_manifest(manifest.as_deref(), out.as_deref(), &entries)?;
    Ok(ExitCode::SUCCESS)
}
