//! Command-line front end. Every run resolves its settings (flags, then the
//! config file, then `PUSHLAB_OUT`, then built-in defaults), writes its
//! artifacts atomically into one output directory and records a manifest from
//! which `replay` reproduces the artifacts byte for byte.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::contamination::{synthesize, DataSpec, NoiseModel, OutlierPolicy};
use crate::erm::{audit_oracle_inequality, fit, ErmProblem, ParamFamily};
use crate::error::Error;
use crate::experiments::{
    contamination_sweep, geometric_grid, huber_indistinguishability_check, lower_bound_check, noise_sweep, rate_study,
    rows_csv, GridRow, RateConfig, SweepResult,
};
use crate::generators::{GeneratorDoc, GeneratorSpec};
use crate::ipm::{distance_to_pushforward, DiscreteMeasure, IpmSpec, WalphaSpec};
use crate::sampling::{Purpose, SeedPolicy};
use crate::smoothness::{composition_constant_with, ConstantForm};

pub const SCHEMA: &str = "pushlab/1";
pub const MANIFEST_SCHEMA: &str = "pushlab-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_ENV: &str = "PUSHLAB_OUT";
const DEFAULT_OUT: &str = "pushlab-out";
const DEFAULT_SEED: u64 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pushlab", version, about = "Rate, robustness and fitting studies for pushforward generative models")]
struct Cli {
    /// TOML config: a `[run]` table (seed, out, workers) and one table per subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $PUSHLAB_OUT, else ./pushlab-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores); never changes results
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Only report errors
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distance between two point sets, or between a point set and a generator
    Ipm(IpmArgs),
    /// Expected distance of the empirical measure against n, with a log-log fit
    Rate(RateArgs),
    /// Expected distance against the noise level sigma
    SweepNoise(NoiseArgs),
    /// Expected distance against the outlier fraction epsilon
    SweepContamination(ContaminationArgs),
    /// Monte Carlo check of E|mean(U) - 1/2| >= 0.105 / sqrt(n)
    LowerBound(LowerBoundArgs),
    /// KS checks of the two Huber hypotheses that share one mixture law
    HuberCheck(HuberArgs),
    /// Minimum-distance fit of a parametric generator family
    ErmFit(ErmArgs),
    /// Exact composition constants C(D, d, alpha)
    SmoothnessConstant(ConstantArgs),
    /// Write a synthetic contaminated dataset
    Synth(SynthArgs),
    /// Re-run a study from its manifest
    Replay {
        manifest: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ipm(_) => "ipm",
            Command::Rate(_) => "rate",
            Command::SweepNoise(_) => "sweep-noise",
            Command::SweepContamination(_) => "sweep-contamination",
            Command::LowerBound(_) => "lower-bound",
            Command::HuberCheck(_) => "huber-check",
            Command::ErmFit(_) => "erm-fit",
            Command::SmoothnessConstant(_) => "smoothness-constant",
            Command::Synth(_) => "synth",
            Command::Replay { .. } => "replay",
        }
    }

    fn flags(&self) -> serde_json::Result<Value> {
        match self {
            Command::Ipm(a) => serde_json::to_value(a),
            Command::Rate(a) => serde_json::to_value(a),
            Command::SweepNoise(a) => serde_json::to_value(a),
            Command::SweepContamination(a) => serde_json::to_value(a),
            Command::LowerBound(a) => serde_json::to_value(a),
            Command::HuberCheck(a) => serde_json::to_value(a),
            Command::ErmFit(a) => serde_json::to_value(a),
            Command::SmoothnessConstant(a) => serde_json::to_value(a),
            Command::Synth(a) => serde_json::to_value(a),
            Command::Replay { .. } => Ok(Value::Object(Map::new())),
        }
    }
}

/// Generator selection shared by the sampling subcommands. `generator` is a
/// built-in name (`identity`, `quarter-shift`, `coordinate-trig`) or a path to
/// a `.json` / `.toml` generator document.
macro_rules! generator_fields {
    ($(#[$meta:meta])* $vis:vis struct $name:ident { $($body:tt)* }) => {
        $(#[$meta])*
        $vis struct $name {
            #[arg(long)]
            generator: Option<String>,
            /// latent dimension
            #[arg(long)]
            d: Option<usize>,
            /// ambient dimension (default: d)
            #[arg(long = "D")]
            #[serde(rename = "D")]
            ambient: Option<usize>,
            #[arg(long)]
            alpha: Option<u32>,
            /// declared smoothness constant of coordinate-trig
            #[arg(long)]
            lipschitz: Option<f64>,
            $($body)*
        }
    };
}

generator_fields! {
    #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields, rename_all = "kebab-case")]
    struct IpmArgs {
        /// CSV of the first point set
        #[arg(long)]
        p: Option<String>,
        /// CSV of the second point set; without it the distance is to the generator's law
        #[arg(long)]
        q: Option<String>,
        /// w1, w1-assignment, w1-lp, projection, walpha:ALPHA:L:CAP or lp-oracle:H
        #[arg(long)]
        metric: Option<String>,
        /// reference sample size when no closed form applies (default: size of p)
        #[arg(long)]
        m: Option<usize>,
    }
}

generator_fields! {
    #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields, rename_all = "kebab-case")]
    struct RateArgs {
        #[arg(long)]
        metric: Option<String>,
        /// sizes as `a:b:xk` or a comma list
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        /// reference sample size is this multiple of n
        #[arg(long)]
        reference_factor: Option<usize>,
    }
}

generator_fields! {
    #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields, rename_all = "kebab-case")]
    struct NoiseArgs {
        #[arg(long)]
        metric: Option<String>,
        /// sphere-fixed, gaussian-scaled or uniform-1d
        #[arg(long)]
        noise: Option<String>,
        /// comma list including 0
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// asserted slope; defaults to the analytic value where one is known
        #[arg(long)]
        expected_slope: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        min_r2: Option<f64>,
    }
}

generator_fields! {
    #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields, rename_all = "kebab-case")]
    struct ContaminationArgs {
        #[arg(long)]
        metric: Option<String>,
        /// comma list
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        expected_slope: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        min_r2: Option<f64>,
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct LowerBoundArgs {
    /// sizes as `a:b:xk` or a comma list
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct HuberArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ErmArgs {
    /// axis-affine or constant
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "D")]
    #[serde(rename = "D")]
    ambient: Option<usize>,
    #[arg(long)]
    metric: Option<String>,
    /// CSV of observations; without it data are drawn from `truth`
    #[arg(long)]
    data: Option<String>,
    /// axis-affine: `slope:intercept` per coordinate, comma separated; constant: the point
    #[arg(long)]
    truth: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// generated sample size per objective evaluation (default: n)
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// assert recovered coefficients within this distance of the truth
    #[arg(long)]
    tolerance: Option<f64>,
    /// replications of the oracle-inequality audit (0 skips it)
    #[arg(long)]
    audit_reps: Option<usize>,
    #[arg(long)]
    grid_resolution: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ConstantArgs {
    /// ambient dimensions, comma list
    #[arg(long = "D")]
    #[serde(rename = "D")]
    ambient: Option<String>,
    /// latent dimensions, comma list
    #[arg(long)]
    d: Option<String>,
    /// smoothness orders, comma list
    #[arg(long)]
    alpha: Option<String>,
    /// fraenkel or unpowered
    #[arg(long)]
    form: Option<String>,
}

generator_fields! {
    #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields, rename_all = "kebab-case")]
    struct SynthArgs {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        noise: Option<String>,
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Study(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Study(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Study(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Assertion {
    name: String,
    passed: bool,
    detail: String,
}

impl Assertion {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

struct Outcome {
    artifacts: Vec<(String, Vec<u8>)>,
    assertions: Vec<Assertion>,
    summary: String,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub config: Value,
    pub artifacts: Vec<String>,
    pub passed: bool,
    /// seconds since the Unix epoch; the only field that differs between replays
    pub created_unix: u64,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

struct Resolved {
    subcommand: String,
    config: Value,
    seed: u64,
    workers: Option<usize>,
    out: PathBuf,
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    let resolved = match &cli.command {
        Command::Replay { manifest } => {
            let text = fs::read_to_string(manifest).map_err(|e| usage(format!("reading {}: {e}", manifest.display())))?;
            let m: Manifest =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: malformed manifest: {e}", manifest.display())))?;
            if m.schema != MANIFEST_SCHEMA {
                return Err(usage(format!("{}: unsupported manifest schema {}", manifest.display(), m.schema)));
            }
            if m.version != env!("CARGO_PKG_VERSION") {
                eprintln!("warning: manifest written by version {}, running {}", m.version, env!("CARGO_PKG_VERSION"));
            }
            let out = cli.out.clone().unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
            Resolved { subcommand: m.subcommand, config: m.config, seed: m.seed, workers: cli.workers.or(m.workers), out }
        }
        command => resolve(&cli, command)?,
    };
    let pool = match resolved.workers {
        Some(0) => return Err(usage("--workers must be at least 1")),
        Some(w) => rayon::ThreadPoolBuilder::new().num_threads(w).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| CliError::Io(format!("worker pool: {e}")))?;
    let (config, outcome) = pool.install(|| execute(&resolved.subcommand, resolved.config.clone(), resolved.seed))?;
    let passed = outcome.passed();
    fs::create_dir_all(&resolved.out).map_err(|e| CliError::Io(format!("creating {}: {e}", resolved.out.display())))?;
    let mut names = Vec::new();
    for (name, bytes) in &outcome.artifacts {
        write_atomic(&resolved.out.join(name), bytes)?;
        names.push(name.clone());
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        tool: "pushlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: resolved.subcommand.clone(),
        seed: resolved.seed,
        workers: resolved.workers,
        out: resolved.out.clone(),
        config,
        artifacts: names,
        passed,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_atomic(&resolved.out.join(MANIFEST_FILE), text.as_bytes())?;
    if !cli.quiet {
        println!("{}", outcome.summary);
        for a in &outcome.assertions {
            println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
        }
        println!("wrote {} artifacts to {}", outcome.artifacts.len() + 1, resolved.out.display());
    }
    Ok(if passed { EXIT_OK } else { EXIT_ASSERTION })
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let io = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

fn resolve(cli: &Cli, command: &Command) -> CliResult<Resolved> {
    let name = command.name();
    let (mut section, run) = match &cli.config {
        Some(path) => load_config(path, name)?,
        None => (Map::new(), RunSection::default()),
    };
    if let Value::Object(flags) = command.flags().map_err(|e| usage(e.to_string()))? {
        for (k, v) in flags {
            if !v.is_null() {
                section.insert(k, v);
            }
        }
    }
    let out = cli
        .out
        .clone()
        .or(run.out)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Resolved {
        subcommand: name.to_string(),
        config: Value::Object(section),
        seed: cli.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
        workers: cli.workers.or(run.workers),
        out,
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    seed: Option<u64>,
    out: Option<PathBuf>,
    workers: Option<usize>,
}

fn load_config(path: &Path, section: &str) -> CliResult<(Map<String, Value>, RunSection)> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("reading config {}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let mut run = RunSection::default();
    let mut out = Map::new();
    for (key, value) in table {
        let json = serde_json::to_value(&value).map_err(|e| usage(e.to_string()))?;
        if key == "run" {
            run = from_value_at(json, path, "run")?;
        } else if key == section {
            match json {
                Value::Object(m) => out = m,
                _ => return Err(usage(format!("config {}: [{key}] must be a table", path.display()))),
            }
        } else if !SUBCOMMANDS.contains(&key.as_str()) {
            return Err(usage(format!("config {}: unknown section [{key}]", path.display())));
        }
    }
    // type-check the section now so errors name the file
    from_section_checked(section, &out, path)?;
    Ok((out, run))
}

const SUBCOMMANDS: [&str; 9] = [
    "ipm",
    "rate",
    "sweep-noise",
    "sweep-contamination",
    "lower-bound",
    "huber-check",
    "erm-fit",
    "smoothness-constant",
    "synth",
];

fn from_section_checked(section: &str, values: &Map<String, Value>, path: &Path) -> CliResult<()> {
    let v = Value::Object(values.clone());
    match section {
        "ipm" => from_value_at::<IpmArgs>(v, path, section).map(drop),
        "rate" => from_value_at::<RateArgs>(v, path, section).map(drop),
        "sweep-noise" => from_value_at::<NoiseArgs>(v, path, section).map(drop),
        "sweep-contamination" => from_value_at::<ContaminationArgs>(v, path, section).map(drop),
        "lower-bound" => from_value_at::<LowerBoundArgs>(v, path, section).map(drop),
        "huber-check" => from_value_at::<HuberArgs>(v, path, section).map(drop),
        "erm-fit" => from_value_at::<ErmArgs>(v, path, section).map(drop),
        "smoothness-constant" => from_value_at::<ConstantArgs>(v, path, section).map(drop),
        "synth" => from_value_at::<SynthArgs>(v, path, section).map(drop),
        _ => Ok(()),
    }
}

fn from_value_at<T: DeserializeOwned>(v: Value, path: &Path, section: &str) -> CliResult<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let field = e.path().to_string();
        usage(format!("config {}: [{section}] field `{field}`: {}", path.display(), e.inner()))
    })
}

fn from_config<T: DeserializeOwned>(v: Value, section: &str) -> CliResult<T> {
    serde_path_to_error::deserialize(v)
        .map_err(|e| usage(format!("{section}: field `{}`: {}", e.path(), e.inner())))
}

fn execute(subcommand: &str, config: Value, seed: u64) -> CliResult<(Value, Outcome)> {
    let policy = SeedPolicy::new(seed);
    macro_rules! go {
        ($ty:ty, $f:ident) => {{
            let args: $ty = from_config(config, subcommand)?;
            let (resolved, outcome) = $f(args, &policy)?;
            (serde_json::to_value(resolved).expect("config serializes"), outcome)
        }};
    }
    Ok(match subcommand {
        "ipm" => go!(IpmArgs, cmd_ipm),
        "rate" => go!(RateArgs, cmd_rate),
        "sweep-noise" => go!(NoiseArgs, cmd_sweep_noise),
        "sweep-contamination" => go!(ContaminationArgs, cmd_sweep_contamination),
        "lower-bound" => go!(LowerBoundArgs, cmd_lower_bound),
        "huber-check" => go!(HuberArgs, cmd_huber),
        "erm-fit" => go!(ErmArgs, cmd_erm),
        "smoothness-constant" => go!(ConstantArgs, cmd_constant),
        "synth" => go!(SynthArgs, cmd_synth),
        other => return Err(usage(format!("unknown subcommand `{other}`"))),
    })
}

/// `a:b:xk` (geometric) or a comma list of sizes.
pub fn parse_size_grid(s: &str) -> std::result::Result<Vec<usize>, String> {
    let s = s.trim();
    if let Some((range, factor)) = s.rsplit_once(":x") {
        let (a, b) = range.split_once(':').ok_or_else(|| format!("grid `{s}`: expected a:b:xk"))?;
        let p = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("grid `{s}`: {e}"));
        return geometric_grid(p(a)?, p(b)?, p(factor)?).map_err(|e| e.to_string());
    }
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("grid `{s}`: `{t}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("grid `{s}` must be increasing"));
    }
    Ok(v)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|t| t.trim().parse::<T>().map_err(|e| format!("list `{s}`: `{}`: {e}", t.trim()))).collect()
}

/// Metric names: `w1` (exact in one dimension, assignment otherwise),
/// `w1-assignment`, `w1-lp`, `projection`, `walpha:ALPHA:L:CAP`, `lp-oracle:H`.
pub fn parse_metric(s: &str, dim: usize) -> std::result::Result<IpmSpec, String> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("metric `{s}`: {e}"));
    match parts.as_slice() {
        ["w1"] => Ok(if dim == 1 { IpmSpec::W1Exact1d } else { IpmSpec::W1Assignment }),
        ["w1-assignment"] => Ok(IpmSpec::W1Assignment),
        ["w1-lp"] => Ok(IpmSpec::W1TransportLp),
        ["projection"] => Ok(IpmSpec::ProjectionFirstAxis),
        ["walpha", a, l, cap] => Ok(IpmSpec::WalphaDictionary(WalphaSpec::new(
            a.parse().map_err(|e| format!("metric `{s}`: {e}"))?,
            num(l)?,
            cap.parse().map_err(|e| format!("metric `{s}`: {e}"))?,
        ))),
        ["lp-oracle", h] => Ok(IpmSpec::BruteLpOracle { h: num(h)? }),
        _ => Err(format!("unknown metric `{s}`")),
    }
}

pub fn parse_noise(s: &str) -> std::result::Result<NoiseModel, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown noise model `{s}`"))
}

struct GeneratorChoice {
    name: String,
    d: usize,
    ambient: usize,
    alpha: u32,
    lipschitz: f64,
}

impl GeneratorChoice {
    fn resolve(
        name: &mut Option<String>,
        d: &mut Option<usize>,
        ambient: &mut Option<usize>,
        alpha: &mut Option<u32>,
        lipschitz: &mut Option<f64>,
        default: &str,
    ) -> Self {
        let name = name.get_or_insert_with(|| default.to_string()).clone();
        let d = *d.get_or_insert(1);
        let ambient = *ambient.get_or_insert(d);
        let alpha = *alpha.get_or_insert(1);
        let lipschitz = *lipschitz.get_or_insert(2.0);
        Self { name, d, ambient, alpha, lipschitz }
    }

    fn build(&self) -> CliResult<GeneratorSpec> {
        let square = |what: &str| -> CliResult<()> {
            if self.ambient != self.d {
                return Err(usage(format!("{what} needs D = d (got d={}, D={})", self.d, self.ambient)));
            }
            Ok(())
        };
        Ok(match self.name.as_str() {
            "identity" => {
                square("identity")?;
                GeneratorSpec::identity(self.d)?
            }
            "quarter-shift" => {
                square("quarter-shift")?;
                GeneratorSpec::quarter_shift(self.d)?
            }
            "coordinate-trig" => GeneratorSpec::coordinate_trig(self.d, self.ambient, self.alpha, self.lipschitz)?,
            path if path.ends_with(".json") || path.ends_with(".toml") => {
                let text = fs::read_to_string(path).map_err(|e| usage(format!("reading generator {path}: {e}")))?;
                let doc: GeneratorDoc = if path.ends_with(".json") {
                    serde_json::from_str(&text).map_err(|e| usage(format!("generator {path}: {e}")))?
                } else {
                    toml::from_str(&text).map_err(|e| usage(format!("generator {path}: {e}")))?
                };
                GeneratorSpec::try_from(&doc)?
            }
            other => return Err(usage(format!("unknown generator `{other}`"))),
        })
    }
}

macro_rules! choice {
    ($a:expr, $default:expr) => {
        GeneratorChoice::resolve(&mut $a.generator, &mut $a.d, &mut $a.ambient, &mut $a.alpha, &mut $a.lipschitz, $default)
    };
}

fn json_bytes(v: &Value) -> Vec<u8> {
    (serde_json::to_string_pretty(v).expect("summary serializes") + "\n").into_bytes()
}

fn summary_json(study: &str, body: Value, assertions: &[Assertion]) -> Vec<u8> {
    let mut m = Map::new();
    m.insert("schema".into(), json!(SCHEMA));
    m.insert("study".into(), json!(study));
    if let Value::Object(b) = body {
        m.extend(b);
    }
    m.insert("assertions".into(), serde_json::to_value(assertions).expect("assertions serialize"));
    m.insert("passed".into(), json!(assertions.iter().all(|a| a.passed)));
    json_bytes(&Value::Object(m))
}

fn read_points(path: &str) -> CliResult<crate::sampling::PointSet> {
    let f = fs::File::open(path).map_err(|e| usage(format!("reading {path}: {e}")))?;
    Ok(crate::contamination::Dataset::read_csv(BufReader::new(f))?.points)
}

fn cmd_ipm(mut a: IpmArgs, policy: &SeedPolicy) -> CliResult<(IpmArgs, Outcome)> {
    let p_path = a.p.clone().ok_or_else(|| usage("ipm needs --p"))?;
    let p = read_points(&p_path)?;
    let metric_name = a.metric.get_or_insert_with(|| "w1".into()).clone();
    let metric = parse_metric(&metric_name, p.dim()).map_err(usage)?;
    let value = match a.q.clone() {
        Some(q_path) => {
            let q = read_points(&q_path)?;
            let (pm, qm) = (DiscreteMeasure::empirical(p.clone())?, DiscreteMeasure::empirical(q)?);
            crate::erm::measure_distance(&metric, &pm, &qm)?
        }
        None => {
            let choice = choice!(a, "identity");
            let g = choice.build()?;
            let m = *a.m.get_or_insert(p.len());
            distance_to_pushforward(&p, &g, &metric, m, &mut policy.stream(0, Purpose::Reference))?
        }
    };
    let body = json!({ "metric": metric, "n_p": p.len(), "dim": p.dim(), "value": value });
    let summary = format!("ipm {metric_name}: {value}");
    Ok((a, Outcome { artifacts: vec![("ipm.json".into(), summary_json("ipm", body, &[]))], assertions: vec![], summary }))
}

/// Band for the fitted log-log slope of the W1 rate in latent dimension `d`.
pub fn w1_slope_band(d: usize) -> (f64, f64) {
    match d {
        1 => (-0.55, -0.45),
        2 => (-0.58, -0.42),
        _ => (-1.0 / d as f64 - 0.05, -1.0 / d as f64 + 0.05),
    }
}

fn cmd_rate(mut a: RateArgs, policy: &SeedPolicy) -> CliResult<(RateArgs, Outcome)> {
    let choice = choice!(a, "identity");
    let g = choice.build()?;
    let metric_name = a.metric.get_or_insert_with(|| "w1".into()).clone();
    let metric = parse_metric(&metric_name, g.ambient_dim()).map_err(usage)?;
    let grid = parse_size_grid(a.n.get_or_insert_with(|| "128:8192:x2".into())).map_err(usage)?;
    let reps = *a.reps.get_or_insert(50);
    let reference_factor = *a.reference_factor.get_or_insert(1);
    let fit = rate_study(&g, &metric, &grid, reps, RateConfig { reference_factor }, &policy.stream(0, Purpose::Reference))?;
    let mut assertions = Vec::new();
    if metric.is_w1() {
        let (lo, hi) = w1_slope_band(g.latent_dim());
        assertions.push(Assertion::new(
            "w1-rate-slope",
            (lo..=hi).contains(&fit.slope),
            format!("slope {:.4} in [{lo:.4}, {hi:.4}]", fit.slope),
        ));
    }
    let body = json!({ "fit": fit, "generator": GeneratorDoc::from(&g), "metric": metric });
    let summary = format!("rate: slope {:.4} (se {:.4}), r^2 {:.4}", fit.slope, fit.slope_std_error, fit.r_squared);
    let artifacts = vec![
        ("rate.csv".into(), rows_csv("n", &fit.rows).into_bytes()),
        ("rate.json".into(), summary_json("rate", body, &assertions)),
    ];
    Ok((a, Outcome { artifacts, assertions, summary }))
}

fn sweep_assertions(result: &SweepResult, expected: Option<f64>, tolerance: f64, min_r2: f64) -> Vec<Assertion> {
    let mut out = Vec::new();
    if let Some(e) = expected {
        out.push(Assertion::new(
            "slope",
            (result.fit.slope - e).abs() <= tolerance,
            format!("slope {:.4}, expected {e} +/- {tolerance}", result.fit.slope),
        ));
        out.push(Assertion::new(
            "r-squared",
            result.fit.r_squared >= min_r2,
            format!("r^2 {:.5} >= {min_r2}", result.fit.r_squared),
        ));
        for &(s, gap, tol) in &result.doubling {
            out.push(Assertion::new(
                "doubling",
                gap <= tol,
                format!("|mean({}) - 2 mean({s})| = {gap:.5} <= {tol:.5}", 2.0 * s),
            ));
        }
    }
    out
}

fn sweep_outcome(name: &str, result: SweepResult, assertions: Vec<Assertion>, g: &GeneratorSpec) -> Outcome {
    let summary = format!("{name}: slope {:.4}, r^2 {:.5}", result.fit.slope, result.fit.r_squared);
    let body = json!({ "result": result, "generator": GeneratorDoc::from(g) });
    let artifacts =
        vec![(format!("{name}.csv"), result.csv().into_bytes()), (format!("{name}.json"), summary_json(name, body, &assertions))];
    Outcome { artifacts, assertions, summary }
}

fn cmd_sweep_noise(mut a: NoiseArgs, policy: &SeedPolicy) -> CliResult<(NoiseArgs, Outcome)> {
    let choice = choice!(a, "quarter-shift");
    let g = choice.build()?;
    let metric_name = a.metric.get_or_insert_with(|| "projection".into()).clone();
    let metric = parse_metric(&metric_name, g.ambient_dim()).map_err(usage)?;
    let noise = parse_noise(a.noise.get_or_insert_with(|| "uniform-1d".into())).map_err(usage)?;
    let grid: Vec<f64> = parse_list(a.sigma.get_or_insert_with(|| "0,0.1,0.2,0.3,0.4".into())).map_err(usage)?;
    let n = *a.n.get_or_insert(1000);
    let reps = *a.reps.get_or_insert(200);
    // projection with a one-sided first-coordinate shift moves the mean by E|xi|
    if a.expected_slope.is_none() && metric == IpmSpec::ProjectionFirstAxis && noise == NoiseModel::Uniform1d {
        a.expected_slope = Some(noise.expected_norm(1.0, g.ambient_dim()));
    }
    let tolerance = *a.tolerance.get_or_insert(0.05);
    let min_r2 = *a.min_r2.get_or_insert(0.99);
    let result = noise_sweep(&g, &metric, noise, &grid, n, reps, &policy.stream(0, Purpose::Noise))?;
    let assertions = sweep_assertions(&result, a.expected_slope, tolerance, min_r2);
    Ok((a, sweep_outcome("sweep-noise", result, assertions, &g)))
}

fn cmd_sweep_contamination(mut a: ContaminationArgs, policy: &SeedPolicy) -> CliResult<(ContaminationArgs, Outcome)> {
    let choice = choice!(a, "quarter-shift");
    let g = choice.build()?;
    let metric_name = a.metric.get_or_insert_with(|| "projection".into()).clone();
    let metric = parse_metric(&metric_name, g.ambient_dim()).map_err(usage)?;
    let grid: Vec<f64> = parse_list(a.epsilon.get_or_insert_with(|| "0,0.05,0.1,0.2".into())).map_err(usage)?;
    let n = *a.n.get_or_insert(1000);
    let reps = *a.reps.get_or_insert(200);
    // corner outliers at 1 move the first-coordinate mean by eps (1 - E g_1)
    if a.expected_slope.is_none() && metric == IpmSpec::ProjectionFirstAxis {
        a.expected_slope = Some(1.0 - g.first_coordinate_mean());
    }
    let tolerance = *a.tolerance.get_or_insert(0.05);
    let min_r2 = *a.min_r2.get_or_insert(0.99);
    let result = contamination_sweep(&g, &metric, &grid, n, reps, &policy.stream(0, Purpose::Outlier))?;
    let assertions = sweep_assertions(&result, a.expected_slope, tolerance, min_r2);
    Ok((a, sweep_outcome("sweep-contamination", result, assertions, &g)))
}

fn cmd_lower_bound(mut a: LowerBoundArgs, policy: &SeedPolicy) -> CliResult<(LowerBoundArgs, Outcome)> {
    let grid = parse_size_grid(a.n.get_or_insert_with(|| "1,10,100,1000,10000".into())).map_err(usage)?;
    let reps = *a.reps.get_or_insert(10_000);
    let report = lower_bound_check(&grid, reps, &policy.stream(0, Purpose::Probe))?;
    let mut assertions: Vec<Assertion> = report
        .rows
        .iter()
        .map(|r| {
            Assertion::new(
                "lower-bound",
                r.passes,
                format!("n={}: {:.5} (se {:.5}) >= {:.5}", r.n, r.estimate, r.std_error, r.threshold),
            )
        })
        .collect();
    if let Some(r) = report.rows.iter().find(|r| r.n == 1) {
        let exact = r.exact.unwrap_or(f64::NAN);
        assertions.push(Assertion::new("n=1 exact", (exact - 0.25).abs() < 5e-4, format!("E|U - 1/2| = {exact}")));
    }
    let rows: Vec<GridRow> =
        report.rows.iter().map(|r| GridRow { value: r.n as f64, mean: r.estimate, std_error: r.std_error, reps: r.reps }).collect();
    let summary = format!("lower-bound: {} sizes, all pass: {}", report.rows.len(), report.all_pass);
    let body = json!({ "report": report });
    let artifacts = vec![
        ("lower-bound.csv".into(), rows_csv("n", &rows).into_bytes()),
        ("lower-bound.json".into(), summary_json("lower-bound", body, &assertions)),
    ];
    Ok((a, Outcome { artifacts, assertions, summary }))
}

fn cmd_huber(mut a: HuberArgs, policy: &SeedPolicy) -> CliResult<(HuberArgs, Outcome)> {
    let eps = *a.epsilon.get_or_insert(0.25);
    let n = *a.n.get_or_insert(100_000);
    let r = huber_indistinguishability_check(eps, n, &policy.stream(0, Purpose::Outlier))?;
    let assertions = vec![
        Assertion::new(
            "two-sample KS",
            !r.two_sample.rejects,
            format!("D = {:.5} vs critical {:.5}", r.two_sample.statistic, r.two_sample.critical),
        ),
        Assertion::new(
            "first vs uniform",
            !r.first_vs_uniform.rejects,
            format!("D = {:.5} vs critical {:.5}", r.first_vs_uniform.statistic, r.first_vs_uniform.critical),
        ),
        Assertion::new(
            "second vs uniform",
            !r.second_vs_uniform.rejects,
            format!("D = {:.5} vs critical {:.5}", r.second_vs_uniform.statistic, r.second_vs_uniform.critical),
        ),
        Assertion::new(
            "clean gap",
            r.clean_gap >= eps - 3.0 * r.clean_gap_std_error,
            format!("{:.5} >= {eps} - 3 x {:.5}", r.clean_gap, r.clean_gap_std_error),
        ),
    ];
    let summary = format!("huber-check: eps {eps}, n {n}, clean gap {:.5}", r.clean_gap);
    let body = json!({ "report": r });
    Ok((a, Outcome { artifacts: vec![("huber-check.json".into(), summary_json("huber-check", body, &assertions))], assertions, summary }))
}

fn cmd_erm(mut a: ErmArgs, policy: &SeedPolicy) -> CliResult<(ErmArgs, Outcome)> {
    let d = *a.d.get_or_insert(1);
    let dim = *a.ambient.get_or_insert(d);
    let family = match a.family.get_or_insert_with(|| "axis-affine".into()).as_str() {
        "axis-affine" => ParamFamily::AxisAffine { d, dim },
        "constant" => ParamFamily::Constant { d, dim },
        other => return Err(usage(format!("unknown family `{other}`"))),
    };
    let metric = parse_metric(a.metric.get_or_insert_with(|| "w1".into()), dim).map_err(usage)?;
    let budget = *a.budget.get_or_insert(400);
    let restarts = *a.restarts.get_or_insert(8);
    let grid_resolution = *a.grid_resolution.get_or_insert(13);
    let audit_reps = *a.audit_reps.get_or_insert(0);
    let truth = match (&a.data, &a.truth) {
        (Some(_), _) => None,
        (None, t) => {
            let t = t.clone().unwrap_or_else(|| match family {
                ParamFamily::AxisAffine { .. } => vec!["0.5:0.25"; dim].join(","),
                ParamFamily::Constant { .. } => vec!["0.5"; dim].join(","),
            });
            a.truth = Some(t.clone());
            Some(parse_truth(&family, &t)?)
        }
    };
    let (data, spec) = match (&a.data, &truth) {
        (Some(path), _) => {
            if audit_reps > 0 {
                return Err(usage("the oracle-inequality audit needs a known truth, not --data"));
            }
            (read_points(path)?, None)
        }
        (None, Some(theta)) => {
            let g_star = family.instantiate(theta)?;
            let spec = DataSpec::new(g_star)
                .with_noise(*a.sigma.get_or_insert(0.0), NoiseModel::default())
                .with_outliers(*a.epsilon.get_or_insert(0.0), OutlierPolicy::Corner);
            let n = *a.n.get_or_insert(2000);
            (synthesize(&spec, n, &policy.stream(0, Purpose::Latent))?.points, Some(spec))
        }
        (None, None) => unreachable!("truth is filled when data is absent"),
    };
    let m = *a.m.get_or_insert(data.len());
    let mut problem = ErmProblem::new(family.clone(), metric, m);
    problem.budget = budget;
    problem.restarts = restarts;
    let sol = fit(&problem, &data, &policy.stream(0, Purpose::Erm))?;
    let mut assertions = Vec::new();
    let coefficients = match family {
        ParamFamily::AxisAffine { .. } => Some(family.affine_coefficients(&sol.theta)),
        ParamFamily::Constant { .. } => None,
    };
    if let (Some(tol), Some(theta)) = (a.tolerance, &truth) {
        let err = match family {
            ParamFamily::AxisAffine { .. } => family
                .affine_coefficients(&sol.theta)
                .iter()
                .zip(family.affine_coefficients(theta))
                .map(|(x, y)| (x.0 - y.0).abs().max((x.1 - y.1).abs()))
                .fold(0.0, f64::max),
            ParamFamily::Constant { .. } => sol.theta.iter().zip(theta).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        };
        assertions.push(Assertion::new("recovery", err <= tol, format!("max coefficient error {err:.5} <= {tol}")));
    }
    let mut artifacts = Vec::new();
    let mut audit = None;
    if audit_reps > 0 {
        let spec = spec.as_ref().expect("synthetic data has a spec");
        let report =
            audit_oracle_inequality(&problem, spec, data.len(), audit_reps, grid_resolution, &policy.stream(1, Purpose::Erm))?;
        let failing = report.rows.iter().filter(|r| !r.holds).count();
        assertions.push(Assertion::new(
            "oracle inequality",
            report.all_hold,
            format!("{} of {} replications hold", report.rows.len() - failing, report.rows.len()),
        ));
        let mut csv = String::from("replication,risk,inf_grid,stat_term,mc_error,objective,optimizer_gap,holds\n");
        for r in &report.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.replication, r.risk, r.inf_grid, r.stat_term, r.mc_error, r.objective, r.optimizer_gap, r.holds
            ));
        }
        artifacts.push(("erm-audit.csv".into(), csv.into_bytes()));
        audit = Some(report);
    }
    let summary = format!("erm-fit: objective {:.6} after {} evaluations", sol.objective, sol.evaluations);
    let body = json!({ "solution": sol, "coefficients": coefficients, "truth": truth, "audit": audit });
    artifacts.insert(0, ("erm-fit.json".into(), summary_json("erm-fit", body, &assertions)));
    Ok((a, Outcome { artifacts, assertions, summary }))
}

fn parse_truth(family: &ParamFamily, s: &str) -> CliResult<Vec<f64>> {
    match family {
        ParamFamily::AxisAffine { .. } => {
            let pairs = s
                .split(',')
                .map(|t| {
                    let (a, b) = t.split_once(':').ok_or_else(|| usage(format!("truth `{t}`: expected slope:intercept")))?;
                    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| usage(format!("truth `{t}`: {e}")));
                    Ok((p(a)?, p(b)?))
                })
                .collect::<CliResult<Vec<_>>>()?;
            if pairs.len() != family.ambient_dim() {
                return Err(usage(format!("truth needs {} slope:intercept pairs", family.ambient_dim())));
            }
            family.theta_for(&pairs).ok_or_else(|| usage(format!("truth `{s}` is outside the family")))
        }
        ParamFamily::Constant { .. } => {
            let v: Vec<f64> = parse_list(s).map_err(usage)?;
            if v.len() != family.ambient_dim() || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(usage(format!("truth `{s}` must be a point of [0,1]^{}", family.ambient_dim())));
            }
            Ok(v)
        }
    }
}

fn cmd_constant(mut a: ConstantArgs, _policy: &SeedPolicy) -> CliResult<(ConstantArgs, Outcome)> {
    let big: Vec<usize> = parse_list(a.ambient.get_or_insert_with(|| "1,2,3".into())).map_err(usage)?;
    let small: Vec<usize> = parse_list(a.d.get_or_insert_with(|| "1,2,3".into())).map_err(usage)?;
    let alphas: Vec<u32> = parse_list(a.alpha.get_or_insert_with(|| "1,2,3".into())).map_err(usage)?;
    let form: ConstantForm = serde_json::from_value(Value::String(a.form.get_or_insert_with(|| "fraenkel".into()).clone()))
        .map_err(|_| usage("form must be fraenkel or unpowered"))?;
    let mut rows = Vec::new();
    let mut csv = String::from("D,d,alpha,form,exact,value\n");
    let mut assertions = Vec::new();
    for &bd in &big {
        for &d in &small {
            for &alpha in &alphas {
                let c = composition_constant_with(bd, d, alpha, form)?;
                let form_name = serde_json::to_value(c.form).expect("form serializes");
                csv.push_str(&format!("{bd},{d},{alpha},{},{},{}\n", form_name.as_str().unwrap_or(""), c.exact, c.value));
                if alpha == 1 && form == ConstantForm::Fraenkel {
                    assertions.push(Assertion::new(
                        "C(D,d,1) = D",
                        c.exact == format!("{bd}/1") || c.exact == bd.to_string(),
                        format!("C({bd},{d},1) = {}", c.exact),
                    ));
                }
                rows.push(c);
            }
        }
    }
    let summary = rows.iter().map(|c| format!("C({},{},{}) = {}", c.ambient, c.d, c.alpha, c.exact)).collect::<Vec<_>>().join("\n");
    let artifacts = vec![
        ("smoothness-constant.csv".into(), csv.into_bytes()),
        ("smoothness-constant.json".into(), summary_json("smoothness-constant", json!({ "rows": rows }), &assertions)),
    ];
    Ok((a, Outcome { artifacts, assertions, summary }))
}

fn cmd_synth(mut a: SynthArgs, policy: &SeedPolicy) -> CliResult<(SynthArgs, Outcome)> {
    let choice = choice!(a, "identity");
    let g = choice.build()?;
    let n = *a.n.get_or_insert(1000);
    let noise = parse_noise(a.noise.get_or_insert_with(|| "sphere-fixed".into())).map_err(usage)?;
    let spec = DataSpec::new(g.clone())
        .with_noise(*a.sigma.get_or_insert(0.0), noise)
        .with_outliers(*a.epsilon.get_or_insert(0.0), OutlierPolicy::Corner);
    let data = synthesize(&spec, n, &policy.stream(0, Purpose::Latent))?;
    let mut csv = Vec::new();
    data.write_csv(&mut csv, Some(policy.master_seed)).map_err(|e| CliError::Io(e.to_string()))?;
    let body = json!({ "n": data.len(), "dim": data.dim(), "inliers": data.inlier_count(), "generator": GeneratorDoc::from(&g) });
    let summary = format!("synth: {} points in dimension {}, {} inliers", data.len(), data.dim(), data.inlier_count());
    let artifacts = vec![("dataset.csv".into(), csv), ("synth.json".into(), summary_json("synth", body, &[]))];
    Ok((a, Outcome { artifacts, assertions: vec![], summary }))
}
