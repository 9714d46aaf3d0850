//! Command-line front end.
//!
//! [`run`] parses arguments, does the work and returns the rendered report,
//! so the binary is a thin wrapper and tests can drive commands in-process.
//! JSON numbers carry 17 significant digits.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::bounds::{full_report, BoundsReport, Estimand};
use crate::coupling::{extremal_coupling, CouplingTarget};
use crate::data::{read_csv, Dataset};
use crate::distributions::{estimands_of_joint, JointDistribution, MarginalPair};
use crate::error::Error;
use crate::estimation::{estimate_adjusted, estimate_ipw, estimate_randomized, Adjustment, BoundSet, IpwOptions, Propensity};
use crate::inference::{bootstrap, BootstrapDraws, BootstrapOptions, Estimator, PairLower};
use crate::lp_oracle::{alpha_bounds, optimize, LinearObjective, Sense};
use crate::noncompliance::{
    complier_bounds, em_fit, em_fit_with_covariates, moment_identify, EmOptions, Monotonicity, StrataModel,
};
use crate::scalar::{Rational, Scalar};
use crate::simulation::{run_study, Population, StudySpec};

#[derive(Debug, Parser)]
#[command(name = "ordbounds", version, about = "Sharp bounds on causal effects for ordinal outcomes")]
pub struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for bootstrap and simulation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bounds on tau and eta from two marginals.
    Bounds(MarginalArgs),
    /// A joint distribution attaining one of the bounds.
    Construct {
        #[arg(long)]
        target: CouplingTarget,
        #[command(flatten)]
        marginals: MarginalArgs,
    },
    /// Bounds and bootstrap intervals from unit-level data.
    Analyze(AnalyzeArgs),
    /// Complier and sharpened population bounds under noncompliance.
    AnalyzeIv(AnalyzeIvArgs),
    /// One row of a simulation study per estimator.
    Simulate(SimulateArgs),
    /// Optimizes a linear objective over all joints with the given marginals.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct MarginalArgs {
    /// Treated marginal, comma separated; decimals or fractions like 2/5.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "p0", conflicts_with = "marginals")]
    pub p1: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "p1")]
    pub p0: Option<Vec<String>>,
    /// CSV with columns p1 and p0, one row per category.
    #[arg(long)]
    pub marginals: Option<PathBuf>,
    /// Exact rational arithmetic.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Bootstrap replicates; 0 skips intervals.
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, conflicts_with = "alpha_level")]
    pub level: Option<f64>,
    /// Significance level; the interval level is one minus this.
    #[arg(long)]
    pub alpha_level: Option<f64>,
    #[arg(long, env = "ORDBOUNDS_SEED")]
    pub seed: Option<u64>,
}

impl BootstrapArgs {
    fn level(&self) -> Result<f64, CliError> {
        let level = match (self.level, self.alpha_level) {
            (Some(l), _) => l,
            (None, Some(a)) => 1.0 - a,
            (None, None) => 0.95,
        };
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::field("level", Error::InvalidArgument(format!("must lie in (0, 1), got {level}"))));
        }
        Ok(level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Randomized,
    Ipw,
    Adjusted,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DesignArg::Randomized)]
    pub design: DesignArg,
    /// Covariate columns to use; all non-reserved columns by default.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Strata (`discrete`) or a proportional-odds model (`model`).
    #[arg(long, value_enum, default_value_t = AdjustmentArg::Discrete)]
    pub adjustment: AdjustmentArg,
    /// Known constant propensity instead of a fitted one.
    #[arg(long)]
    pub propensity: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long)]
    pub categories: Option<usize>,
    #[command(flatten)]
    pub boot: BootstrapArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdjustmentArg {
    Discrete,
    Model,
}

#[derive(Debug, Args)]
pub struct AnalyzeIvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "standard")]
    pub monotonicity: Monotonicity,
    /// Closed-form cell moments instead of EM.
    #[arg(long, conflicts_with = "em")]
    pub moment: bool,
    /// EM fit (the default).
    #[arg(long)]
    pub em: bool,
    /// Covariates for the outcome and strata models; none by default.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long)]
    pub categories: Option<usize>,
    #[command(flatten)]
    pub boot: BootstrapArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub study: u8,
    #[arg(long)]
    pub case: usize,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub boot: Option<usize>,
    /// Bootstrap replicates for the covariate-adjusted estimator.
    #[arg(long)]
    pub boot_adjusted: Option<usize>,
    #[arg(long, env = "ORDBOUNDS_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_enum)]
    pub population: Option<PopulationArg>,
    /// Monte Carlo draws for study-2 true values.
    #[arg(long)]
    pub truth_draws: Option<usize>,
    /// Skip the covariate-adjusted estimator in study 2.
    #[arg(long)]
    pub no_adjusted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PopulationArg {
    Fixed,
    Sampled,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub marginals: MarginalArgs,
    /// `tau`, `eta`, `sign`, `ones`, or a CSV matrix file in the format
    /// `construct --format csv` writes.
    #[arg(long, default_value = "tau")]
    pub objective: String,
    #[arg(long, default_value = "max")]
    pub sense: Sense,
    /// Instead of optimizing, evaluate the objective at this joint (CSV).
    #[arg(long)]
    pub point: Option<PathBuf>,
}

/// A library error, optionally tagged with the flag it came from.
#[derive(Debug, thiserror::Error)]
#[error("{}{source}", field.as_ref().map(|f| format!("--{f}: ")).unwrap_or_default())]
pub struct CliError {
    pub field: Option<String>,
    #[source]
    pub source: Error,
}

impl CliError {
    fn field(name: &str, source: Error) -> Self {
        CliError { field: Some(name.to_string()), source }
    }

    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

impl From<Error> for CliError {
    fn from(source: Error) -> Self {
        CliError { field: None, source }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (program name first) and returns the rendered report.
/// Argument errors are returned by clap, everything else as [`CliError`].
pub fn run<I, S>(args: I) -> Result<String, RunError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(RunError::Usage)?;
    execute(&cli).map_err(RunError::Failed)
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(clap::Error),
    #[error("error: {0}")]
    Failed(CliError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(e) if !e.use_stderr() => 0,
            RunError::Usage(_) => 2,
            RunError::Failed(e) => e.exit_code(),
        }
    }
}

/// Entry point of the binary: prints the report or the error and returns
/// the exit status.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap sends help and version to stdout, errors to stderr.
            let _ = e.print();
            return RunError::Usage(e).exit_code();
        }
    };
    let outcome = execute(&cli).and_then(|text| emit(&cli, &text));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(cli: &Cli, text: &str) -> CliResult<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::field("out", e.into())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::from(Error::from(e)))
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<String> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::field("threads", Error::InvalidArgument("must be positive".into())));
        }
        // A pool set up earlier in the same process is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Bounds(m) => cmd_bounds(m, cli.format),
        Command::Construct { target, marginals } => cmd_construct(marginals, *target, cli.format),
        Command::Analyze(a) => cmd_analyze(a, cli.format),
        Command::AnalyzeIv(a) => cmd_analyze_iv(a, cli.format),
        Command::Simulate(s) => cmd_simulate(s, cli.format),
        Command::Oracle(o) => cmd_oracle(o, cli.format),
    }
}

// ---- parsing ----

/// Parses `a/b`, an integer, or a plain decimal into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, Error> {
    let t = text.trim();
    let bad = || Error::Parse(format!("`{t}` is not a number"));
    if let Some((n, d)) = t.split_once('/') {
        let n: num_bigint::BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: num_bigint::BigInt = d.trim().parse().map_err(|_| bad())?;
        if d == num_bigint::BigInt::from(0) {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if (int.is_empty() && frac.is_empty()) || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: num_bigint::BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
    let scale = num_bigint::BigInt::from(10u32).pow(frac.len() as u32);
    let r = Rational::new(digits, scale);
    Ok(if neg { -r } else { r })
}

fn parse_vector(field: &str, raw: &[String]) -> CliResult<Vec<Rational>> {
    raw.iter().map(|s| parse_rational(s).map_err(|e| CliError::field(field, e))).collect()
}

fn read_marginal_file(path: &Path) -> CliResult<(Vec<Rational>, Vec<Rational>)> {
    let field = |e| CliError::field("marginals", e);
    let text = std::fs::read_to_string(path).map_err(|e| field(e.into()))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| field(Error::Parse(e.to_string())))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| field(Error::Parse(format!("missing column `{name}`"))))
    };
    let (c1, c0) = (col("p1")?, col("p0")?);
    let mut p1 = Vec::new();
    let mut p0 = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| field(Error::Parse(e.to_string())))?;
        p1.push(parse_rational(&row[c1]).map_err(field)?);
        p0.push(parse_rational(&row[c0]).map_err(field)?);
    }
    Ok((p1, p0))
}

/// Raw marginals; validation happens in the chosen arithmetic.
fn raw_marginals(m: &MarginalArgs) -> CliResult<(Vec<Rational>, Vec<Rational>)> {
    match (&m.p1, &m.p0, &m.marginals) {
        (Some(p1), Some(p0), None) => Ok((parse_vector("p1", p1)?, parse_vector("p0", p0)?)),
        (None, None, Some(path)) => read_marginal_file(path),
        _ => Err(CliError::field("p1", Error::InvalidArgument("give --p1 and --p0, or --marginals".into()))),
    }
}

fn marginals<T: Scalar>(p1: &[Rational], p0: &[Rational], convert: impl Fn(&Rational) -> T) -> CliResult<MarginalPair<T>> {
    let treated = crate::distributions::MarginalDistribution::new(p1.iter().map(&convert).collect())
        .map_err(|e| CliError::field("p1", e))?;
    let control = crate::distributions::MarginalDistribution::new(p0.iter().map(&convert).collect())
        .map_err(|e| CliError::field("p0", e))?;
    MarginalPair::new(treated, control).map_err(|e| CliError::field("p0", e))
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64()
}

/// Reads a square matrix from CSV. A header is required; a first column
/// named `k` holds row labels and is skipped.
fn read_matrix(path: &Path, field: &str) -> CliResult<Vec<Vec<Rational>>> {
    let err = |e| CliError::field(field, e);
    let text = std::fs::read_to_string(path).map_err(|e| err(e.into()))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let labelled = rdr.headers().map_err(|e| err(Error::Parse(e.to_string())))?.get(0) == Some("k");
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| err(Error::Parse(e.to_string())))?;
        let cells = row.iter().skip(labelled as usize).map(parse_rational).collect::<Result<Vec<_>, _>>().map_err(err)?;
        rows.push(cells);
    }
    Ok(rows)
}

fn load_data(path: &Path, covariates: Option<&[String]>) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::field("data", e.into()))?;
    let ds = read_csv(file).map_err(|e| CliError::field("data", e))?;
    match covariates {
        Some(names) => ds.select_covariates(names).map_err(|e| CliError::field("covariates", e)),
        None => Ok(ds),
    }
}

// ---- rendering ----

/// Formats finite floats with 17 significant digits, in plain notation
/// where that stays short.
fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0.0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(1) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.16e}")
    }
}

struct Precise<'a>(serde_json::ser::PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + std::io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl serde_json::ser::Formatter for Precise<'_> {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(format_number(value).as_bytes())
    }

    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

/// Pretty JSON with 17 significant digits for every float.
pub fn to_json(v: &Value) -> String {
    use serde::Serialize;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise(serde_json::ser::PrettyFormatter::new()));
    v.serialize(&mut ser).expect("a Value always serializes");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().filter(|_| !n.is_u64() && !n.is_i64()).map(format_number).unwrap_or_else(|| n.to_string()),
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Array(items) if items.iter().any(|i| i.is_object() || i.is_array()) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), child, out);
            }
        }
        Value::Array(items) => out.push((prefix.to_string(), items.iter().map(scalar_text).collect::<Vec<_>>().join(" "))),
        leaf => out.push((prefix.to_string(), scalar_text(leaf))),
    }
}

fn render(v: &Value, format: Format) -> String {
    match format {
        Format::Json => to_json(v),
        Format::Csv => {
            let mut pairs = Vec::new();
            flatten("", v, &mut pairs);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"]).expect("in-memory write");
            for (k, val) in pairs {
                w.write_record([k, val]).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
        }
        Format::Table => {
            let mut pairs = Vec::new();
            flatten("", v, &mut pairs);
            let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            pairs.iter().map(|(k, val)| format!("{k:<width$}  {val}\n")).collect()
        }
    }
}

/// Row-major matrix CSV with a `k` label column, as [`read_matrix`] reads.
fn matrix_csv(rows: &[Vec<f64>]) -> String {
    let j = rows.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("k".to_string()).chain((0..j).map(|l| l.to_string())).collect();
    w.write_record(&header).expect("in-memory write");
    for (k, row) in rows.iter().enumerate() {
        let rec: Vec<String> = std::iter::once(k.to_string()).chain(row.iter().map(|v| format_number(*v))).collect();
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

fn triple(lower: f64, independent: f64, upper: f64) -> Value {
    json!({ "lower": lower, "independent": independent, "upper": upper })
}

fn bound_set_json(b: &BoundSet<f64>) -> Value {
    json!({
        "tau": triple(b.tau_lower, b.tau_independent, b.tau_upper),
        "eta": triple(b.eta_lower, b.eta_independent, b.eta_upper),
    })
}

fn report_json(r: &BoundsReport<f64>) -> Value {
    let mut v = json!({
        "j": r.categories(),
        "delta": r.deltas.values(),
        "tau": triple(r.tau_lower, r.tau_independent, r.tau_upper),
        "eta": triple(r.eta_lower, r.eta_independent, r.eta_upper),
        "dominance": r.dominance,
        "point_identified": { "tau": r.tau_point_identified, "eta": r.eta_point_identified },
    });
    if let Some((lo, hi)) = r.alpha {
        v["alpha"] = json!({ "lower": lo, "upper": hi });
    }
    v
}

fn exact_report_json(r: &BoundsReport<Rational>) -> Value {
    let s = |v: &Rational| Value::String(v.to_string());
    json!({
        "delta": r.deltas.values().iter().map(s).collect::<Vec<_>>(),
        "tau": { "lower": s(&r.tau_lower), "independent": s(&r.tau_independent), "upper": s(&r.tau_upper) },
        "eta": { "lower": s(&r.eta_lower), "independent": s(&r.eta_independent), "upper": s(&r.eta_upper) },
        "alpha": r.alpha.as_ref().map(|(lo, hi)| json!({ "lower": s(lo), "upper": s(hi) })),
    })
}

fn intervals_json(draws: &BootstrapDraws, level: f64) -> CliResult<Value> {
    let mut map = Map::new();
    for (estimand, name) in [(Estimand::Tau, "tau"), (Estimand::Eta, "eta")] {
        for (lower, suffix) in [(PairLower::Bound, "bounds"), (PairLower::Independent, "independent_upper")] {
            let r = draws.interval(estimand, lower, level)?;
            map.insert(format!("{name}_{suffix}"), json!({ "low": r.ci_low, "high": r.ci_high }));
        }
    }
    map.insert(
        "bootstrap".into(),
        json!({ "n_boot": draws.n_boot, "seed": draws.seed, "level": level, "dropped": draws.dropped }),
    );
    Ok(Value::Object(map))
}

// ---- commands ----

pub fn cmd_bounds(m: &MarginalArgs, format: Format) -> CliResult<String> {
    let (p1, p0) = raw_marginals(m)?;
    let v = if m.exact {
        let pair = marginals(&p1, &p0, Rational::clone)?;
        let mut r = full_report(&pair);
        r.alpha = Some(alpha_bounds(&pair));
        let mut v = report_json(&r.to_f64());
        v["exact"] = exact_report_json(&r);
        v
    } else {
        let pair = marginals(&p1, &p0, to_f64)?;
        let mut r = full_report(&pair);
        r.alpha = Some(alpha_bounds(&pair));
        report_json(&r)
    };
    Ok(render(&v, format))
}

pub fn cmd_construct(m: &MarginalArgs, target: CouplingTarget, format: Format) -> CliResult<String> {
    let (p1, p0) = raw_marginals(m)?;
    let (rows, exact_rows, tau, eta, margin_error) = if m.exact {
        let pair = marginals(&p1, &p0, Rational::clone)?;
        let joint = extremal_coupling(&pair, target);
        let est = estimands_of_joint(&joint);
        let exact: Vec<Vec<String>> = joint.rows().iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
        (joint.to_f64().rows(), Some(exact), est.tau.to_f64(), est.eta.to_f64(), joint.margin_error(&pair).to_f64())
    } else {
        let pair = marginals(&p1, &p0, to_f64)?;
        let joint = extremal_coupling(&pair, target);
        let est = estimands_of_joint(&joint);
        (joint.rows(), None, est.tau, est.eta, joint.margin_error(&pair))
    };
    if format == Format::Csv {
        return Ok(matrix_csv(&rows));
    }
    let mut v = json!({
        "target": target.name(),
        "j": rows.len(),
        "matrix": rows,
        "tau": tau,
        "eta": eta,
        "margin_error": margin_error,
    });
    if let Some(exact) = exact_rows {
        v["exact_matrix"] = json!(exact);
    }
    Ok(render(&v, format))
}

pub fn cmd_analyze(a: &AnalyzeArgs, format: Format) -> CliResult<String> {
    let level = a.boot.level()?;
    if a.propensity.is_some() && a.design != DesignArg::Ipw {
        return Err(CliError::field("propensity", Error::InvalidArgument("only used with --design ipw".into())));
    }
    let ds = load_data(&a.data, a.covariates.as_deref())?;
    let records = &ds.records;
    let adjustment = match a.adjustment {
        AdjustmentArg::Discrete => Adjustment::Discrete,
        AdjustmentArg::Model => Adjustment::Model,
    };
    let propensity = a.propensity.map_or(Propensity::Fitted, Propensity::Constant);
    let (estimate, estimator) = match a.design {
        DesignArg::Randomized => (estimate_randomized(records, a.categories)?, Estimator::Randomized),
        DesignArg::Ipw => (
            estimate_ipw(records, &propensity, &IpwOptions { epsilon: a.epsilon, categories: a.categories })?,
            Estimator::Ipw { propensity, epsilon: a.epsilon },
        ),
        DesignArg::Adjusted => (estimate_adjusted(records, adjustment, a.categories)?, Estimator::Adjusted(adjustment)),
    };
    let mut v = json!({
        "design": estimate.design.name(),
        "j": estimate.marginals.categories(),
        "n_treated": estimate.n_treated,
        "n_control": estimate.n_control,
        "covariates": ds.covariate_names,
        "marginals": { "treated": estimate.marginals.treated.probs(), "control": estimate.marginals.control.probs() },
        "estimates": bound_set_json(&estimate.bounds),
        "marginal_report": report_json(&estimate.report),
    });
    if a.boot.bootstrap > 0 {
        let opts = BootstrapOptions {
            n_boot: a.boot.bootstrap,
            seed: a.boot.seed.unwrap_or(0),
            categories: Some(estimate.marginals.categories()),
            em: EmOptions::default(),
        };
        v["intervals"] = intervals_json(&bootstrap(records, &estimator, &opts)?, level)?;
    }
    Ok(render(&v, format))
}

fn strata_json(s: &StrataModel<f64>) -> Value {
    json!({
        "pi": { "always": s.pi_a, "complier": s.pi_c, "never": s.pi_n },
        "always": s.always.probs(),
        "never": s.never.probs(),
        "complier_treated": s.complier_treated.probs(),
        "complier_control": s.complier_control.probs(),
    })
}

pub fn cmd_analyze_iv(a: &AnalyzeIvArgs, format: Format) -> CliResult<String> {
    let level = a.boot.level()?;
    let with_covariates = a.covariates.as_ref().is_some_and(|c| !c.is_empty());
    if a.moment && (with_covariates || a.boot.bootstrap > 0) {
        return Err(CliError::field(
            "moment",
            Error::InvalidArgument("moment identification takes neither covariates nor bootstrap".into()),
        ));
    }
    let ds = load_data(&a.data, Some(a.covariates.as_deref().unwrap_or(&[])))?;
    let records = &ds.records;
    let mode = a.monotonicity;
    let em = EmOptions::default();
    let itt = estimate_randomized(records, a.categories)?;
    let (model, extra) = if a.moment {
        let est = moment_identify(records, mode, a.categories)?;
        (est.model, json!({ "method": "moment", "negative_complier_cells": est.negative_complier_cells }))
    } else {
        let fit = em_fit(records, mode, None, &em, a.categories)?;
        (fit.model, json!({ "method": "em", "loglik": fit.loglik, "iterations": fit.iterations }))
    };
    let report = complier_bounds(&model)?;
    let s = &report.population_sharpened;
    let mut v = json!({
        "monotonicity": match mode { Monotonicity::Standard => "standard", Monotonicity::Strong => "strong" },
        "fit": extra,
        "j": model.categories(),
        "n": records.len(),
        "strata": strata_json(&model),
        "complier": report_json(&report.complier),
        "population_sharpened": {
            "tau": { "lower": s.tau_lower, "upper": s.tau_upper },
            "eta": { "lower": s.eta_lower, "upper": s.eta_upper },
        },
        "population_itt": bound_set_json(&itt.bounds),
    });
    let mut estimator = Estimator::Complier(mode);
    if with_covariates {
        let fit = em_fit_with_covariates(records, mode, &em, a.categories)?;
        v["covariates"] = json!(ds.covariate_names);
        v["adjusted"] = json!({
            "complier_share": fit.complier_share,
            "tau": { "lower": fit.adjusted.tau_lower, "upper": fit.adjusted.tau_upper },
            "eta": { "lower": fit.adjusted.eta_lower, "upper": fit.adjusted.eta_upper },
            "unadjusted": report_json(&fit.unadjusted()),
            "loglik": fit.loglik,
            "iterations": fit.iterations,
        });
        estimator = Estimator::ComplierAdjusted(mode);
    }
    if a.boot.bootstrap > 0 {
        let opts = BootstrapOptions {
            n_boot: a.boot.bootstrap,
            seed: a.boot.seed.unwrap_or(0),
            categories: Some(model.categories()),
            em,
        };
        v["intervals"] = intervals_json(&bootstrap(records, &estimator, &opts)?, level)?;
    }
    Ok(render(&v, format))
}

pub fn cmd_simulate(s: &SimulateArgs, format: Format) -> CliResult<String> {
    if !(s.study == 1 || s.study == 2) {
        return Err(CliError::field("study", Error::InvalidArgument(format!("unknown study {}", s.study))));
    }
    let mut spec = StudySpec::new(s.study, s.case);
    if let Some(v) = s.reps {
        spec.n_reps = v;
    }
    if let Some(v) = s.n {
        spec.n_units = v;
    }
    if let Some(v) = s.boot {
        spec.n_boot = v;
    }
    spec.n_boot_adjusted = s.boot_adjusted.or(spec.n_boot_adjusted);
    if let Some(v) = s.seed {
        spec.seed = v;
    }
    if let Some(v) = s.level {
        spec.level = v;
    }
    if let Some(p) = s.population {
        spec.population = match p {
            PopulationArg::Fixed => Population::Fixed,
            PopulationArg::Sampled => Population::Sampled,
        };
    }
    if let Some(v) = s.truth_draws {
        spec.truth_draws = v;
    }
    spec.adjusted = !s.no_adjusted;
    let rows = run_study(&spec)?;
    let v = serde_json::to_value(&rows).expect("rows serialize");
    if format == Format::Csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &rows {
            w.serialize(row).map_err(|e| CliError::from(Error::Io(e.to_string())))?;
        }
        return Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8"));
    }
    Ok(render(&v, format))
}

fn named_objective<T: Scalar>(name: &str, j: usize) -> Option<LinearObjective<T>> {
    match name {
        "tau" => Some(LinearObjective::tau(j)),
        "eta" => Some(LinearObjective::eta(j)),
        "sign" => Some(LinearObjective::sign(j)),
        "ones" => Some(LinearObjective::ones(j)),
        _ => None,
    }
}

fn oracle_in<T: Scalar>(o: &OracleArgs, convert: impl Fn(&Rational) -> T + Copy) -> CliResult<(Value, Vec<Vec<f64>>)> {
    let (p1, p0) = raw_marginals(&o.marginals)?;
    let pair = marginals(&p1, &p0, convert)?;
    let j = pair.categories();
    let objective = match named_objective::<T>(&o.objective, j) {
        Some(obj) => obj,
        None => {
            let rows = read_matrix(Path::new(&o.objective), "objective")?;
            let rows = rows.iter().map(|r| r.iter().map(convert).collect()).collect();
            let obj = LinearObjective::from_rows(rows).map_err(|e| CliError::field("objective", e))?;
            if obj.categories() != j {
                return Err(CliError::field("objective", Error::CategoryMismatch { left: obj.categories(), right: j }));
            }
            obj
        }
    };
    if let Some(path) = &o.point {
        let rows = read_matrix(path, "point")?;
        let joint = JointDistribution::from_rows(rows.iter().map(|r| r.iter().map(convert).collect()).collect())
            .map_err(|e| CliError::field("point", e))?;
        let err = joint.margin_error(&pair);
        if err > T::sum_tolerance() {
            return Err(CliError::field(
                "point",
                Error::InvalidJoint(format!("margins differ from --p1/--p0 by {}", err.to_f64())),
            ));
        }
        let value = objective.evaluate(&joint).map_err(|e| CliError::field("point", e))?;
        let rows = joint.to_f64().rows();
        return Ok((json!({ "mode": "evaluate", "value": value.to_f64(), "matrix": rows, "margin_error": err.to_f64() }), rows));
    }
    let sol = optimize(&pair, &objective, o.sense)?;
    let rows = sol.argmatrix.to_f64().rows();
    let sense = match o.sense {
        Sense::Min => "min",
        Sense::Max => "max",
    };
    Ok((json!({ "mode": "optimize", "sense": sense, "value": sol.value.to_f64(), "argmatrix": rows }), rows))
}

pub fn cmd_oracle(o: &OracleArgs, format: Format) -> CliResult<String> {
    let (mut v, rows) = if o.marginals.exact { oracle_in(o, |r: &Rational| r.clone())? } else { oracle_in(o, to_f64)? };
    if format == Format::Csv {
        return Ok(matrix_csv(&rows));
    }
    v["objective"] = json!(o.objective);
    Ok(render(&v, format))
}
