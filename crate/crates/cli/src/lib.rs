//! Argument parsing, dispatch and report emission for the `rapidmix` binary.
//!
//! Exit codes: 0 success, 2 usage, 3 missing or invalid input, 4 domain error.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use rapidmix::chain::Distribution;
use rapidmix::coupling::{meet_failure_curve, path_contraction_factor, path_coupling_bound, verify_marginals, PathMetricGraph};
use rapidmix::diagnostics::{cheeger_from, global_conductance, spectral_summary, StateSet};
use rapidmix::geometry::{run_walk, volume_estimate, LogConcaveDensity, WalkConfig, WalkKind};
use rapidmix::io::{parse_body, parse_chain, parse_coupling, parse_ising, parse_matrix, parse_world, CouplingInput};
use rapidmix::ising::{log_partition_exact, partition_exact, sample_subgraphs, subgraph_total_weight, SAMPLE_ORACLE_GUARD};
use rapidmix::matching::{permanent_estimate, permanent_exact, PERMANENT_GUARD};
use rapidmix::{Error, RandomSource};

/// Seed used when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Conductance,
    Mix,
    Couple,
    Permanent,
    Ising,
    Subgraph,
    Volume,
    Walk,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Conductance => "conductance",
            Command::Mix => "mix",
            Command::Couple => "couple",
            Command::Permanent => "permanent",
            Command::Ising => "ising",
            Command::Subgraph => "subgraph",
            Command::Volume => "volume",
            Command::Walk => "walk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(CliError::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    pub input_path: PathBuf,
    pub seed: u64,
    pub steps: Option<usize>,
    pub trials: Option<usize>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub kind: Option<WalkKind>,
    pub rates: Option<Vec<f64>>,
}

#[derive(Debug)]
pub enum CliError {
    /// `--help` or `--version` output.
    Help(String),
    UnknownCommand(String),
    BadFlag(String),
    MissingInput(String),
    InvalidInput(Error),
    Domain(Error),
    UnsupportedFormat(String),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Help(_) => 0,
            CliError::UnknownCommand(_) | CliError::BadFlag(_) | CliError::UnsupportedFormat(_) => 2,
            CliError::MissingInput(_) | CliError::InvalidInput(_) => 3,
            CliError::Domain(_) => 4,
            CliError::Output(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Help(s) => write!(f, "{s}"),
            CliError::UnknownCommand(s) => write!(f, "unknown command: {s}"),
            CliError::BadFlag(s) => write!(f, "{s}"),
            CliError::MissingInput(s) => write!(f, "missing input: {s}"),
            CliError::InvalidInput(e) => write!(f, "invalid input: {e}"),
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::UnsupportedFormat(s) => write!(f, "unsupported format: {s}"),
            CliError::Output(s) => write!(f, "cannot write output: {s}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Parser)]
#[command(name = "rapidmix", version, about = "Exact diagnostics and samplers for rapidly mixing Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Spectrum of a reversible chain
    Spectrum(Common),
    /// Exhaustive conductance of a chain
    Conductance(Common),
    /// Exact mixing time of a chain
    Mix(Common),
    /// Coupling of a chain, or of the hypercube walk
    Couple(Common),
    /// Permanent of a dense 0-1 matrix by sampling
    Permanent(Common),
    /// Exact Ising partition function
    Ising(Common),
    /// Subgraph-world sampler
    Subgraph(Common),
    /// Volume of a convex body
    Volume(Common),
    /// Random walk in a convex body
    Walk(WalkArgs),
}

#[derive(Args)]
struct Common {
    /// Input JSON file
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value = "json")]
    format: String,
    /// Write the report here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WalkArgs {
    #[command(flatten)]
    common: Common,
    /// ball, coordinate or metropolis
    #[arg(long, default_value = "ball")]
    kind: String,
    /// Rates of the density exp(-rates . x) for the metropolis walk
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rates: Option<Vec<f64>>,
}

pub fn parse_args<I, S>(argv: I) -> Result<RunSpec, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    use clap::error::ErrorKind;
    let argv = std::iter::once(std::ffi::OsString::from("rapidmix")).chain(argv.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            CliError::Help(e.to_string())
        }
        ErrorKind::InvalidSubcommand => CliError::UnknownCommand(e.to_string()),
        _ => CliError::BadFlag(e.to_string()),
    })?;
    let (command, common, kind, rates) = match cli.command {
        Sub::Spectrum(c) => (Command::Spectrum, c, None, None),
        Sub::Conductance(c) => (Command::Conductance, c, None, None),
        Sub::Mix(c) => (Command::Mix, c, None, None),
        Sub::Couple(c) => (Command::Couple, c, None, None),
        Sub::Permanent(c) => (Command::Permanent, c, None, None),
        Sub::Ising(c) => (Command::Ising, c, None, None),
        Sub::Subgraph(c) => (Command::Subgraph, c, None, None),
        Sub::Volume(c) => (Command::Volume, c, None, None),
        Sub::Walk(w) => {
            let kind = match w.kind.as_str() {
                "ball" => WalkKind::Ball,
                "coordinate" => WalkKind::Coordinate,
                "metropolis" => WalkKind::Metropolis,
                other => return Err(CliError::BadFlag(format!("unknown walk kind {other:?}"))),
            };
            (Command::Walk, w.common, Some(kind), w.rates)
        }
    };
    let format = Format::parse(&common.format).map_err(|_| CliError::BadFlag(format!("unsupported format {:?}", common.format)))?;
    for (name, v) in [("--eps", common.eps), ("--delta", common.delta)] {
        if let Some(x) = v {
            if !(x > 0.0 && x.is_finite()) {
                return Err(CliError::BadFlag(format!("{name} must be positive, got {x}")));
            }
        }
    }
    let input_path = common
        .input
        .ok_or_else(|| CliError::MissingInput(format!("{} needs an input file", command.name())))?;
    if !input_path.is_file() {
        return Err(CliError::MissingInput(format!("{} is not a readable file", input_path.display())));
    }
    Ok(RunSpec {
        command,
        input_path,
        seed: common.seed,
        steps: common.steps,
        trials: common.trials,
        eps: common.eps,
        delta: common.delta,
        format,
        output: common.output,
        kind,
        rates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    /// SHA-256 of the input file, hex.
    pub input_digest: String,
    pub seed: u64,
    pub results: Value,
}

impl Report {
    pub fn to_value(&self) -> Value {
        json!({
            "command": self.command,
            "input_digest": self.input_digest,
            "results": self.results,
            "seed": self.seed,
        })
    }
}

/// Structured report for a failed run.
pub fn error_report(spec: &RunSpec, digest: &str, err: &Error) -> Value {
    json!({
        "command": spec.command.name(),
        "error": { "kind": err.kind(), "message": err.to_string() },
        "input_digest": digest,
        "seed": spec.seed,
    })
}

pub fn input_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes).as_slice())
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

/// Read the input, run one pipeline and collect its results. Errors while
/// reading the input are `InvalidInput`, errors afterwards are `Domain`.
pub fn run_command(spec: &RunSpec) -> Result<Report, CliError> {
    let bytes = std::fs::read(&spec.input_path).map_err(|e| CliError::MissingInput(format!("{}: {e}", spec.input_path.display())))?;
    let digest = input_digest(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| CliError::InvalidInput(Error::Parse(e.to_string())))?;
    let mut rng = RandomSource::new(spec.seed);
    let results = dispatch(spec, &text, &mut rng)?;
    Ok(Report {
        command: spec.command.name().to_string(),
        input_digest: digest,
        seed: spec.seed,
        results,
    })
}

fn input<T>(r: rapidmix::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::InvalidInput)
}

fn domain<T>(r: rapidmix::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Domain)
}

fn dispatch(spec: &RunSpec, text: &str, rng: &mut RandomSource) -> Result<Value, CliError> {
    match spec.command {
        Command::Spectrum => {
            let chain = input(parse_chain(text))?;
            let s = domain(spectral_summary(&chain))?;
            Ok(json!({
                "n_states": chain.n_states(),
                "lambda2": s.lambda2,
                "lambdaN": s.lambda_n,
                "second_largest_modulus": s.second_largest_modulus(),
                "pi0": s.pi0,
                "eigenvalues": s.eigenvalues,
            }))
        }
        Command::Conductance => {
            let chain = input(parse_chain(text))?;
            let profile = domain(global_conductance(&chain))?;
            let argmin = StateSet::from_mask(chain.n_states(), profile.argmin);
            let pi = domain(Distribution::new(profile.pi.clone()))?;
            let lambda2 = if chain.is_lazy() { spectral_summary(&chain).ok().map(|s| s.lambda2) } else { None };
            Ok(json!({
                "n_states": chain.n_states(),
                "phi": profile.global_phi,
                "argmin": argmin.indices(),
                "argmin_mass": argmin.mass(&pi),
                "pi0": profile.pi0(),
                "cheeger": lambda2.map(|l| to_value(&cheeger_from(profile.global_phi, l))),
            }))
        }
        Command::Mix => {
            let chain = input(parse_chain(text))?;
            let tau = domain(chain.mixing_time_exact())?;
            let pi = domain(chain.stationary())?;
            let horizon = spec.steps.unwrap_or(tau);
            let curve = domain(chain.worst_case_distances(&pi, horizon))?;
            Ok(json!({
                "n_states": chain.n_states(),
                "mixing_time": tau,
                "stationary": pi.as_slice(),
                "worst_distance": curve,
            }))
        }
        Command::Couple => {
            let input_rule = input(parse_coupling(text))?;
            let rule = input_rule.rule();
            let n = rule.chain().n_states();
            let (x0, y0) = match &input_rule {
                CouplingInput::Hypercube(h) => (0, (1usize << h.dimension()) - 1),
                CouplingInput::Chain(_) => (0, n - 1),
            };
            let horizon = spec.steps.unwrap_or(50);
            let trials = spec.trials.unwrap_or(10_000);
            let marginals = verify_marginals(rule, trials.min(20_000), 0.02, rng);
            let curve = meet_failure_curve(rule, x0, y0, horizon, trials, rng);
            let metric = domain(PathMetricGraph::from_chain(rule.chain()))?;
            let contraction = path_contraction_factor(rule, &metric, trials, rng);
            let bound: Option<Vec<f64>> = (0..=horizon as u32)
                .map(|t| path_coupling_bound(metric.diameter(), contraction.beta_pc, t).ok())
                .collect();
            Ok(json!({
                "n_states": n,
                "start": [x0, y0],
                "trials": trials,
                "marginals_ok": marginals.passed,
                "marginal_deviation": marginals.max_deviation,
                "meet_failure": curve.iter().map(|e| e.p_hat).collect::<Vec<_>>(),
                "meet_failure_se": curve.iter().map(|e| e.se).collect::<Vec<_>>(),
                "beta_pc": contraction.beta_pc,
                "beta_exact": contraction.exact,
                "diameter": metric.diameter(),
                "path_coupling_bound": bound,
            }))
        }
        Command::Permanent => {
            let a = input(parse_matrix(text))?;
            let eps = spec.eps.unwrap_or(0.1);
            let est = domain(permanent_estimate(&a, eps, rng))?;
            let exact = if a.len() <= PERMANENT_GUARD { permanent_exact(&a).ok() } else { None };
            Ok(json!({
                "n": a.len(),
                "eps": eps,
                "estimate": est.estimate,
                "exact": exact,
                "rel_error": exact.map(|e| (est.estimate - e).abs() / e),
                "samples_used": est.samples_used,
                "steps_used": est.steps_used,
                "levels": to_value(&est.levels),
            }))
        }
        Command::Ising => {
            let p = input(parse_ising(text))?;
            let z = domain(partition_exact(&p))?;
            let log_z = domain(log_partition_exact(&p))?;
            Ok(json!({
                "n": p.n(),
                "beta": p.beta(),
                "B": p.field(),
                "Z": z,
                "log_Z": log_z,
            }))
        }
        Command::Subgraph => {
            let world = input(parse_world(text))?;
            let steps = spec.steps.unwrap_or(1);
            let count = spec.trials.unwrap_or(100_000);
            let r = domain(sample_subgraphs(&world, steps, count, rng))?;
            let mean_edges = if count == 0 {
                0.0
            } else {
                r.samples.iter().map(|s| s.len()).sum::<usize>() as f64 / count as f64
            };
            let total = if world.edge_count() <= SAMPLE_ORACLE_GUARD { subgraph_total_weight(&world).ok() } else { None };
            Ok(json!({
                "edges": world.edge_count(),
                "samples": r.samples.len(),
                "steps": r.steps,
                "mean_edges": mean_edges,
                "l1_vs_exact": r.l1_vs_exact,
                "total_weight": total,
            }))
        }
        Command::Volume => {
            let body = input(parse_body(text))?;
            let eps = spec.eps.unwrap_or(0.1);
            let v = domain(volume_estimate(&body, eps, rng))?;
            Ok(json!({
                "dimension": body.dim(),
                "eps": eps,
                "estimate": v.estimate,
                "base_volume": v.base_volume,
                "phases": to_value(&v.phases),
                "steps_used": v.steps_used,
            }))
        }
        Command::Walk => {
            let body = input(parse_body(text))?;
            let kind = spec.kind.unwrap_or(WalkKind::Ball);
            let density = match &spec.rates {
                Some(r) => LogConcaveDensity::Exponential { rates: r.clone() },
                None => LogConcaveDensity::Uniform,
            };
            if let LogConcaveDensity::Exponential { rates } = &density {
                if rates.len() != body.dim() {
                    return Err(CliError::Domain(Error::DimensionMismatch {
                        expected: body.dim(),
                        got: rates.len(),
                    }));
                }
            }
            let config = WalkConfig {
                delta: spec.delta.unwrap_or(0.1),
                steps: spec.steps.unwrap_or(1000),
                start: None,
            };
            let r = domain(run_walk(&body, &config, kind, Some(&density), rng))?;
            Ok(json!({
                "kind": to_value(&r.kind),
                "steps": config.steps,
                "delta": config.delta,
                "acceptance_rate": r.acceptance_rate,
                "mean_displacement": r.mean_displacement,
                "final": r.trajectory.last(),
                "histograms": r.histograms,
            }))
        }
    }
}

/// JSON with sorted keys, or a two-line CSV of the top-level numeric results.
pub fn emit_report(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.to_value()).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut header = vec!["command".to_string(), "seed".to_string(), "input_digest".to_string()];
            let mut row = vec![report.command.clone(), report.seed.to_string(), report.input_digest.clone()];
            if let Value::Object(map) = &report.results {
                for (k, v) in map {
                    if let Value::Number(x) = v {
                        header.push(k.clone());
                        row.push(x.to_string());
                    } else if let Value::Bool(b) = v {
                        header.push(k.clone());
                        row.push(b.to_string());
                    }
                }
            }
            format!("{}\n{}\n", header.join(","), row.join(","))
        }
    }
}

/// [`emit_report`] with the format given by name.
pub fn emit_report_named(report: &Report, format: &str) -> Result<String, CliError> {
    Ok(emit_report(report, Format::parse(format)?))
}

/// Keys of a JSON object in emission order.
pub fn object_keys(v: &Value) -> Vec<String> {
    match v {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}
