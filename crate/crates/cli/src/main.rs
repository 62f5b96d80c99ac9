//! `helly`: solve Helly-center instances, build counterexamples, run Maurey
//! sampling and bound sweeps.
//!
//! Exit codes: 0 on success, 1 on a hard failure (invalid input, a failed
//! verification, or a certified bound violation in a sweep), 2 on usage
//! errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use helly_core::caratheodory::{brute_force_best_tuple, maurey_bound, maurey_select, Selection};
use helly_core::counterexample::{transfer_counterexample, Transfer};
use helly_core::helly::{minimize_max_distance, verify_kwise_intersection, verify_lower_bound, KwiseReport};
use helly_core::sweep::{symmetric_cloud, DEFAULT_CLOUD_SIZE};
use helly_core::{
    build_linf_counterexample, Embedding, Error, ExperimentConfig, Exponent, HellyOutcome, Instance,
    LowerCertificate, MaureyResult, NormSpec, PointCloud, SolveOptions, SweepMode, TypeTable,
};

#[derive(Parser, Debug)]
#[command(name = "helly", version, about = "No-dimensional Helly centers, certificates and sweeps in l_p spaces")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Solver tolerance.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; CSV is available for sweeps only.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimize the (colorful) max-distance function of an instance file.
    Solve {
        /// Instance JSON: {"space": {"p", "dim"}, "colors": [[{"vertices": ...}]]}.
        instance: PathBuf,
    },
    /// Emit the l_∞^{2k} counterexample family with its certificate, or its
    /// transfer through an embedding.
    Counterexample {
        #[arg(long)]
        k: usize,
        /// Embedding JSON: {"space", "columns", "eta"}.
        #[arg(long)]
        embed: Option<PathBuf>,
        /// Slack subtracted from the transferred bound.
        #[arg(long, default_value_t = 1e-9)]
        delta: f64,
    },
    /// Approximate the origin by an average of k cloud points.
    Maurey {
        /// Cloud JSON {"points", "weights"}; a random symmetric cloud is used when absent.
        cloud: Option<PathBuf>,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "2")]
        p: Exponent,
        /// Dimension of a generated cloud.
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Size of a generated cloud.
        #[arg(long, default_value_t = DEFAULT_CLOUD_SIZE)]
        m: usize,
        #[arg(long, default_value_t = 64)]
        trials: u64,
        /// Use the deterministic greedy trace instead of sampling.
        #[arg(long)]
        greedy: bool,
        /// Also report the exhaustive optimum over all k-multisets.
        #[arg(long)]
        exact: bool,
    },
    /// Run a bound sweep over a range of k.
    Sweep {
        /// helly_sweep, maurey_sweep or counterexample_check.
        #[arg(long, value_parser = parse_mode)]
        mode: SweepMode,
        #[arg(long, default_value = "2")]
        p: Exponent,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        /// Comma-separated values of k.
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        /// Instances per k.
        #[arg(long, default_value_t = 1)]
        instances: usize,
        /// Sampler trials per instance.
        #[arg(long, default_value_t = 64)]
        trials: u64,
        /// Per-color set counts (last one repeats), or the cloud size for Maurey sweeps.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Sample this many rainbow tuples instead of enumerating them all.
        #[arg(long)]
        sampled_tuples: Option<usize>,
        /// The constant C in T_2(l_∞^n) <= C √(ln n).
        #[arg(long)]
        linf_constant: Option<f64>,
    },
    /// Check a lower-bound certificate (and optionally k-wise intersection)
    /// against a one-color instance.
    Verify {
        instance: PathBuf,
        /// Certificate JSON {"functionals", "bound"}; defaults to the instance's own.
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Also check that every k sets meet in the unit ball.
        #[arg(long)]
        k: Option<usize>,
    },
}

fn parse_mode(s: &str) -> Result<SweepMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Hard(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Hard(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Serialize)]
struct SolveReport {
    #[serde(flatten)]
    outcome: HellyOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower_certificate: Option<LowerCertificate>,
}

#[derive(Serialize)]
struct MaureyReport {
    result: MaureyResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<MaureyResult>,
}

#[derive(Serialize)]
struct VerifyReport {
    valid: bool,
    bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kwise: Option<KwiseReport>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Hard(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    let c = &cli.common;
    if c.format == Format::Csv && !matches!(cli.command, Command::Sweep { .. }) {
        return Err(Failure::Usage("--format csv applies to sweep only".into()));
    }
    if !(c.tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", c.tol)));
    }
    match cli.command {
        Command::Solve { instance } => solve(c, &instance),
        Command::Counterexample { k, embed, delta } => counterexample(c, k, embed.as_deref(), delta),
        Command::Maurey { cloud, k, p, dim, m, trials, greedy, exact } => {
            let space = match &cloud {
                Some(path) => {
                    let cloud: PointCloud = parse_json(path)?;
                    let dim = cloud.points.first().map_or(0, Vec::len);
                    (NormSpec::new(dim, p)?, Some(cloud))
                }
                None => (NormSpec::new(dim, p)?, None),
            };
            maurey(c, space, k, m, trials, greedy, exact)
        }
        Command::Sweep { mode, p, dim, k, instances, trials, sizes, sampled_tuples, linf_constant } => {
            let config = ExperimentConfig {
                mode,
                space: NormSpec::new(dim, p)?,
                ks: k,
                sizes,
                instances,
                trials,
                seed: c.seed,
                tol: c.tol,
                sampled_tuples,
                linf_constant,
            };
            config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            sweep(c, &config)
        }
        Command::Verify { instance, certificate, k } => verify(c, &instance, certificate.as_deref(), k),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Hard(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| Failure::Hard(format!("{}: at {}: {}", path.display(), e.path(), e.inner())))
}

fn load_instance(path: &Path) -> CliResult<Instance> {
    Instance::from_json(&read(path)?).map_err(|e| Failure::Hard(format!("{}: {e}", path.display())))
}

fn emit(c: &Common, text: &str) -> CliResult<()> {
    let io = |e: io::Error| Failure::Hard(format!("writing output: {e}"));
    match &c.out {
        Some(path) => fs::write(path, text).map_err(io),
        None => io::stdout().write_all(text.as_bytes()).map_err(io),
    }
}

fn emit_json<T: Serialize>(c: &Common, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Hard(e.to_string()))?;
    text.push('\n');
    emit(c, &text)
}

fn solve(c: &Common, path: &Path) -> CliResult<u8> {
    let inst = load_instance(path)?;
    let opts = SolveOptions { tol: c.tol, seed: c.seed, ..SolveOptions::default() };
    let report = if inst.colors.len() == 1 {
        let family = inst.family()?;
        let outcome = minimize_max_distance(&family, &opts)?;
        let lower_certificate = outcome.lower_certificate(&family);
        SolveReport { outcome, lower_certificate }
    } else {
        SolveReport { outcome: minimize_max_distance(&inst.colorful()?, &opts)?, lower_certificate: None }
    };
    if !report.outcome.certified {
        eprintln!("warning: outcome not certified (residual {:e})", report.outcome.certificate_residual);
    }
    emit_json(c, &report)?;
    Ok(0)
}

fn counterexample(c: &Common, k: usize, embed: Option<&Path>, delta: f64) -> CliResult<u8> {
    let inst = match embed {
        None => {
            let ce = build_linf_counterexample(k)?;
            Instance {
                witnesses: Some(ce.witnesses.clone()),
                k: Some(k),
                a_k: Some(ce.a_k),
                certificate: Some(ce.lower_certificate()),
                ..Instance::from_family(&ce.family)
            }
        }
        Some(path) => {
            let emb: Embedding = parse_json(path)?;
            let Transfer { family, certificate, witnesses, a_k, .. } = transfer_counterexample(k, &emb, delta)?;
            Instance {
                witnesses: Some(witnesses),
                k: Some(k),
                a_k: Some(a_k),
                certificate: Some(certificate),
                ..Instance::from_family(&family)
            }
        }
    };
    emit(c, &(inst.to_json() + "\n"))?;
    Ok(0)
}

fn maurey(
    c: &Common,
    (space, cloud): (NormSpec, Option<PointCloud>),
    k: usize,
    m: usize,
    trials: u64,
    greedy: bool,
    exact: bool,
) -> CliResult<u8> {
    let cloud = match cloud {
        Some(cl) => cl,
        None => symmetric_cloud(&space, m, c.seed)?,
    };
    let strategy = if greedy { Selection::Greedy } else { Selection::Sampling };
    let result = maurey_select(&cloud, k, trials, c.seed, &space, strategy)?;
    let bound = TypeTable::default().best(&space).ok().map(|t| maurey_bound(&t, k));
    let exact = if exact { Some(brute_force_best_tuple(&cloud.points, k, &space)?) } else { None };
    emit_json(c, &MaureyReport { result, bound, exact })?;
    Ok(0)
}

fn sweep(c: &Common, config: &ExperimentConfig) -> CliResult<u8> {
    let report = helly_core::run_sweep(config)?;
    let mut buf = Vec::new();
    match c.format {
        Format::Csv => report.write_csv(&mut buf)?,
        Format::Json => {
            report.write_json(&mut buf)?;
            buf.push(b'\n');
        }
    }
    emit(c, &String::from_utf8(buf).expect("UTF-8 output"))?;
    let uncertified = report.uncertified();
    if uncertified > 0 {
        eprintln!("warning: {uncertified} row(s) exceed the bound without a certificate");
    }
    let failures = report.failures();
    if failures > 0 {
        eprintln!("error: {failures} row(s) violate the bound");
    }
    Ok(report.exit_code() as u8)
}

fn verify(c: &Common, path: &Path, cert: Option<&Path>, k: Option<usize>) -> CliResult<u8> {
    let inst = load_instance(path)?;
    let family = inst.family()?;
    let cert: LowerCertificate = match cert {
        Some(p) => parse_json(p)?,
        None => inst
            .certificate
            .clone()
            .ok_or_else(|| Failure::Usage("instance has no certificate; pass --certificate".into()))?,
    };
    let valid = verify_lower_bound(&family, &cert, c.tol)?;
    let kwise = match k {
        Some(k) => Some(verify_kwise_intersection(&family, k, c.tol, inst.witnesses.as_ref())?),
        None => None,
    };
    let ok = valid && kwise.as_ref().is_none_or(KwiseReport::passed);
    emit_json(c, &VerifyReport { valid, bound: cert.bound, kwise })?;
    Ok(if ok { 0 } else { 1 })
}
