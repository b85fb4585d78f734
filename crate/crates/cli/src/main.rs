//! Deterministic command-line runs of the library's experiments: identical
//! inputs and seed produce byte-identical artifacts. Numeric CSV cells use
//! a fixed 12-significant-digit scientific format; JSON outputs carry the
//! command, crate version, and seed.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use unmeasure::altmin::{altmin_accelerated, altmin_cyclic, AltMinTrace, MomentConstraint};
use unmeasure::counts::{bernoulli_vector_distribution, thin_law_experiment};
use unmeasure::divergence::kl_extended;
use unmeasure::dutchbook::{decide_verified, PayoffSystem};
use unmeasure::gof::{
    classical_qq, mach_zehnder_preset, poisson_qq, poisson_qq_cutoff,
    poisson_two_sample_divergence, QQTable,
};
use unmeasure::orthopoly::{charlier, inequality_scan, krawtchouk};
use unmeasure::projection::project;
use unmeasure::{
    ConstraintSet64, CountDistribution64, Error as CoreError, ExtendedReal64, FDivergenceSpec64,
    Measure64,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const SEED_ENV: &str = "UNMEASURE_SEED";

#[derive(Parser)]
#[command(
    name = "unmeasure",
    version,
    about = "Information-theoretic computations over unnormalized measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extended divergence D(p‖q) of two measures
    Divergence(DivergenceArgs),
    /// Binomial thinning of a count distribution
    Thin(ThinArgs),
    /// Thin-convolve experiment against the product-Poisson limit
    ThinLaw(ThinLawArgs),
    /// Exact G² staircase under fixed-n sampling
    GofClassical(GofClassicalArgs),
    /// Exact G² staircase under Poissonized sampling
    GofPoisson(GofPoissonArgs),
    /// f-divergence projection onto a constraint set
    Project(ProjectArgs),
    /// Cyclic projection onto mean-value constraints
    Altmin(AltminArgs),
    /// Seeded scan of the quadratic projection inequality
    IneqScan(IneqScanArgs),
    /// Arbitrage-or-measure dichotomy for a payoff matrix
    Dutchbook(DutchbookArgs),
    /// Two-detector interference preset over the Poissonized test
    MachZehnder(MachZehnderArgs),
}

#[derive(Args)]
struct DivergenceArgs {
    /// Measure JSON (inline `{"weights":[...]}` or a file path)
    #[arg(long)]
    p: String,
    #[arg(long)]
    q: String,
    /// Optional JSON artifact path (the report also prints to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThinArgs {
    /// CountDistribution JSON file
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThinLawArgs {
    /// Base-vector probabilities of the Bernoulli vector, e.g. "0.5,0.5"
    #[arg(long)]
    bernoulli: String,
    /// Comma-separated list of convolution powers
    #[arg(long, default_value = "1,2,4,8,16,32,64,128,256")]
    n_list: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GofClassicalArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GofPoissonArgs {
    /// Total intensity λ+μ under the symmetric null
    #[arg(long)]
    intensity: f64,
    /// Mixture cutoff; computed from the 1e-12 tail rule when omitted
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecChoice {
    Kl,
    ReverseKl,
}

#[derive(Args)]
struct ProjectArgs {
    /// Reference measure JSON (inline or file path)
    #[arg(long)]
    q: String,
    /// ConstraintSet JSON file
    #[arg(long)]
    constraints: PathBuf,
    #[arg(long, value_enum, default_value = "kl")]
    spec: SpecChoice,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantChoice {
    Normalized,
    Unnormalized,
    Orthogonalized,
}

#[derive(Args)]
struct AltminArgs {
    #[arg(long)]
    q: String,
    /// ConstraintSet JSON file (equalities only, probability: true)
    #[arg(long)]
    constraints: PathBuf,
    #[arg(long, value_enum, default_value = "normalized")]
    variant: VariantChoice,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_cycles: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseChoice {
    Poisson,
    Binomial,
}

#[derive(Args)]
struct IneqScanArgs {
    #[arg(long, value_enum)]
    base: BaseChoice,
    /// Poisson intensity (poisson base)
    #[arg(long)]
    lambda: Option<f64>,
    /// Trial count (binomial base)
    #[arg(long)]
    n: Option<usize>,
    /// Success probability (binomial base)
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 1)]
    degree: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Falls back to the UNMEASURE_SEED environment variable, then 0
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DutchbookArgs {
    /// Headerless CSV: one payoff function per row
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Blocked,
    Unblocked,
}

#[derive(Args)]
struct MachZehnderArgs {
    /// Per-detector intensity in the blocked scenario; source intensity
    /// otherwise
    #[arg(long)]
    intensity: f64,
    #[arg(long, value_enum, default_value = "blocked")]
    scenario: Scenario,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Domain(CoreError),
    Io(String),
    Input(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Domain(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::Io(e) | CliError::Input(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse(); // clap exits with code 2 on usage errors
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match &e {
                CliError::Domain(_) => "domain",
                CliError::Io(_) => "io",
                CliError::Input(_) => "input",
            };
            eprintln!("{}", json!({ "error": e.to_string(), "kind": kind }));
            ExitCode::from(1)
        }
    }
}

fn seed_or_env(seed: Option<u64>) -> u64 {
    seed.or_else(|| {
        std::env::var(SEED_ENV)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
    })
    .unwrap_or(0)
}

/// Fixed 12-significant-digit scientific formatting for CSV cells.
fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}

fn read_file(path: &PathBuf) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &PathBuf, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_measure(arg: &str) -> CliResult<Measure64> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read_file(&PathBuf::from(arg))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("measure JSON: {e}")))
}

fn parse_f64_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Input(format!("`{t}`: {e}")))
        })
        .collect()
}

fn parse_usize_list(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Input(format!("`{t}`: {e}")))
        })
        .collect()
}

fn stamped(command: &str, seed: u64, extra: Value) -> Value {
    let mut base = json!({
        "command": command,
        "version": VERSION,
        "seed": seed,
    });
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn emit(report: &Value, out: Option<&PathBuf>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Io(e.to_string()))?;
    if let Some(path) = out {
        write_file(path, &(text.clone() + "\n"))?;
    }
    println!("{text}");
    Ok(())
}

fn qq_csv(table: &QQTable<f64>) -> String {
    let mut csv = String::from("g2,cdf_left,cdf_right,chi2_cdf\n");
    for row in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig(row.g2),
            fmt_sig(row.cdf_left),
            fmt_sig(row.cdf_right),
            fmt_sig(row.chi2_cdf)
        ));
    }
    csv
}

fn trace_csv(trace: &AltMinTrace<f64>) -> String {
    let mut csv = String::from("cycle,divergence,max_residual,total_mass\n");
    for (i, c) in trace.cycles.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            fmt_sig(c.divergence),
            fmt_sig(c.max_residual),
            fmt_sig(c.total_mass)
        ));
    }
    csv
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Divergence(args) => {
            let p = parse_measure(&args.p)?;
            let q = parse_measure(&args.q)?;
            let value = match kl_extended(&p, &q)? {
                ExtendedReal64::Finite(v) => json!(v),
                ExtendedReal64::PlusInfinity => json!("inf"),
            };
            let report = stamped("divergence", 0, json!({ "value": value }));
            emit(&report, args.out.as_ref())
        }
        Command::Thin(args) => {
            let dist: CountDistribution64 = serde_json::from_str(&read_file(&args.dist)?)
                .map_err(|e| CliError::Input(format!("distribution JSON: {e}")))?;
            let thinned = dist.thin(args.alpha)?;
            let artifact = serde_json::to_string_pretty(&thinned)
                .map_err(|e| CliError::Io(e.to_string()))?;
            write_file(&args.out, &(artifact + "\n"))?;
            let report = stamped(
                "thin",
                0,
                json!({
                    "alpha": args.alpha,
                    "tail_mass": thinned.tail_mass(),
                    "out": args.out.display().to_string(),
                }),
            );
            emit(&report, None)
        }
        Command::ThinLaw(args) => {
            let probs = parse_f64_list(&args.bernoulli)?;
            let lambda = Measure64::new(probs, None)?;
            let p = bernoulli_vector_distribution(&lambda)?;
            let n_list = parse_usize_list(&args.n_list)?;
            let report = thin_law_experiment(&p, &lambda, &n_list)?;
            let mut csv = String::from("n,divergence,tv,entropy\n");
            for row in &report.rows {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    row.n,
                    fmt_sig(row.divergence),
                    fmt_sig(row.tv),
                    fmt_sig(row.entropy)
                ));
            }
            write_file(&args.out, &csv)?;
            let summary = stamped(
                "thin-law",
                0,
                json!({
                    "h_poisson": report.h_poisson,
                    "mean_preserved": report.mean_preserved,
                    "max_mean_error": report.max_mean_error,
                    "out": args.out.display().to_string(),
                }),
            );
            emit(&summary, None)
        }
        Command::GofClassical(args) => {
            let table = classical_qq::<f64>(args.n)?;
            write_file(&args.out, &qq_csv(&table))?;
            let report = stamped(
                "gof-classical",
                0,
                json!({
                    "n": args.n,
                    "gap": table.uniformity_gap(),
                    "out": args.out.display().to_string(),
                }),
            );
            emit(&report, None)
        }
        Command::GofPoisson(args) => {
            let cutoff = match args.cutoff {
                Some(c) => c,
                None => poisson_qq_cutoff(args.intensity)?,
            };
            let table = poisson_qq(args.intensity, cutoff)?;
            write_file(&args.out, &qq_csv(&table))?;
            let report = stamped(
                "gof-poisson",
                0,
                json!({
                    "intensity": args.intensity,
                    "cutoff": cutoff,
                    "gap": table.uniformity_gap(),
                    "out": args.out.display().to_string(),
                }),
            );
            emit(&report, None)
        }
        Command::Project(args) => {
            let q = parse_measure(&args.q)?;
            let cset: ConstraintSet64 = serde_json::from_str(&read_file(&args.constraints)?)
                .map_err(|e| CliError::Input(format!("constraint JSON: {e}")))?;
            let spec = match args.spec {
                SpecChoice::Kl => FDivergenceSpec64::kl(),
                SpecChoice::ReverseKl => FDivergenceSpec64::reverse_kl(),
            };
            let result = project(&q, &cset, &spec, args.tol)?;
            let report = stamped(
                "project",
                0,
                json!({
                    "spec": spec.name(),
                    "tol": args.tol,
                    "result": result,
                }),
            );
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Io(e.to_string()))?;
            write_file(&args.out, &(text + "\n"))?;
            emit(
                &stamped(
                    "project",
                    0,
                    json!({
                        "value": result.value,
                        "converged": result.converged,
                        "out": args.out.display().to_string(),
                    }),
                ),
                None,
            )
        }
        Command::Altmin(args) => {
            let q = parse_measure(&args.q)?;
            let cset: ConstraintSet64 = serde_json::from_str(&read_file(&args.constraints)?)
                .map_err(|e| CliError::Input(format!("constraint JSON: {e}")))?;
            if !cset.inequalities().is_empty() {
                return Err(CliError::Input(
                    "the cyclic solver takes equality constraints only".into(),
                ));
            }
            if !cset.require_probability() {
                return Err(CliError::Input(
                    "the cyclic solver always includes normalization; set \"probability\": true"
                        .into(),
                ));
            }
            let constraints: Vec<MomentConstraint<f64>> = cset
                .equalities()
                .iter()
                .map(|c| MomentConstraint::new(c.g.clone(), c.target))
                .collect();
            let trace = match args.variant {
                VariantChoice::Normalized => {
                    altmin_cyclic(&q, &constraints, true, args.tol, args.max_cycles)?
                }
                VariantChoice::Unnormalized => {
                    altmin_cyclic(&q, &constraints, false, args.tol, args.max_cycles)?
                }
                VariantChoice::Orthogonalized => {
                    altmin_accelerated(&q, &constraints, args.tol, args.max_cycles)?
                }
            };
            write_file(&args.out, &trace_csv(&trace))?;
            let report = stamped(
                "altmin",
                0,
                json!({
                    "variant": trace.variant.label(),
                    "cycles_to_tol": trace.cycles_to_tol,
                    "converged": trace.converged,
                    "fixed_point": trace.fixed_point(),
                    "out": args.out.display().to_string(),
                }),
            );
            emit(&report, None)
        }
        Command::IneqScan(args) => {
            let seed = seed_or_env(args.seed);
            let poly = match args.base {
                BaseChoice::Poisson => {
                    let lambda = args.lambda.ok_or_else(|| {
                        CliError::Input("--lambda is required for the poisson base".into())
                    })?;
                    charlier(lambda, args.degree)?
                }
                BaseChoice::Binomial => {
                    let n = args.n.ok_or_else(|| {
                        CliError::Input("--n is required for the binomial base".into())
                    })?;
                    let p = args.p.ok_or_else(|| {
                        CliError::Input("--p is required for the binomial base".into())
                    })?;
                    krawtchouk(n, p, args.degree)?
                }
            };
            let q = poly.base.measure()?;
            let report = inequality_scan(&q, &poly, args.epsilon, args.samples, seed)?;
            let wrapped = stamped("ineq-scan", seed, json!({ "report": report }));
            let text = serde_json::to_string_pretty(&wrapped)
                .map_err(|e| CliError::Io(e.to_string()))?;
            write_file(&args.out, &(text + "\n"))?;
            emit(
                &stamped(
                    "ineq-scan",
                    seed,
                    json!({
                        "min_slack": report.min_slack,
                        "accepted": report.accepted,
                        "clean": report.clean(),
                        "out": args.out.display().to_string(),
                    }),
                ),
                None,
            )
        }
        Command::Dutchbook(args) => {
            let text = read_file(&args.matrix)?;
            let mut rows = Vec::new();
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                rows.push(parse_f64_list(line)?);
            }
            let system = PayoffSystem::new(rows)?;
            let cert = decide_verified(&system, args.tol)?;
            let report = stamped("dutchbook", 0, json!({ "certificate": cert }));
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Io(e.to_string()))?;
            write_file(&args.out, &(text + "\n"))?;
            emit(
                &stamped(
                    "dutchbook",
                    0,
                    json!({
                        "margin": cert.verification_margin,
                        "out": args.out.display().to_string(),
                    }),
                ),
                None,
            )
        }
        Command::MachZehnder(args) => {
            let blocked = matches!(args.scenario, Scenario::Blocked);
            let preset = mach_zehnder_preset(blocked, args.intensity)?;
            let cutoff = poisson_qq_cutoff(preset.total_intensity)?;
            let table = poisson_qq(preset.total_intensity, cutoff)?;
            write_file(&args.out, &qq_csv(&table))?;
            // evidence carried by the scenario's expected observation
            let l = preset.detector1_intensity.round() as usize;
            let m = preset.detector2_intensity.round() as usize;
            let expected_divergence = poisson_two_sample_divergence::<f64>(l, m)?;
            let report = stamped(
                "mach-zehnder",
                0,
                json!({
                    "scenario": if blocked { "blocked" } else { "unblocked" },
                    "detector1_intensity": preset.detector1_intensity,
                    "detector2_intensity": preset.detector2_intensity,
                    "total_intensity": preset.total_intensity,
                    "gap": table.uniformity_gap(),
                    "expected_observation": [l, m],
                    "divergence_at_expected_observation": expected_divergence,
                    "out": args.out.display().to_string(),
                }),
            );
            emit(&report, None)
        }
    }
}
