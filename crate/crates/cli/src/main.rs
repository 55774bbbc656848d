//! `chowla`: command-line driver for the energy, sieve, central-limit and
//! fluctuation experiments.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when a budget
//! would be exceeded, 1 for internal failures. Errors are printed to stderr
//! as a single JSON object.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use chowla_core::clt_audit::{mcleish_audit, run_clt_on, CltConfig, CltError, MIN_REPLICATES};
use chowla_core::energy::{
    bp_bound, energy_constrained_lpf, energy_cross, energy_with, estimated_pairs, exponent_fit,
    paired_prime_counts, require_clt_admissible, EnergyConfig, EnergyError, LpfMode, ProgressionRange,
    DEFAULT_PAIR_BUDGET,
};
use chowla_core::fluctuations::{build_grid, build_prime_sets, run_fluct_on, FluctConfig, FluctError};
use chowla_core::polynomial::classify;
use chowla_core::sieve::{
    check_budget, default_lpf_scale, factor_values_with, lpf_density, SieveConfig, SieveError, DEFAULT_MAX_ROWS,
};
use chowla_core::{IntPolynomial, PolyError, Rational};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use output::{emit, Artifact, Meta};

#[derive(Parser, Debug)]
#[command(name = "chowla", version, about = "Multiplicative energy and random multiplicative function experiments on polynomial values")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Maximum number of factor-table rows.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_ROWS)]
    max_rows: u64,
    /// Validate the configuration and budgets without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Output file: `.json` or `.csv`. Relative paths resolve against
    /// $CHOWLA_OUT_DIR when set. Without it JSON goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify a polynomial: pure powers, rational roots, shifted-even center.
    Classify(PolyArg),
    /// Factor P(n) for n = 1..N and measure large-prime-factor density.
    Sieve(SieveArgs),
    /// Exact multiplicative energy of P([N]_{a,q}).
    Energy(EnergyArgs),
    /// Monte-Carlo central limit statistics.
    Clt(CltArgs),
    /// Multi-scale prime sets and split-sum fluctuations.
    Fluct(FluctArgs),
    /// Exact martingale-condition sums over a grid of N.
    Audit(AuditArgs),
}

#[derive(Args, Debug, Serialize)]
struct PolyArg {
    /// Polynomial: expression like "x^2+1" or coefficients "1,0,1" (lowest first).
    #[arg(long)]
    poly: String,
}

#[derive(Args, Debug, Serialize)]
struct SieveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    poly: PolyArg,
    #[arg(long)]
    n: u64,
    /// Scale s in P⁺(P(n)) >= s n ln n; default 1/(2d²).
    #[arg(long, value_parser = parse_rational)]
    #[serde(serialize_with = "ser_opt_rational")]
    lpf_scale: Option<Rational>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum LpfArg {
    SamePrime,
    Paired,
}

#[derive(Args, Debug, Serialize)]
struct EnergyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    poly: PolyArg,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = 1)]
    q: u64,
    #[arg(long, default_value_t = 0)]
    a: u64,
    /// Comma-separated N values for the exponent fit.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<u64>>,
    /// Count in hash-partitioned passes when the pair budget is exceeded.
    #[arg(long)]
    chunked: bool,
    /// Maximum stored pair products per pass.
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pair_budget: u64,
    /// Second polynomial for the cross count P1(x)P1(y) = P2(X)P2(Y).
    #[arg(long)]
    cross_poly: Option<String>,
    /// Largest-prime-constrained count over [1, N].
    #[arg(long, value_enum)]
    lpf_mode: Option<LpfArg>,
}

#[derive(Args, Debug, Serialize)]
struct CltArgs {
    #[command(flatten)]
    #[serde(flatten)]
    poly: PolyArg,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    reps: usize,
    /// Seed, decimal or 0x-prefixed hex.
    #[arg(long, value_parser = parse_seed)]
    seed: u64,
    /// Include every sample in the output.
    #[arg(long)]
    dump_samples: bool,
    /// Skip the exact fourth moment.
    #[arg(long)]
    no_exact_moments: bool,
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pair_budget: u64,
}

#[derive(Args, Debug, Serialize)]
struct FluctArgs {
    #[command(flatten)]
    #[serde(flatten)]
    poly: PolyArg,
    /// Base scale X.
    #[arg(long)]
    x: u64,
    /// Number of scales.
    #[arg(long)]
    k: usize,
    /// Grid ratio, integer or fraction like 5/2.
    #[arg(long, value_parser = parse_rational)]
    #[serde(serialize_with = "ser_rational")]
    ratio: Rational,
    #[arg(long)]
    reps: usize,
    #[arg(long, value_parser = parse_seed)]
    seed: u64,
    /// Freeze f(p) off the selected primes and resample only on them.
    #[arg(long)]
    conditional: bool,
}

#[derive(Args, Debug, Serialize)]
struct AuditArgs {
    #[command(flatten)]
    #[serde(flatten)]
    poly: PolyArg,
    /// Comma-separated N values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<u64>,
    #[arg(long, value_parser = parse_rational)]
    #[serde(serialize_with = "ser_opt_rational")]
    lpf_scale: Option<Rational>,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    chowla_core::serde_exact::rational(r, s)
}

fn ser_opt_rational<S: serde::Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    chowla_core::serde_exact::opt_rational(r, s)
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|e| format!("seed must be decimal or 0x-prefixed hex: {e}"))
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    s.trim().parse::<Rational>().map_err(|e| format!("expected an integer or fraction p/q: {e}"))
}

#[derive(Debug)]
enum CliError {
    Config { field: Option<&'static str>, message: String },
    Budget(String),
    Internal(String),
}

impl CliError {
    fn config(field: &'static str, message: impl Into<String>) -> Self {
        CliError::Config {
            field: Some(field),
            message: message.into(),
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Budget(_) => 3,
            CliError::Internal(_) => 1,
        }
    }

    fn to_json(&self) -> Value {
        let (kind, field, message) = match self {
            CliError::Config { field, message } => ("config", *field, message),
            CliError::Budget(m) => ("budget", None, m),
            CliError::Internal(m) => ("internal", None, m),
        };
        json!({ "error": { "kind": kind, "field": field, "message": message, "exit_code": self.code() } })
    }
}

impl From<PolyError> for CliError {
    fn from(e: PolyError) -> Self {
        CliError::config("poly", e.to_string())
    }
}

impl From<SieveError> for CliError {
    fn from(e: SieveError) -> Self {
        match e {
            SieveError::EmptyRange => CliError::config("n", e.to_string()),
            SieveError::Budget { .. } | SieveError::ValueTooLarge { .. } => CliError::Budget(e.to_string()),
        }
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::Budget { .. } => CliError::Budget(e.to_string()),
            EnergyError::BadProgression { .. } => CliError::config("q", e.to_string()),
            EnergyError::EmptyRange { .. } => CliError::config("n", e.to_string()),
            EnergyError::ExcludedForm(_) | EnergyError::Poly(_) => CliError::config("poly", e.to_string()),
            EnergyError::BpDomain { .. } => CliError::config("n", e.to_string()),
        }
    }
}

impl From<CltError> for CliError {
    fn from(e: CltError) -> Self {
        match e {
            CltError::TooFewReplicates(_) => CliError::config("reps", e.to_string()),
            CltError::EmptyRange | CltError::GridBeyondTable { .. } => CliError::config("n", e.to_string()),
            CltError::Energy(e) => e.into(),
            CltError::Sieve(e) => e.into(),
        }
    }
}

impl From<FluctError> for CliError {
    fn from(e: FluctError) -> Self {
        match e {
            FluctError::Budget { .. } => CliError::Budget(e.to_string()),
            FluctError::Grid(_) => CliError::config("grid", e.to_string()),
            FluctError::NotAdmissible(_) => CliError::config("poly", e.to_string()),
            FluctError::TooFewReplicates(_) => CliError::config("reps", e.to_string()),
            FluctError::Poly(e) => e.into(),
            FluctError::Sieve(e) => e.into(),
            FluctError::ScaleIndex { .. } | FluctError::TableTooSmall { .. } => CliError::Internal(e.to_string()),
        }
    }
}

fn to_value(v: &impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))
}

fn parse_poly(arg: &PolyArg) -> Result<IntPolynomial, CliError> {
    Ok(arg.poly.parse()?)
}

struct Outcome {
    result: Value,
    extras: Map<String, Value>,
    csv_rows: Vec<Value>,
}

impl Outcome {
    fn single(result: Value) -> Self {
        Outcome {
            csv_rows: vec![result.clone()],
            result,
            extras: Map::new(),
        }
    }
}

fn dry_run_outcome(checks: Value) -> Outcome {
    Outcome::single(json!({ "dry_run": true, "valid": true, "checks": checks }))
}

fn run_classify(args: &PolyArg) -> Result<Outcome, CliError> {
    let p = parse_poly(args)?;
    let class = classify(&p)?;
    let mut result = to_value(&class)?;
    result
        .as_object_mut()
        .expect("struct")
        .insert("polynomial".into(), to_value(&p)?);
    Ok(Outcome::single(result))
}

fn run_sieve(args: &SieveArgs, sieve: &SieveConfig, dry: bool) -> Result<Outcome, CliError> {
    let p = parse_poly(&args.poly)?;
    check_budget(&p, args.n, sieve)?;
    if dry {
        return Ok(dry_run_outcome(json!({ "rows": args.n })));
    }
    let table = factor_values_with(&p, args.n, sieve)?;
    let scale = args.lpf_scale.clone().unwrap_or_else(|| default_lpf_scale(p.degree()));
    let density = lpf_density(&table, &scale);
    let mut extras = Map::new();
    extras.insert("lpf_density".into(), to_value(&density)?);
    Ok(Outcome {
        csv_rows: table.rows().iter().map(to_value).collect::<Result<_, _>>()?,
        result: table.to_json(),
        extras,
    })
}

fn run_energy(args: &EnergyArgs, sieve: &SieveConfig, dry: bool) -> Result<Outcome, CliError> {
    let p = parse_poly(&args.poly)?;
    require_clt_admissible(&p)?;
    let config = EnergyConfig {
        pair_budget: args.pair_budget,
        chunked: args.chunked,
    };
    if let Some(grid) = &args.grid {
        if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("grid", "grid must be a nonempty ascending list"));
        }
        if args.q != 1 || args.a != 0 {
            return Err(CliError::config("grid", "the exponent fit runs over [N]; omit --q/--a"));
        }
        let budgets: Vec<u64> = grid.iter().map(|&n| estimated_pairs(&ProgressionRange::full(n))).collect();
        if !config.chunked {
            if let Some(&pairs) = budgets.iter().find(|&&b| b > config.pair_budget) {
                return Err(EnergyError::Budget { pairs, limit: config.pair_budget }.into());
            }
        }
        if dry {
            return Ok(dry_run_outcome(json!({ "estimated_pairs": budgets })));
        }
        let fit = exponent_fit(&p, grid, &config)?;
        return Ok(Outcome {
            csv_rows: fit.points.iter().map(to_value).collect::<Result<_, _>>()?,
            result: to_value(&fit)?,
            extras: Map::new(),
        });
    }
    let n = args
        .n
        .ok_or_else(|| CliError::config("n", "either --n or --grid is required"))?;
    let range = ProgressionRange::new(n, args.q, args.a)?;
    if range.is_empty() {
        return Err(EnergyError::EmptyRange { n }.into());
    }
    let cross = args
        .cross_poly
        .as_deref()
        .map(|s| s.parse::<IntPolynomial>().map_err(|e| CliError::config("cross_poly", e.to_string())))
        .transpose()?;
    let pairs = estimated_pairs(&range);
    if pairs > config.pair_budget && !config.chunked {
        return Err(EnergyError::Budget { pairs, limit: config.pair_budget }.into());
    }
    if args.lpf_mode.is_some() {
        check_budget(&p, n, sieve)?;
    }
    if dry {
        return Ok(dry_run_outcome(json!({ "members": range.len(), "estimated_pairs": pairs })));
    }
    let report = energy_with(&p, &range, &config)?;
    let mut extras = Map::new();
    if let Some(p2) = &cross {
        extras.insert("cross".into(), json!({ "polynomial": p2, "count": energy_cross(&p, p2, &range, &config)? }));
    }
    if let Some(mode) = args.lpf_mode {
        let table = factor_values_with(&p, n, sieve)?;
        let value = match mode {
            LpfArg::SamePrime => json!({
                "mode": LpfMode::SamePrimeAllFour,
                "count": energy_constrained_lpf(&table, n, LpfMode::SamePrimeAllFour),
            }),
            LpfArg::Paired => json!({ "mode": LpfMode::PairedPrimes, "counts": paired_prime_counts(&table, n) }),
        };
        extras.insert("lpf_constrained".into(), value);
    }
    if let Ok(bp) = bp_bound(p.degree(), n) {
        extras.insert("bp_bound".into(), to_value(&bp)?);
    }
    let mut outcome = Outcome::single(to_value(&report)?);
    outcome.extras = extras;
    Ok(outcome)
}

fn run_clt_cmd(args: &CltArgs, sieve: &SieveConfig, dry: bool) -> Result<Outcome, CliError> {
    let p = parse_poly(&args.poly)?;
    require_clt_admissible(&p)?;
    if args.reps < MIN_REPLICATES {
        return Err(CltError::TooFewReplicates(args.reps).into());
    }
    check_budget(&p, args.n, sieve)?;
    let mut config = CltConfig::new(args.n, args.reps, args.seed);
    config.exact_moments = !args.no_exact_moments;
    config.keep_samples = args.dump_samples;
    config.energy.pair_budget = args.pair_budget;
    config.sieve = sieve.clone();
    let pairs = estimated_pairs(&ProgressionRange::full(args.n));
    if config.exact_moments && pairs > args.pair_budget {
        return Err(EnergyError::Budget { pairs, limit: args.pair_budget }.into());
    }
    if dry {
        return Ok(dry_run_outcome(json!({ "rows": args.n, "replicates": args.reps })));
    }
    let table = factor_values_with(&p, args.n, sieve)?;
    let report = run_clt_on(&table, &config)?;
    let csv_rows = match &report.samples {
        Some(samples) => samples
            .iter()
            .enumerate()
            .map(|(r, z)| json!({ "replicate": r, "re": z.re, "im": z.im }))
            .collect(),
        None => vec![to_value(&report.stats)?],
    };
    Ok(Outcome {
        result: to_value(&report)?,
        extras: Map::new(),
        csv_rows,
    })
}

fn run_fluct_cmd(args: &FluctArgs, sieve: &SieveConfig, dry: bool) -> Result<Outcome, CliError> {
    let p = parse_poly(&args.poly)?;
    if !classify(&p)?.fluct_admissible {
        return Err(FluctError::NotAdmissible(p.to_string()).into());
    }
    if args.reps < 2 {
        return Err(FluctError::TooFewReplicates(args.reps).into());
    }
    let grid = build_grid(args.x, args.k, &args.ratio, sieve.max_rows)?;
    check_budget(&p, grid.top(), sieve)?;
    if dry {
        return Ok(dry_run_outcome(json!({ "grid": grid.points, "replicates": args.reps })));
    }
    let table = factor_values_with(&p, grid.top(), sieve)?;
    let family = build_prime_sets(&table, &grid)?;
    let config = FluctConfig {
        x: args.x,
        k: args.k,
        ratio: args.ratio.clone(),
        reps: args.reps,
        seed: args.seed,
        conditional: args.conditional,
        sieve: sieve.clone(),
    };
    let report = run_fluct_on(&table, grid, family, &config)?;
    Ok(Outcome {
        csv_rows: report.scales.iter().map(to_value).collect::<Result<_, _>>()?,
        result: to_value(&report)?,
        extras: Map::new(),
    })
}

fn run_audit(args: &AuditArgs, sieve: &SieveConfig, dry: bool) -> Result<Outcome, CliError> {
    let p = parse_poly(&args.poly)?;
    let top = *args
        .grid
        .iter()
        .max()
        .ok_or_else(|| CliError::config("grid", "grid must be nonempty"))?;
    if args.grid.contains(&0) {
        return Err(CliError::config("grid", "grid values must be at least 1"));
    }
    check_budget(&p, top, sieve)?;
    if dry {
        return Ok(dry_run_outcome(json!({ "rows": top })));
    }
    let table = factor_values_with(&p, top, sieve)?;
    let audit = mcleish_audit(&table, &args.grid)?;
    let scale = args.lpf_scale.clone().unwrap_or_else(|| default_lpf_scale(p.degree()));
    let mut extras = Map::new();
    extras.insert("lpf_density".into(), to_value(&lpf_density(&table, &scale))?);
    extras.insert("negative_values".into(), json!(table.has_negative_values()));
    extras.insert("zero_indices".into(), json!(table.zero_indices()));
    Ok(Outcome {
        csv_rows: audit.rows.iter().map(to_value).collect::<Result<_, _>>()?,
        result: to_value(&audit)?,
        extras,
    })
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let sieve = SieveConfig { max_rows: cli.max_rows };
    let dry = cli.dry_run;
    let (name, config, outcome) = match &cli.command {
        Command::Classify(a) => ("classify", to_value(a)?, run_classify(a)),
        Command::Sieve(a) => ("sieve", to_value(a)?, run_sieve(a, &sieve, dry)),
        Command::Energy(a) => ("energy", to_value(a)?, run_energy(a, &sieve, dry)),
        Command::Clt(a) => ("clt", to_value(a)?, run_clt_cmd(a, &sieve, dry)),
        Command::Fluct(a) => ("fluct", to_value(a)?, run_fluct_cmd(a, &sieve, dry)),
        Command::Audit(a) => ("audit", to_value(a)?, run_audit(a, &sieve, dry)),
    };
    let outcome = outcome?;
    let mut config = config;
    if let Value::Object(map) = &mut config {
        map.insert("max_rows".into(), json!(cli.max_rows));
        map.insert("dry_run".into(), json!(dry));
    }
    let meta = Meta {
        tool: "chowla",
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        config,
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let artifact = Artifact::new(meta, outcome.result, outcome.extras, outcome.csv_rows);
    emit(&artifact, cli.out.as_deref()).map_err(|e| CliError::Internal(format!("writing output: {e}")))?;
    Ok(())
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::from(err.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(&CliError::Config {
                field: None,
                message: e.render().to_string().trim().to_string(),
            });
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return fail(&CliError::config("threads", "thread count must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            return fail(&CliError::Internal(e.to_string()));
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
