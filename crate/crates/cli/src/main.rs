//! `shorpp`: factor numbers with a simulated order-finding oracle and run the
//! census and sweep experiments.
//!
//! Exit status: 0 when factors were found (or an experiment completed), 2
//! when a factoring attempt failed, 1 on usage or validation errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use num_traits::{Num, ToPrimitive};
use serde_json::json;

use shorpp::experiments::{
    composite_sweep, order_census, predicted_census, safe_semiprime_sweep, BaseChoice,
    CompositeSweepConfig, SafeSweepConfig, Strategy, SweepMode,
};
use shorpp::factoring::{
    factor_safe_semiprime, improved_run, is_screened_composite, sfa_run, FactorResult,
    FailureReason, ImprovedConfig, SfaRun,
};
use shorpp::numtheory::{factorize, is_prime, lambda_factorization, Factorization, Natural};
use shorpp::primes::{cached_safe_primes, make_safe_semiprime, safe_primes};
use shorpp::qofa::{task_rng, OracleMode, Qofa, SimulatedQofa};
use shorpp::Error;

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 271_828;

/// Environment variable naming the safe-prime cache directory.
const CACHE_DIR_ENV: &str = "SHORPP_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(name = "shorpp", version, about = "Classical post-processing for Shor's algorithm, with a simulated order-finding oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Factor N with a simulated oracle.
    Factor(FactorArgs),
    /// Count the units of each multiplicative order modulo N.
    Census(CensusArgs),
    /// Single-call success probabilities over all safe semiprimes below a bound.
    SweepSafe(SweepSafeArgs),
    /// Plain versus improved post-processing over a range of odd composites.
    SweepComposite(SweepCompositeArgs),
    /// List safe primes up to a bound.
    SafePrimes(SafePrimesArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FactorStrategy {
    /// One oracle call with a = 2, for safe semiprimes.
    Safe,
    /// Shor's loop with the standard post-processing.
    Sfa,
    /// Shor's loop with the improved post-processing.
    Improved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Sampled,
    Perfect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Base {
    Fixed2,
    Uniform,
}

#[derive(clap::Args, Debug)]
struct FactorArgs {
    /// Number to factor, decimal or 0x-prefixed hexadecimal.
    n: String,
    #[arg(long, value_enum, default_value_t = FactorStrategy::Improved)]
    strategy: FactorStrategy,
    /// Oracle behaviour: sampled multipliers or always the true order.
    #[arg(long, value_enum, default_value_t = Mode::Sampled)]
    mode: Mode,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Bases tried before giving up (sfa and improved).
    #[arg(long, default_value_t = 64)]
    max_iters: u64,
    /// Prime factors of N handed to the simulator, comma separated and with
    /// repetition; required above 2^64.
    #[arg(long, value_delimiter = ',')]
    oracle_primes: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(clap::Args, Debug)]
struct CensusArgs {
    n: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SweepSafeArgs {
    /// Largest safe prime used.
    #[arg(long)]
    bound: u64,
    #[arg(long, value_enum, default_value_t = Base::Fixed2)]
    base: Base,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Oracle calls per N in sampled mode; ignored in exact mode.
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SweepCompositeArgs {
    #[arg(long, default_value_t = 10)]
    lo: u64,
    #[arg(long)]
    hi: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Aggregate format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Aggregate destination (default stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-N record log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SafePrimesArgs {
    #[arg(long)]
    bound: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Cache directory; defaults to $SHORPP_CACHE_DIR, no cache if unset.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// `Ok(false)` means a factoring attempt ran and failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Factor(args) => cmd_factor(&args),
        Command::Census(args) => cmd_census(&args).map(|_| true),
        Command::SweepSafe(args) => cmd_sweep_safe(&args).map(|_| true),
        Command::SweepComposite(args) => cmd_sweep_composite(&args).map(|_| true),
        Command::SafePrimes(args) => cmd_safe_primes(&args).map(|_| true),
    }
}

fn parse_number(s: &str) -> Result<BigUint> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => BigUint::from_str_radix(hex, 16),
        None => BigUint::from_str_radix(s, 10),
    };
    let n = parsed.map_err(|_| anyhow!("cannot parse {s:?} as a positive integer"))?;
    if n == BigUint::from(0u8) {
        bail!("N must be positive");
    }
    Ok(n)
}

fn parse_u64(s: &str) -> Result<u64> {
    parse_number(s)?
        .to_u64()
        .ok_or_else(|| anyhow!("{s} does not fit in 64 bits"))
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&PathBuf>, value: &serde_json::Value) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn oracle_mode(mode: Mode, seed: u64) -> Result<OracleMode> {
    match mode {
        Mode::Sampled => Ok(OracleMode::Sampled { seed }),
        Mode::Perfect => Ok(OracleMode::Perfect),
        Mode::Exact => bail!("factor runs single oracle calls; use --mode sampled or perfect"),
    }
}

/// Factorization of `n` for the simulator, from `--oracle-primes` or by
/// factoring a 64-bit `n` directly.
fn simulator_factorization<T: Natural>(n: &T, primes: Option<&[String]>) -> Result<Factorization<T>> {
    match primes {
        Some(list) => {
            let mut entries: Vec<(T, u32)> = Vec::new();
            for s in list {
                let p = T::from_biguint(&parse_number(s)?)
                    .ok_or_else(|| anyhow!("{s} is too large"))?;
                if !is_prime(&p) {
                    bail!("oracle prime {p} is not prime");
                }
                match entries.iter_mut().find(|(q, _)| *q == p) {
                    Some((_, e)) => *e += 1,
                    None => entries.push((p, 1)),
                }
            }
            let f = Factorization::from_unsorted(entries)?;
            if &f.value()? != n {
                bail!("oracle primes multiply to {}, not {n}", f.value()?);
            }
            Ok(f)
        }
        None => {
            let small = n
                .to_u64()
                .ok_or_else(|| anyhow!("N above 2^64 needs --oracle-primes"))?;
            let f = factorize(small);
            let entries = f
                .entries()
                .iter()
                .map(|&(p, e)| (T::from_small(p), e))
                .collect();
            Ok(Factorization::new(entries)?)
        }
    }
}

struct Report<T> {
    result: FactorResult<T>,
    calls: u64,
    iterations: Option<u64>,
}

fn factor_generic<T: Natural>(n: T, args: &FactorArgs) -> Result<Report<T>> {
    let mode = oracle_mode(args.mode, args.seed)?;
    if args.strategy == FactorStrategy::Safe {
        if n.is_even() {
            bail!(Error::NotOdd(n.to_string()));
        }
        if n < T::from_small(5) {
            bail!("{n} is too small");
        }
        let f = simulator_factorization(&n, args.oracle_primes.as_deref())?;
        let mut oracle = SimulatedQofa::new(&f, mode)?;
        let result = factor_safe_semiprime(&n, &mut oracle)?;
        return Ok(Report {
            result,
            calls: oracle.calls(),
            iterations: None,
        });
    }
    if n < T::from_small(4) {
        bail!("{n} is too small");
    }
    if !is_screened_composite(&n) {
        return Ok(Report {
            result: FactorResult::Failure(FailureReason::NotApplicable),
            calls: 0,
            iterations: None,
        });
    }
    let f = simulator_factorization(&n, args.oracle_primes.as_deref())?;
    let mut oracle = SimulatedQofa::new(&f, mode)?;
    // bases come from a stream separate from the oracle's
    let mut rng = task_rng(args.seed, 1);
    let run = match args.strategy {
        FactorStrategy::Sfa => sfa_run(&n, &mut oracle, &mut rng, args.max_iters),
        _ => improved_run(&n, &mut oracle, &mut rng, args.max_iters, &ImprovedConfig::default()),
    };
    match run {
        Ok(SfaRun {
            result,
            qofa_calls,
            iterations,
        }) => Ok(Report {
            result,
            calls: qofa_calls,
            iterations: Some(iterations),
        }),
        Err(Error::IterationBudgetExceeded { calls, last, iterations }) => Ok(Report {
            result: FactorResult::Failure(last.unwrap_or(FailureReason::NotApplicable)),
            calls,
            iterations: Some(iterations),
        }),
        Err(e) => Err(e.into()),
    }
}

fn strategy_name(s: FactorStrategy) -> &'static str {
    match s {
        FactorStrategy::Safe => "safe",
        FactorStrategy::Sfa => "sfa",
        FactorStrategy::Improved => "improved",
    }
}

fn print_report<T: Natural>(n: &T, args: &FactorArgs, r: &Report<T>) -> Result<bool> {
    let mut out = io::stdout().lock();
    match args.format {
        Format::Json => {
            let (factors, reason) = match &r.result {
                FactorResult::Factors(a, b) => (json!([a.to_string(), b.to_string()]), json!(null)),
                FactorResult::Failure(reason) => (json!(null), json!(reason.as_str())),
            };
            let value = json!({
                "n": n.to_string(),
                "strategy": strategy_name(args.strategy),
                "success": r.result.is_success(),
                "factors": factors,
                "reason": reason,
                "qofa_calls": r.calls,
                "iterations": r.iterations,
                "seed": args.seed,
            });
            serde_json::to_writer_pretty(&mut out, &value)?;
            writeln!(out)?;
        }
        Format::Text | Format::Csv => {
            match &r.result {
                FactorResult::Factors(a, b) => writeln!(out, "factors {a} {b}")?,
                FactorResult::Failure(reason) => writeln!(out, "failure {reason}")?,
            }
            writeln!(out, "calls={}", r.calls)?;
        }
    }
    Ok(r.result.is_success())
}

fn cmd_factor(args: &FactorArgs) -> Result<bool> {
    let n = parse_number(&args.n)?;
    match n.to_u64() {
        Some(small) => {
            let report = factor_generic(small, args)?;
            print_report(&small, args, &report)
        }
        None => {
            let report = factor_generic(n.clone(), args)?;
            print_report(&n, args, &report)
        }
    }
}

fn cmd_census(args: &CensusArgs) -> Result<()> {
    let n = parse_u64(&args.n)?;
    if n < 3 {
        bail!("census needs an odd N >= 3");
    }
    let f = factorize(n);
    let lambda = lambda_factorization(&f)?;
    let rows = order_census(n, &lambda)?;
    // the closed form applies when N is a safe semiprime
    let predicted = match f.entries() {
        [(p1, 1), (p2, 1)] => make_safe_semiprime(*p1, *p2).ok().map(|ss| predicted_census(&ss)),
        _ => None,
    };
    let predicted_for = |order: u64| {
        predicted
            .as_ref()
            .map(|p| p.iter().find(|r| r.order == order).map_or(0, |r| r.count))
    };
    let total: u64 = rows.iter().map(|r| r.count).sum();
    let mut out = open_output(args.output.as_ref())?;
    match args.format {
        Format::Json => {
            let json_rows: Vec<_> = rows
                .iter()
                .map(|r| json!({"order": r.order, "count": r.count, "predicted": predicted_for(r.order)}))
                .collect();
            let matches = predicted
                .as_ref()
                .map(|p| rows.iter().zip(p).all(|(a, b)| a == b) && rows.len() == p.len());
            let value = json!({
                "n": n,
                "lambda": lambda.value()?,
                "total": total,
                "safe_semiprime": predicted.is_some(),
                "matches_prediction": matches,
                "rows": json_rows,
            });
            serde_json::to_writer_pretty(&mut out, &value)?;
            writeln!(out)?;
        }
        Format::Csv | Format::Text => {
            writeln!(out, "order,count,predicted")?;
            for r in &rows {
                let p = predicted_for(r.order).map(|c| c.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{}", r.order, r.count, p)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_sweep_safe(args: &SweepSafeArgs) -> Result<()> {
    let mode = match args.mode {
        Mode::Exact => SweepMode::Exact,
        Mode::Sampled => SweepMode::Sampled { trials: args.trials },
        Mode::Perfect => bail!("sweep-safe reports the perfect-oracle figures in every mode; use exact or sampled"),
    };
    let config = SafeSweepConfig {
        prime_bound: args.bound,
        base: match args.base {
            Base::Fixed2 => BaseChoice::Fixed2,
            Base::Uniform => BaseChoice::UniformRandom,
        },
        mode,
        seed: args.seed,
        workers: args.workers,
    };
    let report = safe_semiprime_sweep(&config)?;
    write_json(args.output.as_ref(), &report.to_json())
}

fn cmd_sweep_composite(args: &SweepCompositeArgs) -> Result<()> {
    if args.lo > args.hi {
        bail!("empty range: lo > hi");
    }
    let config = CompositeSweepConfig::new(args.lo, args.hi, args.seed, args.workers);
    let report = match &args.log {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut log = BufWriter::new(file);
            let report = composite_sweep(&config, Some(&mut log))?;
            log.flush()?;
            report
        }
        None => composite_sweep(&config, None)?,
    };
    match args.format {
        Format::Json => write_json(args.output.as_ref(), &report.to_json()),
        Format::Csv | Format::Text => {
            let mut out = open_output(args.output.as_ref())?;
            writeln!(out, "strategy,universe_size,successes,failures,failure_fraction")?;
            for s in Strategy::ALL {
                let st = report.stats(s);
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    s.as_str(),
                    st.universe_size,
                    st.successes,
                    st.failures(),
                    st.failure_fraction()
                )?;
            }
            out.flush()?;
            Ok(())
        }
    }
}

fn cmd_safe_primes(args: &SafePrimesArgs) -> Result<()> {
    let cache_dir = args
        .cache_dir
        .clone()
        .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from));
    let primes = match &cache_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            cached_safe_primes(dir, args.bound)?
        }
        None => safe_primes(args.bound)?,
    };
    let mut out = open_output(args.output.as_ref())?;
    match args.format {
        Format::Json => {
            let value = json!({"bound": args.bound, "count": primes.len(), "primes": primes});
            serde_json::to_writer_pretty(&mut out, &value)?;
            writeln!(out)?;
        }
        Format::Text | Format::Csv => {
            for p in &primes {
                writeln!(out, "{p}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
