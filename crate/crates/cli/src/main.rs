//! `fass` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or file access error, 2 infeasible input,
//! 3 format error, 4 internal invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fass_core::baselines::{randomized, revenue_max, BaselineError};
use fass_core::bench_metrics::{
    growth_exponent, payment_deviation, pricing_sweep, timing_run, write_sweep_csv,
    write_timing_csv, Algorithm, BenchError, SweepConfig, TimingConfig,
};
use fass_core::fass_engine::{run_fass, write_trace_csv, FassConfig, FassError};
use fass_core::model::{check_feasible, payment_vector, total_revenue, AssignmentPlan, ModelError};
use fass_core::oracle::{brute_force_mmf, OracleError};
use fass_core::scenario_io::{
    generate_scenario, load_qos_matrix, load_scenario, plan_to_csv, synthetic_qos_matrix,
    write_atomic, GenParams, IoError, ScenarioFile,
};

#[derive(Parser)]
#[command(name = "fass", version, about = "Max-min fair service selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Fass,
    Revmax,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario file and write the plan
    Solve {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "fass")]
        algo: Algo,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Quantization step in money units
        #[arg(long, default_value_t = fass_core::lex_transform::DEFAULT_STEP)]
        step: f64,
        /// Plan CSV; printed to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-round trace CSV (fass only)
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare FASS against exhaustive search on a small scenario
    OracleCheck {
        scenario: PathBuf,
        #[arg(long, default_value_t = fass_core::lex_transform::DEFAULT_STEP)]
        step: f64,
    },
    /// Deviation and revenue per pricing level
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        /// `A..B` or a comma list
        #[arg(long, default_value = "1..8")]
        levels: String,
        #[arg(long, default_value_t = 20)]
        scenarios: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Randomized draws averaged per scenario
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 9)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        pool: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wall time of FASS and the IP reference over LP sizes
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "450,900,1800,2700,3600,4500")]
        ladder: String,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a scenario file from a response-time matrix
    Gen {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 9)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        pool: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 1.0)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic response-time matrix
    Dataset {
        #[arg(long, default_value_t = 339)]
        rows: usize,
        #[arg(long, default_value_t = 500)]
        cols: usize,
        #[arg(long, default_value_t = 0.05)]
        missing: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

const USAGE: u8 = 1;
const INFEASIBLE: u8 = 2;
const FORMAT: u8 = 3;
const INVARIANT: u8 = 4;

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match &e {
            IoError::File { .. } | IoError::InvalidParameter(_) => USAGE,
            IoError::MatrixTooSmall(_) | IoError::RetriesExhausted(_) => INFEASIBLE,
            _ => FORMAT,
        };
        Failure::new(code, e)
    }
}

impl From<FassError> for Failure {
    fn from(e: FassError) -> Self {
        let code = match &e {
            FassError::Infeasible | FassError::RoundInfeasible { .. } => INFEASIBLE,
            _ => INVARIANT,
        };
        Failure::new(code, e)
    }
}

impl From<BaselineError> for Failure {
    fn from(e: BaselineError) -> Self {
        let code = match &e {
            BaselineError::Infeasible | BaselineError::RestartsExhausted(_) => INFEASIBLE,
            _ => INVARIANT,
        };
        Failure::new(code, e)
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io(e) => e.into(),
            BenchError::Fass(e) => e.into(),
            BenchError::Baseline(e) => e.into(),
            BenchError::Config(_) => Failure::new(USAGE, e),
            BenchError::NoScenario(..) => Failure::new(INFEASIBLE, e),
            other => Failure::new(INVARIANT, other),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::new(INVARIANT, e)
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        let code = match e {
            OracleError::NoFeasiblePlan => INFEASIBLE,
            OracleError::CapExceeded(_) => USAGE,
            OracleError::Model(_) => INVARIANT,
        };
        Failure::new(code, e)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn fass_config(step: f64) -> Result<FassConfig, Failure> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Failure::new(USAGE, format!("invalid --step {step}")));
    }
    Ok(FassConfig {
        step,
        ..FassConfig::default()
    })
}

fn format_vector(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(","))
}

fn solve(
    path: &Path,
    algo: Algo,
    seed: u64,
    step: f64,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<(), Failure> {
    let file = load_scenario(path)?;
    let scenario = &file.scenario;
    let config = fass_config(step)?;
    let plan: AssignmentPlan = match algo {
        Algo::Fass => {
            let outcome = run_fass(scenario, &config)?;
            if let Some(t) = trace {
                let mut buf = Vec::new();
                write_trace_csv(&outcome.trace, &mut buf)
                    .map_err(|e| Failure::new(INVARIANT, e))?;
                write_file(t, &String::from_utf8_lossy(&buf))?;
            }
            outcome.plan
        }
        Algo::Revmax => revenue_max(scenario)?,
        Algo::Random => randomized(scenario, seed)?,
    };
    let report = check_feasible(&plan, scenario);
    if !report.is_feasible() {
        return Err(Failure::new(INVARIANT, format!("plan infeasible: {report:?}")));
    }
    let csv = plan_to_csv(&plan, scenario)?;
    match out {
        Some(p) => {
            write_file(p, &csv)?;
            let pv = payment_vector(&plan, scenario)?;
            println!(
                "sorted={} revenue={} deviation={}",
                format_vector(&pv.sorted),
                total_revenue(&plan, scenario)?,
                payment_deviation(&pv).map_err(|e| Failure::new(INVARIANT, e))?
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn oracle_check(path: &Path, step: f64) -> Result<(), Failure> {
    let file = load_scenario(path)?;
    let scenario = &file.scenario;
    let outcome = run_fass(scenario, &fass_config(step)?)?;
    let oracle = brute_force_mmf(scenario)?;
    let tol = outcome
        .trace
        .rounds
        .iter()
        .map(|r| r.step)
        .fold(step, f64::max);
    let fass = &outcome.payments.sorted;
    let matches = fass
        .iter()
        .zip(&oracle.optimum_sorted)
        .all(|(a, b)| (a - b).abs() <= tol * (1.0 + 1e-9));
    if matches {
        println!("MATCH sorted={}", format_vector(fass));
        Ok(())
    } else {
        println!(
            "MISMATCH fass={} oracle={}",
            format_vector(fass),
            format_vector(&oracle.optimum_sorted)
        );
        Err(Failure::new(INVARIANT, "FASS result differs from the exhaustive optimum"))
    }
}

fn parse_levels(text: &str) -> Result<Vec<u32>, Failure> {
    let bad = || Failure::new(USAGE, format!("invalid --levels {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    parse_list(text).ok_or_else(bad)
}

fn parse_list<T: std::str::FromStr>(text: &str) -> Option<Vec<T>> {
    text.split(',').map(|t| t.trim().parse().ok()).collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve {
            scenario,
            algo,
            seed,
            step,
            out,
            trace,
        } => solve(&scenario, algo, seed, step, out.as_deref(), trace.as_deref()),
        Command::OracleCheck { scenario, step } => oracle_check(&scenario, step),
        Command::Sweep {
            dataset,
            levels,
            scenarios,
            seed,
            runs,
            n,
            m,
            pool,
            density,
            out,
        } => {
            let matrix = load_qos_matrix(&dataset)?;
            let config = SweepConfig {
                levels: parse_levels(&levels)?,
                scenarios_per_level: scenarios,
                requests: n,
                providers: m,
                pool_size: pool,
                density,
                seed,
                random_runs: runs,
                ..SweepConfig::default()
            };
            let rows = pricing_sweep(&matrix, &config)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            write_file(&out, &String::from_utf8_lossy(&buf))?;
            for r in &rows {
                println!(
                    "level {} {:<12} deviation {:.4} revenue {:.4} spread {:.4}",
                    r.level,
                    r.algorithm.name(),
                    r.mean_deviation,
                    r.mean_revenue,
                    r.mean_spread
                );
            }
            Ok(())
        }
        Command::Bench {
            dataset,
            ladder,
            reps,
            seed,
            out,
        } => {
            let matrix = load_qos_matrix(&dataset)?;
            let ladder = parse_list(&ladder)
                .ok_or_else(|| Failure::new(USAGE, format!("invalid --ladder {ladder:?}")))?;
            let config = TimingConfig {
                ladder,
                reps,
                seed,
                ..TimingConfig::default()
            };
            let rows = timing_run(&matrix, &config)?;
            let mut buf = Vec::new();
            write_timing_csv(&rows, &mut buf)?;
            write_file(&out, &String::from_utf8_lossy(&buf))?;
            for algo in &config.algorithms {
                let points: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.algorithm == *algo)
                    .map(|r| (r.vars as f64, r.mean_ms))
                    .collect();
                let last = points.last().map_or(0.0, |p| p.1);
                match growth_exponent(&points) {
                    Some(k) => println!("{}: largest {last:.1} ms, growth exponent {k:.2}", algo.name()),
                    None => println!("{}: largest {last:.1} ms", algo.name()),
                }
            }
            let fass_wins = rows
                .iter()
                .filter(|r| r.algorithm == Algorithm::Fass)
                .zip(rows.iter().filter(|r| r.algorithm == Algorithm::Ip))
                .filter(|(f, i)| f.mean_ms < i.mean_ms)
                .count();
            println!("fass faster than ip at {fass_wins} of {} sizes", config.ladder.len());
            Ok(())
        }
        Command::Gen {
            dataset,
            n,
            m,
            pool,
            density,
            level,
            seed,
            out,
        } => {
            let matrix = load_qos_matrix(&dataset)?;
            let params = GenParams {
                requests: n,
                providers: m,
                pool_size: pool,
                density,
                pricing_level: level,
                seed,
                ..GenParams::default()
            };
            let (scenario, mut meta) = generate_scenario(&matrix, &params)?;
            meta.source = Some(dataset.display().to_string());
            let file = ScenarioFile {
                scenario,
                metadata: Some(meta),
            };
            write_file(&out, &file.to_json())
        }
        Command::Dataset {
            rows,
            cols,
            missing,
            seed,
            out,
        } => {
            if !(0.0..1.0).contains(&missing) {
                return Err(Failure::new(USAGE, format!("invalid --missing {missing}")));
            }
            write_file(&out, &synthetic_qos_matrix(rows, cols, missing, seed).to_text())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
