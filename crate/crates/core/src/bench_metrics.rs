//! Fairness and revenue metrics, and the experiment drivers built on them:
//! a sweep over pricing levels and a timing run over LP sizes.

use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::baselines::{
    ip_branch_and_bound, randomized_mean, revenue_max, BaselineError, IpObjective,
};
use crate::fass_engine::{run_fass, FassConfig, FassError};
use crate::model::{payment_vector, total_revenue, ModelError, PaymentVector, Scenario};
use crate::scenario_io::{generate_scenario, GenParams, IoError, QosMatrix};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("payment vector is empty")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no feasible scenario for seed {0} after {1} attempts")]
    NoScenario(u64, usize),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Fass(#[from] FassError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Population standard deviation of the per-request payments.
pub fn payment_deviation(pv: &PaymentVector) -> Result<f64, BenchError> {
    std_dev(&pv.per_request)
}

pub fn std_dev(values: &[f64]) -> Result<f64, BenchError> {
    if values.is_empty() {
        return Err(BenchError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Highest minus lowest payment.
pub fn spread(pv: &PaymentVector) -> Result<f64, BenchError> {
    match (pv.sorted.first(), pv.sorted.last()) {
        (Some(lo), Some(hi)) => Ok(hi - lo),
        _ => Err(BenchError::Empty),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algorithm {
    Fass,
    RevenueMax,
    Randomized,
    Ip,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fass => "fass",
            Algorithm::RevenueMax => "revenue_max",
            Algorithm::Randomized => "randomized",
            Algorithm::Ip => "ip",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub levels: Vec<u32>,
    pub scenarios_per_level: usize,
    pub requests: usize,
    pub providers: usize,
    pub pool_size: usize,
    pub density: f64,
    pub base_share: f64,
    pub seed: u64,
    pub random_runs: usize,
    pub algorithms: Vec<Algorithm>,
    pub fass: FassConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            levels: (1..=8).collect(),
            scenarios_per_level: 20,
            requests: 10,
            providers: 9,
            pool_size: 10,
            density: 0.5,
            base_share: 0.6,
            seed: 1,
            random_runs: 1000,
            algorithms: vec![Algorithm::Fass, Algorithm::RevenueMax, Algorithm::Randomized],
            fass: FassConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub level: u32,
    pub algorithm: Algorithm,
    pub mean_deviation: f64,
    pub mean_revenue: f64,
    /// Mean max-minus-min payment gap; not part of the CSV.
    pub mean_spread: f64,
    pub n_scenarios: usize,
    pub seed: u64,
}

/// Seeds tried per scenario slot before the sweep gives up.
const SCENARIO_ATTEMPTS: usize = 100;

/// Generates the scenario for slot `k`, moving to the next seed when
/// generation fails. Every level uses the same seeds, so only prices differ.
fn sweep_scenario(
    matrix: &QosMatrix,
    config: &SweepConfig,
    level: u32,
    k: usize,
) -> Result<(Scenario, u64), BenchError> {
    let first = config.seed.wrapping_mul(1_000_003).wrapping_add(k as u64 * 7919);
    for attempt in 0..SCENARIO_ATTEMPTS as u64 {
        let seed = first.wrapping_add(attempt * 104_729);
        let params = GenParams {
            requests: config.requests,
            providers: config.providers,
            pool_size: config.pool_size,
            density: config.density,
            pricing_level: f64::from(level),
            base_share: config.base_share,
            seed,
        };
        match generate_scenario(matrix, &params) {
            Ok((s, _)) => return Ok((s, seed)),
            Err(IoError::RetriesExhausted(_)) => {
                log::warn!("seed {seed}: no feasible constraint sets, trying next seed");
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(BenchError::NoScenario(first, SCENARIO_ATTEMPTS))
}

#[derive(Default, Clone, Copy)]
struct Sums {
    deviation: f64,
    spread: f64,
    revenue: f64,
}

impl Sums {
    fn add(&mut self, deviation: f64, spread: f64, revenue: f64) {
        self.deviation += deviation;
        self.spread += spread;
        self.revenue += revenue;
    }
}

/// Mean deviation and revenue per (level, algorithm) over the scenario population.
pub fn pricing_sweep(matrix: &QosMatrix, config: &SweepConfig) -> Result<Vec<SweepRow>, BenchError> {
    if config.scenarios_per_level == 0 || config.random_runs == 0 {
        return Err(BenchError::Config("scenario and run counts must be positive".into()));
    }
    if let Some(bad) = config.levels.iter().find(|l| !(1..=8).contains(*l)) {
        return Err(BenchError::Config(format!("pricing level {bad} outside 1..=8")));
    }
    let mut rows = Vec::new();
    for &level in &config.levels {
        let mut sums = vec![Sums::default(); config.algorithms.len()];
        for k in 0..config.scenarios_per_level {
            let (scenario, seed) = sweep_scenario(matrix, config, level, k)?;
            for (slot, &algo) in config.algorithms.iter().enumerate() {
                let (dev, spr, rev) = match algo {
                    Algorithm::Randomized => {
                        let stats =
                            randomized_mean(&scenario, config.random_runs, seed.wrapping_mul(10_000))?;
                        (stats.mean_deviation, stats.mean_spread, stats.mean_revenue)
                    }
                    other => {
                        let plan = match other {
                            Algorithm::Fass => run_fass(&scenario, &config.fass)?.plan,
                            Algorithm::RevenueMax => revenue_max(&scenario)?,
                            _ => ip_branch_and_bound(&scenario, IpObjective::Xi)?.plan,
                        };
                        let pv = payment_vector(&plan, &scenario)?;
                        (
                            payment_deviation(&pv)?,
                            spread(&pv)?,
                            total_revenue(&plan, &scenario)?,
                        )
                    }
                };
                sums[slot].add(dev, spr, rev);
            }
        }
        let count = config.scenarios_per_level as f64;
        for (slot, &algo) in config.algorithms.iter().enumerate() {
            rows.push(SweepRow {
                level,
                algorithm: algo,
                mean_deviation: sums[slot].deviation / count,
                mean_revenue: sums[slot].revenue / count,
                mean_spread: sums[slot].spread / count,
                n_scenarios: config.scenarios_per_level,
                seed: config.seed,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "algorithm", "mean_deviation", "mean_revenue", "n_scenarios", "seed"])?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            r.algorithm.name().to_string(),
            r.mean_deviation.to_string(),
            r.mean_revenue.to_string(),
            r.n_scenarios.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    /// Target numbers of selection columns (request × service pairs).
    pub ladder: Vec<usize>,
    pub reps: usize,
    pub requests: usize,
    pub providers: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub fass: FassConfig,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            ladder: vec![450, 900, 1800, 2700, 3600, 4500],
            reps: 20,
            requests: 10,
            providers: 9,
            seed: 1,
            algorithms: vec![Algorithm::Fass, Algorithm::Ip],
            fass: FassConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    /// Selection columns actually generated.
    pub vars: usize,
    pub algorithm: Algorithm,
    pub mean_ms: f64,
    pub reps: usize,
}

/// Times each algorithm on `reps` scenarios per ladder point. Every request
/// may use every provider, so the column count is requests × providers ×
/// pool size; the pool size is the smallest one reaching the target.
pub fn timing_run(matrix: &QosMatrix, config: &TimingConfig) -> Result<Vec<TimingRow>, BenchError> {
    if config.reps == 0 {
        return Err(BenchError::Config("reps must be positive".into()));
    }
    let per_service = config.requests * config.providers;
    if per_service == 0 {
        return Err(BenchError::Config("requests and providers must be positive".into()));
    }
    let mut rows = Vec::new();
    for &target in &config.ladder {
        let pool_size = target.div_ceil(per_service).max(1);
        let vars = pool_size * per_service;
        if vars != target {
            log::warn!("ladder point {target} rounded to {vars} columns");
        }
        let mut total_ms = vec![0.0; config.algorithms.len()];
        for rep in 0..config.reps {
            let params = GenParams {
                requests: config.requests,
                providers: config.providers,
                pool_size,
                density: 1.0,
                pricing_level: 1.0,
                base_share: 0.6,
                seed: config.seed.wrapping_add((target * 1000 + rep) as u64),
            };
            let (scenario, _) = generate_scenario(matrix, &params)?;
            for (slot, &algo) in config.algorithms.iter().enumerate() {
                let t0 = Instant::now();
                match algo {
                    Algorithm::Fass => {
                        run_fass(&scenario, &config.fass)?;
                    }
                    Algorithm::Ip => {
                        ip_branch_and_bound(&scenario, IpObjective::Xi)?;
                    }
                    Algorithm::RevenueMax => {
                        revenue_max(&scenario)?;
                    }
                    Algorithm::Randomized => {
                        crate::baselines::randomized(&scenario, params.seed)?;
                    }
                }
                total_ms[slot] += t0.elapsed().as_secs_f64() * 1e3;
            }
        }
        for (slot, &algo) in config.algorithms.iter().enumerate() {
            rows.push(TimingRow {
                vars,
                algorithm: algo,
                mean_ms: total_ms[slot] / config.reps as f64,
                reps: config.reps,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln(time)` against `ln(size)`.
pub fn growth_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vars", "algorithm", "mean_ms", "reps"])?;
    for r in rows {
        w.write_record([
            r.vars.to_string(),
            r.algorithm.name().to_string(),
            format!("{:.3}", r.mean_ms),
            r.reps.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
