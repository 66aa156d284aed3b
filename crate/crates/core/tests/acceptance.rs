//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::cmp::Ordering;
use std::process::ExitCode;
use std::time::Instant;

use fass_core::baselines::randomized;
use fass_core::bench_metrics::{
    growth_exponent, payment_deviation, pricing_sweep, timing_run, Algorithm, SweepConfig,
    SweepRow, TimingConfig,
};
use fass_core::fass_engine::{run_fass, FassConfig, FassOutcome};
use fass_core::lex_transform::{
    build_subproblem_lp, quantize_with, round_to_plan, verify_layout_partition, xi_score_exact,
    CandidatePool, DEFAULT_RANGE_CAP,
};
use fass_core::model::{
    lex_compare, payment_vector, saturating_matching, total_revenue, AssignmentPlan, Provider,
    Request, Scenario, ServiceRef,
};
use fass_core::oracle::{brute_force_mmf, brute_force_mmf_quantized, grid_levels};
use fass_core::scenario_io::{synthetic_qos_matrix, QosMatrix, ScenarioFile};
use fass_core::simplex_lp::{solve, LpStatus, INTEGRALITY_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMALL_SCENARIOS: usize = 500;
const STEP: f64 = 0.01;
const FINE_STEP: f64 = 1e-4;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Random small instance with N, M in 2..=4 and at most 3 services per
/// provider. `grid` draws every price and QoS from multiples of 1/8 so all
/// payments are exact binary fractions.
fn small_scenario(rng: &mut ChaCha8Rng, grid: bool) -> Scenario {
    loop {
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(2..=4);
        let providers: Vec<Provider> = (0..m)
            .map(|i| {
                let k = rng.gen_range(1..=3);
                let qos: Vec<f64> = (0..k)
                    .map(|_| {
                        if grid {
                            rng.gen_range(1..=16) as f64 / 8.0
                        } else {
                            rng.gen_range(0.05..2.0)
                        }
                    })
                    .collect();
                Provider::from_qos(i, &qos)
            })
            .collect();
        let requests: Vec<Request> = (0..n)
            .map(|r| {
                let mut allowed: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.6)).collect();
                if allowed.is_empty() {
                    allowed.push(rng.gen_range(0..m));
                }
                if grid {
                    let a = rng.gen_range(1..=8) as f64 / 4.0;
                    let b = rng.gen_range(1..=8) as f64 / 4.0;
                    Request::new(r, allowed, a, b, 1.0)
                } else {
                    let a = rng.gen_range(0.2..2.0);
                    let b = rng.gen_range(0.1..1.5);
                    let q = rng.gen_range(0.3..1.5);
                    Request::new(r, allowed, a, b, q)
                }
            })
            .collect();
        let scenario = Scenario::new(providers, requests).expect("valid scenario");
        if saturating_matching(&scenario).is_some() {
            return scenario;
        }
    }
}

fn fine_config(step: f64) -> FassConfig {
    FassConfig {
        step,
        ranked_levels: true,
        ..FassConfig::default()
    }
}

struct RoundAudit {
    lps: usize,
    worst_gap: f64,
    partition_failures: usize,
}

/// Rebuilds every round LP of a finished run from its freeze order and checks
/// the basic solution and the selection rows directly.
fn audit_rounds(scenario: &Scenario, outcome: &FassOutcome, config: &FassConfig, audit: &mut RoundAudit) {
    let mut frozen = AssignmentPlan::new();
    for record in &outcome.trace.rounds {
        let active: Vec<usize> = (0..scenario.num_requests())
            .filter(|n| !frozen.covers(*n))
            .collect();
        let pool = CandidatePool::new(scenario, &frozen, &active).expect("pool");
        let quant = quantize_with(scenario, &pool, config.step, config.range_cap, config.ranked_levels)
            .expect("quantize");
        let (lp, layout) = build_subproblem_lp(&pool, &quant, None).expect("lp");
        if !verify_layout_partition(&lp, &layout).is_valid() {
            audit.partition_failures += 1;
        }
        let sol = solve(&lp).expect("solve");
        assert_eq!(sol.status, LpStatus::Optimal);
        audit.lps += 1;
        for k in 0..layout.pairs.len() {
            let x = sol.values[fass_core::lex_transform::LambdaLayout::x_col(k)];
            audit.worst_gap = audit.worst_gap.max((x - x.round()).abs());
        }
        frozen.select(record.request, record.service);
    }
}

fn criteria_1_and_2() -> (Verdict, Verdict) {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let config = fine_config(STEP);
    let mut audit = RoundAudit {
        lps: 0,
        worst_gap: 0.0,
        partition_failures: 0,
    };
    let mut grid_mismatch = 0;
    let mut tol_mismatch = 0;
    let mut worst = 0.0_f64;
    let t0 = Instant::now();
    for _ in 0..SMALL_SCENARIOS {
        let scenario = small_scenario(&mut rng, false);
        let outcome = run_fass(&scenario, &config).expect("fass");
        let oracle = brute_force_mmf(&scenario).expect("oracle");
        let (_, levels) = brute_force_mmf_quantized(&scenario, STEP).expect("oracle");
        if grid_levels(&outcome.payments.sorted, STEP) != levels {
            grid_mismatch += 1;
        }
        let gap = outcome
            .payments
            .sorted
            .iter()
            .zip(&oracle.optimum_sorted)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap);
        if gap > STEP * (1.0 + 1e-9) {
            tol_mismatch += 1;
        }
        audit_rounds(&scenario, &outcome, &config, &mut audit);
    }

    let fine = fine_config(FINE_STEP);
    let mut exact_mismatch = 0;
    for _ in 0..SMALL_SCENARIOS {
        let scenario = small_scenario(&mut rng, true);
        let outcome = run_fass(&scenario, &fine).expect("fass");
        let oracle = brute_force_mmf(&scenario).expect("oracle");
        if outcome.payments.sorted != oracle.optimum_sorted {
            exact_mismatch += 1;
        }
        audit_rounds(&scenario, &outcome, &fine, &mut audit);
    }
    let secs = t0.elapsed().as_secs_f64();

    let c1 = verdict(
        grid_mismatch == 0 && tol_mismatch == 0 && exact_mismatch == 0,
        format!(
            "{SMALL_SCENARIOS}+{SMALL_SCENARIOS} scenarios, grid mismatches {grid_mismatch}, \
             beyond one step {tol_mismatch} (worst {worst:.4}), exact mismatches {exact_mismatch}, {secs:.1} s"
        ),
    );
    let c2 = verdict(
        audit.worst_gap <= INTEGRALITY_TOL && audit.partition_failures == 0,
        format!(
            "{} round LPs, worst integrality gap {:.2e}, partition failures {}",
            audit.lps, audit.worst_gap, audit.partition_failures
        ),
    );
    (c1, c2)
}

fn sorted_vectors(len: usize, max: i64) -> Vec<Vec<i64>> {
    fn extend(prefix: &mut Vec<i64>, len: usize, max: i64, out: &mut Vec<Vec<i64>>) {
        if prefix.len() == len {
            out.push(prefix.clone());
            return;
        }
        let lo = prefix.last().copied().unwrap_or(0);
        for v in lo..=max {
            prefix.push(v);
            extend(prefix, len, max, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), len, max, &mut out);
    out
}

fn criterion_3() -> Verdict {
    let mut pairs = 0u64;
    let mut counterexamples = 0u64;
    for k in [4u64, 8, 16] {
        for len in 1..=4 {
            let vectors = sorted_vectors(len, 6);
            let scores: Vec<_> = vectors
                .iter()
                .map(|v| xi_score_exact(v, k).expect("score"))
                .collect();
            for (u, su) in vectors.iter().zip(&scores) {
                for (v, sv) in vectors.iter().zip(&scores) {
                    pairs += 1;
                    if u.cmp(v) != sv.cmp(su) {
                        counterexamples += 1;
                    }
                }
            }
        }
    }
    verdict(
        counterexamples == 0,
        format!("{pairs} ordered pairs, {counterexamples} counterexamples"),
    )
}

fn dataset() -> QosMatrix {
    synthetic_qos_matrix(339, 500, 0.05, 7)
}

fn row(rows: &[SweepRow], level: u32, algo: Algorithm) -> &SweepRow {
    rows.iter()
        .find(|r| r.level == level && r.algorithm == algo)
        .expect("sweep row")
}

fn criteria_4_and_5(matrix: &QosMatrix) -> (Verdict, Verdict) {
    let config = SweepConfig::default();
    let t0 = Instant::now();
    let rows = pricing_sweep(matrix, &config).expect("sweep");
    let secs = t0.elapsed().as_secs_f64();

    let mut fair_bad = Vec::new();
    let mut rev_bad = Vec::new();
    let mut gap_sum = 0.0;
    for &level in &config.levels {
        let f = row(&rows, level, Algorithm::Fass);
        let r = row(&rows, level, Algorithm::RevenueMax);
        let x = row(&rows, level, Algorithm::Randomized);
        println!(
            "  level {level}: deviation fass {:.4} random {:.4} revmax {:.4} | revenue revmax {:.4} fass {:.4} random {:.4}",
            f.mean_deviation, x.mean_deviation, r.mean_deviation, r.mean_revenue, f.mean_revenue, x.mean_revenue
        );
        if !(f.mean_deviation <= x.mean_deviation && x.mean_deviation <= r.mean_deviation) {
            fair_bad.push(level);
        }
        if !(r.mean_revenue >= f.mean_revenue && f.mean_revenue >= x.mean_revenue) {
            rev_bad.push(level);
        }
        gap_sum += (r.mean_revenue - f.mean_revenue) / r.mean_revenue;
    }
    let mean_gap = gap_sum / config.levels.len() as f64;
    let c4 = verdict(
        fair_bad.is_empty(),
        format!(
            "{} scenarios/level, random runs {}, levels out of order {fair_bad:?}, {secs:.1} s",
            config.scenarios_per_level, config.random_runs
        ),
    );
    let c5 = verdict(
        rev_bad.is_empty() && mean_gap <= 0.15,
        format!(
            "levels out of order {rev_bad:?}, mean revenue gap {:.2}%",
            mean_gap * 100.0
        ),
    );
    (c4, c5)
}

fn criterion_6(matrix: &QosMatrix) -> Verdict {
    let config = TimingConfig::default();
    let rows = timing_run(matrix, &config).expect("timing");
    let series = |algo: Algorithm| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.algorithm == algo)
            .map(|r| (r.vars as f64, r.mean_ms))
            .collect()
    };
    let fass = series(Algorithm::Fass);
    let ip = series(Algorithm::Ip);
    for (f, i) in fass.iter().zip(&ip) {
        println!("  {} vars: fass {:.2} ms, ip {:.2} ms", f.0, f.1, i.1);
    }
    let largest = fass.last().map_or(f64::INFINITY, |p| p.1);
    let exponent = growth_exponent(&fass).unwrap_or(f64::INFINITY);
    let faster = fass.iter().zip(&ip).filter(|(f, i)| f.1 < i.1).count();
    verdict(
        largest <= 5000.0 && exponent <= 2.0 && faster == fass.len(),
        format!(
            "fass {largest:.1} ms at {} vars, growth exponent {exponent:.2}, faster than ip at {faster}/{} points",
            fass.last().map_or(0.0, |p| p.0),
            fass.len()
        ),
    )
}

fn criterion_7(matrix: &QosMatrix) -> Verdict {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    // payment arithmetic on hand-sized cases
    let provider = Provider::from_qos(0, &[0.5, 1.0]);
    let scenario = Scenario::new(
        vec![provider],
        vec![Request::new(0, [0], 1.0, 1.0, 1.0), Request::new(1, [0], 0.0, 2.0, 0.5)],
    )
    .expect("scenario");
    let s = |j| ServiceRef {
        provider: 0,
        service: j,
    };
    let plan = AssignmentPlan::from_choices([(0, s(0)), (1, s(1))]);
    let pv = payment_vector(&plan, &scenario).expect("payments");
    check(pv.per_request == vec![1.5, -2.0], "payment values");
    check(pv.sorted == vec![-2.0, 1.5], "sorted payments");
    check(total_revenue(&plan, &scenario) == Ok(-0.5), "revenue");
    check(
        lex_compare(&[0.5, 1.5], &[0.5, 1.0]) == Ok(Ordering::Greater),
        "lex compare",
    );
    check(payment_deviation(&pv).ok() == Some(1.75), "deviation");

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let config = fine_config(STEP);
    for _ in 0..100 {
        let scenario = small_scenario(&mut rng, false);
        let outcome = run_fass(&scenario, &config).expect("fass");

        // frozen payments never drop by more than one effective step
        let rounds = &outcome.trace.rounds;
        let monotone = rounds
            .windows(2)
            .all(|w| w[1].payment >= w[0].payment - w[1].step * (1.0 + 1e-9));
        check(monotone, "freeze monotonicity");
        check(rounds.len() == scenario.num_requests(), "one round per request");

        // shifting every exponent leaves the round-one plan unchanged
        let pool = CandidatePool::full(&scenario);
        let quant = quantize_with(&scenario, &pool, STEP, DEFAULT_RANGE_CAP, true).expect("quantize");
        let plans: Vec<AssignmentPlan> = [0i64, -3, 5]
            .iter()
            .map(|&d| {
                let (lp, layout) = build_subproblem_lp(&pool, &quant.shifted(d), Some(8)).expect("lp");
                let sol = solve(&lp).expect("solve");
                round_to_plan(&sol, &layout, &AssignmentPlan::new(), &scenario, INTEGRALITY_TOL)
                    .expect("plan")
            })
            .collect();
        check(plans.windows(2).all(|w| w[0] == w[1]), "shift invariance");

        // scenario files round-trip
        let file = ScenarioFile {
            scenario: scenario.clone(),
            metadata: None,
        };
        let back = ScenarioFile::from_json(&file.to_json()).expect("parse");
        check(back.scenario == scenario, "json round trip");

        check(
            randomized(&scenario, 42).ok() == randomized(&scenario, 42).ok(),
            "randomized determinism",
        );
        let again = run_fass(&scenario, &config).expect("fass");
        check(again.plan == outcome.plan, "fass determinism");
    }

    let small = SweepConfig {
        levels: vec![1, 5],
        scenarios_per_level: 3,
        random_runs: 20,
        ..SweepConfig::default()
    };
    let a = pricing_sweep(matrix, &small).expect("sweep");
    let b = pricing_sweep(matrix, &small).expect("sweep");
    check(a == b, "sweep determinism");

    failures.dedup();
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "arithmetic, freeze order, shift invariance, round trips, determinism".to_string()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let matrix = dataset();
    let (c1, c2) = criteria_1_and_2();
    let c3 = criterion_3();
    let (c4, c5) = criteria_4_and_5(&matrix);
    let c6 = criterion_6(&matrix);
    let c7 = criterion_7(&matrix);

    let names = [
        "oracle equivalence",
        "integrality",
        "xi order reversal",
        "fairness ordering",
        "revenue ordering",
        "timing",
        "property suites",
    ];
    let verdicts = [c1, c2, c3, c4, c5, c6, c7];
    let mut failed = 0;
    for (i, (name, v)) in names.iter().zip(&verdicts).enumerate() {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!("criterion {} {name}: {tag} ({})", i + 1, v.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
