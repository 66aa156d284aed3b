//! The iterative max-min fair selection loop.
//!
//! Each round solves the exponential-price LP over the requests still
//! active, evaluates the resulting plan in true payments, freezes the active
//! request with the lowest payment to its chosen service and removes that
//! service from every other pool. `N` requests take exactly `N` rounds.

use std::io::Write;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lex_transform::{
    build_subproblem_lp, objective_to_f64, quantize_with, round_to_plan, verify_layout_partition,
    CandidatePool, PartitionCheck, TransformError, DEFAULT_STEP, UNCAPPED_RANGE,
};
use crate::model::{
    check_feasible, payment_vector, request_payment, saturating_matching, AssignmentPlan,
    ModelError, PaymentVector, Scenario, ServiceRef,
};
use crate::simplex_lp::{solve_with, LpError, LpStatus, SolverOptions, INTEGRALITY_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FassError {
    #[error("no assignment gives every request a distinct authorized service")]
    Infeasible,
    #[error("round {round}: {reason}")]
    RoundInfeasible { round: usize, reason: String },
    #[error("no active request to select from")]
    EmptyActiveSet,
    #[error("service {0} is not available to request {1}")]
    AlreadyFrozen(ServiceRef, usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(LpError),
    #[error(transparent)]
    Transform(TransformError),
}

impl FassError {
    /// True for failures that point at a bug or numerical breakdown rather
    /// than at the input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, FassError::Invariant(_) | FassError::Lp(_))
    }
}

/// How the base `K` of the exponential prices is chosen per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasePolicy {
    /// Number of price terms in the current round (at least 2).
    Shrinking,
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FassConfig {
    pub step: f64,
    pub range_cap: u32,
    /// Replace grid levels by their dense rank (same plans, smaller numbers).
    pub ranked_levels: bool,
    pub base: BasePolicy,
    pub integrality_tol: f64,
    pub solver: SolverOptions,
}

impl Default for FassConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            range_cap: UNCAPPED_RANGE,
            ranked_levels: true,
            base: BasePolicy::Shrinking,
            integrality_tol: INTEGRALITY_TOL,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 0-based round index.
    pub round: usize,
    pub request: usize,
    pub service: ServiceRef,
    pub payment: f64,
    /// LP optimum converted to `f64` (may saturate to infinity).
    pub lp_objective: f64,
    pub lp_vars: usize,
    pub lp_rows: usize,
    /// Quantization step actually used this round.
    pub step: f64,
    pub base: u64,
    pub pivots: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FassTrace {
    pub rounds: Vec<RoundRecord>,
    pub plan: AssignmentPlan,
    pub total: Duration,
}

impl FassTrace {
    /// Frozen payments in round order.
    pub fn frozen_payments(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.payment).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FassOutcome {
    pub plan: AssignmentPlan,
    pub payments: PaymentVector,
    pub trace: FassTrace,
}

/// Lowest payment among `(request, payment)` pairs; ties go to the lowest id.
pub fn select_min_payment_request(payments: &[(usize, f64)]) -> Result<usize, FassError> {
    payments
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|&(n, _)| n)
        .ok_or(FassError::EmptyActiveSet)
}

/// Freezes `n` to `service` and drops `service` from every other pool.
pub fn reduce_solution_space(
    pool: &mut CandidatePool,
    frozen: &mut AssignmentPlan,
    n: usize,
    service: ServiceRef,
) -> Result<(), FassError> {
    pool.freeze(n, service).map_err(|e| match e {
        TransformError::UnavailableService(s) => FassError::AlreadyFrozen(s, n),
        other => FassError::Transform(other),
    })?;
    frozen.select(n, service);
    Ok(())
}

fn round_error(round: usize, e: TransformError) -> FassError {
    match e {
        TransformError::EmptyPool(n) => FassError::RoundInfeasible {
            round,
            reason: format!("request {n} has no service left"),
        },
        TransformError::Lp(LpError::NonIntegral { index, value }) => FassError::Invariant(
            format!("round {round}: non-integral basic solution x[{index}] = {value}"),
        ),
        TransformError::InfeasiblePlan(report) => {
            FassError::Invariant(format!("round {round}: rounded plan infeasible: {report:?}"))
        }
        other => FassError::Transform(other),
    }
}

pub fn run_fass(scenario: &Scenario, config: &FassConfig) -> Result<FassOutcome, FassError> {
    let started = Instant::now();
    if saturating_matching(scenario).is_none() {
        return Err(FassError::Infeasible);
    }
    let mut pool = CandidatePool::full(scenario);
    let mut frozen = AssignmentPlan::new();
    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(scenario.num_requests());

    while !pool.is_empty() {
        let round = rounds.len();
        let t0 = Instant::now();
        let quant = quantize_with(
            scenario,
            &pool,
            config.step,
            config.range_cap,
            config.ranked_levels,
        )
        .map_err(|e| round_error(round, e))?;
        let base = match config.base {
            BasePolicy::Shrinking => None,
            BasePolicy::Fixed(k) => Some(k),
        };
        let (lp, layout) =
            build_subproblem_lp(&pool, &quant, base).map_err(|e| round_error(round, e))?;
        if let PartitionCheck::Invalid { column } = verify_layout_partition(&lp, &layout) {
            return Err(FassError::Invariant(format!(
                "round {round}: selection rows fail the partition check at column {column}"
            )));
        }
        let solution = solve_with(&lp, config.solver).map_err(FassError::Lp)?;
        if solution.status != LpStatus::Optimal {
            return Err(FassError::RoundInfeasible {
                round,
                reason: format!("round LP is {:?}", solution.status),
            });
        }
        let plan = round_to_plan(&solution, &layout, &frozen, scenario, config.integrality_tol)
            .map_err(|e| round_error(round, e))?;

        let active: Vec<(usize, f64)> = pool
            .active()
            .map(|n| Ok((n, request_payment(&plan, scenario, n)?)))
            .collect::<Result<_, ModelError>>()?;
        let chosen = select_min_payment_request(&active)?;
        let payment = active.iter().find(|a| a.0 == chosen).map(|a| a.1).unwrap_or_default();
        let service = plan.choice(chosen)?;

        if let Some(prev) = rounds.last() {
            // grid levels never decrease; true payments may dip inside one cell
            let slack = quant.step * (1.0 + 1e-9);
            if payment < prev.payment - slack {
                return Err(FassError::Invariant(format!(
                    "round {round}: frozen payment {payment} below previous {}",
                    prev.payment
                )));
            }
        }
        reduce_solution_space(&mut pool, &mut frozen, chosen, service)?;
        log::debug!(
            "round {round}: froze request {chosen} to {service} at {payment} ({} pivots)",
            solution.pivots
        );
        rounds.push(RoundRecord {
            round,
            request: chosen,
            service,
            payment,
            lp_objective: objective_to_f64(&solution.objective_value),
            lp_vars: lp.num_vars(),
            lp_rows: lp.rows().len(),
            step: quant.step,
            base: layout.base,
            pivots: solution.pivots,
            elapsed: t0.elapsed(),
        });
    }

    let report = check_feasible(&frozen, scenario);
    if !report.is_feasible() {
        return Err(FassError::Invariant(format!(
            "final plan infeasible: {report:?}"
        )));
    }
    let payments = payment_vector(&frozen, scenario)?;
    Ok(FassOutcome {
        plan: frozen.clone(),
        payments,
        trace: FassTrace {
            rounds,
            plan: frozen,
            total: started.elapsed(),
        },
    })
}

/// Writes one CSV row per round. Ids and rounds are 1-based.
pub fn write_trace_csv<W: Write>(trace: &FassTrace, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "round", "request", "provider", "service", "payment", "lp_vars", "lp_rows", "solve_ms",
    ])?;
    for r in &trace.rounds {
        w.write_record([
            (r.round + 1).to_string(),
            (r.request + 1).to_string(),
            (r.service.provider + 1).to_string(),
            (r.service.service + 1).to_string(),
            r.payment.to_string(),
            r.lp_vars.to_string(),
            r.lp_rows.to_string(),
            format!("{:.3}", r.elapsed.as_secs_f64() * 1e3),
        ])?;
    }
    w.flush()?;
    Ok(())
}
