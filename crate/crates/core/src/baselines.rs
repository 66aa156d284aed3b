//! Comparison algorithms: revenue maximization, uniform random selection,
//! and an LP-based branch-and-bound reference.

use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bench_metrics::{payment_deviation, spread};
use crate::lex_transform::{
    build_subproblem_lp, quantize_with, CandidatePool, LambdaLayout, TransformError,
    DEFAULT_STEP, UNCAPPED_RANGE,
};
use crate::model::{
    check_feasible, payment_vector, saturating_matching, total_revenue, AssignmentPlan,
    ModelError, Scenario, ServiceRef,
};
use crate::simplex_lp::{
    extract_integral, solve_with, LpError, LpScalar, LpSolution, LpStatus, Relation,
    SolverOptions, StandardLp, INTEGRALITY_TOL,
};

/// Dead ends tolerated by [`randomized`] before giving up.
pub const MAX_RESTARTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("no assignment gives every request a distinct authorized service")]
    Infeasible,
    #[error("random sampling hit {0} dead ends in a row")]
    RestartsExhausted(usize),
    #[error("runs must be at least 1")]
    NoRuns,
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Selection LP over one column per `(request, service)` pair with the
/// one-per-request and one-per-service rows.
fn selection_lp(scenario: &Scenario, cost: impl Fn(usize, ServiceRef) -> f64) -> (StandardLp<f64>, Vec<(usize, ServiceRef)>) {
    let pool = CandidatePool::full(scenario);
    let pairs: Vec<(usize, ServiceRef)> = pool.pairs().collect();
    let mut lp = StandardLp::new(pairs.iter().map(|&(n, s)| cost(n, s)).collect());
    let mut by_service: std::collections::BTreeMap<ServiceRef, Vec<(usize, f64)>> =
        Default::default();
    for n in 0..scenario.num_requests() {
        let cols: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.0 == n)
            .map(|(k, _)| (k, 1.0))
            .collect();
        lp.add_row(cols, Relation::Eq, 1.0).expect("columns in range");
    }
    for (k, &(_, s)) in pairs.iter().enumerate() {
        by_service.entry(s).or_default().push((k, 1.0));
    }
    for cols in by_service.into_values() {
        lp.add_row(cols, Relation::Le, 1.0).expect("columns in range");
    }
    (lp, pairs)
}

fn plan_from_columns(
    pairs: &[(usize, ServiceRef)],
    integral: &[i64],
    column: impl Fn(usize) -> usize,
) -> AssignmentPlan {
    AssignmentPlan::from_choices(
        pairs
            .iter()
            .enumerate()
            .filter(|&(k, _)| integral[column(k)] == 1)
            .map(|(_, &p)| p),
    )
}

fn checked(plan: AssignmentPlan, scenario: &Scenario) -> Result<AssignmentPlan, BaselineError> {
    let report = check_feasible(&plan, scenario);
    if report.is_feasible() {
        Ok(plan)
    } else {
        Err(BaselineError::Invariant(format!("plan infeasible: {report:?}")))
    }
}

/// Revenue-maximizing plan: minimizes `Σ b·Q/Q_ref·x`, which is total
/// revenue up to a constant.
pub fn revenue_max(scenario: &Scenario) -> Result<AssignmentPlan, BaselineError> {
    if saturating_matching(scenario).is_none() {
        return Err(BaselineError::Infeasible);
    }
    let (lp, pairs) = selection_lp(scenario, |n, s| revenue_cost(scenario, n, s));
    let sol = solve_with(&lp, SolverOptions::default())?;
    if sol.status != LpStatus::Optimal {
        return Err(BaselineError::Infeasible);
    }
    let integral = extract_integral(&sol, INTEGRALITY_TOL)?;
    checked(plan_from_columns(&pairs, &integral, |k| k), scenario)
}

fn revenue_cost(scenario: &Scenario, n: usize, s: ServiceRef) -> f64 {
    let req = &scenario.requests()[n];
    let qos = scenario.service(s).map(|svc| svc.qos).unwrap_or(f64::NAN);
    req.max_bonus * qos / req.qos_baseline
}

/// A random feasible plan: requests in shuffled order, each taking a uniform
/// pick among its still-free authorized services. A request left without
/// options restarts the draw.
pub fn randomized(scenario: &Scenario, seed: u64) -> Result<AssignmentPlan, BaselineError> {
    if saturating_matching(scenario).is_none() {
        return Err(BaselineError::Infeasible);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..scenario.num_requests()).collect();
    'attempt: for attempt in 0..=MAX_RESTARTS {
        if attempt > 0 {
            log::trace!("randomized seed {seed}: restart {attempt}");
        }
        order.shuffle(&mut rng);
        let mut plan = AssignmentPlan::new();
        let mut used = std::collections::BTreeSet::new();
        for &n in &order {
            let free: Vec<ServiceRef> = scenario
                .candidates(n)
                .filter(|s| !used.contains(s))
                .collect();
            if free.is_empty() {
                continue 'attempt;
            }
            let pick = free[rng.gen_range(0..free.len())];
            used.insert(pick);
            plan.select(n, pick);
        }
        return Ok(plan);
    }
    Err(BaselineError::RestartsExhausted(MAX_RESTARTS))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedStats {
    pub runs: usize,
    pub mean_deviation: f64,
    pub mean_spread: f64,
    pub mean_revenue: f64,
    pub seeds: Vec<u64>,
}

/// Averages [`randomized`] over `runs` draws; run `r` uses `base_seed + r`.
pub fn randomized_mean(
    scenario: &Scenario,
    runs: usize,
    base_seed: u64,
) -> Result<RandomizedStats, BaselineError> {
    if runs == 0 {
        return Err(BaselineError::NoRuns);
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|r| base_seed.wrapping_add(r)).collect();
    let (mut dev, mut spr, mut rev) = (0.0, 0.0, 0.0);
    for &seed in &seeds {
        let plan = randomized(scenario, seed)?;
        let pv = payment_vector(&plan, scenario)?;
        dev += payment_deviation(&pv).map_err(|e| BaselineError::Invariant(e.to_string()))?;
        spr += spread(&pv).map_err(|e| BaselineError::Invariant(e.to_string()))?;
        rev += total_revenue(&plan, scenario)?;
    }
    let k = runs as f64;
    Ok(RandomizedStats {
        runs,
        mean_deviation: dev / k,
        mean_spread: spr / k,
        mean_revenue: rev / k,
        seeds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbOutcome<T> {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: T,
    /// Nodes that split on a fractional variable.
    pub branches: usize,
    /// LPs solved.
    pub nodes: usize,
}

/// Depth-first LP branch and bound on the variables in `integer_vars`.
/// Branches on the first fractional one, exploring the floor side first, and
/// prunes nodes whose LP bound does not beat the incumbent.
pub fn branch_and_bound<T: LpScalar>(
    lp: &StandardLp<T>,
    integer_vars: &[usize],
    tol: f64,
    options: SolverOptions,
) -> Result<BnbOutcome<T>, LpError> {
    let mut best: Option<LpSolution<T>> = None;
    let mut branches = 0;
    let mut nodes = 0;
    let mut root_unbounded = false;
    let mut stack: Vec<StandardLp<T>> = vec![lp.clone()];
    while let Some(node) = stack.pop() {
        nodes += 1;
        let sol = solve_with(&node, options)?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if nodes == 1 {
                    root_unbounded = true;
                    break;
                }
                continue;
            }
            LpStatus::Optimal => {}
        }
        if let Some(inc) = &best {
            if sol.objective_value.compare(&inc.objective_value) != std::cmp::Ordering::Less {
                continue;
            }
        }
        let fractional = integer_vars.iter().copied().find(|&v| {
            let x = sol.values[v];
            (x - x.round()).abs() > tol
        });
        match fractional {
            None => best = Some(sol),
            Some(v) => {
                branches += 1;
                let x = sol.values[v];
                let mut up = node.clone();
                up.set_lower_bound(v, x.ceil())?;
                let mut down = node;
                let cap = match down.upper_bounds()[v] {
                    Some(u) => u.min(x.floor()),
                    None => x.floor(),
                };
                down.set_upper_bound(v, Some(cap))?;
                stack.push(up);
                stack.push(down);
            }
        }
    }
    let (status, values, objective_value) = match best {
        Some(s) => (LpStatus::Optimal, s.values, s.objective_value),
        None if root_unbounded => (LpStatus::Unbounded, Vec::new(), T::zero()),
        None => (LpStatus::Infeasible, Vec::new(), T::zero()),
    };
    Ok(BnbOutcome {
        status,
        values,
        objective_value,
        branches,
        nodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpObjective {
    /// The first-round exponential fairness objective.
    Xi,
    Revenue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpOutcome {
    pub plan: AssignmentPlan,
    pub objective_value: f64,
    pub branches: usize,
    pub nodes: usize,
    /// Exact objective, set for [`IpObjective::Xi`].
    pub exact_objective: Option<BigRational>,
}

/// Solves the whole selection problem once as a binary program.
pub fn ip_branch_and_bound(
    scenario: &Scenario,
    objective: IpObjective,
) -> Result<IpOutcome, BaselineError> {
    if saturating_matching(scenario).is_none() {
        return Err(BaselineError::Infeasible);
    }
    let options = SolverOptions::default();
    match objective {
        IpObjective::Xi => {
            let pool = CandidatePool::full(scenario);
            let quant = quantize_with(scenario, &pool, DEFAULT_STEP, UNCAPPED_RANGE, true)?;
            let (mut lp, layout) = build_subproblem_lp(&pool, &quant, None)?;
            let xs: Vec<usize> = (0..layout.pairs.len()).map(LambdaLayout::x_col).collect();
            for &x in &xs {
                lp.set_upper_bound(x, Some(1.0))?;
            }
            let out = branch_and_bound(&lp, &xs, INTEGRALITY_TOL, options)?;
            let integral = finish(&out)?;
            let plan = plan_from_columns(&layout.pairs, &integral, LambdaLayout::x_col);
            Ok(IpOutcome {
                plan: checked(plan, scenario)?,
                objective_value: out.objective_value.to_f64(),
                branches: out.branches,
                nodes: out.nodes,
                exact_objective: Some(out.objective_value),
            })
        }
        IpObjective::Revenue => {
            let (mut lp, pairs) = selection_lp(scenario, |n, s| revenue_cost(scenario, n, s));
            let xs: Vec<usize> = (0..pairs.len()).collect();
            for &x in &xs {
                lp.set_upper_bound(x, Some(1.0))?;
            }
            let out = branch_and_bound(&lp, &xs, INTEGRALITY_TOL, options)?;
            let integral = finish(&out)?;
            let plan = plan_from_columns(&pairs, &integral, |k| k);
            Ok(IpOutcome {
                plan: checked(plan, scenario)?,
                objective_value: out.objective_value,
                branches: out.branches,
                nodes: out.nodes,
                exact_objective: None,
            })
        }
    }
}

fn finish<T: Clone>(out: &BnbOutcome<T>) -> Result<Vec<i64>, BaselineError> {
    if out.status != LpStatus::Optimal {
        return Err(BaselineError::Infeasible);
    }
    let sol = LpSolution {
        status: out.status,
        values: out.values.clone(),
        objective_value: (),
        pivots: 0,
    };
    Ok(extract_integral(&sol, INTEGRALITY_TOL)?)
}
