//! Turns one round of the lexicographic selection problem into a single LP.
//!
//! Payments of every remaining `(request, service)` pair are quantized onto an
//! integer grid, each grid level `l` is priced as `K^(-l)`, and the sum of
//! these terms is minimized. For `K` at least the number of terms, a smaller
//! sum means a lexicographically larger sorted payment vector, so the LP
//! optimum is a lexmax assignment at grid resolution.
//!
//! Every pair `(n, s)` gets three columns: the selection `x`, and two weights
//! `λ0`, `λ1` with `λ0 + λ1 = 1` and `x = λ1`. The objective `K0·λ0 + K1·λ1`
//! equals the exponential price of the unselected level at `x = 0` and of the
//! selected level at `x = 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::model::{
    check_partial, AssignmentPlan, FeasibilityReport, ModelError, Scenario, ServiceRef,
};
use crate::simplex_lp::{extract_integral, LpError, LpSolution, Relation, Row, StandardLp};

pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_RANGE_CAP: u32 = 100;
/// Range cap that never coarsens the step.
pub const UNCAPPED_RANGE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("base K must be at least 2, got {0}")]
    InvalidBase(u64),
    #[error("quantization step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("level range cap must be at least 1")]
    InvalidRangeCap,
    #[error("non-finite payment for request {request} on {service}")]
    NonFinitePayment { request: usize, service: ServiceRef },
    #[error("nothing to optimize")]
    NothingToOptimize,
    #[error("request {0} has an empty candidate pool")]
    EmptyPool(usize),
    #[error("request {0} is not active")]
    InactiveRequest(usize),
    #[error("service {0} is not available")]
    UnavailableService(ServiceRef),
    #[error("rounded plan is infeasible: {0:?}")]
    InfeasiblePlan(FeasibilityReport),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_base(k: u64) -> Result<(), TransformError> {
    if k < 2 {
        Err(TransformError::InvalidBase(k))
    } else {
        Ok(())
    }
}

/// `Σ K^(-level)` in floating point.
pub fn xi_score(levels: &[i64], k: u64) -> Result<f64, TransformError> {
    check_base(k)?;
    let k = k as f64;
    Ok(levels.iter().map(|&l| k.powf(-(l as f64))).sum())
}

/// `Σ K^(-level)` in exact arithmetic.
pub fn xi_score_exact(levels: &[i64], k: u64) -> Result<BigRational, TransformError> {
    check_base(k)?;
    Ok(levels
        .iter()
        .fold(BigRational::zero(), |acc, &l| acc + power(k, -l)))
}

/// `k^e` for any integer exponent.
fn power(k: u64, e: i64) -> BigRational {
    let magnitude = BigInt::from(k).pow(e.unsigned_abs() as u32);
    if e >= 0 {
        BigRational::from_integer(magnitude)
    } else {
        BigRational::new(BigInt::one(), magnitude)
    }
}

/// The services still open to each active request. Services frozen for
/// another request are gone from every pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePool {
    pools: BTreeMap<usize, Vec<ServiceRef>>,
}

impl CandidatePool {
    /// Pools for `active` requests, excluding every service used by `frozen`.
    pub fn new(
        scenario: &Scenario,
        frozen: &AssignmentPlan,
        active: &[usize],
    ) -> Result<Self, TransformError> {
        let taken: BTreeSet<ServiceRef> = frozen.selections().map(|s| s.service).collect();
        let mut pools = BTreeMap::new();
        for &n in active {
            scenario.request(n)?;
            if frozen.covers(n) {
                return Err(TransformError::InactiveRequest(n));
            }
            let pool = scenario.candidates(n).filter(|s| !taken.contains(s)).collect();
            pools.insert(n, pool);
        }
        Ok(Self { pools })
    }

    /// Every request active, nothing frozen.
    pub fn full(scenario: &Scenario) -> Self {
        let pools = (0..scenario.num_requests())
            .map(|n| (n, scenario.candidates(n).collect()))
            .collect();
        Self { pools }
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.pools.keys().copied()
    }

    pub fn num_active(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn pool(&self, n: usize) -> Option<&[ServiceRef]> {
        self.pools.get(&n).map(Vec::as_slice)
    }

    /// `(request, service)` pairs, requests ascending, services ascending.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, ServiceRef)> + '_ {
        self.pools
            .iter()
            .flat_map(|(&n, pool)| pool.iter().map(move |&s| (n, s)))
    }

    pub fn num_pairs(&self) -> usize {
        self.pools.values().map(Vec::len).sum()
    }

    /// First active request with nothing left to choose from.
    pub fn first_empty(&self) -> Option<usize> {
        self.pools
            .iter()
            .find(|(_, pool)| pool.is_empty())
            .map(|(&n, _)| n)
    }

    /// Fixes `n` to `service`: `n` leaves the active set and `service`
    /// leaves every other pool.
    pub fn freeze(&mut self, n: usize, service: ServiceRef) -> Result<(), TransformError> {
        let pool = self
            .pools
            .get(&n)
            .ok_or(TransformError::InactiveRequest(n))?;
        if !pool.contains(&service) {
            return Err(TransformError::UnavailableService(service));
        }
        self.pools.remove(&n);
        for pool in self.pools.values_mut() {
            pool.retain(|&s| s != service);
        }
        Ok(())
    }
}

/// Grid levels of one pair: payment when left unselected and when selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairLevels {
    pub request: usize,
    pub service: ServiceRef,
    pub unselected: i64,
    pub selected: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPayments {
    /// Effective step after any coarsening.
    pub step: f64,
    pub requested_step: f64,
    pub doublings: u32,
    /// Raw level subtracted from every entry so that the largest is 0.
    pub shift: i64,
    /// One entry per pool pair, in pool order.
    pub entries: Vec<PairLevels>,
}

impl QuantizedPayments {
    pub fn min_level(&self) -> i64 {
        self.entries
            .iter()
            .map(|e| e.unselected.min(e.selected))
            .min()
            .unwrap_or(0)
    }

    pub fn max_level(&self) -> i64 {
        self.entries
            .iter()
            .map(|e| e.unselected.max(e.selected))
            .max()
            .unwrap_or(0)
    }

    /// The same grid with every level moved by `delta`.
    pub fn shifted(&self, delta: i64) -> Self {
        let mut out = self.clone();
        out.shift -= delta;
        for e in &mut out.entries {
            e.unselected += delta;
            e.selected += delta;
        }
        out
    }

    /// Entries are kept in pool order, which is sorted by `(request, service)`.
    pub fn levels_of(&self, request: usize, service: ServiceRef) -> Option<&PairLevels> {
        self.entries
            .binary_search_by(|e| (e.request, e.service).cmp(&(request, service)))
            .ok()
            .map(|k| &self.entries[k])
    }
}

/// Rounds `values` onto a grid of `step`, doubling the step until the level
/// range is at most `range_cap`. Returns raw (unshifted) levels, the
/// effective step and the number of doublings.
pub fn quantize_values(
    values: &[f64],
    step: f64,
    range_cap: u32,
) -> Result<(Vec<i64>, f64, u32), TransformError> {
    quantize_values_with(values, step, range_cap, false)
}

/// Like [`quantize_values`], but when `ranked` is set the grid levels are
/// replaced by their dense rank among the occupied levels before the range
/// check. Ranking is strictly monotone, so sorted-vector order is unchanged
/// while the exponent range shrinks to the number of distinct levels.
pub fn quantize_values_with(
    values: &[f64],
    step: f64,
    range_cap: u32,
    ranked: bool,
) -> Result<(Vec<i64>, f64, u32), TransformError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(TransformError::InvalidStep(step));
    }
    if range_cap == 0 {
        return Err(TransformError::InvalidRangeCap);
    }
    let mut step = step;
    let mut doublings = 0;
    loop {
        let mut levels: Vec<i64> = values.iter().map(|v| (v / step).round() as i64).collect();
        if ranked {
            let distinct: BTreeSet<i64> = levels.iter().copied().collect();
            let rank: BTreeMap<i64, i64> = distinct.into_iter().zip(0..).collect();
            for l in &mut levels {
                *l = rank[l];
            }
        }
        let lo = levels.iter().copied().min().unwrap_or(0);
        let hi = levels.iter().copied().max().unwrap_or(0);
        if hi - lo <= i64::from(range_cap) {
            return Ok((levels, step, doublings));
        }
        step *= 2.0;
        doublings += 1;
    }
}

/// Quantizes the unselected and selected payment of every pool pair.
pub fn quantize(
    scenario: &Scenario,
    pool: &CandidatePool,
    step: f64,
    range_cap: u32,
) -> Result<QuantizedPayments, TransformError> {
    quantize_with(scenario, pool, step, range_cap, false)
}

/// [`quantize`] with optional rank compression (see [`quantize_values_with`]).
/// With `ranked` set, `shift` no longer relates levels to `round(p / step)`.
pub fn quantize_with(
    scenario: &Scenario,
    pool: &CandidatePool,
    step: f64,
    range_cap: u32,
    ranked: bool,
) -> Result<QuantizedPayments, TransformError> {
    let mut raw = Vec::with_capacity(2 * pool.num_pairs());
    for (n, s) in pool.pairs() {
        let req = scenario.request(n)?;
        let unselected = req.unselected_payment();
        let selected = req.payment_for_qos(scenario.service(s)?.qos);
        if !unselected.is_finite() || !selected.is_finite() {
            return Err(TransformError::NonFinitePayment {
                request: n,
                service: s,
            });
        }
        raw.push(unselected);
        raw.push(selected);
    }
    let (levels, effective, doublings) = quantize_values_with(&raw, step, range_cap, ranked)?;
    if doublings > 0 {
        log::debug!("quantization step coarsened {doublings}x to {effective}");
    }
    let shift = levels.iter().copied().max().unwrap_or(0);
    let entries = pool
        .pairs()
        .zip(levels.chunks(2))
        .map(|((request, service), l)| PairLevels {
            request,
            service,
            unselected: l[0] - shift,
            selected: l[1] - shift,
        })
        .collect();
    Ok(QuantizedPayments {
        step: effective,
        requested_step: step,
        doublings,
        shift,
        entries,
    })
}

/// Column and row map of a round LP.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaLayout {
    /// Base `K` of the exponential prices.
    pub base: u64,
    /// Pair `k` owns columns `3k` (x), `3k+1` (λ0) and `3k+2` (λ1).
    pub pairs: Vec<(usize, ServiceRef)>,
    /// Price of the unselected level, `K^(-level(x=0))`.
    pub k0: Vec<BigRational>,
    /// Price of the selected level, `K^(-level(x=1))`.
    pub k1: Vec<BigRational>,
    /// One equality row per active request.
    pub request_rows: Range<usize>,
    /// One `≤ 1` row per service still in some pool.
    pub service_rows: Range<usize>,
    /// `x − λ1 = 0` and `λ0 + λ1 = 1` for each pair.
    pub coupling_rows: Range<usize>,
}

impl LambdaLayout {
    pub fn x_col(k: usize) -> usize {
        3 * k
    }

    pub fn lambda0_col(k: usize) -> usize {
        3 * k + 1
    }

    pub fn lambda1_col(k: usize) -> usize {
        3 * k + 2
    }

    pub fn num_columns(&self) -> usize {
        3 * self.pairs.len()
    }

    /// Objective value of the integral point that selects exactly `plan`'s
    /// choices among the layout's pairs.
    pub fn objective_of(&self, plan: &AssignmentPlan) -> BigRational {
        let chosen: BTreeSet<(usize, ServiceRef)> =
            plan.selections().map(|s| (s.request, s.service)).collect();
        self.pairs
            .iter()
            .enumerate()
            .fold(BigRational::zero(), |acc, (k, pair)| {
                if chosen.contains(pair) {
                    acc + &self.k1[k]
                } else {
                    acc + &self.k0[k]
                }
            })
    }
}

/// Default base: the number of terms in the objective, at least 2.
pub fn default_base(pool: &CandidatePool) -> u64 {
    (pool.num_pairs() as u64).max(2)
}

/// Builds the round LP over `pool`. `base` overrides the default `K`.
pub fn build_subproblem_lp(
    pool: &CandidatePool,
    quant: &QuantizedPayments,
    base: Option<u64>,
) -> Result<(StandardLp<BigRational>, LambdaLayout), TransformError> {
    if pool.is_empty() {
        return Err(TransformError::NothingToOptimize);
    }
    if let Some(n) = pool.first_empty() {
        return Err(TransformError::EmptyPool(n));
    }
    let k = base.unwrap_or_else(|| default_base(pool));
    check_base(k)?;

    let pairs: Vec<(usize, ServiceRef)> = pool.pairs().collect();
    let mut k0 = Vec::with_capacity(pairs.len());
    let mut k1 = Vec::with_capacity(pairs.len());
    let mut objective = Vec::with_capacity(3 * pairs.len());
    for &(n, s) in &pairs {
        let levels = quant
            .levels_of(n, s)
            .ok_or(TransformError::UnavailableService(s))?;
        let c0 = power(k, -levels.unselected);
        let c1 = power(k, -levels.selected);
        objective.push(BigRational::zero());
        objective.push(c0.clone());
        objective.push(c1.clone());
        k0.push(c0);
        k1.push(c1);
    }

    let mut lp = StandardLp::new(objective);
    let mut by_request: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    let mut by_service: BTreeMap<ServiceRef, Vec<(usize, f64)>> = BTreeMap::new();
    for (idx, &(n, s)) in pairs.iter().enumerate() {
        by_request.entry(n).or_default().push((LambdaLayout::x_col(idx), 1.0));
        by_service.entry(s).or_default().push((LambdaLayout::x_col(idx), 1.0));
    }
    let start = lp.rows().len();
    for coefs in by_request.into_values() {
        lp.add_row(coefs, Relation::Eq, 1.0)?;
    }
    let request_rows = start..lp.rows().len();
    for coefs in by_service.into_values() {
        lp.add_row(coefs, Relation::Le, 1.0)?;
    }
    let service_rows = request_rows.end..lp.rows().len();
    for idx in 0..pairs.len() {
        lp.add_row(
            [(LambdaLayout::x_col(idx), 1.0), (LambdaLayout::lambda1_col(idx), -1.0)],
            Relation::Eq,
            0.0,
        )?;
        lp.add_row(
            [(LambdaLayout::lambda0_col(idx), 1.0), (LambdaLayout::lambda1_col(idx), 1.0)],
            Relation::Eq,
            1.0,
        )?;
    }
    let coupling_rows = service_rows.end..lp.rows().len();
    Ok((
        lp,
        LambdaLayout {
            base: k,
            pairs,
            k0,
            k1,
            request_rows,
            service_rows,
            coupling_rows,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionCheck {
    Valid,
    Invalid { column: usize },
}

impl PartitionCheck {
    pub fn is_valid(self) -> bool {
        self == PartitionCheck::Valid
    }
}

/// Checks that `request_rows` and `service_rows` only hold 0/1 entries and
/// that no column has two ones inside either group: the row-partition
/// condition that makes the selection matrix totally unimodular.
pub fn verify_row_partition(request_rows: &[Row], service_rows: &[Row]) -> PartitionCheck {
    for group in [request_rows, service_rows] {
        let mut seen = BTreeSet::new();
        for row in group {
            for &(col, a) in &row.coefficients {
                if a != 1.0 || !seen.insert(col) {
                    return PartitionCheck::Invalid { column: col };
                }
            }
        }
    }
    PartitionCheck::Valid
}

/// Runs [`verify_row_partition`] on the selection rows of a round LP.
pub fn verify_layout_partition<T: crate::simplex_lp::LpScalar>(
    lp: &StandardLp<T>,
    layout: &LambdaLayout,
) -> PartitionCheck {
    let rows = lp.rows();
    verify_row_partition(
        &rows[layout.request_rows.clone()],
        &rows[layout.service_rows.clone()],
    )
}

/// Merges `frozen` with the `x = 1` pairs of an optimal round solution.
pub fn round_to_plan<T>(
    solution: &LpSolution<T>,
    layout: &LambdaLayout,
    frozen: &AssignmentPlan,
    scenario: &Scenario,
    tol: f64,
) -> Result<AssignmentPlan, TransformError> {
    let integral = extract_integral(solution, tol)?;
    let mut plan = frozen.clone();
    for (k, &(n, s)) in layout.pairs.iter().enumerate() {
        if integral[LambdaLayout::x_col(k)] == 1 {
            plan.select(n, s);
        }
    }
    let report = check_partial(&plan, scenario);
    let complete = layout.pairs.iter().all(|&(n, _)| plan.covers(n));
    if !report.is_feasible() || !complete {
        return Err(TransformError::InfeasiblePlan(report));
    }
    Ok(plan)
}

/// Converts an exact objective to `f64` for reporting; saturates on overflow.
pub fn objective_to_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Provider, Request};
    use crate::simplex_lp::{solve, LpStatus};

    fn two_by_two() -> Scenario {
        Scenario::new(
            vec![Provider::from_qos(0, &[1.0, 3.0])],
            vec![
                Request::new(0, [0], 1.0, 1.0, 2.0),
                Request::new(1, [0], 1.0, 1.0, 2.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn xi_examples() {
        assert_eq!(xi_score(&[1, 2], 2).unwrap(), 0.75);
        assert_eq!(xi_score(&[0, 0, 0], 3).unwrap(), 3.0);
        let g = xi_score(&[1, 2], 2).unwrap();
        let rho = xi_score(&[1, 3], 2).unwrap();
        assert_eq!(rho, 0.625);
        assert!(g > rho);
        assert_eq!(xi_score(&[1], 1), Err(TransformError::InvalidBase(1)));
        assert_eq!(
            xi_score_exact(&[1, 2], 2).unwrap(),
            BigRational::new(3.into(), 4.into())
        );
    }

    #[test]
    fn quantize_value_examples() {
        let (levels, step, d) = quantize_values(&[1.0, 1.5, 2.0], 0.5, 100).unwrap();
        assert_eq!(levels, vec![2, 3, 4]);
        assert_eq!((step, d), (0.5, 0));

        let (levels, _, _) = quantize_values(&[0.7, 0.7, 0.7], 0.01, 100).unwrap();
        assert!(levels.iter().all(|&l| l == levels[0]));

        let (_, step, d) = quantize_values(&[0.0, 100.0], 0.01, 100).unwrap();
        assert_eq!(d, 7);
        assert!((step - 1.28).abs() < 1e-12);

        assert!(quantize_values(&[1.0], 0.0, 100).is_err());
        let (levels, step, d) = quantize_values_with(&[0.0, 100.0, 3.0], 0.01, 2, true).unwrap();
        assert_eq!((levels, step, d), (vec![0, 2, 1], 0.01, 0));
        assert!(quantize_values(&[1.0], 1.0, 0).is_err());
    }

    #[test]
    fn quantize_shifts_maximum_to_zero() {
        let s = two_by_two();
        let q = quantize(&s, &CandidatePool::full(&s), 0.5, 100).unwrap();
        // payments: unselected 2.0, selected 1.5 (Q=1) and 0.5 (Q=3)
        assert_eq!(q.shift, 4);
        assert_eq!(q.max_level(), 0);
        assert_eq!(q.min_level(), -3);
        let e = q.levels_of(0, ServiceRef::new(0, 1)).unwrap();
        assert_eq!((e.unselected, e.selected), (0, -3));
    }

    #[test]
    fn layout_counts() {
        // two requests with disjoint two-service pools
        let s = Scenario::new(
            vec![
                Provider::from_qos(0, &[1.0, 2.0]),
                Provider::from_qos(1, &[1.0, 2.0]),
            ],
            vec![
                Request::new(0, [0], 1.0, 1.0, 2.0),
                Request::new(1, [1], 1.0, 1.0, 2.0),
            ],
        )
        .unwrap();
        let pool = CandidatePool::full(&s);
        let q = quantize(&s, &pool, DEFAULT_STEP, DEFAULT_RANGE_CAP).unwrap();
        let (lp, layout) = build_subproblem_lp(&pool, &q, None).unwrap();
        assert_eq!(lp.num_vars(), 12);
        assert_eq!(layout.request_rows.len(), 2);
        assert_eq!(layout.service_rows.len(), 4);
        assert_eq!(layout.coupling_rows.len(), 8);
        assert_eq!(layout.base, 4);
        assert!(verify_layout_partition(&lp, &layout).is_valid());
    }

    #[test]
    fn all_frozen_has_nothing_to_optimize() {
        let s = two_by_two();
        let frozen = AssignmentPlan::from_choices([
            (0, ServiceRef::new(0, 0)),
            (1, ServiceRef::new(0, 1)),
        ]);
        let pool = CandidatePool::new(&s, &frozen, &[]).unwrap();
        let q = quantize(&s, &pool, DEFAULT_STEP, DEFAULT_RANGE_CAP).unwrap();
        assert_eq!(
            build_subproblem_lp(&pool, &q, None).unwrap_err(),
            TransformError::NothingToOptimize
        );
    }

    #[test]
    fn emptied_pool_is_reported_before_solving() {
        let s = Scenario::new(
            vec![Provider::from_qos(0, &[1.0])],
            vec![
                Request::new(0, [0], 1.0, 1.0, 2.0),
                Request::new(1, [0], 1.0, 1.0, 2.0),
            ],
        )
        .unwrap();
        let frozen = AssignmentPlan::from_choices([(0, ServiceRef::new(0, 0))]);
        let pool = CandidatePool::new(&s, &frozen, &[1]).unwrap();
        let q = quantize(&s, &pool, DEFAULT_STEP, DEFAULT_RANGE_CAP).unwrap();
        assert_eq!(
            build_subproblem_lp(&pool, &q, None).unwrap_err(),
            TransformError::EmptyPool(1)
        );
    }

    #[test]
    fn single_pair_selects_it() {
        let s = Scenario::new(
            vec![Provider::from_qos(0, &[1.0])],
            vec![Request::new(0, [0], 1.0, 1.0, 2.0)],
        )
        .unwrap();
        let pool = CandidatePool::full(&s);
        let q = quantize(&s, &pool, DEFAULT_STEP, DEFAULT_RANGE_CAP).unwrap();
        let (lp, layout) = build_subproblem_lp(&pool, &q, None).unwrap();
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        let plan = round_to_plan(&sol, &layout, &AssignmentPlan::new(), &s, 1e-6).unwrap();
        assert_eq!(plan.choice(0).unwrap(), ServiceRef::new(0, 0));
    }

    #[test]
    fn two_by_two_round_puts_best_service_first_free() {
        let s = two_by_two();
        let pool = CandidatePool::full(&s);
        let q = quantize(&s, &pool, DEFAULT_STEP, DEFAULT_RANGE_CAP).unwrap();
        let (lp, layout) = build_subproblem_lp(&pool, &q, None).unwrap();
        let sol = solve(&lp).unwrap();
        let plan = round_to_plan(&sol, &layout, &AssignmentPlan::new(), &s, 1e-6).unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(sol.objective_value, layout.objective_of(&plan));
        for k in 0..layout.pairs.len() {
            let x = sol.values[LambdaLayout::x_col(k)];
            assert_eq!(sol.values[LambdaLayout::lambda1_col(k)], x);
            assert_eq!(sol.values[LambdaLayout::lambda0_col(k)], 1.0 - x);
        }
    }

    fn fake_solution(x: &[f64]) -> LpSolution<f64> {
        let mut values = Vec::new();
        for &v in x {
            values.extend([v, 1.0 - v, v]);
        }
        LpSolution {
            status: LpStatus::Optimal,
            values,
            objective_value: 0.0,
            pivots: 0,
        }
    }

    fn shared_layout(s: &Scenario) -> LambdaLayout {
        let pool = CandidatePool::full(s);
        let q = quantize(s, &pool, DEFAULT_STEP, DEFAULT_RANGE_CAP).unwrap();
        build_subproblem_lp(&pool, &q, None).unwrap().1
    }

    #[test]
    fn rounding_examples() {
        let s = two_by_two();
        let layout = shared_layout(&s);
        // pairs: (0,s0), (0,s1), (1,s0), (1,s1)
        let plan = round_to_plan(
            &fake_solution(&[1.0, 0.0, 0.0, 1.0]),
            &layout,
            &AssignmentPlan::new(),
            &s,
            1e-6,
        )
        .unwrap();
        assert_eq!(plan.choice(0).unwrap(), ServiceRef::new(0, 0));
        assert_eq!(plan.choice(1).unwrap(), ServiceRef::new(0, 1));

        let err = round_to_plan(
            &fake_solution(&[0.5, 0.5, 0.5, 0.5]),
            &layout,
            &AssignmentPlan::new(),
            &s,
            1e-6,
        )
        .unwrap_err();
        assert!(matches!(err, TransformError::Lp(LpError::NonIntegral { .. })));

        let frozen = AssignmentPlan::from_choices([(0, ServiceRef::new(0, 0))]);
        let pool = CandidatePool::new(&s, &frozen, &[1]).unwrap();
        let q = quantize(&s, &pool, DEFAULT_STEP, DEFAULT_RANGE_CAP).unwrap();
        let (_, layout) = build_subproblem_lp(&pool, &q, None).unwrap();
        assert_eq!(layout.pairs, vec![(1, ServiceRef::new(0, 1))]);
        let plan = round_to_plan(&fake_solution(&[1.0]), &layout, &frozen, &s, 1e-6).unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.choice(1).unwrap(), ServiceRef::new(0, 1));
    }

    #[test]
    fn partition_check() {
        let row = |cols: &[usize], rel| Row {
            coefficients: cols.iter().map(|&c| (c, 1.0)).collect(),
            relation: rel,
            rhs: 1.0,
        };
        assert!(verify_row_partition(&[], &[]).is_valid());
        assert_eq!(
            verify_row_partition(&[row(&[0, 1], Relation::Eq), row(&[1, 2], Relation::Eq)], &[]),
            PartitionCheck::Invalid { column: 1 }
        );
        assert!(verify_row_partition(
            &[row(&[0, 1], Relation::Eq)],
            &[row(&[0], Relation::Le), row(&[1], Relation::Le)]
        )
        .is_valid());
        let scaled = Row {
            coefficients: vec![(0, 2.0)],
            relation: Relation::Le,
            rhs: 1.0,
        };
        assert_eq!(
            verify_row_partition(&[], &[scaled]),
            PartitionCheck::Invalid { column: 0 }
        );
    }

    #[test]
    fn pool_freeze_removes_service_everywhere() {
        let s = two_by_two();
        let mut pool = CandidatePool::full(&s);
        pool.freeze(0, ServiceRef::new(0, 0)).unwrap();
        assert_eq!(pool.active().collect::<Vec<_>>(), vec![1]);
        assert_eq!(pool.pool(1).unwrap(), &[ServiceRef::new(0, 1)]);
        assert_eq!(
            pool.freeze(1, ServiceRef::new(0, 0)),
            Err(TransformError::UnavailableService(ServiceRef::new(0, 0)))
        );
        pool.freeze(1, ServiceRef::new(0, 1)).unwrap();
        assert!(pool.is_empty());
    }

    #[test]
    fn endpoint_prices_match_levels() {
        let s = two_by_two();
        let pool = CandidatePool::full(&s);
        let q = quantize(&s, &pool, 0.5, 100).unwrap();
        let (lp, layout) = build_subproblem_lp(&pool, &q, None).unwrap();
        for (k, &(n, svc)) in layout.pairs.iter().enumerate() {
            let e = q.levels_of(n, svc).unwrap();
            let obj = lp.objective();
            assert_eq!(obj[LambdaLayout::lambda0_col(k)], power(layout.base, -e.unselected));
            assert_eq!(obj[LambdaLayout::lambda1_col(k)], power(layout.base, -e.selected));
            assert!(obj[LambdaLayout::x_col(k)].is_zero());
        }
    }
}
