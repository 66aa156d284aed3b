//! Exhaustive ground truth for toy instances.
//!
//! Plans are enumerated by backtracking over requests in id order, each
//! request taking any authorized service not yet used. Everything here is
//! exponential; the node cap keeps runaway inputs from hanging a test.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{
    lex_compare, payment_vector, total_revenue, AssignmentPlan, ModelError, Scenario, ServiceRef,
};

/// Default bound on visited partial assignments.
pub const DEFAULT_NODE_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("enumeration exceeded {0} partial assignments")]
    CapExceeded(u64),
    #[error("no feasible plan")]
    NoFeasiblePlan,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationReport {
    pub feasible_count: u64,
    /// Every plan attaining the optimum.
    pub optimum_plans: Vec<AssignmentPlan>,
    /// Sorted payments of the optimum (any co-optimal plan).
    pub optimum_sorted: Vec<f64>,
    /// Revenue of the first optimum plan.
    pub optimum_revenue: f64,
}

/// Calls `visit` once for every feasible plan.
pub fn for_each_feasible(
    scenario: &Scenario,
    cap: u64,
    mut visit: impl FnMut(&AssignmentPlan),
) -> Result<u64, OracleError> {
    let pools: Vec<Vec<ServiceRef>> = (0..scenario.num_requests())
        .map(|n| scenario.candidates(n).collect())
        .collect();
    let mut state = Backtrack {
        pools: &pools,
        used: BTreeSet::new(),
        chosen: Vec::new(),
        nodes: 0,
        cap,
        count: 0,
    };
    state.descend(0, &mut visit)?;
    Ok(state.count)
}

struct Backtrack<'a> {
    pools: &'a [Vec<ServiceRef>],
    used: BTreeSet<ServiceRef>,
    chosen: Vec<ServiceRef>,
    nodes: u64,
    cap: u64,
    count: u64,
}

impl Backtrack<'_> {
    fn descend(
        &mut self,
        n: usize,
        visit: &mut impl FnMut(&AssignmentPlan),
    ) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > self.cap {
            return Err(OracleError::CapExceeded(self.cap));
        }
        if n == self.pools.len() {
            self.count += 1;
            visit(&AssignmentPlan::from_choices(self.chosen.iter().copied().enumerate()));
            return Ok(());
        }
        for &s in &self.pools[n] {
            if self.used.contains(&s) {
                continue;
            }
            self.used.insert(s);
            self.chosen.push(s);
            self.descend(n + 1, visit)?;
            self.chosen.pop();
            self.used.remove(&s);
        }
        Ok(())
    }
}

pub fn enumerate_feasible(scenario: &Scenario, cap: u64) -> Result<Vec<AssignmentPlan>, OracleError> {
    let mut out = Vec::new();
    for_each_feasible(scenario, cap, |p| out.push(p.clone()))?;
    Ok(out)
}

/// Generic best-plan search: `key` maps a plan to a score and `better`
/// orders scores (Greater means the first argument is preferred).
fn best_by<K: Clone>(
    scenario: &Scenario,
    cap: u64,
    key: impl Fn(&AssignmentPlan) -> Result<K, ModelError>,
    better: impl Fn(&K, &K) -> Ordering,
) -> Result<(u64, Vec<AssignmentPlan>, Option<K>), OracleError> {
    let mut best: Option<K> = None;
    let mut plans = Vec::new();
    let mut failure = None;
    let count = for_each_feasible(scenario, cap, |plan| {
        if failure.is_some() {
            return;
        }
        let k = match key(plan) {
            Ok(k) => k,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        match best.as_ref().map(|b| better(&k, b)) {
            None | Some(Ordering::Greater) => {
                best = Some(k);
                plans.clear();
                plans.push(plan.clone());
            }
            Some(Ordering::Equal) => plans.push(plan.clone()),
            Some(Ordering::Less) => {}
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok((count, plans, best))
}

fn lex_order(u: &[f64], v: &[f64]) -> Ordering {
    lex_compare(u, v).expect("sorted vectors of equal length")
}

fn report(
    scenario: &Scenario,
    count: u64,
    plans: Vec<AssignmentPlan>,
) -> Result<EnumerationReport, OracleError> {
    let first = plans.first().ok_or(OracleError::NoFeasiblePlan)?;
    Ok(EnumerationReport {
        feasible_count: count,
        optimum_sorted: payment_vector(first, scenario)?.sorted,
        optimum_revenue: total_revenue(first, scenario)?,
        optimum_plans: plans,
    })
}

/// Lexicographic maximum of the sorted payment vector over exact payments.
pub fn brute_force_mmf(scenario: &Scenario) -> Result<EnumerationReport, OracleError> {
    brute_force_mmf_capped(scenario, DEFAULT_NODE_CAP)
}

pub fn brute_force_mmf_capped(
    scenario: &Scenario,
    cap: u64,
) -> Result<EnumerationReport, OracleError> {
    let (count, plans, _) = best_by(
        scenario,
        cap,
        |p| Ok(payment_vector(p, scenario)?.sorted),
        |u: &Vec<f64>, v: &Vec<f64>| lex_order(u, v),
    )?;
    report(scenario, count, plans)
}

/// Lexicographic maximum of sorted grid levels `round(payment / step)`.
/// Returns the report together with the optimal sorted level vector.
pub fn brute_force_mmf_quantized(
    scenario: &Scenario,
    step: f64,
) -> Result<(EnumerationReport, Vec<i64>), OracleError> {
    let (count, plans, best) = best_by(
        scenario,
        DEFAULT_NODE_CAP,
        |p| Ok(grid_levels(&payment_vector(p, scenario)?.sorted, step)),
        |u, v| u.cmp(v),
    )?;
    let levels = best.ok_or(OracleError::NoFeasiblePlan)?;
    Ok((report(scenario, count, plans)?, levels))
}

/// `round(v / step)` elementwise; order-preserving, so sorted input stays sorted.
pub fn grid_levels(values: &[f64], step: f64) -> Vec<i64> {
    values.iter().map(|v| (v / step).round() as i64).collect()
}

/// Maximum total payment. Ties in revenue are compared exactly.
pub fn brute_force_revenue(scenario: &Scenario) -> Result<EnumerationReport, OracleError> {
    let (count, plans, _) = best_by(
        scenario,
        DEFAULT_NODE_CAP,
        |p| total_revenue(p, scenario),
        |a: &f64, b: &f64| a.total_cmp(b),
    )?;
    report(scenario, count, plans)
}

/// Number of injective authorized assignments, counted by a dynamic program
/// over services and subsets of requests. Independent of the backtracking
/// enumerator; only usable for up to ~20 requests.
pub fn count_feasible_by_subsets(scenario: &Scenario) -> u64 {
    let n = scenario.num_requests();
    assert!(n < 24, "subset count is exponential in the number of requests");
    let mut ways = vec![0u64; 1 << n];
    ways[0] = 1;
    for provider in scenario.providers() {
        let allowed: Vec<usize> = scenario.authorized_requests(provider.id).to_vec();
        for _ in &provider.services {
            let before = ways.clone();
            for (mask, &w) in before.iter().enumerate() {
                if w == 0 {
                    continue;
                }
                for &r in &allowed {
                    if mask & (1 << r) == 0 {
                        ways[mask | (1 << r)] += w;
                    }
                }
            }
        }
    }
    ways[(1 << n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Provider, Request};

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
    fn enumeration_counts() {
        assert_eq!(enumerate_feasible(&two_by_two(), 100).unwrap().len(), 2);

        let disjoint = Scenario::new(
            vec![
                Provider::from_qos(0, &[1.0, 2.0]),
                Provider::from_qos(1, &[1.0, 2.0, 3.0]),
            ],
            vec![
                Request::new(0, [0], 1.0, 1.0, 2.0),
                Request::new(1, [1], 1.0, 1.0, 2.0),
            ],
        )
        .unwrap();
        assert_eq!(enumerate_feasible(&disjoint, 100).unwrap().len(), 6);

        let starved = Scenario::new(
            vec![Provider::from_qos(0, &[1.0])],
            vec![
                Request::new(0, [0], 1.0, 1.0, 2.0),
                Request::new(1, [0], 1.0, 1.0, 2.0),
            ],
        )
        .unwrap();
        assert!(enumerate_feasible(&starved, 100).unwrap().is_empty());
        assert_eq!(brute_force_mmf(&starved), Err(OracleError::NoFeasiblePlan));
    }

    #[test]
    fn cap_is_enforced() {
        assert_eq!(
            enumerate_feasible(&two_by_two(), 2),
            Err(OracleError::CapExceeded(2))
        );
    }

    #[test]
    fn mmf_of_two_by_two() {
        let r = brute_force_mmf(&two_by_two()).unwrap();
        assert_eq!(r.optimum_sorted, vec![0.5, 1.5]);
        assert_eq!(r.optimum_plans.len(), 2);
        assert_eq!(r.feasible_count, 2);
    }

    #[test]
    fn mmf_of_single_plan_instance() {
        // r0 may only use the first service of provider 0
        let s = Scenario::new(
            vec![
                Provider::from_qos(0, &[1.0]),
                Provider::from_qos(1, &[1.0, 2.0]),
            ],
            vec![
                Request::new(0, [0], 1.0, 1.0, 2.0),
                Request::new(1, [0, 1], 1.0, 1.0, 2.0),
            ],
        )
        .unwrap();
        let r = brute_force_mmf(&s).unwrap();
        assert_eq!(r.optimum_sorted, vec![1.5, 1.5]);
        assert_eq!(r.optimum_plans.len(), 1);
    }

    #[test]
    fn revenue_examples() {
        let r = brute_force_revenue(&two_by_two()).unwrap();
        assert_eq!(r.optimum_revenue, 2.0);
        assert_eq!(r.optimum_plans.len(), 2);

        let flat = Scenario::new(
            vec![Provider::from_qos(0, &[1.0, 3.0, 7.0])],
            vec![
                Request::new(0, [0], 1.5, 0.0, 2.0),
                Request::new(1, [0], 2.5, 0.0, 2.0),
            ],
        )
        .unwrap();
        let r = brute_force_revenue(&flat).unwrap();
        assert_eq!(r.optimum_revenue, 4.0);
        assert_eq!(r.optimum_plans.len() as u64, r.feasible_count);

        let single = Scenario::new(
            vec![Provider::from_qos(0, &[1.0, 3.0])],
            vec![Request::new(0, [0], 1.0, 1.0, 2.0)],
        )
        .unwrap();
        let r = brute_force_revenue(&single).unwrap();
        assert_eq!(r.optimum_revenue, 1.5);
        assert_eq!(
            r.optimum_plans[0].choice(0).unwrap(),
            ServiceRef::new(0, 0)
        );
    }

    #[test]
    fn subset_count_agrees_with_enumeration() {
        let s = Scenario::new(
            vec![
                Provider::from_qos(0, &[1.0, 2.0]),
                Provider::from_qos(1, &[1.0, 2.0, 3.0]),
                Provider::from_qos(2, &[4.0]),
            ],
            vec![
                Request::new(0, [0, 2], 1.0, 1.0, 2.0),
                Request::new(1, [1], 1.0, 1.0, 2.0),
                Request::new(2, [0, 1, 2], 1.0, 1.0, 2.0),
            ],
        )
        .unwrap();
        let listed = enumerate_feasible(&s, DEFAULT_NODE_CAP).unwrap().len() as u64;
        assert_eq!(listed, count_feasible_by_subsets(&s));
        assert_eq!(count_feasible_by_subsets(&two_by_two()), 2);
    }

    #[test]
    fn quantized_optimum_uses_levels() {
        let (r, levels) = brute_force_mmf_quantized(&two_by_two(), 0.01).unwrap();
        assert_eq!(levels, vec![50, 150]);
        assert_eq!(r.optimum_plans.len(), 2);
    }
}
