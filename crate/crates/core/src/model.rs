//! Domain types for concurrent service selection: providers with candidate
//! services, requests with authorization sets and SLA pricing, assignment
//! plans, and the payment arithmetic built on top of them.
//!
//! All indices are 0-based in memory. File formats and reports shift them to
//! 1-based at the boundary (see `scenario_io`).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown request {0}")]
    UnknownRequest(usize),
    #[error("request {0} unassigned")]
    Unassigned(usize),
    #[error("request {0} selects more than one service")]
    MultipleSelection(usize),
    #[error("unknown service {0}")]
    UnknownService(ServiceRef),
    #[error("provider {provider} not permitted for request {request}")]
    ProviderNotPermitted { request: usize, provider: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("payment vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("payment vector is not sorted non-decreasingly")]
    Unsorted,
    #[error("non-finite payment value")]
    NonFinite,
}

/// Address of a candidate service: provider `i` and index `j` inside `C_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServiceRef {
    pub provider: usize,
    pub service: usize,
}

impl ServiceRef {
    pub const fn new(provider: usize, service: usize) -> Self {
        Self { provider, service }
    }
}

impl fmt::Display for ServiceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.provider, self.service)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Service {
    pub provider_id: usize,
    pub service_id: usize,
    /// Response time in seconds.
    pub qos: f64,
}

impl Service {
    pub fn reference(&self) -> ServiceRef {
        ServiceRef::new(self.provider_id, self.service_id)
    }
}

/// Candidate set `C_i` of one provider. `services[j].service_id == j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Provider {
    pub id: usize,
    pub services: Vec<Service>,
}

impl Provider {
    /// Builds a provider whose service ids follow the order of `qos`.
    pub fn from_qos(id: usize, qos: &[f64]) -> Self {
        let services = qos
            .iter()
            .enumerate()
            .map(|(j, &q)| Service {
                provider_id: id,
                service_id: j,
                qos: q,
            })
            .collect();
        Self { id, services }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub request_id: usize,
    /// Constraint set `S_n`, kept sorted and free of duplicates.
    pub allowed_providers: Vec<usize>,
    /// Base payment `a_n`.
    pub base_payment: f64,
    /// Maximum extra bonus `b_n`.
    pub max_bonus: f64,
    /// QoS baseline `Q_n^(ref)` in seconds.
    pub qos_baseline: f64,
}

impl Request {
    pub fn new(
        request_id: usize,
        allowed_providers: impl IntoIterator<Item = usize>,
        base_payment: f64,
        max_bonus: f64,
        qos_baseline: f64,
    ) -> Self {
        let allowed: BTreeSet<usize> = allowed_providers.into_iter().collect();
        Self {
            request_id,
            allowed_providers: allowed.into_iter().collect(),
            base_payment,
            max_bonus,
            qos_baseline,
        }
    }

    pub fn allows(&self, provider: usize) -> bool {
        self.allowed_providers.binary_search(&provider).is_ok()
    }

    /// Payment when nothing is selected: `a_n + b_n`.
    pub fn unselected_payment(&self) -> f64 {
        self.base_payment + self.max_bonus
    }

    /// Payment charged when a service of response time `qos` is selected.
    pub fn payment_for_qos(&self, qos: f64) -> f64 {
        self.base_payment + self.max_bonus * (1.0 - qos / self.qos_baseline)
    }
}

/// A validated problem instance. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    providers: Vec<Provider>,
    requests: Vec<Request>,
    authorized: Vec<Vec<usize>>,
}

impl Scenario {
    pub fn new(providers: Vec<Provider>, requests: Vec<Request>) -> Result<Self, ModelError> {
        for (i, p) in providers.iter().enumerate() {
            if p.id != i {
                return Err(ModelError::InvalidScenario(format!(
                    "provider at position {i} has id {}",
                    p.id
                )));
            }
            for (j, s) in p.services.iter().enumerate() {
                if s.provider_id != i || s.service_id != j {
                    return Err(ModelError::InvalidScenario(format!(
                        "service at ({i},{j}) carries id ({},{})",
                        s.provider_id, s.service_id
                    )));
                }
                if !s.qos.is_finite() || s.qos < 0.0 {
                    return Err(ModelError::InvalidScenario(format!(
                        "service ({i},{j}) has invalid qos {}",
                        s.qos
                    )));
                }
            }
        }
        let mut authorized = vec![Vec::new(); providers.len()];
        for (n, r) in requests.iter().enumerate() {
            if r.request_id != n {
                return Err(ModelError::InvalidScenario(format!(
                    "request at position {n} has id {}",
                    r.request_id
                )));
            }
            if r.allowed_providers.is_empty() {
                return Err(ModelError::InvalidScenario(format!(
                    "request {n} has an empty constraint set"
                )));
            }
            if r.allowed_providers.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ModelError::InvalidScenario(format!(
                    "request {n} constraint set not sorted/unique"
                )));
            }
            for &i in &r.allowed_providers {
                if i >= providers.len() {
                    return Err(ModelError::InvalidScenario(format!(
                        "request {n} references unknown provider {i}"
                    )));
                }
                authorized[i].push(n);
            }
            let finite = [r.base_payment, r.max_bonus, r.qos_baseline]
                .iter()
                .all(|v| v.is_finite());
            if !finite || r.base_payment < 0.0 || r.max_bonus < 0.0 || r.qos_baseline <= 0.0 {
                return Err(ModelError::InvalidScenario(format!(
                    "request {n} has invalid pricing (a={}, b={}, q_ref={})",
                    r.base_payment, r.max_bonus, r.qos_baseline
                )));
            }
        }
        Ok(Self {
            providers,
            requests,
            authorized,
        })
    }

    pub fn providers(&self) -> &[Provider] {
        &self.providers
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn num_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn num_providers(&self) -> usize {
        self.providers.len()
    }

    pub fn request(&self, n: usize) -> Result<&Request, ModelError> {
        self.requests.get(n).ok_or(ModelError::UnknownRequest(n))
    }

    pub fn service(&self, s: ServiceRef) -> Result<&Service, ModelError> {
        self.providers
            .get(s.provider)
            .and_then(|p| p.services.get(s.service))
            .ok_or(ModelError::UnknownService(s))
    }

    /// `𝒩_i`: requests authorized to use provider `i`.
    pub fn authorized_requests(&self, provider: usize) -> &[usize] {
        &self.authorized[provider]
    }

    /// Total candidate count `Σ|C_i|`.
    pub fn total_services(&self) -> usize {
        self.providers.iter().map(|p| p.services.len()).sum()
    }

    /// Every service request `n` may select, in (provider, service) order.
    pub fn candidates(&self, n: usize) -> impl Iterator<Item = ServiceRef> + '_ {
        self.requests[n].allowed_providers.iter().flat_map(move |&i| {
            (0..self.providers[i].services.len()).map(move |j| ServiceRef::new(i, j))
        })
    }

    pub fn pool_size(&self, n: usize) -> usize {
        self.requests[n]
            .allowed_providers
            .iter()
            .map(|&i| self.providers[i].services.len())
            .sum()
    }
}

/// One `x^n_{i,j} = 1` entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Selection {
    pub request: usize,
    pub service: ServiceRef,
}

/// The binary family `x^n_{i,j}` stored as the set of entries equal to one.
/// May be partial (requests without an entry are unassigned).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentPlan {
    selections: BTreeSet<Selection>,
}

impl AssignmentPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_choices(choices: impl IntoIterator<Item = (usize, ServiceRef)>) -> Self {
        let selections = choices
            .into_iter()
            .map(|(request, service)| Selection { request, service })
            .collect();
        Self { selections }
    }

    /// Sets `x^n_{i,j} = 1`. Does not clear other entries of `n`.
    pub fn select(&mut self, request: usize, service: ServiceRef) {
        self.selections.insert(Selection { request, service });
    }

    pub fn selections(&self) -> impl Iterator<Item = &Selection> {
        self.selections.iter()
    }

    pub fn len(&self) -> usize {
        self.selections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selections.is_empty()
    }

    fn entries_of(&self, request: usize) -> impl Iterator<Item = &Selection> {
        let lo = Selection {
            request,
            service: ServiceRef::new(0, 0),
        };
        let hi = Selection {
            request,
            service: ServiceRef::new(usize::MAX, usize::MAX),
        };
        self.selections.range(lo..=hi)
    }

    /// The unique service chosen by `request`.
    pub fn choice(&self, request: usize) -> Result<ServiceRef, ModelError> {
        let mut it = self.entries_of(request);
        match (it.next(), it.next()) {
            (Some(s), None) => Ok(s.service),
            (None, _) => Err(ModelError::Unassigned(request)),
            (Some(_), Some(_)) => Err(ModelError::MultipleSelection(request)),
        }
    }

    pub fn covers(&self, request: usize) -> bool {
        self.entries_of(request).next().is_some()
    }

    /// Requests with at least one entry, ascending.
    pub fn covered_requests(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.selections.iter().map(|s| s.request).collect();
        out.dedup();
        out
    }

    /// Request → service map; fails on any request with several entries.
    pub fn choices(&self) -> Result<BTreeMap<usize, ServiceRef>, ModelError> {
        let mut map = BTreeMap::new();
        for s in &self.selections {
            if map.insert(s.request, s.service).is_some() {
                return Err(ModelError::MultipleSelection(s.request));
            }
        }
        Ok(map)
    }

    /// Union of two plans (used to merge frozen and freshly solved choices).
    pub fn merged(&self, other: &AssignmentPlan) -> AssignmentPlan {
        let mut selections = self.selections.clone();
        selections.extend(other.selections.iter().copied());
        AssignmentPlan { selections }
    }
}

/// Execution time `τ_n`: the response time of the service chosen by `n`.
pub fn execution_time(
    plan: &AssignmentPlan,
    scenario: &Scenario,
    n: usize,
) -> Result<f64, ModelError> {
    scenario.request(n)?;
    let s = plan.choice(n)?;
    Ok(scenario.service(s)?.qos)
}

/// `π^n_{i,j}` for one candidate, with `x = selected`.
pub fn assignment_payment(
    req: &Request,
    service: &Service,
    selected: bool,
) -> Result<f64, ModelError> {
    if !req.allows(service.provider_id) {
        return Err(ModelError::ProviderNotPermitted {
            request: req.request_id,
            provider: service.provider_id,
        });
    }
    let x = if selected { 1.0 } else { 0.0 };
    Ok(req.base_payment + req.max_bonus * (1.0 - service.qos / req.qos_baseline * x))
}

/// Overall payment `π_n` of request `n` under `plan`.
pub fn request_payment(
    plan: &AssignmentPlan,
    scenario: &Scenario,
    n: usize,
) -> Result<f64, ModelError> {
    let req = scenario.request(n)?;
    let s = plan.choice(n)?;
    assignment_payment(req, scenario.service(s)?, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaymentVector {
    pub per_request: Vec<f64>,
    pub sorted: Vec<f64>,
}

impl PaymentVector {
    pub fn from_values(per_request: Vec<f64>) -> Result<Self, ModelError> {
        if per_request.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let mut sorted = per_request.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            per_request,
            sorted,
        })
    }

    pub fn len(&self) -> usize {
        self.per_request.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_request.is_empty()
    }
}

pub fn payment_vector(
    plan: &AssignmentPlan,
    scenario: &Scenario,
) -> Result<PaymentVector, ModelError> {
    let values = (0..scenario.num_requests())
        .map(|n| request_payment(plan, scenario, n))
        .collect::<Result<Vec<_>, _>>()?;
    PaymentVector::from_values(values)
}

pub fn total_revenue(plan: &AssignmentPlan, scenario: &Scenario) -> Result<f64, ModelError> {
    (0..scenario.num_requests())
        .map(|n| request_payment(plan, scenario, n))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Request without any selected service.
    Unassigned { request: usize },
    /// Request selecting more than one service.
    MultipleSelection { request: usize, count: usize },
    /// Several requests selecting the same service.
    ServiceCollision {
        service: ServiceRef,
        requests: Vec<usize>,
    },
    /// Request selecting a service of a provider outside `S_n`.
    Unauthorized { request: usize, provider: usize },
    UnknownService { request: usize, service: ServiceRef },
    UnknownRequest { request: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a complete plan against the selection constraints.
pub fn check_feasible(plan: &AssignmentPlan, scenario: &Scenario) -> FeasibilityReport {
    check_plan(plan, scenario, true)
}

/// Like [`check_feasible`] but only for the requests the plan covers.
pub fn check_partial(plan: &AssignmentPlan, scenario: &Scenario) -> FeasibilityReport {
    check_plan(plan, scenario, false)
}

fn check_plan(plan: &AssignmentPlan, scenario: &Scenario, complete: bool) -> FeasibilityReport {
    let mut violations = Vec::new();
    let mut per_request: BTreeMap<usize, usize> = BTreeMap::new();
    let mut per_service: BTreeMap<ServiceRef, Vec<usize>> = BTreeMap::new();
    for sel in plan.selections() {
        let Ok(req) = scenario.request(sel.request) else {
            violations.push(Violation::UnknownRequest {
                request: sel.request,
            });
            continue;
        };
        *per_request.entry(sel.request).or_default() += 1;
        if scenario.service(sel.service).is_err() {
            violations.push(Violation::UnknownService {
                request: sel.request,
                service: sel.service,
            });
            continue;
        }
        if !req.allows(sel.service.provider) {
            violations.push(Violation::Unauthorized {
                request: sel.request,
                provider: sel.service.provider,
            });
        }
        per_service.entry(sel.service).or_default().push(sel.request);
    }
    if complete {
        for n in 0..scenario.num_requests() {
            if !per_request.contains_key(&n) {
                violations.push(Violation::Unassigned { request: n });
            }
        }
    }
    for (&request, &count) in &per_request {
        if count > 1 {
            violations.push(Violation::MultipleSelection { request, count });
        }
    }
    for (service, requests) in per_service {
        if requests.len() > 1 {
            violations.push(Violation::ServiceCollision { service, requests });
        }
    }
    FeasibilityReport { violations }
}

/// Lexicographic comparison of two non-decreasingly sorted payment vectors.
pub fn lex_compare(u: &[f64], v: &[f64]) -> Result<Ordering, ModelError> {
    if u.len() != v.len() {
        return Err(ModelError::LengthMismatch(u.len(), v.len()));
    }
    for w in [u, v] {
        if w.iter().any(|x| x.is_nan()) {
            return Err(ModelError::NonFinite);
        }
        if w.windows(2).any(|p| p[0] > p[1]) {
            return Err(ModelError::Unsorted);
        }
    }
    for (a, b) in u.iter().zip(v) {
        match a.partial_cmp(b) {
            Some(Ordering::Equal) => continue,
            Some(o) => return Ok(o),
            None => return Err(ModelError::NonFinite),
        }
    }
    Ok(Ordering::Equal)
}

/// Finds an assignment giving every request a distinct authorized service,
/// if one exists (augmenting paths, requests visited in id order).
pub fn saturating_matching(scenario: &Scenario) -> Option<AssignmentPlan> {
    saturating_matching_excluding(scenario, &(0..scenario.num_requests()).collect::<Vec<_>>(), &BTreeSet::new())
}

/// Matching restricted to `requests`, never using a service in `taken`.
pub fn saturating_matching_excluding(
    scenario: &Scenario,
    requests: &[usize],
    taken: &BTreeSet<ServiceRef>,
) -> Option<AssignmentPlan> {
    let pools: Vec<Vec<ServiceRef>> = requests
        .iter()
        .map(|&n| scenario.candidates(n).filter(|s| !taken.contains(s)).collect())
        .collect();
    let mut owner: BTreeMap<ServiceRef, usize> = BTreeMap::new();
    for k in 0..requests.len() {
        let mut visited = BTreeSet::new();
        if !augment(k, &pools, &mut owner, &mut visited) {
            return None;
        }
    }
    Some(AssignmentPlan::from_choices(
        owner.into_iter().map(|(s, k)| (requests[k], s)),
    ))
}

fn augment(
    k: usize,
    pools: &[Vec<ServiceRef>],
    owner: &mut BTreeMap<ServiceRef, usize>,
    visited: &mut BTreeSet<ServiceRef>,
) -> bool {
    for &s in &pools[k] {
        if !visited.insert(s) {
            continue;
        }
        let free = match owner.get(&s) {
            None => true,
            Some(&other) => augment(other, pools, owner, visited),
        };
        if free {
            owner.insert(s, k);
            return true;
        }
    }
    false
}
