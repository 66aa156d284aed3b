//! Minimize-form linear programs and a two-phase primal simplex solver.
//!
//! Constraint coefficients, right-hand sides and bounds are `f64`. Objective
//! coefficients are generic over [`LpScalar`]: plain `f64` for ordinary
//! programs, or [`BigRational`] when the objective spans more orders of
//! magnitude than a double can resolve (the exponential fairness objective
//! built by `lex_transform`). With an exact objective every pricing decision
//! is exact; on totally unimodular constraint matrices the tableau itself
//! only ever holds small integers, so the whole solve is exact.
//!
//! The solver runs a presolve pass before the tableau is built:
//! fixed columns and singleton rows become bounds, two-variable equality rows
//! are eliminated by substitution, and upper bounds already implied by a
//! nonnegative row are dropped. Remaining finite upper bounds become explicit
//! rows. Pivoting follows Bland's rule (lowest eligible column enters, lowest
//! basic index leaves on ratio ties), so runs are deterministic and cannot cycle.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Pivot, feasibility and reduced-cost tolerance for `f64` arithmetic.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Default distance to the nearest integer accepted by [`extract_integral`].
pub const INTEGRALITY_TOL: f64 = 1e-6;

const ZERO_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("row {row}: column {col} out of range for {num_vars} variables")]
    ColumnOutOfRange {
        row: usize,
        col: usize,
        num_vars: usize,
    },
    #[error("row {row}: expected {expected} coefficients, got {got}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("variable {0} has no finite lower bound")]
    FreeVariable(usize),
    #[error("variable {0} out of range")]
    UnknownVariable(usize),
    #[error("pivot limit of {0} exceeded")]
    PivotLimit(usize),
    #[error("solution is not optimal ({0:?})")]
    NotOptimal(LpStatus),
    #[error("non-integral basic solution: x[{index}] = {value}")]
    NonIntegral { index: usize, value: f64 },
}

/// Arithmetic needed to price columns in the objective row.
pub trait LpScalar: Clone + fmt::Debug + Send + Sync + 'static {
    fn zero() -> Self;
    /// Exact conversion of a finite `f64`.
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// Strictly below zero (beyond tolerance for inexact types).
    fn is_negative(&self) -> bool;
    /// `self += other * factor`
    fn add_scaled(&mut self, other: &Self, factor: f64);
    fn add_assign(&mut self, other: &Self);
    fn div_f64(&self, divisor: f64) -> Self;
    /// Total order used for bound pruning; inexact types compare with tolerance.
    fn compare(&self, other: &Self) -> Ordering;
}

impl LpScalar for f64 {
    fn zero() -> Self {
        0.0
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_negative(&self) -> bool {
        *self < -FEASIBILITY_TOL
    }

    fn add_scaled(&mut self, other: &Self, factor: f64) {
        *self += other * factor;
    }

    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }

    fn div_f64(&self, divisor: f64) -> Self {
        self / divisor
    }

    fn compare(&self, other: &Self) -> Ordering {
        let scale = 1.0_f64.max(self.abs()).max(other.abs());
        if (self - other).abs() <= FEASIBILITY_TOL * scale {
            Ordering::Equal
        } else if self < other {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

impl LpScalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }

    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite coefficient")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }

    fn add_scaled(&mut self, other: &Self, factor: f64) {
        if factor == 0.0 || other.is_zero() {
            return;
        }
        if self.denom().is_one()
            && other.denom().is_one()
            && factor.fract() == 0.0
            && factor.abs() < 9.0e15
        {
            // integer fast path: skips the gcd normalization of general ratios
            let numer = if factor == 1.0 {
                self.numer() + other.numer()
            } else if factor == -1.0 {
                self.numer() - other.numer()
            } else {
                self.numer() + other.numer() * BigInt::from(factor as i64)
            };
            *self = BigRational::from_integer(numer);
            return;
        }
        if factor == 1.0 {
            *self += other;
        } else if factor == -1.0 {
            *self -= other;
        } else {
            *self += other * <BigRational as LpScalar>::from_f64(factor);
        }
    }

    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }

    fn div_f64(&self, divisor: f64) -> Self {
        if divisor == 1.0 {
            self.clone()
        } else if divisor == -1.0 {
            -self.clone()
        } else {
            self / <BigRational as LpScalar>::from_f64(divisor)
        }
    }

    fn compare(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
        })
    }
}

/// A constraint row stored sparsely: `(column, coefficient)` pairs sorted by
/// column, without duplicates or explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefficients: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn coefficient(&self, col: usize) -> f64 {
        self.coefficients
            .binary_search_by_key(&col, |&(c, _)| c)
            .map(|k| self.coefficients[k].1)
            .unwrap_or(0.0)
    }

    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coefficients.iter().map(|&(c, a)| a * values[c]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardLp<T = f64> {
    objective: Vec<T>,
    rows: Vec<Row>,
    lower: Vec<f64>,
    upper: Vec<Option<f64>>,
}

impl<T: LpScalar> StandardLp<T> {
    /// A program over `objective.len()` variables, all bounded below by zero.
    pub fn new(objective: Vec<T>) -> Self {
        let n = objective.len();
        Self {
            objective,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[Option<f64>] {
        &self.upper
    }

    /// Adds a sparse row; duplicate columns are summed and zeros dropped.
    pub fn add_row(
        &mut self,
        coefficients: impl IntoIterator<Item = (usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<usize, LpError> {
        let row = self.rows.len();
        let mut coefs: Vec<(usize, f64)> = coefficients.into_iter().collect();
        for &(col, a) in &coefs {
            if col >= self.num_vars() {
                return Err(LpError::ColumnOutOfRange {
                    row,
                    col,
                    num_vars: self.num_vars(),
                });
            }
            if !a.is_finite() {
                return Err(LpError::NonFinite("row coefficient"));
            }
        }
        if !rhs.is_finite() {
            return Err(LpError::NonFinite("right-hand side"));
        }
        coefs.sort_by_key(|&(c, _)| c);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        for (c, a) in coefs {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += a,
                _ => merged.push((c, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row {
            coefficients: merged,
            relation,
            rhs,
        });
        Ok(row)
    }

    /// Adds a row given as a full coefficient list of length `num_vars`.
    pub fn add_dense_row(
        &mut self,
        coefficients: &[f64],
        relation: Relation,
        rhs: f64,
    ) -> Result<usize, LpError> {
        if coefficients.len() != self.num_vars() {
            return Err(LpError::DimensionMismatch {
                row: self.rows.len(),
                expected: self.num_vars(),
                got: coefficients.len(),
            });
        }
        self.add_row(coefficients.iter().copied().enumerate(), relation, rhs)
    }

    pub fn set_lower_bound(&mut self, var: usize, value: f64) -> Result<(), LpError> {
        if var >= self.num_vars() {
            return Err(LpError::UnknownVariable(var));
        }
        if !value.is_finite() {
            return Err(LpError::FreeVariable(var));
        }
        self.lower[var] = value;
        Ok(())
    }

    pub fn set_upper_bound(&mut self, var: usize, value: Option<f64>) -> Result<(), LpError> {
        if var >= self.num_vars() {
            return Err(LpError::UnknownVariable(var));
        }
        if value.is_some_and(|v| v.is_nan()) {
            return Err(LpError::NonFinite("upper bound"));
        }
        self.upper[var] = value.filter(|v| v.is_finite());
        Ok(())
    }

    /// Objective value `objective · values` evaluated in `T`.
    pub fn evaluate(&self, values: &[f64]) -> T {
        let mut total = T::zero();
        for (c, &v) in self.objective.iter().zip(values) {
            total.add_scaled(c, v);
        }
        total
    }

    /// Largest violation of any row or bound by `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let gap = row.activity(values) - row.rhs;
            worst = worst.max(match row.relation {
                Relation::Eq => gap.abs(),
                Relation::Le => gap.max(0.0),
            });
        }
        for (k, &v) in values.iter().enumerate() {
            worst = worst.max(self.lower[k] - v);
            if let Some(u) = self.upper[k] {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    /// Plain-text listing for inspection: the objective line, then one line
    /// per row, then non-default bounds. Not a stable interchange format.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "min");
        for (k, c) in self.objective.iter().enumerate() {
            let _ = write!(out, " {:+e}*x{k}", c.to_f64());
        }
        out.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "r{r}:");
            for &(c, a) in &row.coefficients {
                let _ = write!(out, " {a:+}*x{c}");
            }
            let _ = writeln!(out, " {} {}", row.relation, row.rhs);
        }
        for k in 0..self.num_vars() {
            if self.lower[k] != 0.0 || self.upper[k].is_some() {
                let _ = writeln!(
                    out,
                    "bound x{k} in [{}, {}]",
                    self.lower[k],
                    self.upper[k].map_or("inf".to_string(), |u| u.to_string())
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T = f64> {
    pub status: LpStatus,
    /// One value per variable; empty unless optimal.
    pub values: Vec<f64>,
    pub objective_value: T,
    pub pivots: usize,
}

impl<T: LpScalar> LpSolution<T> {
    fn without_point(status: LpStatus, pivots: usize) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective_value: T::zero(),
            pivots,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    pub max_pivots: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_pivots: 2_000_000,
        }
    }
}

pub fn solve<T: LpScalar>(lp: &StandardLp<T>) -> Result<LpSolution<T>, LpError> {
    solve_with(lp, SolverOptions::default())
}

pub fn solve_with<T: LpScalar>(
    lp: &StandardLp<T>,
    options: SolverOptions,
) -> Result<LpSolution<T>, LpError> {
    if lp.objective.iter().any(|c| c.to_f64().is_nan()) {
        return Err(LpError::NonFinite("objective"));
    }
    let reduced = match presolve(lp)? {
        Presolve::Infeasible => return Ok(LpSolution::without_point(LpStatus::Infeasible, 0)),
        Presolve::Reduced(r) => r,
    };
    let (status, reduced_values, pivots) = reduced.solve_tableau(options)?;
    if status != LpStatus::Optimal {
        return Ok(LpSolution::without_point(status, pivots));
    }
    let values = reduced.postsolve(&reduced_values, lp.num_vars());
    let objective_value = lp.evaluate(&values);
    Ok(LpSolution {
        status,
        values,
        objective_value,
        pivots,
    })
}

/// Rounds every value of an optimal solution to the nearest integer, failing
/// if any value is farther than `tol` from it.
pub fn extract_integral<T>(solution: &LpSolution<T>, tol: f64) -> Result<Vec<i64>, LpError> {
    if solution.status != LpStatus::Optimal {
        return Err(LpError::NotOptimal(solution.status));
    }
    solution
        .values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            let rounded = value.round();
            if (value - rounded).abs() > tol {
                Err(LpError::NonIntegral { index, value })
            } else {
                Ok(rounded as i64)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// presolve

enum PostStep {
    Fixed { col: usize, value: f64 },
    /// `x[col] = alpha + beta * x[via]`
    Substituted {
        col: usize,
        alpha: f64,
        beta: f64,
        via: usize,
    },
}

enum Presolve<T> {
    Infeasible,
    Reduced(Reduced<T>),
}

/// The program left after presolve, in shifted form: every column is
/// nonnegative with lower bound zero.
struct Reduced<T> {
    /// reduced column -> original column
    columns: Vec<usize>,
    /// lower bound of each reduced column in original units
    shift: Vec<f64>,
    objective: Vec<T>,
    rows: Vec<Row>,
    post: Vec<PostStep>,
}

struct Work<T> {
    rows: Vec<Option<Row>>,
    col_rows: Vec<Vec<usize>>,
    col_count: Vec<usize>,
    objective: Vec<T>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    alive: Vec<bool>,
    post: Vec<PostStep>,
}

impl<T: LpScalar> Work<T> {
    fn remove_row(&mut self, r: usize) {
        if let Some(row) = self.rows[r].take() {
            for &(c, _) in &row.coefficients {
                self.col_count[c] -= 1;
            }
        }
    }

    /// Replaces `col` in every live row by the constant `value`.
    fn fix(&mut self, col: usize, value: f64) {
        for k in 0..self.col_rows[col].len() {
            let r = self.col_rows[col][k];
            let Some(row) = self.rows[r].as_mut() else {
                continue;
            };
            if let Ok(pos) = row.coefficients.binary_search_by_key(&col, |&(c, _)| c) {
                let a = row.coefficients.remove(pos).1;
                row.rhs -= a * value;
                self.col_count[col] -= 1;
            }
        }
        self.alive[col] = false;
        self.post.push(PostStep::Fixed { col, value });
    }

    /// Tightens bounds of `col`; returns false on an empty interval.
    fn tighten(&mut self, col: usize, lo: f64, hi: f64) -> bool {
        if lo > self.lower[col] {
            self.lower[col] = lo;
        }
        if hi < self.upper[col] {
            self.upper[col] = hi;
        }
        let width = self.upper[col] - self.lower[col];
        if width < 0.0 {
            let scale = 1.0_f64.max(self.lower[col].abs());
            if width < -FEASIBILITY_TOL * scale {
                return false;
            }
            self.upper[col] = self.lower[col];
        }
        true
    }

    /// Eliminates `col` through `x[col] = alpha + beta * x[via]`.
    fn substitute(&mut self, col: usize, alpha: f64, beta: f64, via: usize) -> bool {
        for k in 0..self.col_rows[col].len() {
            let r = self.col_rows[col][k];
            let Some(row) = self.rows[r].as_mut() else {
                continue;
            };
            let Ok(pos) = row.coefficients.binary_search_by_key(&col, |&(c, _)| c) else {
                continue;
            };
            let a = row.coefficients.remove(pos).1;
            self.col_count[col] -= 1;
            row.rhs -= a * alpha;
            match row.coefficients.binary_search_by_key(&via, |&(c, _)| c) {
                Ok(p) => {
                    row.coefficients[p].1 += a * beta;
                    if row.coefficients[p].1.abs() < ZERO_SNAP {
                        row.coefficients.remove(p);
                        self.col_count[via] -= 1;
                    }
                }
                Err(p) => {
                    row.coefficients.insert(p, (via, a * beta));
                    self.col_count[via] += 1;
                    self.col_rows[via].push(r);
                }
            }
        }
        let c_col = self.objective[col].clone();
        self.objective[via].add_scaled(&c_col, beta);
        // the constant part alpha * c_col is recovered when the objective
        // is re-evaluated on the postsolved point

        let (lo, hi) = (self.lower[col], self.upper[col]);
        let (new_lo, new_hi) = if beta > 0.0 {
            ((lo - alpha) / beta, (hi - alpha) / beta)
        } else {
            ((hi - alpha) / beta, (lo - alpha) / beta)
        };
        self.alive[col] = false;
        self.post.push(PostStep::Substituted {
            col,
            alpha,
            beta,
            via,
        });
        self.tighten(via, new_lo, new_hi)
    }
}

fn presolve<T: LpScalar>(lp: &StandardLp<T>) -> Result<Presolve<T>, LpError> {
    let n = lp.num_vars();
    let mut w = Work {
        rows: lp.rows.iter().cloned().map(Some).collect(),
        col_rows: vec![Vec::new(); n],
        col_count: vec![0; n],
        objective: lp.objective.clone(),
        lower: lp.lower.clone(),
        upper: lp.upper.iter().map(|u| u.unwrap_or(f64::INFINITY)).collect(),
        alive: vec![true; n],
        post: Vec::new(),
    };
    for (r, row) in lp.rows.iter().enumerate() {
        for &(c, _) in &row.coefficients {
            w.col_rows[c].push(r);
            w.col_count[c] += 1;
        }
    }
    for c in 0..n {
        if w.lower[c] > w.upper[c] {
            return Ok(Presolve::Infeasible);
        }
    }

    loop {
        let mut changed = false;
        for r in 0..w.rows.len() {
            let Some(row) = w.rows[r].as_ref() else {
                continue;
            };
            match row.coefficients.len() {
                0 => {
                    let ok = match row.relation {
                        Relation::Eq => row.rhs.abs() <= FEASIBILITY_TOL * 1.0_f64.max(row.rhs.abs()),
                        Relation::Le => row.rhs >= -FEASIBILITY_TOL,
                    };
                    if !ok {
                        return Ok(Presolve::Infeasible);
                    }
                    w.remove_row(r);
                    changed = true;
                }
                1 => {
                    let (c, a) = row.coefficients[0];
                    let v = row.rhs / a;
                    let (lo, hi) = match (row.relation, a > 0.0) {
                        (Relation::Eq, _) => (v, v),
                        (Relation::Le, true) => (f64::NEG_INFINITY, v),
                        (Relation::Le, false) => (v, f64::INFINITY),
                    };
                    w.remove_row(r);
                    if !w.tighten(c, lo, hi) {
                        return Ok(Presolve::Infeasible);
                    }
                    changed = true;
                }
                2 if row.relation == Relation::Eq => {
                    let (c0, a0) = row.coefficients[0];
                    let (c1, a1) = row.coefficients[1];
                    let rhs = row.rhs;
                    // eliminate the column that appears in fewer rows
                    let (col, a_col, via, a_via) = if w.col_count[c1] <= w.col_count[c0] {
                        (c1, a1, c0, a0)
                    } else {
                        (c0, a0, c1, a1)
                    };
                    w.remove_row(r);
                    if !w.substitute(col, rhs / a_col, -a_via / a_col, via) {
                        return Ok(Presolve::Infeasible);
                    }
                    changed = true;
                }
                _ => {}
            }
        }
        for c in 0..n {
            if w.alive[c] && w.upper[c] == w.lower[c] {
                let v = w.lower[c];
                w.fix(c, v);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut columns = Vec::new();
    let mut new_index = vec![usize::MAX; n];
    for c in 0..n {
        if w.alive[c] {
            if !w.lower[c].is_finite() {
                return Err(LpError::FreeVariable(c));
            }
            new_index[c] = columns.len();
            columns.push(c);
        }
    }

    // drop upper bounds implied by a nonnegative row
    for &c in &columns {
        if !w.upper[c].is_finite() {
            continue;
        }
        let implied = w.col_rows[c].iter().any(|&r| {
            let Some(row) = w.rows[r].as_ref() else {
                return false;
            };
            let a_c = row.coefficient(c);
            if a_c <= 0.0 || row.coefficients.iter().any(|&(_, a)| a < 0.0) {
                return false;
            }
            let others: f64 = row
                .coefficients
                .iter()
                .filter(|&&(k, _)| k != c)
                .map(|&(k, a)| a * w.lower[k])
                .sum();
            (row.rhs - others) / a_c <= w.upper[c] + FEASIBILITY_TOL
        });
        if implied {
            w.upper[c] = f64::INFINITY;
        }
    }

    let shift: Vec<f64> = columns.iter().map(|&c| w.lower[c]).collect();
    let mut rows = Vec::new();
    for row in w.rows.iter().flatten() {
        let mut rhs = row.rhs;
        let coefficients = row
            .coefficients
            .iter()
            .map(|&(c, a)| {
                rhs -= a * w.lower[c];
                (new_index[c], a)
            })
            .collect();
        rows.push(Row {
            coefficients,
            relation: row.relation,
            rhs,
        });
    }
    for (k, &c) in columns.iter().enumerate() {
        if w.upper[c].is_finite() {
            rows.push(Row {
                coefficients: vec![(k, 1.0)],
                relation: Relation::Le,
                rhs: w.upper[c] - w.lower[c],
            });
        }
    }
    let objective = columns.iter().map(|&c| w.objective[c].clone()).collect();
    Ok(Presolve::Reduced(Reduced {
        columns,
        shift,
        objective,
        rows,
        post: w.post,
    }))
}

impl<T: LpScalar> Reduced<T> {
    fn postsolve(&self, reduced: &[f64], n: usize) -> Vec<f64> {
        let mut values = vec![0.0; n];
        for (k, &c) in self.columns.iter().enumerate() {
            values[c] = self.shift[k] + reduced[k];
        }
        for step in self.post.iter().rev() {
            match *step {
                PostStep::Fixed { col, value } => values[col] = value,
                PostStep::Substituted {
                    col,
                    alpha,
                    beta,
                    via,
                } => values[col] = alpha + beta * values[via],
            }
        }
        values
    }

    fn solve_tableau(&self, options: SolverOptions) -> Result<(LpStatus, Vec<f64>, usize), LpError> {
        let mut tab = Tableau::build(self.objective.len(), &self.rows);
        let mut pivots = 0;
        if !tab.phase_one(&mut pivots, options.max_pivots)? {
            return Ok((LpStatus::Infeasible, Vec::new(), pivots));
        }
        let bounded = tab.phase_two(&self.objective, &mut pivots, options.max_pivots)?;
        if !bounded {
            return Ok((LpStatus::Unbounded, Vec::new(), pivots));
        }
        let mut x = vec![0.0; self.objective.len()];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < x.len() {
                x[b] = tab.rhs[i];
            }
        }
        Ok((LpStatus::Optimal, x, pivots))
    }
}

// ---------------------------------------------------------------------------
// dense tableau

struct Tableau {
    /// structural columns
    n: usize,
    /// first artificial column; columns in `n..art_start` are slacks/surplus
    art_start: usize,
    width: usize,
    m: usize,
    data: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// rows still present (redundant rows are dropped after phase one)
    live: Vec<bool>,
}

impl Tableau {
    fn build(n: usize, rows: &[Row]) -> Self {
        let m = rows.len();
        let slack_count = rows.iter().filter(|r| r.relation == Relation::Le).count();
        let art_count = rows
            .iter()
            .filter(|r| r.relation == Relation::Eq || r.rhs < 0.0)
            .count();
        let art_start = n + slack_count;
        let width = art_start + art_count;
        let mut data = vec![0.0; m * width];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let (mut next_slack, mut next_art) = (n, art_start);
        for (i, row) in rows.iter().enumerate() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            let line = &mut data[i * width..(i + 1) * width];
            for &(c, a) in &row.coefficients {
                line[c] = sign * a;
            }
            rhs[i] = sign * row.rhs;
            if row.relation == Relation::Le {
                line[next_slack] = sign;
                if sign > 0.0 {
                    basis[i] = next_slack;
                }
                next_slack += 1;
            }
            if row.relation == Relation::Eq || sign < 0.0 {
                line[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            }
        }
        Self {
            n,
            art_start,
            width,
            m,
            data,
            rhs,
            basis,
            live: vec![true; m],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    /// Pivots on `(r, q)` and returns the normalized pivot row's nonzeros.
    fn pivot(&mut self, r: usize, q: usize) -> Vec<(usize, f64)> {
        let w = self.width;
        let piv = self.data[r * w + q];
        let mut prow: Vec<(usize, f64)> = Vec::new();
        for j in 0..w {
            let v = self.data[r * w + j];
            if v != 0.0 {
                let nv = if j == q { 1.0 } else { v / piv };
                self.data[r * w + j] = nv;
                prow.push((j, nv));
            }
        }
        self.rhs[r] /= piv;
        let prhs = self.rhs[r];
        for i in 0..self.m {
            if i == r || !self.live[i] {
                continue;
            }
            let f = self.data[i * w + q];
            if f == 0.0 {
                continue;
            }
            let line = &mut self.data[i * w..(i + 1) * w];
            for &(j, v) in &prow {
                let nv = line[j] - f * v;
                line[j] = if nv.abs() < ZERO_SNAP { 0.0 } else { nv };
            }
            line[q] = 0.0;
            let nr = self.rhs[i] - f * prhs;
            self.rhs[i] = if nr.abs() < ZERO_SNAP { 0.0 } else { nr };
        }
        self.basis[r] = q;
        prow
    }

    /// Bland ratio test on column `q`; `None` if the column is unbounded.
    fn leaving_row(&self, q: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            if !self.live[i] {
                continue;
            }
            let a = self.at(i, q);
            if a <= FEASIBILITY_TOL {
                continue;
            }
            let ratio = self.rhs[i] / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= ZERO_SNAP * 1.0_f64.max(br.abs());
                    if (!tie && ratio < br) || (tie && self.basis[i] < self.basis[bi]) {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    /// Minimizes the sum of artificials. Returns false if the program is infeasible.
    fn phase_one(&mut self, pivots: &mut usize, limit: usize) -> Result<bool, LpError> {
        if self.art_start == self.width {
            return Ok(true);
        }
        let mut d = vec![0.0; self.width];
        for i in 0..self.m {
            if self.basis[i] >= self.art_start {
                for (j, dj) in d.iter_mut().enumerate().take(self.art_start) {
                    *dj -= self.at(i, j);
                }
            }
        }
        while let Some(q) = (0..self.art_start).find(|&j| d[j] < -FEASIBILITY_TOL) {
            let Some(r) = self.leaving_row(q) else {
                // the artificial objective is bounded below by zero
                break;
            };
            *pivots += 1;
            if *pivots > limit {
                return Err(LpError::PivotLimit(limit));
            }
            let dq = d[q];
            for (j, v) in self.pivot(r, q) {
                d[j] -= dq * v;
            }
            d[q] = 0.0;
        }
        let scale = self.rhs.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        let residual: f64 = (0..self.m)
            .filter(|&i| self.basis[i] >= self.art_start)
            .map(|i| self.rhs[i])
            .sum();
        if residual > FEASIBILITY_TOL * scale {
            return Ok(false);
        }
        // drive remaining (zero-level) artificials out of the basis
        for i in 0..self.m {
            if self.basis[i] < self.art_start {
                continue;
            }
            match (0..self.art_start).find(|&j| self.at(i, j).abs() > FEASIBILITY_TOL) {
                Some(q) => {
                    *pivots += 1;
                    self.pivot(i, q);
                }
                None => self.live[i] = false,
            }
        }
        Ok(true)
    }

    /// Minimizes `cost` from the current basic feasible solution. Returns
    /// false if the program is unbounded.
    fn phase_two<T: LpScalar>(
        &mut self,
        cost: &[T],
        pivots: &mut usize,
        limit: usize,
    ) -> Result<bool, LpError> {
        let mut d: Vec<T> = (0..self.art_start)
            .map(|j| if j < self.n { cost[j].clone() } else { T::zero() })
            .collect();
        for i in 0..self.m {
            if !self.live[i] {
                continue;
            }
            let b = self.basis[i];
            if b >= self.n {
                continue;
            }
            let cb = &cost[b];
            let line = &self.data[i * self.width..i * self.width + self.art_start];
            for (j, &v) in line.iter().enumerate() {
                if v != 0.0 {
                    d[j].add_scaled(cb, -v);
                }
            }
        }
        loop {
            let Some(q) = (0..self.art_start).find(|&j| d[j].is_negative()) else {
                return Ok(true);
            };
            let Some(r) = self.leaving_row(q) else {
                return Ok(false);
            };
            *pivots += 1;
            if *pivots > limit {
                return Err(LpError::PivotLimit(limit));
            }
            let dq = d[q].clone();
            for (j, v) in self.pivot(r, q) {
                if j < self.art_start {
                    d[j].add_scaled(&dq, -v);
                }
            }
            d[q] = T::zero();
        }
    }
}
