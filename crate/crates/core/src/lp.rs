//! Small dense linear programs.
//!
//! [`solve_lp`] is a two-phase tableau simplex. Pricing is Dantzig's rule; after a run of
//! degenerate pivots it switches to Bland's rule, which cannot cycle. The restricted
//! primals over a collected set family are built by [`build_restricted_primal`].

use thiserror::Error;

use crate::model::{FairnessSpec, Instance, Selection};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

impl LinearProgram {
    /// A program with `x ≥ 0` and no upper bounds.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn with_row(mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        self.push_row(coeffs, relation, rhs);
        self
    }

    pub fn push_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.rows.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors must match the objective width".into()));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::Malformed(format!("row {r} has width {} ≠ {n}", row.coeffs.len())));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|x| !x.is_finite()) {
                return Err(LpError::Malformed(format!("row {r} has non-finite entries")));
            }
        }
        if self.objective.iter().chain(&self.lower).any(|x| !x.is_finite())
            || self.upper.iter().flatten().any(|x| !x.is_finite())
        {
            return Err(LpError::Malformed("non-finite objective or bound".into()));
        }
        Ok(())
    }

    /// Largest residual violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj);
            if let Some(u) = self.upper[j] {
                worst = worst.max(xj - u);
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical breakdown in simplex: {0}")]
    NumericalBreakdown(String),
    #[error("restricted primal needs at least one column")]
    EmptyFamily,
}

pub const DEFAULT_TOL: f64 = 1e-8;

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_STREAK: usize = 50;

struct Tableau {
    /// `rows × (cols + 1)`, last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize, cost: &mut [f64]) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                row[c] = 0.0;
            }
        }
        let factor = cost[c];
        if factor != 0.0 {
            for (v, pv) in cost.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Maximizes with reduced costs `cost` (entry `j` > 0 means `x_j` improves; last entry
    /// is minus the current objective). Columns with `allowed[j] == false` never enter.
    fn optimize(&mut self, cost: &mut [f64], allowed: &[bool], tol: f64) -> Result<bool, LpError> {
        let max_iter = 50 * (self.a.len() + self.cols) + 1000;
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate >= DEGENERATE_STREAK;
            let entering = if bland {
                (0..self.cols).find(|&j| allowed[j] && cost[j] > tol)
            } else {
                (0..self.cols)
                    .filter(|&j| allowed[j] && cost[j] > tol)
                    .max_by(|&x, &y| cost[x].total_cmp(&cost[y]).then(y.cmp(&x)))
            };
            let Some(c) = entering else { return Ok(true) };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.a.iter().enumerate() {
                if row[c] > PIVOT_TOL {
                    let ratio = row[rhs] / row[c];
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            if ratio < best - 1e-12 {
                                true
                            } else if ratio <= best + 1e-12 {
                                if bland {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    row[c] > self.a[l][c]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Ok(false) };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c, cost);
            if self.a[r][rhs] < -1e-7 {
                return Err(LpError::NumericalBreakdown("negative basic value after pivot".into()));
            }
        }
        Err(LpError::NumericalBreakdown("iteration limit reached".into()))
    }
}

/// Solves `lp`; optimal points are feasible within `tol` (relative to `1 + |rhs|`).
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.num_vars();

    // x = lower + y, y ≥ 0
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .rows
        .iter()
        .map(|row| {
            let shift: f64 = row.coeffs.iter().zip(&lp.lower).map(|(a, l)| a * l).sum();
            (row.coeffs.clone(), row.relation, row.rhs - shift)
        })
        .collect();
    for j in 0..n {
        let Some(u) = lp.upper[j] else { continue };
        let span = u - lp.lower[j];
        if span < -tol {
            return Ok(infeasible(n));
        }
        if !upper_bound_implied(&rows, j, span) {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = 1.0;
            rows.push((coeffs, Relation::Le, span.max(0.0)));
        }
    }
    let sign = match lp.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    for row in rows.iter_mut() {
        if row.2 < 0.0 {
            row.0.iter_mut().for_each(|a| *a = -*a);
            row.2 = -row.2;
            row.1 = match row.1 {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let m = rows.len();
    let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let art_count = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = n + slack_count + art_count;
    let mut a = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let mut is_art = vec![false; cols];
    let (mut s, mut t) = (n, n + slack_count);
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        a[i][..n].copy_from_slice(coeffs);
        a[i][cols] = *rhs;
        match rel {
            Relation::Le => {
                a[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                a[i][s] = -1.0;
                s += 1;
                a[i][t] = 1.0;
                basis[i] = t;
                is_art[t] = true;
                t += 1;
            }
            Relation::Eq => {
                a[i][t] = 1.0;
                basis[i] = t;
                is_art[t] = true;
                t += 1;
            }
        }
    }
    let mut tab = Tableau { a, basis, cols };

    // phase one: maximize −Σ artificials
    if art_count > 0 {
        let mut cost = vec![0.0; cols + 1];
        for (i, row) in tab.a.iter().enumerate() {
            if is_art[tab.basis[i]] {
                for (c, v) in cost.iter_mut().zip(row) {
                    *c += v;
                }
            }
        }
        for j in 0..cols {
            if is_art[j] {
                cost[j] = 0.0;
            }
        }
        let allowed = vec![true; cols];
        tab.optimize(&mut cost, &allowed, 1e-10)?;
        let infeasibility = cost[cols];
        let scale = 1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max);
        if infeasibility > tol * scale {
            return Ok(infeasible(n));
        }
        // drive remaining artificials out of the basis
        let mut r = 0;
        while r < tab.a.len() {
            if is_art[tab.basis[r]] {
                let col = (0..cols).find(|&j| !is_art[j] && tab.a[r][j].abs() > 1e-9);
                match col {
                    Some(c) => {
                        let mut dummy = vec![0.0; cols + 1];
                        tab.pivot(r, c, &mut dummy);
                    }
                    None => {
                        // redundant row
                        tab.a.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    // phase two
    let mut cost = vec![0.0; cols + 1];
    for j in 0..n {
        cost[j] = sign * lp.objective[j];
    }
    for (i, row) in tab.a.iter().enumerate() {
        let b = tab.basis[i];
        let cb = cost[b];
        if cb != 0.0 {
            for (c, v) in cost.iter_mut().zip(row) {
                *c -= cb * v;
            }
        }
    }
    for i in 0..tab.a.len() {
        cost[tab.basis[i]] = 0.0;
    }
    let allowed: Vec<bool> = (0..cols).map(|j| !is_art[j]).collect();
    let bounded = tab.optimize(&mut cost, &allowed, 1e-10)?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            objective: sign * f64::INFINITY,
            max_violation: 0.0,
        });
    }
    let mut x = lp.lower.clone();
    for (i, row) in tab.a.iter().enumerate() {
        let b = tab.basis[i];
        if b < n {
            x[b] += row[cols].max(0.0);
        }
    }
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let max_violation = lp.max_violation(&x);
    let scale = 1.0
        + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max)
        + lp.upper.iter().flatten().map(|u| u.abs()).fold(0.0, f64::max);
    if max_violation > tol * scale {
        return Err(LpError::NumericalBreakdown(format!(
            "optimal basis violates constraints by {max_violation:e}"
        )));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        max_violation,
    })
}

fn infeasible(n: usize) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![0.0; n],
        objective: f64::NAN,
        max_violation: f64::INFINITY,
    }
}

/// `y_j ≤ span` is implied by some `≤` row with nonnegative coefficients.
fn upper_bound_implied(rows: &[(Vec<f64>, Relation, f64)], j: usize, span: f64) -> bool {
    rows.iter().any(|(coeffs, rel, rhs)| {
        *rel == Relation::Le
            && coeffs[j] > 0.0
            && coeffs.iter().all(|&a| a >= 0.0)
            && *rhs / coeffs[j] <= span
    })
}

/// Restricted primal over `sets`: maximize `Σ x_S f(S)` subject to the fairness rows
/// (lower bounds relaxed by `mu`, box upper bounds and pairwise rows never relaxed) and
/// the probability-mass row `Σ x_S ≤ 1`, which is always the last row.
pub fn build_restricted_primal(
    fairness: &FairnessSpec,
    sets: &[Selection],
    instance: &Instance,
    mu: f64,
) -> Result<LinearProgram, LpError> {
    if sets.is_empty() {
        return Err(LpError::EmptyFamily);
    }
    let m = instance.m();
    let objective: Vec<f64> = sets.iter().map(|s| instance.global_value(s)).collect();
    let g: Vec<Vec<f64>> = sets.iter().map(|s| instance.group_values(s)).collect();
    let column = |t: usize| -> Vec<f64> { g.iter().map(|gs| gs[t]).collect() };
    let mut lp = LinearProgram::new(Sense::Maximize, objective);
    lp.upper = vec![Some(1.0); sets.len()];
    match fairness {
        FairnessSpec::Lower { alpha } => {
            for t in 0..m {
                lp.push_row(column(t), Relation::Ge, mu * alpha[t]);
            }
        }
        FairnessSpec::Box { alpha, beta } => {
            for t in 0..m {
                lp.push_row(column(t), Relation::Ge, mu * alpha[t]);
            }
            for t in 0..m {
                lp.push_row(column(t), Relation::Le, beta[t]);
            }
        }
        FairnessSpec::Pairwise { gamma } => {
            for t in 0..m {
                for u in 0..m {
                    if t != u {
                        let diff: Vec<f64> = g.iter().map(|gs| gs[t] - gs[u]).collect();
                        lp.push_row(diff, Relation::Le, gamma[t][u]);
                    }
                }
            }
        }
    }
    lp.push_row(vec![1.0; sets.len()], Relation::Le, 1.0);
    Ok(lp)
}

/// Loosens every row except the trailing mass row by `1e-6·(1 + |rhs|)`.
pub fn relax_fairness_rows(lp: &LinearProgram) -> LinearProgram {
    let mut out = lp.clone();
    let last = out.rows.len().saturating_sub(1);
    for row in out.rows[..last].iter_mut() {
        let delta = 1e-6 * (1.0 + row.rhs.abs());
        match row.relation {
            Relation::Ge => row.rhs -= delta,
            Relation::Le => row.rhs += delta,
            Relation::Eq => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeasibleFamily, GroupStructure, UtilitySpec};

    #[test]
    fn one_variable() {
        let lp = LinearProgram::new(Sense::Maximize, vec![1.0]).with_row(vec![1.0], Relation::Le, 1.0);
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![1.0]);
        assert_eq!(s.objective, 1.0);
    }

    #[test]
    fn contradictory_bounds() {
        let lp = LinearProgram::new(Sense::Maximize, vec![1.0])
            .with_row(vec![1.0], Relation::Ge, 2.0)
            .with_row(vec![1.0], Relation::Le, 1.0);
        assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn simplex_vertex() {
        let lp = LinearProgram::new(Sense::Maximize, vec![3.0, 2.0]).with_row(vec![1.0, 1.0], Relation::Le, 1.0);
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert_eq!(s.objective, 3.0);
    }

    #[test]
    fn unbounded() {
        let lp = LinearProgram::new(Sense::Maximize, vec![1.0, 1.0]).with_row(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn minimize_with_equality_and_bounds() {
        // min x + 2y s.t. x + y = 3, x ≤ 2, y ≥ 0.5
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0, 2.0]).with_row(vec![1.0, 1.0], Relation::Eq, 3.0);
        lp.upper[0] = Some(2.0);
        lp.lower[1] = 0.5;
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_rows() {
        // max −x s.t. −x ≤ −2  ⇒ x = 2
        let lp = LinearProgram::new(Sense::Maximize, vec![-1.0]).with_row(vec![-1.0], Relation::Le, -2.0);
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under naive Dantzig pricing with a fixed ratio rule
        let lp = LinearProgram::new(Sense::Maximize, vec![0.75, -150.0, 0.02, -6.0])
            .with_row(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0)
            .with_row(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0)
            .with_row(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 0.05).abs() < 1e-9);
    }

    #[test]
    fn malformed_rows() {
        let lp = LinearProgram::new(Sense::Maximize, vec![1.0, 1.0]).with_row(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&lp, DEFAULT_TOL), Err(LpError::Malformed(_))));
    }

    fn i1() -> Instance {
        Instance {
            n: 3,
            groups: GroupStructure::new(vec![vec![0], vec![1, 2]]),
            global: UtilitySpec::Modular {
                weights: vec![3.0, 2.0, 1.0],
            },
            group_utils: vec![
                UtilitySpec::GroupCount { group: 0 },
                UtilitySpec::GroupCount { group: 1 },
            ],
            family: FeasibleFamily::Cardinality { k: 2 },
        }
    }

    #[test]
    fn restricted_primal_shapes() {
        let inst = i1();
        let sets = crate::model::enumerate_feasible(&inst, 100).unwrap();
        let lower = FairnessSpec::Lower { alpha: vec![0.5, 1.0] };
        let lp = build_restricted_primal(&lower, &sets, &inst, 1.0).unwrap();
        assert_eq!((lp.num_vars(), lp.rows.len()), (7, 3));
        let boxed = FairnessSpec::Box {
            alpha: vec![0.5, 1.0],
            beta: vec![1.0, 2.0],
        };
        assert_eq!(build_restricted_primal(&boxed, &sets, &inst, 1.0).unwrap().rows.len(), 5);
        let pair = FairnessSpec::uniform_pairwise(2, 0.3);
        assert_eq!(build_restricted_primal(&pair, &sets, &inst, 1.0).unwrap().rows.len(), 3);
        assert_eq!(build_restricted_primal(&lower, &[], &inst, 1.0), Err(LpError::EmptyFamily));
    }

    #[test]
    fn restricted_primal_full_family_i1() {
        let inst = i1();
        let sets = crate::model::enumerate_feasible(&inst, 100).unwrap();
        let lower = FairnessSpec::Lower { alpha: vec![0.5, 1.0] };
        let lp = build_restricted_primal(&lower, &sets, &inst, 1.0).unwrap();
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert!((s.objective - 5.0).abs() < 1e-9);
        assert!((s.x[4] - 1.0).abs() < 1e-9); // {a,b}
    }

    #[test]
    fn single_column_and_slack_pairwise() {
        let inst = i1();
        let s0 = Selection::set([0, 1]);
        let lower = FairnessSpec::Lower { alpha: vec![1.0, 1.0] };
        let lp = build_restricted_primal(&lower, std::slice::from_ref(&s0), &inst, 1.0).unwrap();
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(s.x, vec![1.0]);
        let sets = crate::model::enumerate_feasible(&inst, 100).unwrap();
        let pair = FairnessSpec::uniform_pairwise(2, 10.0);
        let lp = build_restricted_primal(&pair, &sets, &inst, 1.0).unwrap();
        let s = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert!((s.objective - 5.0).abs() < 1e-9);
    }

    #[test]
    fn relaxation_loosens_all_but_mass_row() {
        let inst = i1();
        let sets = crate::model::enumerate_feasible(&inst, 100).unwrap();
        let boxed = FairnessSpec::Box {
            alpha: vec![0.5, 1.0],
            beta: vec![1.0, 2.0],
        };
        let lp = build_restricted_primal(&boxed, &sets, &inst, 1.0).unwrap();
        let r = relax_fairness_rows(&lp);
        assert!(r.rows[0].rhs < lp.rows[0].rhs);
        assert!(r.rows[2].rhs > lp.rows[2].rhs);
        assert_eq!(r.rows[4].rhs, 1.0);
    }
}
