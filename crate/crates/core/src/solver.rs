//! End-to-end pipeline: binary search over the dual level `L`, collection of violated
//! sets `F′`, and the restricted primal over `F′`.
//!
//! For a `(ρ, μ)` oracle the smallest marked level `L*` bounds the optimum from above by
//! `L*/ρ`, and the restricted primal built from the sets cut off at `L* − ε` recovers a
//! distribution of value at least `L* − ε` (up to the ellipsoid's resolution).

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ellipsoid::{ellipsoid_feasible, DualPoint, EllipsoidConfig, EllipsoidError, FeasibilityRun};
use crate::lp::{build_restricted_primal, relax_fairness_rows, solve_lp, LpError, LpStatus, DEFAULT_TOL};
use crate::model::{
    expected_utilities, validate_fairness, validate_instance, FairnessSpec, Instance, Selection,
    SolutionDistribution, Violation,
};
use crate::oracle::{build_oracle, FairMax, OracleError, OracleGuarantee, OracleKind, WeightedQuery};

/// A fairness variant together with the layout of its dual space.
///
/// Dual points are `(z_1..z_m, w)` for lower bounds, `(z, u, w)` for box constraints and
/// `(z_{t,t′} for ordered pairs t ≠ t′ in row-major order, w)` for pairwise constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub fairness: FairnessSpec,
    m: usize,
}

impl Variant {
    pub fn new(fairness: FairnessSpec, m: usize) -> Self {
        Variant { fairness, m }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        match self.fairness {
            FairnessSpec::Lower { .. } => self.m + 1,
            FairnessSpec::Box { .. } => 2 * self.m + 1,
            FairnessSpec::Pairwise { .. } => self.m * (self.m - 1) + 1,
        }
    }

    /// Ordered pairs `(t, t′)`, `t ≠ t′`, in dual-coordinate order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let m = self.m;
        (0..m)
            .flat_map(|t| (0..m).filter(move |&u| u != t).map(move |u| (t, u)))
            .collect()
    }

    /// Whether FairMax queries for this variant can carry negative coefficients.
    pub fn signed(&self) -> bool {
        !matches!(self.fairness, FairnessSpec::Lower { .. })
    }

    /// Factor applied to the lower bounds in the restricted programs. Pairwise
    /// constraints are never relaxed.
    pub fn relaxation(&self, mu: f64) -> f64 {
        match self.fairness {
            FairnessSpec::Pairwise { .. } => 1.0,
            _ => mu,
        }
    }

    /// Normal of the objective cut `normal·p ≤ L`.
    pub fn objective_normal(&self, mu: f64) -> Vec<f64> {
        let mu = self.relaxation(mu);
        let mut a = Vec::with_capacity(self.dim());
        match &self.fairness {
            FairnessSpec::Lower { alpha } => a.extend(alpha.iter().map(|x| -mu * x)),
            FairnessSpec::Box { alpha, beta } => {
                a.extend(alpha.iter().map(|x| -mu * x));
                a.extend(beta.iter().copied());
            }
            FairnessSpec::Pairwise { gamma } => a.extend(self.pairs().into_iter().map(|(t, u)| gamma[t][u])),
        }
        a.push(1.0);
        a
    }

    /// Coefficients `c` with `f(S) + Σ c_t g_t(S)` equal to the variant's FairMax objective.
    pub fn effective_coeffs(&self, point: &DualPoint) -> WeightedQuery {
        let m = self.m;
        let p = &point.0;
        let coeffs = match self.fairness {
            FairnessSpec::Lower { .. } => p[..m].to_vec(),
            FairnessSpec::Box { .. } => (0..m).map(|t| p[t] - p[m + t]).collect(),
            FairnessSpec::Pairwise { .. } => {
                let mut c = vec![0.0; m];
                for (idx, (t, u)) in self.pairs().into_iter().enumerate() {
                    // z_{t,u}·(g_u − g_t)
                    c[u] += p[idx];
                    c[t] -= p[idx];
                }
                c
            }
        };
        WeightedQuery::new(coeffs)
    }

    /// Normal of the set cut `f(A) + Σ c_t(p)·g_t(A) ≤ w`, written as `normal·p ≤ −f(A)`.
    pub fn set_cut_normal(&self, group_values: &[f64]) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.dim());
        match self.fairness {
            FairnessSpec::Lower { .. } => a.extend_from_slice(group_values),
            FairnessSpec::Box { .. } => {
                a.extend_from_slice(group_values);
                a.extend(group_values.iter().map(|g| -g));
            }
            FairnessSpec::Pairwise { .. } => a.extend(
                self.pairs()
                    .into_iter()
                    .map(|(t, u)| group_values[u] - group_values[t]),
            ),
        }
        a.push(-1.0);
        a
    }

    /// Smallest positive bound appearing in the objective cut, if any.
    fn min_positive_bound(&self, mu: f64) -> Option<f64> {
        let mu = self.relaxation(mu);
        let vals: Vec<f64> = match &self.fairness {
            FairnessSpec::Lower { alpha } => alpha.iter().map(|a| mu * a).collect(),
            FairnessSpec::Box { alpha, beta } => alpha.iter().map(|a| mu * a).chain(beta.iter().copied()).collect(),
            FairnessSpec::Pairwise { gamma } => self.pairs().into_iter().map(|(t, u)| gamma[t][u]).collect(),
        };
        vals.into_iter().filter(|&v| v > 0.0).min_by(f64::total_cmp)
    }
}

/// Free-function form of [`Variant::effective_coeffs`].
pub fn effective_coeffs(variant: &Variant, point: &DualPoint) -> WeightedQuery {
    variant.effective_coeffs(point)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    /// Bisection precision on `L`.
    pub epsilon: f64,
    /// Ellipsoid scale `R`; `None` derives it from the bracket and the fairness bounds.
    pub radius: Option<f64>,
    pub max_iter: Option<usize>,
    pub floor_ratio: f64,
    /// Initial `[L_lo, L_hi]`; defaults to `[0, f(A₀)/ρ]`.
    pub bracket: Option<(f64, f64)>,
    /// Take `F′` as the union of set cuts from every run instead of the run at `L* − ε`.
    pub collect_all_runs: bool,
    /// Lowest level tried before declaring the fairness system infeasible.
    pub l_min: f64,
    pub lp_tol: f64,
    /// Enumeration cap for exact oracles.
    pub exact_cap: u128,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            epsilon: 1e-4,
            radius: None,
            max_iter: None,
            floor_ratio: 1e-7,
            bracket: None,
            collect_all_runs: false,
            l_min: -1.0,
            lp_tol: DEFAULT_TOL,
            exact_cap: 1 << 20,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid input: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("fairness constraints are infeasible: C(L) is still marked non-empty at L = {l_min}")]
    InfeasibleFairness { l_min: f64 },
    #[error("restricted primal over F′ is infeasible even after relaxing fairness rows")]
    RestrictedLpInfeasible,
    #[error("numerical breakdown: {0}")]
    Numerical(String),
}

impl From<EllipsoidError> for SolveError {
    fn from(e: EllipsoidError) -> Self {
        match e {
            EllipsoidError::Oracle(o) => SolveError::Oracle(o),
            other => SolveError::Numerical(other.to_string()),
        }
    }
}

impl From<LpError> for SolveError {
    fn from(e: LpError) -> Self {
        SolveError::Numerical(e.to_string())
    }
}

/// Outcome of the bisection over `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub l_star: f64,
    /// Largest level found empty.
    pub l_empty: f64,
    pub f_prime: Vec<Selection>,
    pub witness: DualPoint,
    pub certificate: Selection,
    pub runs: usize,
    pub radius: f64,
}

/// Bisection for the smallest level whose dual region is marked non-empty.
pub fn binary_search_l(
    variant: &Variant,
    oracle: &dyn FairMax,
    instance: &Instance,
    config: &SolveConfig,
) -> Result<SearchResult, SolveError> {
    let guarantee = oracle.guarantee();
    if variant.signed() && !guarantee.signed_coeffs {
        return Err(OracleError::NotApplicable {
            oracle: oracle.name(),
            reason: "its guarantee does not cover the signed coefficients of box/pairwise duals".into(),
        }
        .into());
    }
    let mu = guarantee.mu;
    let a0 = oracle.maximize(&WeightedQuery::zeros(variant.m()))?;
    let f0 = instance.global_value(&a0.selection);
    let (mut lo, mut hi) = config
        .bracket
        .unwrap_or((0.0, f0 / guarantee.rho.max(1e-9)));
    let radius = config.radius.unwrap_or_else(|| {
        let bound = variant.min_positive_bound(mu).unwrap_or(1.0).max(1e-6);
        variant.dim() as f64 * 10.0 * (hi.abs() + 1.0) / bound
    });
    let ecfg = EllipsoidConfig {
        radius,
        max_iter: config.max_iter,
        floor_ratio: config.floor_ratio,
        trace: false,
    };
    let mut union_seen = BTreeSet::new();
    let mut union = Vec::new();
    let mut runs = 0;
    let mut run = |level: f64| -> Result<FeasibilityRun, SolveError> {
        let r = ellipsoid_feasible(level, variant, mu, oracle, instance, &ecfg)?;
        runs += 1;
        for s in &r.violated_sets {
            if union_seen.insert(s.clone()) {
                union.push(s.clone());
            }
        }
        Ok(r)
    };

    // the top of the bracket must be marked; widen it if the region is too thin to hit
    let mut hi_run = run(hi)?;
    let mut widen = 0;
    while !hi_run.is_marked() {
        widen += 1;
        if widen > 40 {
            return Err(SolveError::Numerical(format!("no level up to {hi} is marked non-empty")));
        }
        hi += config.epsilon.max(1e-3 * (1.0 + hi.abs())) * f64::powi(2.0, widen);
        hi_run = run(hi)?;
    }
    let mut lo_run = if lo < hi { run(lo)? } else { hi_run.clone() };
    if lo >= hi || lo_run.is_marked() {
        if lo < hi {
            hi = lo;
            hi_run = lo_run;
        }
        lo = config.l_min.min(hi - config.epsilon);
        lo_run = run(lo)?;
        if lo_run.is_marked() {
            return Err(SolveError::InfeasibleFairness { l_min: lo });
        }
    }
    while hi - lo > config.epsilon {
        let mid = 0.5 * (lo + hi);
        let r = run(mid)?;
        if r.is_marked() {
            hi = mid;
            hi_run = r;
        } else {
            lo = mid;
            lo_run = r;
        }
    }
    let crate::ellipsoid::FeasibilityOutcome::MarkedNonEmpty { witness, certificate } = hi_run.outcome else {
        unreachable!("upper end of the bracket is always marked");
    };
    let f_prime = if config.collect_all_runs { union } else { lo_run.violated_sets };
    Ok(SearchResult {
        l_star: hi,
        l_empty: lo,
        f_prime,
        witness,
        certificate,
        runs,
        radius,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub distribution: SolutionDistribution,
    pub l_star: f64,
    pub f_prime: Vec<Selection>,
    pub guarantee: OracleGuarantee,
    pub epsilon: f64,
    /// `Σ x_S f(S)`.
    pub value: f64,
    pub expected_groups: Vec<f64>,
    /// `L*/ρ`.
    pub upper_bound: f64,
    pub witness: DualPoint,
    /// Whether the restricted primal needed the relaxed retry.
    pub relaxed: bool,
}

/// Solves the fairness-constrained distribution problem with the chosen oracle.
pub fn solve(
    instance: &Instance,
    fairness: &FairnessSpec,
    kind: OracleKind,
    config: &SolveConfig,
) -> Result<SolveReport, SolveError> {
    let mut violations = validate_instance(instance).violations;
    if violations.is_empty() {
        violations.extend(validate_fairness(fairness, instance.m()).violations);
    }
    if !violations.is_empty() {
        return Err(SolveError::Validation(violations));
    }
    let oracle = build_oracle(kind, instance, config.exact_cap)?;
    solve_with(instance, fairness, oracle.as_ref(), config)
}

/// [`solve`] with a caller-supplied oracle; inputs are assumed valid.
pub fn solve_with(
    instance: &Instance,
    fairness: &FairnessSpec,
    oracle: &dyn FairMax,
    config: &SolveConfig,
) -> Result<SolveReport, SolveError> {
    let variant = Variant::new(fairness.clone(), instance.m());
    let guarantee = oracle.guarantee();
    let search = binary_search_l(&variant, oracle, instance, config)?;
    let mut f_prime = search.f_prime;
    if f_prime.is_empty() {
        // only possible when no set was ever cut off; the certificate is then a valid column
        f_prime.push(search.certificate.clone());
    }
    let mu = variant.relaxation(guarantee.mu);
    let lp = build_restricted_primal(fairness, &f_prime, instance, mu)?;
    let mut relaxed = false;
    let mut sol = solve_lp(&lp, config.lp_tol)?;
    if sol.status == LpStatus::Infeasible {
        relaxed = true;
        sol = solve_lp(&relax_fairness_rows(&lp), config.lp_tol)?;
    }
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(SolveError::RestrictedLpInfeasible),
        LpStatus::Unbounded => return Err(SolveError::Numerical("restricted primal reported unbounded".into())),
    }
    let support: Vec<(Selection, f64)> = f_prime
        .iter()
        .zip(&sol.x)
        .filter(|(_, &x)| x > 1e-12)
        .map(|(s, &x)| (s.clone(), x))
        .collect();
    let distribution = SolutionDistribution { support };
    let (value, expected_groups) = expected_utilities(instance, &distribution);
    Ok(SolveReport {
        distribution,
        l_star: search.l_star,
        f_prime,
        guarantee,
        epsilon: config.epsilon,
        value,
        expected_groups,
        upper_bound: search.l_star / guarantee.rho,
        witness: search.witness,
        relaxed,
    })
}
