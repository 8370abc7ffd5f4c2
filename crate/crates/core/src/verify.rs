//! Brute-force baselines and statistical checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::lp::{build_restricted_primal, solve_lp, LpError, LpStatus, DEFAULT_TOL};
use crate::model::{enumerate_feasible, expected_utilities, FairnessSpec, Instance, ModelError, Selection, SolutionDistribution};
use crate::oracle::{composite_value, FairMax, OracleError, WeightedQuery};
use crate::solver::SolveReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl VerifyError {
    pub fn is_family_too_large(&self) -> bool {
        matches!(
            self,
            VerifyError::Model(ModelError::FamilyTooLarge { .. })
                | VerifyError::Oracle(OracleError::Model(ModelError::FamilyTooLarge { .. }))
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Baseline {
    Optimal { opt: f64, distribution: SolutionDistribution },
    Infeasible,
}

impl Baseline {
    pub fn opt(&self) -> Option<f64> {
        match self {
            Baseline::Optimal { opt, .. } => Some(*opt),
            Baseline::Infeasible => None,
        }
    }
}

/// Solves the exact, unrelaxed primal over the whole feasible family.
pub fn brute_force_optimum(instance: &Instance, fairness: &FairnessSpec, cap: u128) -> Result<Baseline, VerifyError> {
    let family = enumerate_feasible(instance, cap)?;
    let lp = build_restricted_primal(fairness, &family, instance, 1.0)?;
    let sol = solve_lp(&lp, DEFAULT_TOL)?;
    match sol.status {
        LpStatus::Optimal => {
            let support = family
                .into_iter()
                .zip(sol.x)
                .filter(|(_, x)| *x > 1e-12)
                .collect();
            Ok(Baseline::Optimal {
                opt: sol.objective,
                distribution: SolutionDistribution { support },
            })
        }
        LpStatus::Infeasible => Ok(Baseline::Infeasible),
        LpStatus::Unbounded => Err(LpError::NumericalBreakdown("bounded program reported unbounded".into()).into()),
    }
}

/// The parts of a solve result that a guarantee check needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    pub distribution: SolutionDistribution,
    pub value: f64,
    pub upper_bound: f64,
    pub rho: f64,
    pub mu: f64,
    pub epsilon: f64,
}

impl From<&SolveReport> for Claim {
    fn from(r: &SolveReport) -> Self {
        Claim {
            distribution: r.distribution.clone(),
            value: r.value,
            upper_bound: r.upper_bound,
            rho: r.guarantee.rho,
            mu: r.guarantee.mu,
            epsilon: r.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clause {
    pub name: String,
    pub pass: bool,
    /// Signed margin; negative means violated.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub opt: Option<f64>,
    pub value: f64,
    pub ratio: Option<f64>,
    pub expected_groups: Vec<f64>,
    pub clauses: Vec<Clause>,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(|c| !c.pass)
    }
}

/// Checks a claimed solution against the baseline optimum. Values are recomputed from the
/// distribution; the claimed value only enters the consistency clauses.
pub fn check_guarantee(
    instance: &Instance,
    claim: &Claim,
    baseline: &Baseline,
    fairness: &FairnessSpec,
    tol: f64,
) -> CheckReport {
    let (value, eg) = expected_utilities(instance, &claim.distribution);
    let mut clauses = Vec::new();
    let mut clause = |name: String, slack: f64| {
        clauses.push(Clause {
            name,
            pass: slack >= -tol,
            slack,
        })
    };

    let mass = claim.distribution.total_mass();
    clause("probability mass ≤ 1".into(), 1.0 - mass);
    let min_p = claim.distribution.support.iter().map(|(_, p)| *p).fold(0.0, f64::min);
    clause("probabilities ≥ 0".into(), min_p);
    let outside = claim
        .distribution
        .support
        .iter()
        .filter(|(s, _)| !instance.contains(s))
        .count();
    clause("support within feasible family".into(), 0.0 - outside as f64);
    clause(
        "claimed value matches distribution".into(),
        0.0 - (claim.value - value).abs() / (1.0 + value.abs()),
    );
    clause(
        "value ≤ upper bound + ε".into(),
        claim.upper_bound + claim.epsilon - claim.value.max(value),
    );
    let opt = baseline.opt();
    match opt {
        Some(opt) => clause(format!("value ≥ {}·OPT", claim.rho), value - claim.rho * opt),
        None => clause("baseline is feasible".into(), -1.0),
    }
    match fairness {
        FairnessSpec::Lower { alpha } => {
            for (t, a) in alpha.iter().enumerate() {
                clause(format!("E[g_{t}] ≥ μ·α_{t}"), eg[t] - claim.mu * a);
            }
        }
        FairnessSpec::Box { alpha, beta } => {
            for (t, a) in alpha.iter().enumerate() {
                clause(format!("E[g_{t}] ≥ μ·α_{t}"), eg[t] - claim.mu * a);
            }
            for (t, b) in beta.iter().enumerate() {
                clause(format!("E[g_{t}] ≤ β_{t}"), b - eg[t]);
            }
        }
        FairnessSpec::Pairwise { gamma } => {
            for t in 0..eg.len() {
                for u in 0..eg.len() {
                    if t != u {
                        clause(format!("E[g_{t}] − E[g_{u}] ≤ γ_{t},{u}"), gamma[t][u] - (eg[t] - eg[u]));
                    }
                }
            }
        }
    }
    CheckReport {
        opt,
        value,
        ratio: opt.map(|o| if o.abs() > 1e-12 { value / o } else { 1.0 }),
        expected_groups: eg,
        clauses,
    }
}

/// Empirical means from sampling a distribution; empty when `trials = 0`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SampleStats {
    pub trials: usize,
    pub global_mean: Option<f64>,
    pub global_se: Option<f64>,
    pub group_means: Vec<f64>,
    pub group_se: Vec<f64>,
}

/// Draws `trials` selections; residual mass selects nothing.
pub fn sample_distribution(instance: &Instance, dist: &SolutionDistribution, trials: usize, seed: u64) -> SampleStats {
    if trials == 0 {
        return SampleStats::default();
    }
    let m = instance.m();
    // row 0 is f, rows 1..=m are g_t
    let values: Vec<Vec<f64>> = dist
        .support
        .iter()
        .map(|(s, _)| {
            let mut v = vec![instance.global_value(s)];
            v.extend(instance.group_values(s));
            v
        })
        .collect();
    let mut cumulative = Vec::with_capacity(dist.support.len());
    let mut acc = 0.0;
    for (_, p) in &dist.support {
        acc += p.max(0.0);
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; m + 1];
    let mut sum_sq = vec![0.0; m + 1];
    for _ in 0..trials {
        let u: f64 = rng.gen();
        let idx = cumulative.partition_point(|&c| c <= u);
        if let Some(v) = values.get(idx) {
            for (k, x) in v.iter().enumerate() {
                sum[k] += x;
                sum_sq[k] += x * x;
            }
        }
    }
    let n = trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, mu)| {
            if trials < 2 {
                return 0.0;
            }
            let var = ((sq - n * mu * mu) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    SampleStats {
        trials,
        global_mean: Some(mean[0]),
        global_se: Some(se[0]),
        group_means: mean[1..].to_vec(),
        group_se: se[1..].to_vec(),
    }
}

/// Oracle composite value divided by the enumerated maximum.
pub fn oracle_cross_check(
    instance: &Instance,
    coeffs: &[f64],
    oracle: &dyn FairMax,
    cap: u128,
) -> Result<f64, VerifyError> {
    let query = WeightedQuery::new(coeffs.to_vec());
    let family = enumerate_feasible(instance, cap)?;
    let best = family
        .iter()
        .map(|s| composite_value(instance, s, &query))
        .fold(f64::NEG_INFINITY, f64::max);
    let got = oracle.maximize(&query)?;
    let value = composite_value(instance, &got.selection, &query);
    Ok(if best.abs() <= 1e-12 {
        if value >= best - 1e-12 {
            1.0
        } else {
            0.0
        }
    } else {
        value / best
    })
}

/// Enumerated argmax of a composite, ties broken by enumeration order.
pub fn exhaustive_fairmax(instance: &Instance, coeffs: &[f64], cap: u128) -> Result<(Selection, f64), VerifyError> {
    let query = WeightedQuery::new(coeffs.to_vec());
    let mut best: Option<(Selection, f64)> = None;
    for s in enumerate_feasible(instance, cap)? {
        let v = composite_value(instance, &s, &query);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((s, v));
        }
    }
    Ok(best.expect("feasible family contains at least the empty selection"))
}
