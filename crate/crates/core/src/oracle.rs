//! FairMax oracles: maximize `f(S) + Σ_t c_t·g_t(S)` over the feasible family.
//!
//! Every oracle declares an [`OracleGuarantee`] `(ρ, μ)`: for the returned `A` and every
//! feasible `S`, `f(A) + c·g(A) ≥ ρ·f(S) + μ·c·g(S)`. Approximate oracles only cover
//! nonnegative coefficients; the solver refuses to pair them with signed dual programs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{enumerate_feasible, FeasibleFamily, Instance, ModelError, Selection, UtilitySpec};

/// Per-group coefficients `c_t` of a FairMax query.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedQuery {
    pub coeffs: Vec<f64>,
}

impl WeightedQuery {
    pub fn new(coeffs: Vec<f64>) -> Self {
        WeightedQuery { coeffs }
    }

    pub fn zeros(m: usize) -> Self {
        WeightedQuery { coeffs: vec![0.0; m] }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.coeffs.iter().all(|&c| c >= 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub selection: Selection,
    pub value: f64,
}

/// `(ρ, μ)` plus whether the bound also holds for signed coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleGuarantee {
    pub rho: f64,
    pub mu: f64,
    pub signed_coeffs: bool,
}

impl OracleGuarantee {
    pub const EXACT: OracleGuarantee = OracleGuarantee {
        rho: 1.0,
        mu: 1.0,
        signed_coeffs: true,
    };
}

/// `1 − 1/e`.
pub const GREEDY_RATIO: f64 = 1.0 - 1.0 / std::f64::consts::E;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("oracle `{oracle}` is not applicable: {reason}")]
    NotApplicable { oracle: &'static str, reason: String },
    #[error("oracle `{oracle}` requires nonnegative coefficients, got c[{index}] = {value}")]
    NegativeCoefficient {
        oracle: &'static str,
        index: usize,
        value: f64,
    },
    #[error("coefficient vector has length {got}, expected m = {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("coefficient c[{0}] is not finite")]
    NonFinite(usize),
}

/// A FairMax subroutine.
pub trait FairMax {
    fn name(&self) -> &'static str;

    fn guarantee(&self) -> OracleGuarantee;

    fn maximize(&self, query: &WeightedQuery) -> Result<OracleResult, OracleError>;
}

/// Oracle choice, as named on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Exact,
    Greedy,
    Mnl,
    Sequential,
}

impl OracleKind {
    pub fn name(self) -> &'static str {
        match self {
            OracleKind::Exact => "exact",
            OracleKind::Greedy => "greedy",
            OracleKind::Mnl => "mnl",
            OracleKind::Sequential => "sequential",
        }
    }
}

impl std::str::FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(OracleKind::Exact),
            "greedy" => Ok(OracleKind::Greedy),
            "mnl" => Ok(OracleKind::Mnl),
            "sequential" => Ok(OracleKind::Sequential),
            other => Err(format!("unknown oracle `{other}` (expected exact|greedy|mnl|sequential)")),
        }
    }
}

/// Builds an oracle; `cap` bounds enumeration for the exact oracle and the exact path of
/// the sequential oracle.
pub fn build_oracle<'a>(
    kind: OracleKind,
    instance: &'a Instance,
    cap: u128,
) -> Result<Box<dyn FairMax + Send + Sync + 'a>, OracleError> {
    Ok(match kind {
        OracleKind::Exact => Box::new(ExactOracle::new(instance, cap)?),
        OracleKind::Greedy => Box::new(GreedyOracle::new(instance)?),
        OracleKind::Mnl => Box::new(MnlOracle::new(instance)?),
        OracleKind::Sequential => Box::new(SequentialOracle::new(instance, cap)?),
    })
}

fn check_query(query: &WeightedQuery, m: usize) -> Result<(), OracleError> {
    if query.coeffs.len() != m {
        return Err(OracleError::Dimension {
            got: query.coeffs.len(),
            expected: m,
        });
    }
    if let Some(i) = query.coeffs.iter().position(|c| !c.is_finite()) {
        return Err(OracleError::NonFinite(i));
    }
    Ok(())
}

fn require_nonnegative(oracle: &'static str, query: &WeightedQuery) -> Result<(), OracleError> {
    match query.coeffs.iter().position(|&c| c < 0.0) {
        Some(index) => Err(OracleError::NegativeCoefficient {
            oracle,
            index,
            value: query.coeffs[index],
        }),
        None => Ok(()),
    }
}

/// `f(S) + Σ_t c_t·g_t(S)`.
pub fn composite_value(instance: &Instance, selection: &Selection, query: &WeightedQuery) -> f64 {
    let mut v = instance.global_value(selection);
    for (t, c) in query.coeffs.iter().enumerate() {
        if *c != 0.0 {
            v += c * instance.group_value(t, selection);
        }
    }
    v
}

/// Exhaustive FairMax over a pre-evaluated table of the feasible family.
///
/// Ties go to the first selection in enumeration order.
pub struct ExactOracle {
    table: Vec<(Selection, f64, Vec<f64>)>,
    m: usize,
}

impl ExactOracle {
    pub fn new(instance: &Instance, cap: u128) -> Result<Self, OracleError> {
        let table = enumerate_feasible(instance, cap)?
            .into_iter()
            .map(|s| {
                let f = instance.global_value(&s);
                let g = instance.group_values(&s);
                (s, f, g)
            })
            .collect();
        Ok(ExactOracle {
            table,
            m: instance.m(),
        })
    }

    /// The enumerated family with `(f(S), g(S))` per member.
    pub fn table(&self) -> &[(Selection, f64, Vec<f64>)] {
        &self.table
    }
}

impl FairMax for ExactOracle {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn guarantee(&self) -> OracleGuarantee {
        OracleGuarantee::EXACT
    }

    fn maximize(&self, query: &WeightedQuery) -> Result<OracleResult, OracleError> {
        check_query(query, self.m)?;
        let mut best: Option<(usize, f64)> = None;
        for (idx, (_, f, g)) in self.table.iter().enumerate() {
            let v = f + g.iter().zip(&query.coeffs).map(|(g, c)| g * c).sum::<f64>();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((idx, v));
            }
        }
        let (idx, value) = best.expect("feasible family always has a member");
        Ok(OracleResult {
            selection: self.table[idx].0.clone(),
            value,
        })
    }
}

/// Exact FairMax by enumeration; guarantee `(1, 1)`.
pub fn fairmax_exact(
    instance: &Instance,
    query: &WeightedQuery,
    cap: u128,
) -> Result<OracleResult, OracleError> {
    ExactOracle::new(instance, cap)?.maximize(query)
}

/// Lazy greedy for monotone submodular composites under a cardinality constraint.
pub struct GreedyOracle<'a> {
    instance: &'a Instance,
    k: usize,
}

impl<'a> GreedyOracle<'a> {
    pub fn new(instance: &'a Instance) -> Result<Self, OracleError> {
        let not = |reason: String| OracleError::NotApplicable {
            oracle: "greedy",
            reason,
        };
        let k = match instance.family {
            FeasibleFamily::Cardinality { k } => k,
            ref other => return Err(not(format!("needs a cardinality family, got {other:?}"))),
        };
        let specs = std::iter::once(&instance.global).chain(&instance.group_utils);
        for spec in specs {
            if !(spec.is_monotone() && spec.is_submodular()) || spec.is_sequential() {
                return Err(not(format!("{} utility is not monotone submodular", spec.kind())));
            }
        }
        Ok(GreedyOracle { instance, k })
    }
}

#[derive(PartialEq)]
struct Candidate {
    bound: f64,
    item: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // larger bound first, then lower item index
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.item.cmp(&self.item))
    }
}

impl FairMax for GreedyOracle<'_> {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn guarantee(&self) -> OracleGuarantee {
        OracleGuarantee {
            rho: GREEDY_RATIO,
            mu: GREEDY_RATIO,
            signed_coeffs: false,
        }
    }

    fn maximize(&self, query: &WeightedQuery) -> Result<OracleResult, OracleError> {
        check_query(query, self.instance.m())?;
        require_nonnegative("greedy", query)?;
        let objective = |items: &[usize]| {
            let s = Selection::set(items.iter().copied());
            composite_value(self.instance, &s, query)
        };
        let mut chosen: Vec<usize> = Vec::with_capacity(self.k);
        let mut current = objective(&chosen);
        let mut heap: BinaryHeap<Candidate> = (0..self.instance.n)
            .map(|item| Candidate {
                bound: objective(&[item]) - current,
                item,
            })
            .collect();
        while chosen.len() < self.k {
            let Some(top) = heap.pop() else { break };
            let mut trial = chosen.clone();
            trial.push(top.item);
            let gain = objective(&trial) - current;
            let fresh = Candidate {
                bound: gain,
                item: top.item,
            };
            let accept = match heap.peek() {
                None => true,
                Some(next) => fresh >= *next,
            };
            if accept {
                if gain <= 0.0 {
                    break;
                }
                chosen = trial;
                current += gain;
            } else {
                heap.push(fresh);
            }
        }
        let selection = Selection::set(chosen);
        let value = composite_value(self.instance, &selection, query);
        Ok(OracleResult { selection, value })
    }
}

/// Greedy FairMax; guarantee `(1 − 1/e, 1 − 1/e)` for nonnegative coefficients.
pub fn fairmax_greedy(instance: &Instance, query: &WeightedQuery) -> Result<OracleResult, OracleError> {
    GreedyOracle::new(instance)?.maximize(query)
}

/// Revenue-ordered assortment search for MNL revenue plus MNL market shares.
///
/// The composite objective is an unconstrained MNL revenue with adjusted revenues
/// `r_i + Σ_t c_t·1{i ∈ V_t}`, whose optimum is a prefix of the items sorted by adjusted
/// revenue. This holds for any real adjusted revenues, so signed coefficients are allowed.
pub struct MnlOracle<'a> {
    instance: &'a Instance,
    revenue: &'a [f64],
    nu: &'a [f64],
    nu0: f64,
}

impl<'a> MnlOracle<'a> {
    pub fn new(instance: &'a Instance) -> Result<Self, OracleError> {
        let not = |reason: String| OracleError::NotApplicable {
            oracle: "mnl",
            reason,
        };
        if instance.family != FeasibleFamily::AllSubsets {
            return Err(not("needs the all-subsets family".into()));
        }
        let UtilitySpec::MnlRevenue { revenue, nu, nu0 } = &instance.global else {
            return Err(not("global utility must be mnl_revenue".into()));
        };
        for (t, g) in instance.group_utils.iter().enumerate() {
            match g {
                UtilitySpec::MnlShare {
                    group,
                    nu: gnu,
                    nu0: gnu0,
                } => {
                    if *group != t {
                        return Err(not(format!("group_utils[{t}] measures group {group}")));
                    }
                    if gnu != nu || gnu0 != nu0 {
                        return Err(not(format!("group_utils[{t}] has mismatched preference weights")));
                    }
                }
                _ => return Err(not(format!("group_utils[{t}] must be mnl_share"))),
            }
        }
        Ok(MnlOracle {
            instance,
            revenue,
            nu,
            nu0: *nu0,
        })
    }
}

impl FairMax for MnlOracle<'_> {
    fn name(&self) -> &'static str {
        "mnl"
    }

    fn guarantee(&self) -> OracleGuarantee {
        OracleGuarantee::EXACT
    }

    fn maximize(&self, query: &WeightedQuery) -> Result<OracleResult, OracleError> {
        check_query(query, self.instance.m())?;
        let n = self.instance.n;
        let adjusted: Vec<f64> = (0..n)
            .map(|i| {
                self.revenue[i]
                    + query
                        .coeffs
                        .iter()
                        .enumerate()
                        .filter(|(t, _)| self.instance.groups.contains(*t, i))
                        .map(|(_, c)| c)
                        .sum::<f64>()
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| adjusted[b].total_cmp(&adjusted[a]).then(a.cmp(&b)));
        let (mut best_len, mut best) = (0, 0.0);
        let (mut num, mut den) = (0.0, self.nu0);
        for (len, &i) in order.iter().enumerate() {
            num += adjusted[i] * self.nu[i];
            den += self.nu[i];
            let v = num / den;
            if v > best {
                best = v;
                best_len = len + 1;
            }
        }
        let selection = Selection::set(order[..best_len].iter().copied());
        let value = composite_value(self.instance, &selection, query);
        Ok(OracleResult { selection, value })
    }
}

/// MNL FairMax; exact (`ρ = μ = 1`).
pub fn fairmax_mnl(instance: &Instance, query: &WeightedQuery) -> Result<OracleResult, OracleError> {
    MnlOracle::new(instance)?.maximize(query)
}

/// FairMax over permutations with sequential (prefix-level) utilities.
///
/// Exact enumeration when `n! ≤ exact_cap`; otherwise greedy over the laminar matroid on
/// (item, level) pairs, which guarantees `1/2`.
pub struct SequentialOracle<'a> {
    instance: &'a Instance,
    exact: Option<ExactOracle>,
}

impl<'a> SequentialOracle<'a> {
    pub fn new(instance: &'a Instance, exact_cap: u128) -> Result<Self, OracleError> {
        let not = |reason: String| OracleError::NotApplicable {
            oracle: "sequential",
            reason,
        };
        if instance.family != FeasibleFamily::Permutations {
            return Err(not("needs the permutations family".into()));
        }
        for spec in std::iter::once(&instance.global).chain(&instance.group_utils) {
            let UtilitySpec::Sequential { levels, .. } = spec else {
                return Err(not("every utility must be sequential".into()));
            };
            if !levels.iter().all(|h| h.is_monotone() && h.is_submodular()) {
                return Err(not("level components must be monotone submodular".into()));
            }
        }
        let exact = if instance.family_size() <= exact_cap {
            Some(ExactOracle::new(instance, exact_cap)?)
        } else {
            None
        };
        Ok(SequentialOracle { instance, exact })
    }

    /// `Σ_l φ_l(prefix_l)` where `prefix_l` holds items assigned to levels `≤ l`.
    fn level_objective(&self, query: &WeightedQuery, l: usize, items: &[usize]) -> f64 {
        let groups = &self.instance.groups;
        let mut v = 0.0;
        if let Some((lam, h)) = self.instance.global.level(l) {
            if lam != 0.0 {
                v += lam * h.value_of_set(items, groups);
            }
        }
        for (t, c) in query.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            if let Some((lam, h)) = self.instance.group_utils[t].level(l) {
                if lam != 0.0 {
                    v += c * lam * h.value_of_set(items, groups);
                }
            }
        }
        v
    }

    fn matroid_greedy(&self, query: &WeightedQuery) -> Selection {
        let n = self.instance.n;
        // level_of[i] = assigned level (1-based) for selected items
        let mut level_of: Vec<Option<usize>> = vec![None; n];
        let prefix = |level_of: &[Option<usize>], l: usize| -> Vec<usize> {
            let mut v: Vec<usize> = (0..n).filter(|&i| level_of[i].is_some_and(|x| x <= l)).collect();
            v.sort_unstable();
            v
        };
        let current: Vec<f64> = (1..=n)
            .map(|l| self.level_objective(query, l, &prefix(&level_of, l)))
            .collect();
        let mut current = current;
        let mut count_le = vec![0usize; n + 1]; // count_le[l] = pairs with level ≤ l
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..n {
                if level_of[i].is_some() {
                    continue;
                }
                for l in 1..=n {
                    // independence: every prefix capacity l' ≥ l keeps room
                    if (l..=n).any(|lp| count_le[lp] + 1 > lp) {
                        continue;
                    }
                    let mut gain = 0.0;
                    for lp in l..=n {
                        let mut items = prefix(&level_of, lp);
                        items.push(i);
                        items.sort_unstable();
                        gain += self.level_objective(query, lp, &items) - current[lp - 1];
                    }
                    if best.is_none_or(|(g, _, _)| gain > g) {
                        best = Some((gain, i, l));
                    }
                }
            }
            match best {
                Some((gain, i, l)) if gain > 0.0 => {
                    level_of[i] = Some(l);
                    for lp in l..=n {
                        count_le[lp] += 1;
                        current[lp - 1] = self.level_objective(query, lp, &prefix(&level_of, lp));
                    }
                }
                _ => break,
            }
        }
        let mut placed: Vec<(usize, usize)> = (0..n)
            .filter_map(|i| level_of[i].map(|l| (l, i)))
            .collect();
        placed.sort_unstable();
        let mut order: Vec<usize> = placed.into_iter().map(|(_, i)| i).collect();
        order.extend((0..n).filter(|&i| level_of[i].is_none()));
        Selection::Perm(order)
    }
}

impl FairMax for SequentialOracle<'_> {
    fn name(&self) -> &'static str {
        "sequential"
    }

    fn guarantee(&self) -> OracleGuarantee {
        if self.exact.is_some() {
            OracleGuarantee::EXACT
        } else {
            OracleGuarantee {
                rho: 0.5,
                mu: 0.5,
                signed_coeffs: false,
            }
        }
    }

    fn maximize(&self, query: &WeightedQuery) -> Result<OracleResult, OracleError> {
        check_query(query, self.instance.m())?;
        if let Some(exact) = &self.exact {
            return exact.maximize(query);
        }
        require_nonnegative("sequential", query)?;
        let selection = self.matroid_greedy(query);
        let value = composite_value(self.instance, &selection, query);
        Ok(OracleResult { selection, value })
    }
}

/// Sequential FairMax; `(1, 1)` when `n! ≤ exact_cap`, otherwise `(1/2, 1/2)`.
pub fn fairmax_sequential(
    instance: &Instance,
    query: &WeightedQuery,
    exact_cap: u128,
) -> Result<OracleResult, OracleError> {
    SequentialOracle::new(instance, exact_cap)?.maximize(query)
}
