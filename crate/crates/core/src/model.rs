//! Problem instances: items, groups, utility specifications and feasible families.
//!
//! Utilities come from a closed catalog ([`UtilitySpec`]) so that every instance can be
//! serialized, evaluated exactly, enumerated for brute-force baselines, and classified
//! (monotone / submodular / modular) when choosing a FairMax oracle.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A feasible selection: either an item set or an ordering of all items.
///
/// Sets are kept in canonical form (sorted, no duplicates); construct them with
/// [`Selection::set`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Selection {
    Set(Vec<usize>),
    Perm(Vec<usize>),
}

impl Selection {
    pub fn set<I: IntoIterator<Item = usize>>(items: I) -> Self {
        let mut v: Vec<usize> = items.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Selection::Set(v)
    }

    pub fn empty() -> Self {
        Selection::Set(Vec::new())
    }

    pub fn perm(order: Vec<usize>) -> Self {
        Selection::Perm(order)
    }

    /// Items in the selection (in order, for permutations).
    pub fn items(&self) -> &[usize] {
        match self {
            Selection::Set(v) | Selection::Perm(v) => v,
        }
    }

    pub fn is_perm(&self) -> bool {
        matches!(self, Selection::Perm(_))
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (open, close) = match self {
            Selection::Set(_) => ('{', '}'),
            Selection::Perm(_) => ('(', ')'),
        };
        write!(f, "{open}")?;
        for (i, item) in self.items().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{item}")?;
        }
        write!(f, "{close}")
    }
}

/// Group memberships `V_t`; groups may overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupStructure {
    pub membership: Vec<Vec<usize>>,
}

impl GroupStructure {
    pub fn new(membership: Vec<Vec<usize>>) -> Self {
        GroupStructure { membership }
    }

    pub fn m(&self) -> usize {
        self.membership.len()
    }

    pub fn contains(&self, t: usize, item: usize) -> bool {
        self.membership[t].contains(&item)
    }
}

/// Catalog of evaluable utility functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `Σ_{i∈S} w_i`.
    Modular { weights: Vec<f64> },
    /// Total weight of universe elements covered by the selected items.
    Coverage {
        element_weights: Vec<f64>,
        /// `covers[i]` lists the elements covered by item `i`.
        covers: Vec<Vec<usize>>,
    },
    /// `|S ∩ V_t|`.
    GroupCount { group: usize },
    /// Expected MNL revenue `Σ_{i∈S} r_i ν_i / (ν_0 + Σ_{i∈S} ν_i)`.
    MnlRevenue {
        revenue: Vec<f64>,
        nu: Vec<f64>,
        nu0: f64,
    },
    /// MNL market share of group `t`: `Σ_{i∈S∩V_t} ν_i / (ν_0 + Σ_{i∈S} ν_i)`.
    MnlShare { group: usize, nu: Vec<f64>, nu0: f64 },
    /// Permutation utility `Σ_l λ_l h_l(S_[l])` over prefixes; level `l` (1-based) uses
    /// `lambda[l-1]` and `levels[l-1]`, missing entries count as zero.
    Sequential {
        lambda: Vec<f64>,
        levels: Vec<UtilitySpec>,
    },
}

impl UtilitySpec {
    /// Value on an item list.
    ///
    /// Sequential specs read `items` as an ordering: level `l` sees its first `l` entries.
    pub fn value_of_set(&self, items: &[usize], groups: &GroupStructure) -> f64 {
        match self {
            UtilitySpec::Modular { weights } => items.iter().map(|&i| weights[i]).sum(),
            UtilitySpec::Coverage {
                element_weights,
                covers,
            } => {
                let mut covered = vec![false; element_weights.len()];
                let mut total = 0.0;
                for &i in items {
                    for &e in &covers[i] {
                        if !covered[e] {
                            covered[e] = true;
                            total += element_weights[e];
                        }
                    }
                }
                total
            }
            UtilitySpec::GroupCount { group } => items
                .iter()
                .filter(|&&i| groups.contains(*group, i))
                .count() as f64,
            UtilitySpec::MnlRevenue { revenue, nu, nu0 } => {
                if items.is_empty() {
                    return 0.0;
                }
                let num: f64 = items.iter().map(|&i| revenue[i] * nu[i]).sum();
                let den: f64 = nu0 + items.iter().map(|&i| nu[i]).sum::<f64>();
                num / den
            }
            UtilitySpec::MnlShare { group, nu, nu0 } => {
                if items.is_empty() {
                    return 0.0;
                }
                let num: f64 = items
                    .iter()
                    .filter(|&&i| groups.contains(*group, i))
                    .map(|&i| nu[i])
                    .sum();
                let den: f64 = nu0 + items.iter().map(|&i| nu[i]).sum::<f64>();
                num / den
            }
            UtilitySpec::Sequential { lambda, levels } => {
                let mut total = 0.0;
                for (l, (lam, h)) in lambda.iter().zip(levels).enumerate() {
                    let prefix = &items[..(l + 1).min(items.len())];
                    total += lam * h.value_of_set(prefix, groups);
                }
                total
            }
        }
    }

    /// Value on a selection; for sequential specs prefixes follow the permutation order.
    pub fn value(&self, selection: &Selection, groups: &GroupStructure) -> f64 {
        self.value_of_set(selection.items(), groups)
    }

    /// `(λ_l, h_l)` for level `l` (1-based), or `None` when the level contributes nothing.
    pub fn level(&self, l: usize) -> Option<(f64, &UtilitySpec)> {
        match self {
            UtilitySpec::Sequential { lambda, levels } => {
                let lam = *lambda.get(l - 1)?;
                let h = levels.get(l - 1)?;
                Some((lam, h))
            }
            _ => None,
        }
    }

    pub fn is_sequential(&self) -> bool {
        matches!(self, UtilitySpec::Sequential { .. })
    }

    /// For sequential specs: whether every level component is monotone.
    pub fn is_monotone(&self) -> bool {
        match self {
            UtilitySpec::Modular { .. }
            | UtilitySpec::Coverage { .. }
            | UtilitySpec::GroupCount { .. } => true,
            UtilitySpec::MnlRevenue { .. } | UtilitySpec::MnlShare { .. } => false,
            UtilitySpec::Sequential { levels, .. } => levels.iter().all(|h| h.is_monotone()),
        }
    }

    /// For sequential specs: whether every level component is submodular.
    pub fn is_submodular(&self) -> bool {
        match self {
            UtilitySpec::Modular { .. }
            | UtilitySpec::Coverage { .. }
            | UtilitySpec::GroupCount { .. } => true,
            UtilitySpec::MnlRevenue { .. } | UtilitySpec::MnlShare { .. } => false,
            UtilitySpec::Sequential { levels, .. } => levels.iter().all(|h| h.is_submodular()),
        }
    }

    pub fn is_modular(&self) -> bool {
        matches!(
            self,
            UtilitySpec::Modular { .. } | UtilitySpec::GroupCount { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            UtilitySpec::Modular { .. } => "modular",
            UtilitySpec::Coverage { .. } => "coverage",
            UtilitySpec::GroupCount { .. } => "group_count",
            UtilitySpec::MnlRevenue { .. } => "mnl_revenue",
            UtilitySpec::MnlShare { .. } => "mnl_share",
            UtilitySpec::Sequential { .. } => "sequential",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeasibleFamily {
    /// Sets with `|S| ≤ k`.
    Cardinality { k: usize },
    AllSubsets,
    /// Orderings of all `n` items.
    Permutations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub groups: GroupStructure,
    pub global: UtilitySpec,
    pub group_utils: Vec<UtilitySpec>,
    pub family: FeasibleFamily,
}

/// Fairness requirements on expected group utilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FairnessSpec {
    /// `E[g_t] ≥ α_t`.
    Lower { alpha: Vec<f64> },
    /// `α_t ≤ E[g_t] ≤ β_t`.
    Box { alpha: Vec<f64>, beta: Vec<f64> },
    /// `E[g_t] − E[g_t'] ≤ γ_{t,t'}` for every ordered pair `t ≠ t'`; the diagonal is ignored.
    Pairwise { gamma: Vec<Vec<f64>> },
}

impl FairnessSpec {
    /// Pairwise constraint with the same `γ` for every pair.
    pub fn uniform_pairwise(m: usize, gamma: f64) -> Self {
        FairnessSpec::Pairwise {
            gamma: vec![vec![gamma; m]; m],
        }
    }
}

/// Sparse distribution over feasible selections; residual mass means "select nothing".
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SolutionDistribution {
    pub support: Vec<(Selection, f64)>,
}

impl SolutionDistribution {
    pub fn point(selection: Selection) -> Self {
        SolutionDistribution {
            support: vec![(selection, 1.0)],
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("selection {0} is not a member of the feasible family")]
    Infeasible(Selection),
    #[error("group index {t} out of range (m = {m})")]
    InvalidGroup { t: usize, m: usize },
    #[error("feasible family has {size} members, exceeding the cap of {cap}")]
    FamilyTooLarge { size: u128, cap: u128 },
}

/// One broken invariant, with a path to the offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Result of [`validate_instance`]; violations are data, not failures.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn check_reals(v: &mut Validation, path: &str, xs: &[f64], len: usize, what: &str) {
    if xs.len() != len {
        v.push(path, format!("{what} length {} ≠ n = {len}", xs.len()));
    }
    for (i, x) in xs.iter().enumerate() {
        if !x.is_finite() || *x < 0.0 {
            v.push(format!("{path}[{i}]"), format!("{what} must be finite and nonnegative"));
        }
    }
}

fn check_spec(v: &mut Validation, path: &str, spec: &UtilitySpec, n: usize, m: usize, nested: bool) {
    match spec {
        UtilitySpec::Modular { weights } => check_reals(v, &format!("{path}.weights"), weights, n, "weight"),
        UtilitySpec::Coverage {
            element_weights,
            covers,
        } => {
            check_reals(
                v,
                &format!("{path}.element_weights"),
                element_weights,
                element_weights.len(),
                "element weight",
            );
            if covers.len() != n {
                v.push(format!("{path}.covers"), format!("covers length {} ≠ n = {n}", covers.len()));
            }
            for (i, c) in covers.iter().enumerate() {
                for &e in c {
                    if e >= element_weights.len() {
                        v.push(format!("{path}.covers[{i}]"), format!("element {e} outside universe"));
                    }
                }
            }
        }
        UtilitySpec::GroupCount { group } => {
            if *group >= m {
                v.push(format!("{path}.group"), format!("group {group} out of range (m = {m})"));
            }
        }
        UtilitySpec::MnlRevenue { revenue, nu, nu0 } => {
            check_reals(v, &format!("{path}.revenue"), revenue, n, "revenue");
            check_mnl(v, path, nu, *nu0, n);
        }
        UtilitySpec::MnlShare { group, nu, nu0 } => {
            if *group >= m {
                v.push(format!("{path}.group"), format!("group {group} out of range (m = {m})"));
            }
            check_mnl(v, path, nu, *nu0, n);
        }
        UtilitySpec::Sequential { lambda, levels } => {
            if nested {
                v.push(path, "sequential specs cannot be nested");
                return;
            }
            if lambda.len() > n {
                v.push(format!("{path}.lambda"), format!("more than n = {n} levels"));
            }
            if levels.len() > n {
                v.push(format!("{path}.levels"), format!("more than n = {n} levels"));
            }
            for (l, x) in lambda.iter().enumerate() {
                if !x.is_finite() || *x < 0.0 {
                    v.push(format!("{path}.lambda[{l}]"), "level weight must be finite and nonnegative");
                }
            }
            for (l, h) in levels.iter().enumerate() {
                check_spec(v, &format!("{path}.levels[{l}]"), h, n, m, true);
            }
        }
    }
}

fn check_mnl(v: &mut Validation, path: &str, nu: &[f64], nu0: f64, n: usize) {
    if nu.len() != n {
        v.push(format!("{path}.nu"), format!("nu length {} ≠ n = {n}", nu.len()));
    }
    for (i, x) in nu.iter().enumerate() {
        if !x.is_finite() || *x <= 0.0 {
            v.push(format!("{path}.nu[{i}]"), "preference weight must be positive");
        }
    }
    if !nu0.is_finite() || nu0 <= 0.0 {
        v.push(format!("{path}.nu0"), "no-purchase weight must be positive");
    }
}

/// Checks every structural invariant of an instance.
pub fn validate_instance(instance: &Instance) -> Validation {
    let mut v = Validation::default();
    let n = instance.n;
    let m = instance.groups.m();
    if n == 0 {
        v.push("n", "instance must have at least one item");
    }
    if m == 0 {
        v.push("groups", "at least one group is required");
    }
    for (t, members) in instance.groups.membership.iter().enumerate() {
        for &i in members {
            if i >= n {
                v.push(format!("groups[{t}]"), format!("item {i} out of range (n = {n})"));
            }
        }
    }
    if instance.group_utils.len() != m {
        v.push(
            "group_utils",
            format!("group_utils length ≠ m ({} vs {m})", instance.group_utils.len()),
        );
    }
    check_spec(&mut v, "global", &instance.global, n, m, false);
    for (t, g) in instance.group_utils.iter().enumerate() {
        check_spec(&mut v, &format!("group_utils[{t}]"), g, n, m, false);
    }
    let specs = std::iter::once(&instance.global).chain(&instance.group_utils);
    match instance.family {
        FeasibleFamily::Cardinality { k } => {
            if k == 0 || k > n {
                v.push("family.k", format!("cardinality bound must satisfy 1 ≤ k ≤ n, got {k}"));
            }
        }
        FeasibleFamily::AllSubsets => {}
        FeasibleFamily::Permutations => {
            for (idx, s) in specs.clone().enumerate() {
                if !s.is_sequential() {
                    v.push(
                        spec_path(idx),
                        format!("permutation families need sequential specs, found {}", s.kind()),
                    );
                }
            }
        }
    }
    if instance.family != FeasibleFamily::Permutations {
        for (idx, s) in specs.enumerate() {
            if s.is_sequential() {
                v.push(spec_path(idx), "sequential specs require a permutation family");
            }
        }
    }
    v
}

fn spec_path(idx: usize) -> String {
    if idx == 0 {
        "global".to_string()
    } else {
        format!("group_utils[{}]", idx - 1)
    }
}

/// Checks a fairness specification against the group count.
pub fn validate_fairness(fairness: &FairnessSpec, m: usize) -> Validation {
    let mut v = Validation::default();
    let vector = |v: &mut Validation, path: &str, xs: &[f64]| {
        if xs.len() != m {
            v.push(path, format!("length {} ≠ m = {m}", xs.len()));
        }
        for (t, x) in xs.iter().enumerate() {
            if !x.is_finite() || *x < 0.0 {
                v.push(format!("{path}[{t}]"), "bound must be finite and nonnegative");
            }
        }
    };
    match fairness {
        FairnessSpec::Lower { alpha } => vector(&mut v, "fairness.alpha", alpha),
        FairnessSpec::Box { alpha, beta } => {
            vector(&mut v, "fairness.alpha", alpha);
            vector(&mut v, "fairness.beta", beta);
            for (t, (a, b)) in alpha.iter().zip(beta).enumerate() {
                if a > b {
                    v.push(format!("fairness.beta[{t}]"), "box requires alpha ≤ beta");
                }
            }
        }
        FairnessSpec::Pairwise { gamma } => {
            if gamma.len() != m {
                v.push("fairness.gamma", format!("expected {m} rows, got {}", gamma.len()));
            }
            for (t, row) in gamma.iter().enumerate() {
                if row.len() != m {
                    v.push(format!("fairness.gamma[{t}]"), format!("expected {m} columns"));
                }
                for (u, x) in row.iter().enumerate() {
                    if t != u && (!x.is_finite() || *x < 0.0) {
                        v.push(format!("fairness.gamma[{t}][{u}]"), "gamma must be finite and nonnegative");
                    }
                }
            }
        }
    }
    v
}

impl Instance {
    pub fn m(&self) -> usize {
        self.groups.m()
    }

    /// Whether `selection` is a member of the feasible family.
    pub fn contains(&self, selection: &Selection) -> bool {
        let n = self.n;
        match (&self.family, selection) {
            (FeasibleFamily::Permutations, Selection::Perm(order)) => {
                let mut seen = vec![false; n];
                order.len() == n
                    && order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
            }
            (FeasibleFamily::Permutations, Selection::Set(_)) => false,
            (_, Selection::Perm(_)) => false,
            (family, Selection::Set(items)) => {
                let canonical = items.windows(2).all(|w| w[0] < w[1]);
                let in_range = items.iter().all(|&i| i < n);
                let size_ok = match family {
                    FeasibleFamily::Cardinality { k } => items.len() <= *k,
                    _ => true,
                };
                canonical && in_range && size_ok
            }
        }
    }

    /// `f(S)` without the membership check.
    pub fn global_value(&self, selection: &Selection) -> f64 {
        self.global.value(selection, &self.groups)
    }

    /// `g_t(S)` without the membership check.
    pub fn group_value(&self, t: usize, selection: &Selection) -> f64 {
        self.group_utils[t].value(selection, &self.groups)
    }

    /// `(g_1(S), …, g_m(S))` without the membership check.
    pub fn group_values(&self, selection: &Selection) -> Vec<f64> {
        self.group_utils
            .iter()
            .map(|g| g.value(selection, &self.groups))
            .collect()
    }

    /// Number of members of the feasible family (saturating).
    pub fn family_size(&self) -> u128 {
        let n = self.n as u128;
        match self.family {
            FeasibleFamily::Cardinality { k } => {
                let mut total: u128 = 0;
                let mut binom: u128 = 1;
                for j in 0..=(k as u128).min(n) {
                    total = total.saturating_add(binom);
                    binom = binom.saturating_mul(n - j) / (j + 1);
                }
                total
            }
            FeasibleFamily::AllSubsets => {
                if n >= 127 {
                    u128::MAX
                } else {
                    1u128 << n
                }
            }
            FeasibleFamily::Permutations => (1..=n).fold(1u128, |acc, x| acc.saturating_mul(x)),
        }
    }
}

/// `f(S)` for a member of the feasible family.
pub fn eval_global(instance: &Instance, selection: &Selection) -> Result<f64, ModelError> {
    if !instance.contains(selection) {
        return Err(ModelError::Infeasible(selection.clone()));
    }
    Ok(instance.global_value(selection))
}

/// `g_t(S)` for a member of the feasible family.
pub fn eval_group(instance: &Instance, t: usize, selection: &Selection) -> Result<f64, ModelError> {
    let m = instance.m();
    if t >= m {
        return Err(ModelError::InvalidGroup { t, m });
    }
    if !instance.contains(selection) {
        return Err(ModelError::Infeasible(selection.clone()));
    }
    Ok(instance.group_value(t, selection))
}

/// Every member of the feasible family, in deterministic order: sets by size, then
/// lexicographically by item index; permutations lexicographically.
pub fn enumerate_feasible(instance: &Instance, cap: u128) -> Result<Vec<Selection>, ModelError> {
    let size = instance.family_size();
    if size > cap {
        return Err(ModelError::FamilyTooLarge { size, cap });
    }
    let n = instance.n;
    let mut out = Vec::with_capacity(size as usize);
    match instance.family {
        FeasibleFamily::Permutations => {
            let mut order: Vec<usize> = (0..n).collect();
            loop {
                out.push(Selection::Perm(order.clone()));
                if !next_permutation(&mut order) {
                    break;
                }
            }
        }
        FeasibleFamily::Cardinality { k } => {
            for size in 0..=k.min(n) {
                push_combinations(n, size, &mut out);
            }
        }
        FeasibleFamily::AllSubsets => {
            for size in 0..=n {
                push_combinations(n, size, &mut out);
            }
        }
    }
    Ok(out)
}

fn push_combinations(n: usize, size: usize, out: &mut Vec<Selection>) {
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(Selection::Set(idx.clone()));
        // advance to the next combination in lexicographic order
        let mut i = size;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - size + i {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// `(Σ x_S f(S), [Σ x_S g_t(S)]_t)`.
pub fn expected_utilities(instance: &Instance, dist: &SolutionDistribution) -> (f64, Vec<f64>) {
    let mut global = 0.0;
    let mut groups = vec![0.0; instance.m()];
    for (sel, p) in &dist.support {
        global += p * instance.global_value(sel);
        for (t, g) in groups.iter_mut().enumerate() {
            *g += p * instance.group_value(t, sel);
        }
    }
    (global, groups)
}
