//! Seeded random instances for tests, benchmarks and the oracle-test command.
//!
//! Every generator is a pure function of its seed; changing a range here changes the
//! instances the acceptance suite sees, so treat the constants as versioned.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    enumerate_feasible, expected_utilities, FairnessSpec, FeasibleFamily, GroupStructure, Instance, SolutionDistribution,
    UtilitySpec,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Assigns every item to one group, each group non-empty (needs `n ≥ m`).
pub fn random_partition(rng: &mut impl Rng, n: usize, m: usize) -> GroupStructure {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut membership = vec![Vec::new(); m];
    for (pos, &i) in order.iter().enumerate() {
        let t = if pos < m { pos } else { rng.gen_range(0..m) };
        membership[t].push(i);
    }
    for g in &mut membership {
        g.sort_unstable();
    }
    GroupStructure::new(membership)
}

fn weights(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Coverage over a universe of `universe` elements; only `items` cover anything.
pub fn random_coverage(rng: &mut impl Rng, n: usize, universe: usize, items: &[usize]) -> UtilitySpec {
    let element_weights = weights(rng, universe, 0.5, 2.0);
    let mut covers = vec![Vec::new(); n];
    for &i in items {
        let count = rng.gen_range(1..=3.min(universe));
        let mut elems: Vec<usize> = (0..universe).collect();
        elems.shuffle(rng);
        let mut c = elems[..count].to_vec();
        c.sort_unstable();
        covers[i] = c;
    }
    UtilitySpec::Coverage { element_weights, covers }
}

/// Small lower-bound instance: `n ∈ [4, 8]`, `m ∈ [1, 3]`, cardinality `k ∈ [1, 4]`,
/// modular or coverage global utility, group counts or group-restricted coverage.
pub fn p0_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.gen_range(4..=8);
    let m = r.gen_range(1..=3);
    let k = r.gen_range(1..=4);
    let groups = random_partition(&mut r, n, m);
    let all: Vec<usize> = (0..n).collect();
    let global = if r.gen_bool(0.5) {
        UtilitySpec::Modular {
            weights: weights(&mut r, n, 0.0, 5.0),
        }
    } else {
        random_coverage(&mut r, n, 6, &all)
    };
    let group_utils = (0..m)
        .map(|t| {
            if r.gen_bool(0.5) {
                UtilitySpec::GroupCount { group: t }
            } else {
                random_coverage(&mut r, n, 4, &groups.membership[t])
            }
        })
        .collect();
    Instance {
        n,
        groups,
        global,
        group_utils,
        family: FeasibleFamily::Cardinality { k },
    }
}

/// Monotone submodular instance: coverage global and group utilities.
pub fn coverage_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.gen_range(5..=8);
    let m = r.gen_range(1..=3);
    let k = r.gen_range(2..=4);
    let groups = random_partition(&mut r, n, m);
    let all: Vec<usize> = (0..n).collect();
    let global = random_coverage(&mut r, n, 8, &all);
    let group_utils = (0..m)
        .map(|t| random_coverage(&mut r, n, 4, &groups.membership[t]))
        .collect();
    Instance {
        n,
        groups,
        global,
        group_utils,
        family: FeasibleFamily::Cardinality { k },
    }
}

/// MNL assortment instance over all subsets of `n` items.
pub fn mnl_instance(seed: u64, n: usize) -> Instance {
    let mut r = rng(seed);
    let m = r.gen_range(1..=3.min(n));
    let groups = random_partition(&mut r, n, m);
    let nu = weights(&mut r, n, 0.1, 2.0);
    let nu0 = r.gen_range(0.2..2.0);
    let revenue = weights(&mut r, n, 0.5, 10.0);
    let group_utils = (0..m)
        .map(|t| UtilitySpec::MnlShare {
            group: t,
            nu: nu.clone(),
            nu0,
        })
        .collect();
    Instance {
        n,
        groups,
        global: UtilitySpec::MnlRevenue { revenue, nu, nu0 },
        group_utils,
        family: FeasibleFamily::AllSubsets,
    }
}

fn random_sequential(rng: &mut impl Rng, n: usize, items: &[usize]) -> UtilitySpec {
    let mut lambda = weights(rng, n, 0.0, 1.0);
    lambda.sort_by(|a, b| b.total_cmp(a));
    let levels = (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                let mut w = vec![0.0; n];
                for &i in items {
                    w[i] = rng.gen_range(0.0..3.0);
                }
                UtilitySpec::Modular { weights: w }
            } else {
                random_coverage(rng, n, 4, items)
            }
        })
        .collect();
    UtilitySpec::Sequential { lambda, levels }
}

/// Permutation instance with sequential monotone submodular utilities.
pub fn sequential_instance(seed: u64, n: usize) -> Instance {
    let mut r = rng(seed);
    let m = r.gen_range(1..=2.min(n));
    let groups = random_partition(&mut r, n, m);
    let all: Vec<usize> = (0..n).collect();
    let global = random_sequential(&mut r, n, &all);
    let group_utils = (0..m)
        .map(|t| random_sequential(&mut r, n, &groups.membership[t]))
        .collect();
    Instance {
        n,
        groups,
        global,
        group_utils,
        family: FeasibleFamily::Permutations,
    }
}

/// Random distribution over up to four members of the feasible family.
pub fn random_distribution(instance: &Instance, seed: u64) -> SolutionDistribution {
    let mut r = rng(seed);
    let family = enumerate_feasible(instance, 1 << 20).expect("generator instances are small");
    let size = r.gen_range(1..=4.min(family.len()));
    let picks: Vec<_> = family.choose_multiple(&mut r, size).cloned().collect();
    let raw: Vec<f64> = (0..size).map(|_| r.gen_range(0.1..1.0)).collect();
    // keep a little residual mass now and then
    let total = raw.iter().sum::<f64>() / if r.gen_bool(0.3) { r.gen_range(0.7..1.0) } else { 1.0 };
    SolutionDistribution {
        support: picks.into_iter().zip(raw.into_iter().map(|p| p / total)).collect(),
    }
}

/// Lower bounds `α = θ·E_D[g]` for a random distribution `D`, so `D` certifies feasibility.
pub fn feasible_lower(instance: &Instance, seed: u64) -> FairnessSpec {
    let mut r = rng(seed ^ 0x5eed);
    let (_, eg) = expected_utilities(instance, &random_distribution(instance, seed));
    let theta = r.gen_range(0.5..1.0);
    FairnessSpec::Lower {
        alpha: eg.iter().map(|g| theta * g).collect(),
    }
}

/// Box bounds bracketing the expectations of a random distribution.
pub fn feasible_box(instance: &Instance, seed: u64) -> FairnessSpec {
    let mut r = rng(seed ^ 0xb0c5);
    let (_, eg) = expected_utilities(instance, &random_distribution(instance, seed));
    let theta = r.gen_range(0.5..1.0);
    let alpha = eg.iter().map(|g| theta * g).collect();
    let beta = eg.iter().map(|g| g * r.gen_range(1.0..1.3) + 0.05).collect();
    FairnessSpec::Box { alpha, beta }
}

/// Pairwise bounds with `γ ∈ [0.05, 0.5]`; always feasible through the empty selection.
pub fn random_pairwise(instance: &Instance, seed: u64) -> FairnessSpec {
    let mut r = rng(seed ^ 0x9a12);
    let m = instance.m();
    let gamma = (0..m)
        .map(|t| (0..m).map(|u| if t == u { 0.0 } else { r.gen_range(0.05..0.5) }).collect())
        .collect();
    FairnessSpec::Pairwise { gamma }
}

/// Lower bounds with one `α_t` strictly above `max_S g_t(S)`.
pub fn infeasible_lower(instance: &Instance, seed: u64) -> FairnessSpec {
    let mut r = rng(seed ^ 0x1f);
    let family = enumerate_feasible(instance, 1 << 20).expect("generator instances are small");
    let m = instance.m();
    let mut alpha = vec![0.0; m];
    let t = r.gen_range(0..m);
    let best = family
        .iter()
        .map(|s| instance.group_value(t, s))
        .fold(0.0, f64::max);
    alpha[t] = best + r.gen_range(0.25..1.0);
    FairnessSpec::Lower { alpha }
}

/// Coefficients in `[lo, hi)` for oracle cross-checks.
pub fn random_coeffs(seed: u64, m: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut r = rng(seed);
    weights(&mut r, m, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_fairness, validate_instance};

    #[test]
    fn generators_validate() {
        for seed in 0..30 {
            for inst in [
                p0_instance(seed),
                coverage_instance(seed),
                mnl_instance(seed, 6),
                sequential_instance(seed, 4),
            ] {
                assert!(validate_instance(&inst).is_ok(), "{seed}: {:?}", validate_instance(&inst));
                for f in [
                    feasible_lower(&inst, seed),
                    feasible_box(&inst, seed),
                    random_pairwise(&inst, seed),
                    infeasible_lower(&inst, seed),
                ] {
                    assert!(validate_fairness(&f, inst.m()).is_ok());
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(p0_instance(7), p0_instance(7));
        assert_eq!(random_distribution(&p0_instance(7), 3), random_distribution(&p0_instance(7), 3));
    }

    #[test]
    fn coverage_instances_are_submodular() {
        for seed in 0..10 {
            let inst = coverage_instance(seed);
            assert!(inst.global.is_monotone() && inst.global.is_submodular());
        }
    }
}
