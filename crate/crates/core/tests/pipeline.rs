use fairsel::ellipsoid::{ellipsoid_feasible, EllipsoidConfig, FeasibilityOutcome};
use fairsel::generate::{feasible_box, feasible_lower, p0_instance, random_pairwise};
use fairsel::oracle::{ExactOracle, FairMax};
use fairsel::solver::{binary_search_l, solve, Variant};
use fairsel::verify::{brute_force_optimum, check_guarantee, Claim};
use fairsel::{FairnessSpec, Instance, OracleKind, SolveConfig};

const CAP: u128 = 1 << 20;

fn variants(inst: &Instance, seed: u64) -> [FairnessSpec; 3] {
    [
        feasible_lower(inst, seed),
        feasible_box(inst, seed),
        random_pairwise(inst, seed),
    ]
}

#[test]
fn exact_solves_pass_guarantee_check() {
    for seed in 0..12 {
        let inst = p0_instance(20_000 + seed);
        for fairness in variants(&inst, seed) {
            let r = solve(&inst, &fairness, OracleKind::Exact, &SolveConfig::default()).unwrap();
            let base = brute_force_optimum(&inst, &fairness, CAP).unwrap();
            let check = check_guarantee(&inst, &Claim::from(&r), &base, &fairness, 1e-3);
            assert!(check.pass(), "seed {seed}: {:?}", check.failing().collect::<Vec<_>>());
            assert!(r.distribution.support.len() <= r.f_prime.len());
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let inst = p0_instance(31);
    for fairness in variants(&inst, 31) {
        let a = solve(&inst, &fairness, OracleKind::Exact, &SolveConfig::default()).unwrap();
        let b = solve(&inst, &fairness, OracleKind::Exact, &SolveConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn collect_all_runs_also_works() {
    let inst = p0_instance(44);
    let fairness = feasible_lower(&inst, 44);
    let cfg = SolveConfig {
        collect_all_runs: true,
        ..SolveConfig::default()
    };
    let all = solve(&inst, &fairness, OracleKind::Exact, &cfg).unwrap();
    let last = solve(&inst, &fairness, OracleKind::Exact, &SolveConfig::default()).unwrap();
    assert!(all.f_prime.len() >= last.f_prime.len());
    assert!(all.value >= last.value - 1e-6);
}

#[test]
fn witnesses_satisfy_their_certificates() {
    for seed in 0..8 {
        let inst = p0_instance(21_000 + seed);
        let oracle = ExactOracle::new(&inst, CAP).unwrap();
        for fairness in variants(&inst, seed) {
            let variant = Variant::new(fairness.clone(), inst.m());
            let cfg = EllipsoidConfig {
                radius: 200.0,
                ..EllipsoidConfig::default()
            };
            let level = 50.0;
            let run = ellipsoid_feasible(level, &variant, 1.0, &oracle, &inst, &cfg).unwrap();
            let FeasibilityOutcome::MarkedNonEmpty { witness, certificate } = run.outcome else {
                panic!("seed {seed}: generous level not marked");
            };
            let obj: f64 = variant
                .objective_normal(1.0)
                .iter()
                .zip(&witness.0)
                .map(|(a, p)| a * p)
                .sum();
            assert!(obj <= level + 1e-9);
            let c = variant.effective_coeffs(&witness);
            let g = inst.group_values(&certificate);
            let composite = inst.global_value(&certificate) + c.coeffs.iter().zip(&g).map(|(c, g)| c * g).sum::<f64>();
            assert!(composite <= witness.w() + 1e-9);
            assert!(run.violated_sets.len() <= run.iterations);
            assert!(run.iterations <= cfg.iteration_cap(variant.dim()));
        }
    }
}

#[test]
fn search_brackets_the_optimum() {
    for seed in 0..8 {
        let inst = p0_instance(22_000 + seed);
        let fairness = feasible_lower(&inst, seed);
        let opt = brute_force_optimum(&inst, &fairness, CAP).unwrap().opt().unwrap();
        let oracle = ExactOracle::new(&inst, CAP).unwrap();
        assert_eq!(oracle.guarantee().rho, 1.0);
        let cfg = SolveConfig::default();
        let r = binary_search_l(&Variant::new(fairness, inst.m()), &oracle, &inst, &cfg).unwrap();
        assert!(r.l_star - r.l_empty <= cfg.epsilon + 1e-12);
        // a marked level certifies L* ≥ OPT
        assert!(r.l_star >= opt - 1e-6, "seed {seed}: L* = {} < OPT = {opt}", r.l_star);
        // a region thinner than the volume floor just above OPT can be reported empty
        assert!(r.l_empty <= opt + cfg.epsilon, "seed {seed}: {} vs OPT {opt}", r.l_empty);
    }
}
