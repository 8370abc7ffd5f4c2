//! File formats and command entry points.
//!
//! Exit codes: 0 success, 1 failed check, 2 infeasible fairness constraints, 3 unreadable
//! or invalid input (including an oracle that does not apply), 4 numerical breakdown,
//! 5 feasible family too large for enumeration.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::model::{FairnessSpec, Instance, ModelError, Selection, SolutionDistribution};
use crate::oracle::{build_oracle, OracleError, OracleKind};
use crate::solver::{solve, SolveConfig, SolveError, SolveReport};
use crate::verify::{brute_force_optimum, check_guarantee, oracle_cross_check, Claim, VerifyError};
use crate::generate::random_coeffs;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_TOO_LARGE: i32 = 5;

/// Instance document: the instance fields plus `fairness`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(flatten)]
    pub instance: Instance,
    pub fairness: FairnessSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm: Option<Vec<usize>>,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub status: String,
    pub value: f64,
    pub upper_bound: f64,
    pub rho: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub distribution: Vec<DistributionEntry>,
    pub expected_groups: Vec<f64>,
    pub f_prime_size: usize,
}

impl From<&SolveReport> for ReportFile {
    fn from(r: &SolveReport) -> Self {
        let distribution = r
            .distribution
            .support
            .iter()
            .map(|(s, p)| match s {
                Selection::Set(items) => DistributionEntry {
                    set: Some(items.clone()),
                    perm: None,
                    prob: *p,
                },
                Selection::Perm(order) => DistributionEntry {
                    set: None,
                    perm: Some(order.clone()),
                    prob: *p,
                },
            })
            .collect();
        ReportFile {
            status: "ok".into(),
            value: r.value,
            upper_bound: r.upper_bound,
            rho: r.guarantee.rho,
            mu: r.guarantee.mu,
            epsilon: r.epsilon,
            distribution,
            expected_groups: r.expected_groups.clone(),
            f_prime_size: r.f_prime.len(),
        }
    }
}

impl ReportFile {
    pub fn to_distribution(&self) -> Result<SolutionDistribution, String> {
        self.distribution
            .iter()
            .map(|e| {
                let sel = match (&e.set, &e.perm) {
                    (Some(s), None) => Selection::set(s.iter().copied()),
                    (None, Some(p)) => Selection::perm(p.clone()),
                    _ => return Err("each distribution entry needs exactly one of `set` or `perm`".to_string()),
                };
                Ok((sel, e.prob))
            })
            .collect::<Result<_, _>>()
            .map(|support| SolutionDistribution { support })
    }

    pub fn claim(&self) -> Result<Claim, String> {
        Ok(Claim {
            distribution: self.to_distribution()?,
            value: self.value,
            upper_bound: self.upper_bound,
            rho: self.rho,
            mu: self.mu,
            epsilon: self.epsilon,
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "fairsel", version, about = "Fair randomized selection via ellipsoid separation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance and write a report.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "exact")]
        oracle: OracleKind,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        /// Report path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Build F′ from every ellipsoid run.
        #[arg(long)]
        collect_all: bool,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, default_value_t = 1e-7)]
        floor_ratio: f64,
        /// Enumeration cap for exact oracles.
        #[arg(long, default_value_t = 1 << 20)]
        cap: u128,
    },
    /// Check a report against the brute-force optimum.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 1 << 20)]
        cap: u128,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Compare an oracle against enumeration on random coefficient vectors.
    OracleTest {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        oracle: OracleKind,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 20)]
        cap: u128,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())))
}

fn oracle_failure(e: OracleError) -> Failure {
    match e {
        OracleError::Model(ModelError::FamilyTooLarge { .. }) => Failure::new(EXIT_TOO_LARGE, e.to_string()),
        other => Failure::new(EXIT_INVALID, other.to_string()),
    }
}

fn solve_failure(e: SolveError) -> Failure {
    let code = match &e {
        SolveError::InfeasibleFairness { .. } => EXIT_INFEASIBLE,
        SolveError::Validation(_) => EXIT_INVALID,
        SolveError::Oracle(o) => return oracle_failure(o.clone()),
        SolveError::RestrictedLpInfeasible | SolveError::Numerical(_) => EXIT_NUMERICAL,
    };
    Failure::new(code, e.to_string())
}

fn verify_failure(e: VerifyError) -> Failure {
    let code = if e.is_family_too_large() {
        EXIT_TOO_LARGE
    } else if matches!(e, VerifyError::Lp(_)) {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    };
    Failure::new(code, e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Solve {
            instance,
            oracle,
            eps,
            out,
            collect_all,
            radius,
            max_iter,
            floor_ratio,
            cap,
        } => {
            let file: InstanceFile = read_json(&instance)?;
            let config = SolveConfig {
                epsilon: eps,
                radius,
                max_iter,
                floor_ratio,
                collect_all_runs: collect_all,
                exact_cap: cap,
                ..SolveConfig::default()
            };
            let report = solve(&file.instance, &file.fairness, oracle, &config).map_err(solve_failure)?;
            let json = to_json(&ReportFile::from(&report));
            match out {
                Some(path) => fs::write(&path, json + "\n")
                    .map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())))?,
                None => println!("{json}"),
            }
            Ok(EXIT_OK)
        }
        Command::Verify {
            instance,
            report,
            cap,
            tol,
        } => {
            let file: InstanceFile = read_json(&instance)?;
            let report: ReportFile = read_json(&report)?;
            let claim = report.claim().map_err(|e| Failure::new(EXIT_INVALID, e))?;
            let baseline = brute_force_optimum(&file.instance, &file.fairness, cap).map_err(verify_failure)?;
            let check = check_guarantee(&file.instance, &claim, &baseline, &file.fairness, tol);
            println!("{}", to_json(&check));
            if check.pass() {
                Ok(EXIT_OK)
            } else {
                for c in check.failing() {
                    eprintln!("failed: {} (slack {:e})", c.name, c.slack);
                }
                Ok(EXIT_CHECK_FAILED)
            }
        }
        Command::OracleTest {
            instance,
            oracle,
            trials,
            seed,
            cap,
        } => {
            let file: InstanceFile = read_json(&instance)?;
            let validation = crate::model::validate_instance(&file.instance);
            if !validation.is_ok() {
                return Err(Failure::new(EXIT_INVALID, format!("{:?}", validation.violations)));
            }
            let fm = build_oracle(oracle, &file.instance, cap).map_err(oracle_failure)?;
            let g = fm.guarantee();
            let lo = if g.signed_coeffs { -2.0 } else { 0.0 };
            let m = file.instance.m();
            let mut worst = f64::INFINITY;
            for k in 0..trials as u64 {
                let coeffs = random_coeffs(seed.wrapping_add(k), m, lo, 3.0);
                let r = oracle_cross_check(&file.instance, &coeffs, fm.as_ref(), cap).map_err(verify_failure)?;
                worst = worst.min(r);
            }
            println!("{worst}");
            Ok(if trials == 0 || worst >= g.rho - 1e-6 {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            })
        }
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
