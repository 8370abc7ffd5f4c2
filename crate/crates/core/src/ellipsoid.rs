//! Approximate non-emptiness test for the dual region `C(L)`.
//!
//! Points are laid out as `(dual multipliers…, w)`. A point is in `C(L)` when every
//! coordinate is nonnegative, the dual objective is at most `L`, and no feasible set
//! violates `w ≥ f(S) + Σ_t c_t(point)·g_t(S)`. The last condition is checked with a
//! FairMax oracle, so "inside" is only as good as the oracle's guarantee.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{Instance, Selection};
use crate::oracle::{FairMax, OracleError};
use crate::solver::Variant;

/// A point of the dual space.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPoint(pub Vec<f64>);

impl DualPoint {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// The trailing `w` coordinate.
    pub fn w(&self) -> f64 {
        *self.0.last().expect("dual points have a w coordinate")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CutSource {
    Objective,
    Nonnegativity(usize),
    Set(Selection),
}

/// Half-space `normal·p ≤ offset` that the queried point violates.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub source: CutSource,
}

impl Hyperplane {
    /// `normal·p − offset`; positive when `p` is cut off.
    pub fn margin(&self, point: &[f64]) -> f64 {
        dot(&self.normal, point) - self.offset
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Separation {
    Inside { certificate: Selection },
    Cut(Hyperplane),
}

/// `{p : (p − c)ᵀ P⁻¹ (p − c) ≤ 1}`, with `P` stored row-major.
/// Ellipsoid `{c + J v : |v| ≤ 1}` with shape `P = J Jᵀ`.
///
/// Keeping the factor instead of `P` means the update can never lose positive
/// definiteness through cancellation, and `ln det P` is tracked in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidState {
    pub center: Vec<f64>,
    /// Row-major `d × d` factor `J`.
    pub factor: Vec<f64>,
    log_det: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipsoidError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("numerical breakdown in ellipsoid update: {0}")]
    NumericalBreakdown(String),
    #[error("point has dimension {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

impl EllipsoidState {
    /// Ball of radius `radius` around `center`.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let d = center.len();
        let mut factor = vec![0.0; d * d];
        for i in 0..d {
            factor[i * d + i] = radius;
        }
        EllipsoidState {
            center,
            factor,
            log_det: 2.0 * d as f64 * radius.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Shape matrix `P = J Jᵀ`, row-major.
    pub fn shape(&self) -> Vec<f64> {
        let d = self.dim();
        let j = &self.factor;
        let mut p = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..=r {
                let v = dot(&j[r * d..(r + 1) * d], &j[c * d..(c + 1) * d]);
                p[r * d + c] = v;
                p[c * d + r] = v;
            }
        }
        p
    }

    /// `ln det P`; `None` once it is no longer finite.
    pub fn log_det(&self) -> Option<f64> {
        self.log_det.is_finite().then_some(self.log_det)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central-cut update keeping the half `{x : a·x ≤ a·c}`.
pub fn ellipsoid_step(state: &EllipsoidState, normal: &[f64]) -> Result<EllipsoidState, EllipsoidError> {
    let d = state.dim();
    if normal.len() != d {
        return Err(EllipsoidError::Dimension {
            got: normal.len(),
            expected: d,
        });
    }
    if normal.iter().all(|&x| x == 0.0) {
        return Err(EllipsoidError::NumericalBreakdown("zero cut normal".into()));
    }
    let j = &state.factor;
    // v = Jᵀa
    let mut v = vec![0.0; d];
    for r in 0..d {
        for c in 0..d {
            v[c] += j[r * d + c] * normal[r];
        }
    }
    let norm = dot(&v, &v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(EllipsoidError::NumericalBreakdown(format!(
            "degenerate cut direction (|Jᵀa| = {norm:e})"
        )));
    }
    let u: Vec<f64> = v.iter().map(|x| x / norm).collect();
    // b = J u = P a / sqrt(aᵀ P a)
    let b: Vec<f64> = (0..d).map(|r| dot(&j[r * d..(r + 1) * d], &u)).collect();
    let df = d as f64;
    let (step, scale, ratio) = if d == 1 {
        (0.5, 1.0, 0.25)
    } else {
        (1.0 / (df + 1.0), df * df / (df * df - 1.0), (df - 1.0) / (df + 1.0))
    };
    let center: Vec<f64> = state.center.iter().zip(&b).map(|(c, bi)| c - step * bi).collect();
    // J' = sqrt(scale)·(J − k·b uᵀ) gives P' = scale·(P − (1 − ratio)·b bᵀ)
    let k = 1.0 - ratio.sqrt();
    let s = scale.sqrt();
    let mut factor = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            factor[r * d + c] = s * (j[r * d + c] - k * b[r] * u[c]);
        }
    }
    Ok(EllipsoidState {
        center,
        factor,
        log_det: state.log_det + df * scale.ln() + ratio.ln(),
    })
}

/// Violations at or below this margin are treated as satisfied, so every emitted cut
/// separates the queried point by more than rounding noise.
pub const CUT_TOL: f64 = 1e-12;

/// Separation oracle for `C(L)`: nonnegativity, then the objective cut, then FairMax.
pub fn separation(
    point: &DualPoint,
    level: f64,
    variant: &Variant,
    mu: f64,
    oracle: &dyn FairMax,
    instance: &Instance,
) -> Result<Separation, EllipsoidError> {
    let d = variant.dim();
    if point.dim() != d {
        return Err(EllipsoidError::Dimension {
            got: point.dim(),
            expected: d,
        });
    }
    if let Some(j) = point.0.iter().position(|&x| x < -CUT_TOL) {
        let mut normal = vec![0.0; d];
        normal[j] = -1.0;
        return Ok(Separation::Cut(Hyperplane {
            normal,
            offset: 0.0,
            source: CutSource::Nonnegativity(j),
        }));
    }
    let objective = Hyperplane {
        normal: variant.objective_normal(mu),
        offset: level,
        source: CutSource::Objective,
    };
    if objective.margin(&point.0) > CUT_TOL {
        return Ok(Separation::Cut(objective));
    }
    // coordinates within CUT_TOL below zero were accepted above; query at their clamp
    let clamped = DualPoint(point.0.iter().map(|x| x.max(0.0)).collect());
    let query = variant.effective_coeffs(&clamped);
    let result = oracle.maximize(&query)?;
    let f = instance.global_value(&result.selection);
    let g = instance.group_values(&result.selection);
    let cut = Hyperplane {
        normal: variant.set_cut_normal(&g),
        offset: -f,
        source: CutSource::Set(result.selection),
    };
    if cut.margin(&point.0) > CUT_TOL {
        return Ok(Separation::Cut(cut));
    }
    let CutSource::Set(certificate) = cut.source else { unreachable!() };
    Ok(Separation::Inside { certificate })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidConfig {
    /// Scale `R` of the starting region; the initial ellipsoid is the ball circumscribing
    /// the box `[0, R]^d`.
    pub radius: f64,
    /// Iteration cap; `None` uses `⌈2d(d+1)·ln(r₀/r_floor)⌉`.
    pub max_iter: Option<usize>,
    /// `r_floor = floor_ratio · r₀`; a run stops once the geometric-mean semi-axis drops
    /// below it.
    pub floor_ratio: f64,
    /// Record per-iteration diagnostics.
    pub trace: bool,
}

impl Default for EllipsoidConfig {
    fn default() -> Self {
        EllipsoidConfig {
            radius: 100.0,
            max_iter: None,
            floor_ratio: 1e-7,
            trace: false,
        }
    }
}

impl EllipsoidConfig {
    pub fn initial_state(&self, d: usize) -> EllipsoidState {
        let r = self.radius;
        EllipsoidState::ball(vec![r / 2.0; d], r * (d as f64).sqrt() / 2.0)
    }

    pub fn iteration_cap(&self, d: usize) -> usize {
        self.max_iter.unwrap_or_else(|| {
            let df = d as f64;
            (2.0 * df * (df + 1.0) * (1.0 / self.floor_ratio).ln()).ceil() as usize
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeasibilityOutcome {
    /// An oracle-certified point of `C(L)`.
    MarkedNonEmpty {
        witness: DualPoint,
        certificate: Selection,
    },
    Empty,
}

/// One ellipsoid iteration, recorded when tracing.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub margin: f64,
    pub log_det_before: f64,
    pub log_det_after: f64,
    pub source: CutSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityRun {
    pub outcome: FeasibilityOutcome,
    /// Deduplicated selections of every set cut, in first-seen order.
    pub violated_sets: Vec<Selection>,
    pub iterations: usize,
    pub trace: Vec<StepRecord>,
}

impl FeasibilityRun {
    pub fn is_marked(&self) -> bool {
        matches!(self.outcome, FeasibilityOutcome::MarkedNonEmpty { .. })
    }
}

/// Runs the central-cut ellipsoid method on `C(level)`.
pub fn ellipsoid_feasible(
    level: f64,
    variant: &Variant,
    mu: f64,
    oracle: &dyn FairMax,
    instance: &Instance,
    config: &EllipsoidConfig,
) -> Result<FeasibilityRun, EllipsoidError> {
    let d = variant.dim();
    let mut state = config.initial_state(d);
    let cap = config.iteration_cap(d);
    let r0 = config.radius * (d as f64).sqrt() / 2.0;
    let log_floor = 2.0 * d as f64 * (config.floor_ratio * r0).ln();
    let mut log_det = state
        .log_det()
        .ok_or_else(|| EllipsoidError::NumericalBreakdown("initial shape not positive definite".into()))?;
    let mut seen = BTreeSet::new();
    let mut violated = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < cap && log_det >= log_floor {
        let point = DualPoint(state.center.clone());
        let cut = match separation(&point, level, variant, mu, oracle, instance)? {
            Separation::Inside { certificate } => {
                return Ok(FeasibilityRun {
                    outcome: FeasibilityOutcome::MarkedNonEmpty {
                        witness: point,
                        certificate,
                    },
                    violated_sets: violated,
                    iterations,
                    trace,
                });
            }
            Separation::Cut(cut) => cut,
        };
        if let CutSource::Set(sel) = &cut.source {
            if seen.insert(sel.clone()) {
                violated.push(sel.clone());
            }
        }
        let next = ellipsoid_step(&state, &cut.normal)?;
        let next_log_det = next.log_det().ok_or_else(|| {
            EllipsoidError::NumericalBreakdown(format!("shape matrix not positive definite after {iterations} steps"))
        })?;
        if config.trace {
            trace.push(StepRecord {
                margin: cut.margin(&point.0),
                log_det_before: log_det,
                log_det_after: next_log_det,
                source: cut.source,
            });
        }
        state = next;
        log_det = next_log_det;
        iterations += 1;
    }
    Ok(FeasibilityRun {
        outcome: FeasibilityOutcome::Empty,
        violated_sets: violated,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FairnessSpec, FeasibleFamily, GroupStructure, UtilitySpec};
    use crate::oracle::ExactOracle;

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
    fn one_dimensional_step_halves_interval() {
        let s = EllipsoidState::ball(vec![0.0], 1.0);
        let n = ellipsoid_step(&s, &[1.0]).unwrap();
        assert_eq!(n.center, vec![-0.5]);
        assert!((n.shape()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_closed_form() {
        let s = EllipsoidState::ball(vec![0.0, 0.0], 1.0);
        let n = ellipsoid_step(&s, &[1.0, 0.0]).unwrap();
        assert!((n.center[0] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(n.center[1], 0.0);
        assert!((n.shape()[0] - 4.0 / 9.0).abs() < 1e-15);
        assert!((n.shape()[3] - 4.0 / 3.0).abs() < 1e-15);
        assert!(n.shape()[1].abs() < 1e-15);
        assert!(n.log_det().unwrap() < s.log_det().unwrap());
    }

    #[test]
    fn zero_normal_is_rejected() {
        let s = EllipsoidState::ball(vec![0.0, 0.0], 1.0);
        assert!(ellipsoid_step(&s, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn separation_order() {
        let inst = i1();
        let oracle = ExactOracle::new(&inst, 100).unwrap();
        let variant = Variant::new(FairnessSpec::Lower { alpha: vec![0.5, 1.0] }, 2);
        let p = DualPoint(vec![-0.5, 0.0, 1.0]);
        match separation(&p, 10.0, &variant, 1.0, &oracle, &inst).unwrap() {
            Separation::Cut(c) => assert_eq!(c.source, CutSource::Nonnegativity(0)),
            other => panic!("{other:?}"),
        }
        let p = DualPoint(vec![0.0, 0.0, 0.0]);
        match separation(&p, 10.0, &variant, 1.0, &oracle, &inst).unwrap() {
            Separation::Cut(c) => {
                assert_eq!(c.source, CutSource::Set(Selection::set([0, 1])));
                assert!(c.margin(&p.0) > 0.0);
            }
            other => panic!("{other:?}"),
        }
        let p = DualPoint(vec![0.0, 0.0, 5.0]);
        assert!(matches!(
            separation(&p, 100.0, &variant, 1.0, &oracle, &inst).unwrap(),
            Separation::Inside { .. }
        ));
        match separation(&p, 1.0, &variant, 1.0, &oracle, &inst).unwrap() {
            Separation::Cut(c) => assert_eq!(c.source, CutSource::Objective),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_iterations_is_empty() {
        let inst = i1();
        let oracle = ExactOracle::new(&inst, 100).unwrap();
        let variant = Variant::new(FairnessSpec::Lower { alpha: vec![0.5, 1.0] }, 2);
        let cfg = EllipsoidConfig {
            max_iter: Some(0),
            ..EllipsoidConfig::default()
        };
        let run = ellipsoid_feasible(10.0, &variant, 1.0, &oracle, &inst, &cfg).unwrap();
        assert_eq!(run.outcome, FeasibilityOutcome::Empty);
        assert!(run.violated_sets.is_empty());
    }

    #[test]
    fn generous_level_is_marked() {
        let inst = i1();
        let oracle = ExactOracle::new(&inst, 100).unwrap();
        let variant = Variant::new(FairnessSpec::Lower { alpha: vec![0.5, 1.0] }, 2);
        let cfg = EllipsoidConfig {
            radius: 50.0,
            ..EllipsoidConfig::default()
        };
        let run = ellipsoid_feasible(6.0, &variant, 1.0, &oracle, &inst, &cfg).unwrap();
        assert!(run.is_marked());
        let run = ellipsoid_feasible(-1.0, &variant, 1.0, &oracle, &inst, &cfg).unwrap();
        assert!(!run.is_marked());
        assert!(!run.violated_sets.is_empty());
    }
}
