//! Randomized set selection under group-fairness constraints.
//!
//! Given items, a global utility `f`, group utilities `g_t` and a feasible family, the
//! crate computes a distribution over feasible selections that maximizes `E[f]` while
//! meeting fairness requirements on `E[g_t]` (lower bounds, box bounds, or pairwise
//! parity). The exponentially large LP is solved through its dual with the ellipsoid
//! method, using a FairMax oracle as separation routine; the violated sets it
//! encounters become the support of a small restricted LP.
//!
//! Modules, bottom-up:
//! - [`model`]: instances, utility catalog, feasible families, enumeration.
//! - [`oracle`]: FairMax subroutines with their `(ρ, μ)` guarantees.
//! - [`lp`]: dense two-phase simplex and restricted primal builders.
//! - [`ellipsoid`]: separation and central-cut ellipsoid feasibility runs.
//! - [`solver`]: binary search over `L`, `F′` collection, reporting.
//! - [`verify`]: brute-force baselines, guarantee checks and sampling.
//! - [`generate`]: seeded random instance generators.
//! - [`cli`]: file formats and command entry points.

pub mod cli;
pub mod ellipsoid;
pub mod generate;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod verify;

pub use model::{FairnessSpec, FeasibleFamily, GroupStructure, Instance, Selection, SolutionDistribution, UtilitySpec};
pub use oracle::{FairMax, OracleGuarantee, OracleKind, WeightedQuery};
pub use solver::{solve, SolveConfig, SolveError, SolveReport};
