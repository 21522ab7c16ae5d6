//! Scalable constrained Bayesian optimization.
//!
//! Minimizes a black-box objective under black-box inequality constraints
//! (`cᵢ(x) ≤ 0`) by combining trust-region local search, Gaussian process
//! surrogates fitted to transformed observations, and constrained Thompson
//! sampling for batch selection. Constrained expected improvement and random
//! search ship as baselines, together with closed-form benchmark problems,
//! an external-evaluator subprocess protocol, and a replicated experiment
//! harness with machine-readable outputs.
//!
//! See the `book/` directory for a guided tour, and the `scbo-cli` crate for
//! the command-line front end.

pub mod acquisition;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod observations;
pub mod opt;
pub mod optimizer;
pub mod problems;
pub mod sobol;
pub mod special;
pub mod transforms;
pub mod trust_region;
