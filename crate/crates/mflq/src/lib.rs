//! Finite-horizon, discrete-time, mean-field stochastic linear-quadratic control.
//!
//! The plant couples each realization of the state with its own expectation:
//!
//! ```text
//! x[k+1] = (A x[k] + Ab E[x k] + B u[k] + Bb E[u k])
//!        + (C x[k] + Cb E[x k] + D u[k] + Db E[u k]) w[k]
//! ```
//!
//! with scalar noise `w[k]` that has zero mean and unit variance given the
//! past, and a cost that likewise weighs both the realization and the mean:
//!
//! ```text
//! J = E[ sum_k  x'Qx + (Ex)'Qb(Ex) + u'Ru + (Eu)'Rb(Eu) ]
//!   + E[ x[N]'G x[N] ] + (Ex[N])'Gb (Ex[N]).
//! ```
//!
//! Under the standard definiteness condition the optimal control is linear
//! feedback split along the mean and the fluctuation around it,
//! `u[k] = M[k] E[x k] + L[k] (x[k] - E[x k])`, with gains produced by a pair
//! of coupled backward Riccati recursions. This crate computes that solution
//! and, just as importantly, provides several independent ways of checking it:
//!
//! - [`problem`] — problem instances, initial conditions, feedback policies,
//!   the standard-condition validator, and the JSON document format.
//! - [`riccati`] — the coupled S/T backward recursion for the optimal gains,
//!   plus the minimum-principle P/Pb recursion used as a cross-check.
//! - [`moments`] — exact cost evaluation of *any* linear policy by forward
//!   propagation of the second-moment pair (E[xx'], Ex(Ex)').
//! - [`simulate`] — seeded Monte Carlo on sample paths and the interacting
//!   particle system whose empirical mean replaces the expectation.
//! - [`oracle`] — brute-force certification: on a binary ±1 noise tree every
//!   expectation is a finite sum, so the optimal cost over all adapted
//!   open-loop controls is computable exactly and must agree with the
//!   Riccati value.
//! - [`builtin`] — the embedded 4-stage, 3-state, 2-input example instance
//!   used by the CLI and the regression tests.

pub mod builtin;
mod linalg;
pub mod moments;
pub mod oracle;
pub mod problem;
pub mod riccati;
pub mod simulate;

pub use moments::{exact_cost, optimal_value, propagate, MomentTrajectory};
pub use oracle::{
    assemble, assemble_mixture, eval_controls_on_tree, eval_policy_mixture, eval_policy_on_tree,
    feedback_residual_max, solve_open_loop, OracleError, QuadraticForm, ScenarioTree,
    MAX_TREE_HORIZON,
};
pub use problem::{
    load_problem, save_problem, validate, FeedbackPolicy, InitialCondition, ProblemError,
    ProblemSpec, ValidationReport,
};
pub use riccati::{
    optimal_policy, solve_principle, solve_riccati, PrincipleSolution, RiccatiSolution, SolverError,
};
pub use simulate::{
    particle_deviation_study, simulate, simulate_particles, DeviationStudy, NoiseModel,
    ParticleRun, SimulationError, SimulationResult,
};
