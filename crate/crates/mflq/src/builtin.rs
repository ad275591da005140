//! A built-in demonstration instance: 3 states, 2 controls, 4 stages, every
//! mean-field coupling active (all barred matrices nonzero), multiplicative
//! noise on both state and control, and a deterministic initial state
//! `zeta = (1, 1, 1)`.
//!
//! The instance doubles as the fixture for most integration tests and for the
//! `example` CLI subcommand. Its weights satisfy the standard condition with
//! margin (`R = I`, `R + Rb = diag(2.5, 2)`), and the dynamics are stage
//! constant, which the embedded document exploits through the broadcast
//! shorthand (a single matrix in place of a per-stage list).

use crate::problem::{load_problem, InitialCondition, ProblemSpec};

/// The instance as a problem document, exactly as `mflq example` prints it.
pub fn document() -> &'static str {
    DOCUMENT
}

/// The parsed instance.
pub fn problem() -> (ProblemSpec, InitialCondition) {
    load_problem(DOCUMENT).expect("built-in document is well formed")
}

const DOCUMENT: &str = r#"{
  "n": 3,
  "m": 2,
  "N": 4,
  "A": [
    [0.2, 0.4, 0.2],
    [0.0, 0.2, 0.6],
    [0.6, 0.4, 0.2]
  ],
  "Abar": [
    [0.3, 0.4, 0.2],
    [0.0, 0.2, 0.7],
    [0.6, 0.5, 0.2]
  ],
  "B": [
    [0.4, 0.2],
    [0.2, 0.4],
    [0.3, 0.3]
  ],
  "Bbar": [
    [0.5, 0.2],
    [0.2, 0.5],
    [0.2, 0.3]
  ],
  "C": [
    [0.2, 0.4, 0.6],
    [0.4, 0.2, 0.6],
    [0.2, 0.4, 0.2]
  ],
  "Cbar": [
    [0.3, 0.4, 0.6],
    [0.4, 0.3, 0.6],
    [0.2, 0.4, 0.3]
  ],
  "D": [
    [0.2, 0.6],
    [0.6, 0.4],
    [0.3, 0.1]
  ],
  "Dbar": [
    [0.3, 0.5],
    [0.5, 0.4],
    [0.3, 0.3]
  ],
  "Q": [
    [0.0, 0.0, 0.0],
    [0.0, 1.5, 0.0],
    [0.0, 0.0, 1.0]
  ],
  "Qbar": [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0]
  ],
  "R": [
    [1.0, 0.0],
    [0.0, 1.0]
  ],
  "Rbar": [
    [1.5, 0.0],
    [0.0, 1.0]
  ],
  "G_N": [
    [0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0]
  ],
  "Gbar_N": [
    [0.5, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0]
  ],
  "initial": {
    "kind": "deterministic",
    "value": [1.0, 1.0, 1.0]
  }
}
"#;
