//! Problem instances, initial conditions, feedback policies, and the JSON
//! document format.
//!
//! A problem instance fixes the dimensions `(n, m)`, the horizon `N`, the
//! per-stage dynamics matrices `A, Ab, B, Bb, C, Cb, D, Db` (the `b` suffix
//! marks the coefficient that multiplies the *expectation* of the state or
//! control), the per-stage cost weights `Q, Qb, R, Rb`, and the terminal
//! weights `G, Gb`. Solvability requires the standard condition
//!
//! ```text
//! Q[k] >= 0,  Q[k]+Qb[k] >= 0,  R[k] > 0,  R[k]+Rb[k] > 0,  G >= 0,  G+Gb >= 0,
//! ```
//!
//! which [`validate`] checks eigenvalue by eigenvalue. Note that only the
//! *sums* are constrained alongside the unbarred weights: `Qb`, `Rb`, `Gb` on
//! their own may be indefinite.
//!
//! Weight matrices are symmetrized on ingest by averaging with the transpose;
//! this forgives text-format rounding but warns (see
//! [`ProblemSpec::ingest_warnings`]) when the asymmetry exceeds what rounding
//! could plausibly produce.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Asymmetry beyond this bound is reported as an ingest warning; below it,
/// silent symmetrization is assumed to be repairing serialization rounding.
pub const SYMMETRY_WARN_TOL: f64 = 1e-9;

/// A matrix counts as positive semidefinite when its smallest eigenvalue is
/// above this (slightly negative) floor.
pub const PSD_MIN_EIG: f64 = -1e-10;

/// A matrix counts as positive definite when its smallest eigenvalue is above
/// this (strictly positive) floor.
pub const PD_MIN_EIG: f64 = 1e-12;

/// Probabilities of a finite-support initial condition must sum to 1 within
/// this tolerance.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("problem document parse error: {0}")]
    Parse(String),
    #[error("dimensions must be positive (n={n}, m={m}, N={horizon})")]
    EmptyDimension { n: usize, m: usize, horizon: usize },
    #[error("{field} is missing stage {stage} (found {got} entries for horizon {expected})")]
    MissingStage {
        field: &'static str,
        stage: usize,
        got: usize,
        expected: usize,
    },
    #[error("{field} has {got} entries but the horizon is {expected}")]
    ExtraStages {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{name} is {got_rows}x{got_cols}, expected {want_rows}x{want_cols}")]
    Dimension {
        /// Stage-qualified field name, e.g. `B_1` or `G_N`.
        name: String,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("matrix rows must all have the same length (field {field})")]
    RaggedRows { field: String },
    #[error("initial-condition vector has dimension {got}, expected {expected}")]
    InitialDimension { got: usize, expected: usize },
    #[error("initial-condition probabilities sum to {sum}, expected 1 within {PROBABILITY_TOL:e}")]
    ProbabilitySum { sum: f64 },
    #[error("initial-condition atom probability {prob} is negative")]
    NegativeProbability { prob: f64 },
    #[error("finite-support initial condition has no atoms")]
    EmptySupport,
    #[error(
        "initial-condition covariance is not positive semidefinite (min eigenvalue {min_eig:e})"
    )]
    CovarianceNotPsd { min_eig: f64 },
    #[error("policy gain sequences have lengths {dev} and {mean}; they must match")]
    PolicyLength { dev: usize, mean: usize },
    #[error(
        "policy gain at stage {stage} is {got_rows}x{got_cols}, expected {want_rows}x{want_cols}"
    )]
    PolicyDimension {
        stage: usize,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
}

// ---------------------------------------------------------------------------
// Problem specification
// ---------------------------------------------------------------------------

/// Raw ingredients for [`ProblemSpec::new`]: all sequences must have length
/// `horizon`, dynamics matrices are n×n (state factors) or n×m (control
/// factors), weights n×n / m×m, terminal weights n×n.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub a: Vec<DMatrix<f64>>,
    pub a_bar: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub b_bar: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub c_bar: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
    pub d_bar: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub q_bar: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub r_bar: Vec<DMatrix<f64>>,
    pub g: DMatrix<f64>,
    pub g_bar: DMatrix<f64>,
}

/// A validated, immutable mean-field LQ problem instance.
///
/// Construction checks every dimension and symmetrizes the weight matrices;
/// after that the accessors hand out stage-indexed references and the object
/// is safe to share freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    n: usize,
    m: usize,
    horizon: usize,
    a: Vec<DMatrix<f64>>,
    a_bar: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    b_bar: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    c_bar: Vec<DMatrix<f64>>,
    d: Vec<DMatrix<f64>>,
    d_bar: Vec<DMatrix<f64>>,
    q: Vec<DMatrix<f64>>,
    q_bar: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
    r_bar: Vec<DMatrix<f64>>,
    g: DMatrix<f64>,
    g_bar: DMatrix<f64>,
    ingest_warnings: Vec<String>,
}

fn check_sequence(
    field: &'static str,
    seq: &[DMatrix<f64>],
    horizon: usize,
    want_rows: usize,
    want_cols: usize,
) -> Result<(), ProblemError> {
    if seq.len() < horizon {
        return Err(ProblemError::MissingStage {
            field,
            stage: seq.len(),
            got: seq.len(),
            expected: horizon,
        });
    }
    if seq.len() > horizon {
        return Err(ProblemError::ExtraStages {
            field,
            got: seq.len(),
            expected: horizon,
        });
    }
    for (k, mat) in seq.iter().enumerate() {
        if mat.nrows() != want_rows || mat.ncols() != want_cols {
            return Err(ProblemError::Dimension {
                name: format!("{field}_{k}"),
                got_rows: mat.nrows(),
                got_cols: mat.ncols(),
                want_rows,
                want_cols,
            });
        }
    }
    Ok(())
}

/// Symmetrize every matrix of a weight sequence, recording a warning when the
/// asymmetry was larger than serialization rounding should produce.
fn symmetrize_weights(field: &str, seq: &mut [DMatrix<f64>], warnings: &mut Vec<String>) {
    for (k, mat) in seq.iter_mut().enumerate() {
        let skew = linalg::asymmetry(mat);
        if skew > SYMMETRY_WARN_TOL {
            warnings.push(format!(
                "{field}_{k} asymmetry {skew:.3e} exceeds {SYMMETRY_WARN_TOL:e}; symmetrized"
            ));
        }
        linalg::symmetrize(mat);
    }
}

impl ProblemSpec {
    pub fn new(mut data: ProblemData) -> Result<Self, ProblemError> {
        let (n, m, horizon) = (data.n, data.m, data.horizon);
        if n == 0 || m == 0 || horizon == 0 {
            return Err(ProblemError::EmptyDimension { n, m, horizon });
        }
        check_sequence("A", &data.a, horizon, n, n)?;
        check_sequence("Abar", &data.a_bar, horizon, n, n)?;
        check_sequence("B", &data.b, horizon, n, m)?;
        check_sequence("Bbar", &data.b_bar, horizon, n, m)?;
        check_sequence("C", &data.c, horizon, n, n)?;
        check_sequence("Cbar", &data.c_bar, horizon, n, n)?;
        check_sequence("D", &data.d, horizon, n, m)?;
        check_sequence("Dbar", &data.d_bar, horizon, n, m)?;
        check_sequence("Q", &data.q, horizon, n, n)?;
        check_sequence("Qbar", &data.q_bar, horizon, n, n)?;
        check_sequence("R", &data.r, horizon, m, m)?;
        check_sequence("Rbar", &data.r_bar, horizon, m, m)?;
        for (name, mat) in [("G_N", &data.g), ("Gbar_N", &data.g_bar)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(ProblemError::Dimension {
                    name: name.to_string(),
                    got_rows: mat.nrows(),
                    got_cols: mat.ncols(),
                    want_rows: n,
                    want_cols: n,
                });
            }
        }

        let mut warnings = Vec::new();
        symmetrize_weights("Q", &mut data.q, &mut warnings);
        symmetrize_weights("Qbar", &mut data.q_bar, &mut warnings);
        symmetrize_weights("R", &mut data.r, &mut warnings);
        symmetrize_weights("Rbar", &mut data.r_bar, &mut warnings);
        let mut terminal = [data.g, data.g_bar];
        for (name, mat) in ["G_N", "Gbar_N"].iter().zip(terminal.iter_mut()) {
            let skew = linalg::asymmetry(mat);
            if skew > SYMMETRY_WARN_TOL {
                warnings.push(format!(
                    "{name} asymmetry {skew:.3e} exceeds {SYMMETRY_WARN_TOL:e}; symmetrized"
                ));
            }
            linalg::symmetrize(mat);
        }
        let [g, g_bar] = terminal;

        Ok(Self {
            n,
            m,
            horizon,
            a: data.a,
            a_bar: data.a_bar,
            b: data.b,
            b_bar: data.b_bar,
            c: data.c,
            c_bar: data.c_bar,
            d: data.d,
            d_bar: data.d_bar,
            q: data.q,
            q_bar: data.q_bar,
            r: data.r,
            r_bar: data.r_bar,
            g,
            g_bar,
            ingest_warnings: warnings,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of stages `N`; states are indexed `0..=N`, controls `0..N`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn a(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k]
    }

    pub fn a_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.a_bar[k]
    }

    pub fn b(&self, k: usize) -> &DMatrix<f64> {
        &self.b[k]
    }

    pub fn b_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.b_bar[k]
    }

    pub fn c(&self, k: usize) -> &DMatrix<f64> {
        &self.c[k]
    }

    pub fn c_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.c_bar[k]
    }

    pub fn d(&self, k: usize) -> &DMatrix<f64> {
        &self.d[k]
    }

    pub fn d_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.d_bar[k]
    }

    pub fn q(&self, k: usize) -> &DMatrix<f64> {
        &self.q[k]
    }

    pub fn q_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.q_bar[k]
    }

    pub fn r(&self, k: usize) -> &DMatrix<f64> {
        &self.r[k]
    }

    pub fn r_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.r_bar[k]
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn g_bar(&self) -> &DMatrix<f64> {
        &self.g_bar
    }

    /// Warnings collected while symmetrizing weights on construction.
    pub fn ingest_warnings(&self) -> &[String] {
        &self.ingest_warnings
    }
}

// ---------------------------------------------------------------------------
// Initial conditions
// ---------------------------------------------------------------------------

/// Distribution of the initial state.
///
/// Every variant exposes its mean and raw second moment, which is all the
/// solver and the exact cost evaluator ever need; sampling (for simulation)
/// additionally uses the full distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Deterministic(DVector<f64>),
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
    FiniteSupport(Vec<(DVector<f64>, f64)>),
}

impl InitialCondition {
    pub fn dim(&self) -> usize {
        match self {
            Self::Deterministic(v) => v.len(),
            Self::Gaussian { mean, .. } => mean.len(),
            Self::FiniteSupport(atoms) => atoms.first().map_or(0, |(v, _)| v.len()),
        }
    }

    /// E[zeta].
    pub fn mean(&self) -> DVector<f64> {
        match self {
            Self::Deterministic(v) => v.clone(),
            Self::Gaussian { mean, .. } => mean.clone(),
            Self::FiniteSupport(atoms) => {
                let mut acc = DVector::zeros(self.dim());
                for (v, p) in atoms {
                    acc += v * *p;
                }
                acc
            }
        }
    }

    /// E[zeta zeta'].
    pub fn second_moment(&self) -> DMatrix<f64> {
        match self {
            Self::Deterministic(v) => v * v.transpose(),
            Self::Gaussian { mean, cov } => cov + mean * mean.transpose(),
            Self::FiniteSupport(atoms) => {
                let mut acc = DMatrix::zeros(self.dim(), self.dim());
                for (v, p) in atoms {
                    acc += v * v.transpose() * *p;
                }
                acc
            }
        }
    }

    /// Check the distribution against the state dimension: vector lengths,
    /// probability normalization, covariance PSD.
    pub fn check(&self, n: usize) -> Result<(), ProblemError> {
        match self {
            Self::Deterministic(v) => {
                if v.len() != n {
                    return Err(ProblemError::InitialDimension {
                        got: v.len(),
                        expected: n,
                    });
                }
            }
            Self::Gaussian { mean, cov } => {
                if mean.len() != n {
                    return Err(ProblemError::InitialDimension {
                        got: mean.len(),
                        expected: n,
                    });
                }
                if cov.nrows() != n || cov.ncols() != n {
                    return Err(ProblemError::Dimension {
                        name: "initial.cov".to_string(),
                        got_rows: cov.nrows(),
                        got_cols: cov.ncols(),
                        want_rows: n,
                        want_cols: n,
                    });
                }
                let min_eig = linalg::min_symmetric_eigenvalue(cov);
                if min_eig < PSD_MIN_EIG {
                    return Err(ProblemError::CovarianceNotPsd { min_eig });
                }
            }
            Self::FiniteSupport(atoms) => {
                if atoms.is_empty() {
                    return Err(ProblemError::EmptySupport);
                }
                for (v, p) in atoms {
                    if v.len() != n {
                        return Err(ProblemError::InitialDimension {
                            got: v.len(),
                            expected: n,
                        });
                    }
                    if *p < 0.0 {
                        return Err(ProblemError::NegativeProbability { prob: *p });
                    }
                }
                let sum: f64 = atoms.iter().map(|(_, p)| p).sum();
                if (sum - 1.0).abs() > PROBABILITY_TOL {
                    return Err(ProblemError::ProbabilitySum { sum });
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Feedback policies
// ---------------------------------------------------------------------------

/// A linear feedback law `u[k] = mean_gain[k] * E[x k] + deviation_gain[k] * (x[k] - E[x k])`.
///
/// The split is the natural parameterization for mean-field problems: the
/// mean gain steers the deterministic mean path, the deviation gain damps the
/// fluctuation around it, and at the optimum the two come from separate
/// Riccati recursions.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    pub deviation_gains: Vec<DMatrix<f64>>,
    pub mean_gains: Vec<DMatrix<f64>>,
}

impl FeedbackPolicy {
    pub fn new(
        deviation_gains: Vec<DMatrix<f64>>,
        mean_gains: Vec<DMatrix<f64>>,
    ) -> Result<Self, ProblemError> {
        if deviation_gains.len() != mean_gains.len() {
            return Err(ProblemError::PolicyLength {
                dev: deviation_gains.len(),
                mean: mean_gains.len(),
            });
        }
        Ok(Self {
            deviation_gains,
            mean_gains,
        })
    }

    /// The all-zero policy `u = 0`.
    pub fn zeros(m: usize, n: usize, horizon: usize) -> Self {
        Self {
            deviation_gains: vec![DMatrix::zeros(m, n); horizon],
            mean_gains: vec![DMatrix::zeros(m, n); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.deviation_gains.len()
    }

    /// Verify the gain sequences fit the given problem.
    pub fn check_dims(&self, spec: &ProblemSpec) -> Result<(), ProblemError> {
        if self.deviation_gains.len() != spec.horizon() || self.mean_gains.len() != spec.horizon() {
            return Err(ProblemError::PolicyLength {
                dev: self.deviation_gains.len(),
                mean: self.mean_gains.len(),
            });
        }
        for (k, gain) in self
            .deviation_gains
            .iter()
            .chain(self.mean_gains.iter())
            .enumerate()
        {
            if gain.nrows() != spec.m() || gain.ncols() != spec.n() {
                return Err(ProblemError::PolicyDimension {
                    stage: k % spec.horizon(),
                    got_rows: gain.nrows(),
                    got_cols: gain.ncols(),
                    want_rows: spec.m(),
                    want_cols: spec.n(),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Standard-condition validation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Requirement {
    PositiveSemidefinite,
    PositiveDefinite,
}

/// Outcome of one definiteness test.
#[derive(Clone, Debug, Serialize)]
pub struct WeightCheck {
    /// Stage-qualified weight name, e.g. `R_0` or `Q_2+Qbar_2`.
    pub name: String,
    pub requirement: Requirement,
    pub min_eigenvalue: f64,
    pub satisfied: bool,
}

/// Per-weight definiteness report for the standard condition.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<WeightCheck>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn satisfied(&self) -> bool {
        self.violations.is_empty()
    }
}

fn push_check(
    report: &mut ValidationReport,
    name: String,
    requirement: Requirement,
    matrix: &DMatrix<f64>,
) {
    let min_eigenvalue = linalg::min_symmetric_eigenvalue(matrix);
    let satisfied = match requirement {
        Requirement::PositiveSemidefinite => min_eigenvalue >= PSD_MIN_EIG,
        Requirement::PositiveDefinite => min_eigenvalue >= PD_MIN_EIG,
    };
    if !satisfied {
        report.violations.push(match requirement {
            Requirement::PositiveSemidefinite => format!("{name} not PSD"),
            Requirement::PositiveDefinite => format!("{name} not positive definite"),
        });
    }
    report.checks.push(WeightCheck {
        name,
        requirement,
        min_eigenvalue,
        satisfied,
    });
}

/// Check the standard condition: `Q_k, Q_k+Qbar_k, G_N, G_N+Gbar_N` PSD and
/// `R_k, R_k+Rbar_k` PD, reporting the minimum eigenvalue of every weight.
pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    let mut report = ValidationReport {
        checks: Vec::new(),
        violations: Vec::new(),
    };
    for k in 0..spec.horizon() {
        push_check(
            &mut report,
            format!("Q_{k}"),
            Requirement::PositiveSemidefinite,
            spec.q(k),
        );
        push_check(
            &mut report,
            format!("Q_{k}+Qbar_{k}"),
            Requirement::PositiveSemidefinite,
            &(spec.q(k) + spec.q_bar(k)),
        );
        push_check(
            &mut report,
            format!("R_{k}"),
            Requirement::PositiveDefinite,
            spec.r(k),
        );
        push_check(
            &mut report,
            format!("R_{k}+Rbar_{k}"),
            Requirement::PositiveDefinite,
            &(spec.r(k) + spec.r_bar(k)),
        );
    }
    push_check(
        &mut report,
        "G_N".to_string(),
        Requirement::PositiveSemidefinite,
        spec.g(),
    );
    push_check(
        &mut report,
        "G_N+Gbar_N".to_string(),
        Requirement::PositiveSemidefinite,
        &(spec.g() + spec.g_bar()),
    );
    report
}

// ---------------------------------------------------------------------------
// JSON document format
// ---------------------------------------------------------------------------

/// A matrix in the document: list of rows.
type Rows = Vec<Vec<f64>>;

/// A stage-indexed matrix sequence in the document: either one matrix for
/// every stage (broadcast shorthand) or an explicit per-stage list.
#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum MatrixSeqDoc {
    PerStage(Vec<Rows>),
    Broadcast(Rows),
}

#[derive(Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum InitialDoc {
    Deterministic { value: Vec<f64> },
    Gaussian { mean: Vec<f64>, cov: Rows },
    FiniteSupport { atoms: Vec<AtomDoc> },
}

#[derive(Deserialize, Serialize)]
struct AtomDoc {
    value: Vec<f64>,
    prob: f64,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    n: usize,
    m: usize,
    #[serde(rename = "N")]
    horizon: usize,
    #[serde(rename = "A")]
    a: MatrixSeqDoc,
    #[serde(rename = "Abar")]
    a_bar: MatrixSeqDoc,
    #[serde(rename = "B")]
    b: MatrixSeqDoc,
    #[serde(rename = "Bbar")]
    b_bar: MatrixSeqDoc,
    #[serde(rename = "C")]
    c: MatrixSeqDoc,
    #[serde(rename = "Cbar")]
    c_bar: MatrixSeqDoc,
    #[serde(rename = "D")]
    d: MatrixSeqDoc,
    #[serde(rename = "Dbar")]
    d_bar: MatrixSeqDoc,
    #[serde(rename = "Q")]
    q: MatrixSeqDoc,
    #[serde(rename = "Qbar")]
    q_bar: MatrixSeqDoc,
    #[serde(rename = "R")]
    r: MatrixSeqDoc,
    #[serde(rename = "Rbar")]
    r_bar: MatrixSeqDoc,
    #[serde(rename = "G_N")]
    g: Rows,
    #[serde(rename = "Gbar_N")]
    g_bar: Rows,
    initial: InitialDoc,
}

fn rows_to_matrix(field: &str, rows: &Rows) -> Result<DMatrix<f64>, ProblemError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ProblemError::RaggedRows {
            field: field.to_string(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn seq_to_matrices(
    field: &'static str,
    seq: &MatrixSeqDoc,
    horizon: usize,
) -> Result<Vec<DMatrix<f64>>, ProblemError> {
    match seq {
        MatrixSeqDoc::Broadcast(rows) => {
            let mat = rows_to_matrix(field, rows)?;
            Ok(vec![mat; horizon])
        }
        MatrixSeqDoc::PerStage(stages) => stages
            .iter()
            .enumerate()
            .map(|(k, rows)| rows_to_matrix(&format!("{field}_{k}"), rows))
            .collect(),
    }
}

/// Parse a problem document. Matrices are symmetrized on ingest where
/// symmetry is required; the returned spec has passed all structural checks
/// (the standard condition is [`validate`]'s job, not the loader's).
pub fn load_problem(text: &str) -> Result<(ProblemSpec, InitialCondition), ProblemError> {
    let doc: ProblemDoc =
        serde_json::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
    let horizon = doc.horizon;
    let data = ProblemData {
        n: doc.n,
        m: doc.m,
        horizon,
        a: seq_to_matrices("A", &doc.a, horizon)?,
        a_bar: seq_to_matrices("Abar", &doc.a_bar, horizon)?,
        b: seq_to_matrices("B", &doc.b, horizon)?,
        b_bar: seq_to_matrices("Bbar", &doc.b_bar, horizon)?,
        c: seq_to_matrices("C", &doc.c, horizon)?,
        c_bar: seq_to_matrices("Cbar", &doc.c_bar, horizon)?,
        d: seq_to_matrices("D", &doc.d, horizon)?,
        d_bar: seq_to_matrices("Dbar", &doc.d_bar, horizon)?,
        q: seq_to_matrices("Q", &doc.q, horizon)?,
        q_bar: seq_to_matrices("Qbar", &doc.q_bar, horizon)?,
        r: seq_to_matrices("R", &doc.r, horizon)?,
        r_bar: seq_to_matrices("Rbar", &doc.r_bar, horizon)?,
        g: rows_to_matrix("G_N", &doc.g)?,
        g_bar: rows_to_matrix("Gbar_N", &doc.g_bar)?,
    };
    let spec = ProblemSpec::new(data)?;

    let init = match doc.initial {
        InitialDoc::Deterministic { value } => {
            InitialCondition::Deterministic(DVector::from_vec(value))
        }
        InitialDoc::Gaussian { mean, cov } => {
            // The covariance shares the weights' symmetrize-on-ingest
            // treatment; real indefiniteness is still caught by check().
            let mut cov = rows_to_matrix("initial.cov", &cov)?;
            linalg::symmetrize(&mut cov);
            InitialCondition::Gaussian {
                mean: DVector::from_vec(mean),
                cov,
            }
        }
        InitialDoc::FiniteSupport { atoms } => InitialCondition::FiniteSupport(
            atoms
                .into_iter()
                .map(|a| (DVector::from_vec(a.value), a.prob))
                .collect(),
        ),
    };
    init.check(spec.n())?;
    Ok((spec, init))
}

/// Serialize a problem back to the document format in canonical (fully
/// expanded, per-stage) form. `load_problem(save_problem(..))` reproduces the
/// spec exactly.
pub fn save_problem(spec: &ProblemSpec, init: &InitialCondition) -> String {
    let seq = |getter: &dyn Fn(usize) -> Rows| {
        MatrixSeqDoc::PerStage((0..spec.horizon()).map(getter).collect())
    };
    let doc = ProblemDoc {
        n: spec.n(),
        m: spec.m(),
        horizon: spec.horizon(),
        a: seq(&|k| matrix_to_rows(spec.a(k))),
        a_bar: seq(&|k| matrix_to_rows(spec.a_bar(k))),
        b: seq(&|k| matrix_to_rows(spec.b(k))),
        b_bar: seq(&|k| matrix_to_rows(spec.b_bar(k))),
        c: seq(&|k| matrix_to_rows(spec.c(k))),
        c_bar: seq(&|k| matrix_to_rows(spec.c_bar(k))),
        d: seq(&|k| matrix_to_rows(spec.d(k))),
        d_bar: seq(&|k| matrix_to_rows(spec.d_bar(k))),
        q: seq(&|k| matrix_to_rows(spec.q(k))),
        q_bar: seq(&|k| matrix_to_rows(spec.q_bar(k))),
        r: seq(&|k| matrix_to_rows(spec.r(k))),
        r_bar: seq(&|k| matrix_to_rows(spec.r_bar(k))),
        g: matrix_to_rows(spec.g()),
        g_bar: matrix_to_rows(spec.g_bar()),
        initial: match init {
            InitialCondition::Deterministic(v) => InitialDoc::Deterministic {
                value: v.iter().copied().collect(),
            },
            InitialCondition::Gaussian { mean, cov } => InitialDoc::Gaussian {
                mean: mean.iter().copied().collect(),
                cov: matrix_to_rows(cov),
            },
            InitialCondition::FiniteSupport(atoms) => InitialDoc::FiniteSupport {
                atoms: atoms
                    .iter()
                    .map(|(v, p)| AtomDoc {
                        value: v.iter().copied().collect(),
                        prob: *p,
                    })
                    .collect(),
            },
        },
    };
    serde_json::to_string_pretty(&doc).expect("problem documents are always serializable")
}
