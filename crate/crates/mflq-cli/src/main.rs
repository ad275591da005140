//! `mflq` — command-line front end for the mean-field LQ toolkit.
//!
//! Subcommands mirror the library's verification story: `validate` checks
//! the definiteness conditions, `solve` exports the Riccati solution,
//! `simulate` estimates the optimal cost by Monte Carlo, `verify` certifies
//! the optimal value against the exhaustive scenario-tree optimum,
//! `particles` measures the interacting-particle approach to the mean-field
//! limit, and `example` emits the built-in problem document so that
//! pipelines like `mflq example | mflq solve` work without any files.
//!
//! Exit codes: 0 success, 1 validation failure, 2 numerical failure,
//! 3 I/O or parse failure.

use std::fs;
use std::io::{self, Read, Write};
use std::process::exit;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mflq::problem::{InitialCondition, ProblemSpec, ValidationReport};
use mflq::{
    assemble_mixture, builtin, feedback_residual_max, load_problem, optimal_policy, optimal_value,
    particle_deviation_study, propagate, simulate, solve_open_loop, solve_principle, solve_riccati,
    validate, NoiseModel, OracleError, ProblemError, SimulationError, SolverError,
};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

/// Replications behind every `particles` median.
const REPLICATIONS: usize = 50;

/// `verify` passes iff the certified and Riccati values agree this tightly.
const VERIFY_REL_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "mflq",
    version,
    about = "Finite-horizon mean-field LQ control: solve, simulate, certify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the definiteness conditions the solver relies on
    Validate(CommonArgs),
    /// Solve the coupled Riccati recursions; export value matrices and gains
    Solve(SolveArgs),
    /// Estimate the optimal-policy cost over seeded Monte Carlo sample paths
    Simulate(SimulateArgs),
    /// Certify the optimal value against the exhaustive scenario-tree optimum
    Verify(CommonArgs),
    /// Track how interacting-particle means approach the mean-field limit
    Particles(ParticlesArgs),
    /// Emit the built-in example problem document
    Example(OutputArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Output path, or "-" for standard output
    #[arg(long, default_value = "-")]
    output: String,
}

#[derive(Args)]
struct CommonArgs {
    /// Problem document path, or "-" for standard input
    #[arg(long, default_value = "-")]
    input: String,
    /// Output path, or "-" for standard output
    #[arg(long, default_value = "-")]
    output: String,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Replace the document's initial state with a deterministic vector
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        value_name = "x,y,..."
    )]
    zeta: Option<Vec<f64>>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Cross-check with the minimum-principle recursion and report residuals
    #[arg(long)]
    principle: bool,
    /// Export the optimal-policy moment trajectory and the optimal value
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of sample paths
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Base RNG seed (path i draws from stream i of this seed)
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ParticlesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Particle counts to compare, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    particles: Vec<usize>,
    /// Base RNG seed (replication r uses seed + r)
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

// ---------------------------------------------------------------------------
// Failure classification
// ---------------------------------------------------------------------------

enum Failure {
    /// The problem or the request violates a stated precondition.
    Validation(String),
    /// A factorization or certification failed on a valid problem.
    Numerical(String),
    /// The input could not be read or parsed, or the output not written.
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ProblemError> for Failure {
    fn from(err: ProblemError) -> Self {
        Failure::Io(err.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(err: SolverError) -> Self {
        Failure::Numerical(err.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(err: OracleError) -> Self {
        match err {
            OracleError::HorizonTooLarge { .. }
            | OracleError::GaussianInitial
            | OracleError::EmptySupport
            | OracleError::InitialDimension { .. } => Failure::Validation(err.to_string()),
            OracleError::NotPositiveDefinite | OracleError::ResidualTooLarge { .. } => {
                Failure::Numerical(err.to_string())
            }
        }
    }
}

impl From<SimulationError> for Failure {
    fn from(err: SimulationError) -> Self {
        Failure::Validation(err.to_string())
    }
}

// ---------------------------------------------------------------------------
// I/O plumbing
// ---------------------------------------------------------------------------

fn read_input(path: &str) -> Result<String, Failure> {
    if path == "-" {
        let mut text = String::new();
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::Io(format!("standard input: {e}")))?;
        Ok(text)
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Io(format!("{path}: {e}")))
    }
}

fn write_output(path: &str, text: &str) -> Result<(), Failure> {
    let result = if path == "-" {
        io::stdout().write_all(text.as_bytes())
    } else {
        fs::write(path, text)
    };
    result.map_err(|e| Failure::Io(format!("{path}: {e}")))
}

fn load(common: &CommonArgs) -> Result<(ProblemSpec, InitialCondition), Failure> {
    let text = read_input(&common.input)?;
    let (spec, mut init) = load_problem(&text)?;
    if let Some(values) = &common.zeta {
        if values.len() != spec.n() {
            return Err(Failure::Validation(format!(
                "--zeta has {} entries but the problem has {} states",
                values.len(),
                spec.n()
            )));
        }
        init = InitialCondition::Deterministic(DVector::from_vec(values.clone()));
    }
    Ok((spec, init))
}

/// Run the definiteness checks and refuse to continue on a violation.
fn ensure_standard_condition(spec: &ProblemSpec) -> Result<ValidationReport, Failure> {
    let report = validate(spec);
    if report.satisfied() {
        Ok(report)
    } else {
        Err(Failure::Validation(report.violations.join("; ")))
    }
}

fn json_text(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
            .collect(),
    )
}

fn stages_json<'a, I>(stages: I) -> Value
where
    I: IntoIterator<Item = &'a DMatrix<f64>>,
{
    Value::Array(stages.into_iter().map(matrix_json).collect())
}

fn vector_json(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|x| json!(x)).collect())
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run_validate(args: &CommonArgs) -> Result<i32, Failure> {
    let (spec, _) = load(args)?;
    let report = validate(&spec);
    let text = match args.format {
        Format::Json => json_text(&serde_json::to_value(&report).expect("report serializes")),
        Format::Csv => {
            let mut out = String::from("name,requirement,min_eigenvalue,satisfied\n");
            for check in &report.checks {
                out.push_str(&format!(
                    "{},{},{:.10e},{}\n",
                    check.name,
                    match check.requirement {
                        mflq::problem::Requirement::PositiveSemidefinite => {
                            "positive_semidefinite"
                        }
                        mflq::problem::Requirement::PositiveDefinite => "positive_definite",
                    },
                    check.min_eigenvalue,
                    check.satisfied
                ));
            }
            out
        }
    };
    write_output(&args.output, &text)?;
    Ok(if report.satisfied() { 0 } else { 1 })
}

/// One row per matrix row, stages flattened: `table,stage,row,c1..cn`.
fn push_csv_table(out: &mut String, table: &str, stage: usize, m: &DMatrix<f64>, width: usize) {
    for i in 0..m.nrows() {
        out.push_str(&format!("{table},{stage},{}", i + 1));
        for j in 0..width {
            if j < m.ncols() {
                out.push_str(&format!(",{:.4}", m[(i, j)]));
            } else {
                out.push(',');
            }
        }
        out.push('\n');
    }
}

fn run_solve(args: &SolveArgs) -> Result<i32, Failure> {
    let (spec, init) = load(&args.common)?;
    ensure_standard_condition(&spec)?;
    let sol = solve_riccati(&spec)?;
    let horizon = spec.horizon();

    let principle = if args.principle {
        Some(solve_principle(&spec, &sol)?)
    } else {
        None
    };
    let trace = if args.trace {
        let policy = optimal_policy(&sol);
        let traj = propagate(&spec, &policy, &init);
        let value = optimal_value(&sol, &init);
        Some((traj, value))
    } else {
        None
    };

    let text = match args.common.format {
        Format::Json => {
            let mut doc = json!({
                "n": spec.n(),
                "m": spec.m(),
                "N": horizon,
                "S": stages_json((0..=horizon).map(|k| sol.s(k))),
                "T": stages_json((0..=horizon).map(|k| sol.t(k))),
                "W1": stages_json((0..horizon).map(|k| sol.w1(k))),
                "W2": stages_json((0..horizon).map(|k| sol.w2(k))),
                "H1": stages_json((0..horizon).map(|k| sol.h1(k))),
                "H2": stages_json((0..horizon).map(|k| sol.h2(k))),
                "L": stages_json((0..horizon).map(|k| sol.gain_dev(k))),
                "M": stages_json((0..horizon).map(|k| sol.gain_mean(k))),
            });
            if let Some(pr) = &principle {
                let mut dev_s = 0.0f64;
                let mut dev_t = 0.0f64;
                for k in 0..=horizon {
                    dev_s = dev_s.max((pr.p(k) - sol.s(k)).amax());
                    dev_t = dev_t.max((pr.p(k) + pr.p_bar(k) - sol.t(k)).amax());
                }
                doc["principle"] = json!({
                    "P": stages_json((0..=horizon).map(|k| pr.p(k))),
                    "Pbar": stages_json((0..=horizon).map(|k| pr.p_bar(k))),
                    "Lbar": stages_json((0..horizon).map(|k| pr.gain_bar(k))),
                    "max_abs_dev_s": dev_s,
                    "max_abs_dev_t": dev_t,
                });
            }
            if let Some((traj, value)) = &trace {
                doc["trace"] = json!({
                    "mean": Value::Array(traj.mean.iter().map(vector_json).collect()),
                    "second_moment": stages_json(traj.second_moment.iter()),
                    "optimal_value": value,
                });
            }
            json_text(&doc)
        }
        Format::Csv => {
            let n = spec.n();
            let mut out = String::from("table,stage,row");
            for j in 1..=n {
                out.push_str(&format!(",c{j}"));
            }
            out.push('\n');
            for k in 0..=horizon {
                push_csv_table(&mut out, "S", k, sol.s(k), n);
            }
            for k in 0..=horizon {
                push_csv_table(&mut out, "T", k, sol.t(k), n);
            }
            for k in 0..horizon {
                push_csv_table(&mut out, "L", k, sol.gain_dev(k), n);
            }
            for k in 0..horizon {
                push_csv_table(&mut out, "M", k, sol.gain_mean(k), n);
            }
            if let Some(pr) = &principle {
                for k in 0..=horizon {
                    push_csv_table(&mut out, "P", k, pr.p(k), n);
                }
                for k in 0..=horizon {
                    push_csv_table(&mut out, "Pbar", k, pr.p_bar(k), n);
                }
                for k in 0..horizon {
                    push_csv_table(&mut out, "Lbar", k, pr.gain_bar(k), n);
                }
            }
            if let Some((traj, value)) = &trace {
                for (k, mean) in traj.mean.iter().enumerate() {
                    let row = DMatrix::from_row_slice(1, n, mean.as_slice());
                    push_csv_table(&mut out, "mean", k, &row, n);
                }
                for (k, x) in traj.second_moment.iter().enumerate() {
                    let diag = DMatrix::from_row_slice(1, n, x.diagonal().as_slice());
                    push_csv_table(&mut out, "second_moment_diag", k, &diag, n);
                }
                let v = DMatrix::from_element(1, 1, *value);
                push_csv_table(&mut out, "optimal_value", 0, &v, n);
            }
            out
        }
    };
    write_output(&args.common.output, &text)?;
    Ok(0)
}

fn run_simulate(args: &SimulateArgs) -> Result<i32, Failure> {
    let (spec, init) = load(&args.common)?;
    ensure_standard_condition(&spec)?;
    let sol = solve_riccati(&spec)?;
    let policy = optimal_policy(&sol);
    let out = simulate(
        &spec,
        &policy,
        &init,
        NoiseModel::StandardNormal,
        args.paths,
        args.seed,
    )?;

    let text = match args.common.format {
        Format::Json => json_text(&json!({
            "cost_mean": out.cost_mean,
            "cost_stderr": out.cost_stderr,
            "n_paths": out.n_paths,
            "seed": out.seed,
        })),
        Format::Csv => {
            let mut table = String::from("stage,coordinate,mean,stderr,ci3_low,ci3_high\n");
            for (k, (mean, stderr)) in out.state_means.iter().zip(&out.state_stderr).enumerate() {
                for i in 0..spec.n() {
                    let half = 3.0 * stderr[i];
                    table.push_str(&format!(
                        "{k},{},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                        i + 1,
                        mean[i],
                        stderr[i],
                        mean[i] - half,
                        mean[i] + half
                    ));
                }
            }
            table
        }
    };
    write_output(&args.common.output, &text)?;
    Ok(0)
}

fn run_verify(args: &CommonArgs) -> Result<i32, Failure> {
    let (spec, init) = load(args)?;
    ensure_standard_condition(&spec)?;
    let sol = solve_riccati(&spec)?;
    let cost_riccati = optimal_value(&sol, &init);

    let atoms = match &init {
        InitialCondition::Deterministic(zeta) => vec![(zeta.clone(), 1.0)],
        InitialCondition::FiniteSupport(atoms) => atoms.clone(),
        InitialCondition::Gaussian { .. } => {
            return Err(Failure::Validation(
                "the scenario-tree oracle needs a deterministic or finite-support initial \
                 state; pass --zeta or change the document"
                    .into(),
            ))
        }
    };
    let form = assemble_mixture(&spec, &atoms)?;
    let (u_star, cost_oracle) = solve_open_loop(&form)?;
    let policy = optimal_policy(&sol);
    let gain_residual = feedback_residual_max(&spec, &atoms, &u_star, &policy)?;
    let theta1_min_eig = form
        .theta1
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    let abs_diff = (cost_riccati - cost_oracle).abs();
    let rel_diff = if cost_riccati == 0.0 {
        abs_diff
    } else {
        abs_diff / cost_riccati.abs()
    };

    let text = match args.format {
        Format::Json => json_text(&json!({
            "cost_riccati": cost_riccati,
            "cost_oracle": cost_oracle,
            "abs_diff": abs_diff,
            "rel_diff": rel_diff,
            "theta1_min_eig": theta1_min_eig,
            "per_node_gain_residual_max": gain_residual,
        })),
        Format::Csv => {
            let mut out = String::from("metric,value\n");
            for (name, value) in [
                ("cost_riccati", cost_riccati),
                ("cost_oracle", cost_oracle),
                ("abs_diff", abs_diff),
                ("rel_diff", rel_diff),
                ("theta1_min_eig", theta1_min_eig),
                ("per_node_gain_residual_max", gain_residual),
            ] {
                out.push_str(&format!("{name},{value:.10e}\n"));
            }
            out
        }
    };
    write_output(&args.output, &text)?;
    if rel_diff <= VERIFY_REL_TOL {
        Ok(0)
    } else {
        Err(Failure::Numerical(format!(
            "certified optimum {cost_oracle} and Riccati value {cost_riccati} disagree: \
             relative difference {rel_diff:.3e} exceeds {VERIFY_REL_TOL:.0e}"
        )))
    }
}

fn run_particles(args: &ParticlesArgs) -> Result<i32, Failure> {
    let (spec, init) = load(&args.common)?;
    ensure_standard_condition(&spec)?;
    let sol = solve_riccati(&spec)?;
    let policy = optimal_policy(&sol);
    let study = particle_deviation_study(
        &spec,
        &policy,
        &init,
        NoiseModel::StandardNormal,
        &args.particles,
        REPLICATIONS,
        args.seed,
    )?;

    let text = match args.common.format {
        Format::Json => json_text(&json!({
            "counts": study.counts,
            "median_deviations": study.median_deviations,
            "replications": study.replications,
            "seed": study.seed,
        })),
        Format::Csv => {
            let mut out = String::from("particles,median_deviation\n");
            for (count, dev) in study.counts.iter().zip(&study.median_deviations) {
                out.push_str(&format!("{count},{dev:.10e}\n"));
            }
            out
        }
    };
    write_output(&args.common.output, &text)?;
    Ok(0)
}

fn run_example(args: &OutputArgs) -> Result<i32, Failure> {
    write_output(&args.output, builtin::document())?;
    Ok(0)
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match &cli.command {
        Command::Validate(args) => run_validate(args),
        Command::Solve(args) => run_solve(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Verify(args) => run_verify(args),
        Command::Particles(args) => run_particles(args),
        Command::Example(args) => run_example(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version go to stdout with status 0; real usage errors
            // are parse failures.
            let code = if err.use_stderr() { 3 } else { 0 };
            let _ = err.print();
            exit(code);
        }
    };
    match run(cli) {
        Ok(code) => exit(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            exit(failure.code());
        }
    }
}
