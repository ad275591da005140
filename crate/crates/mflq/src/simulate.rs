//! Seeded Monte Carlo simulation of the closed-loop system, plus the
//! interacting-particle demonstrator.
//!
//! Two distinct objects live here and must not be confused:
//!
//! * [`simulate`] runs the *mean-field* closed loop: the expectations
//!   `Ex_k`, `Eu_k` appearing in the dynamics and the control law are the
//!   deterministically propagated ones — the control is a function of the
//!   true mean, never of a batch average. Sample paths are then i.i.d. and
//!   the empirical cost estimates the exact cost unbiasedly.
//! * [`simulate_particles`] runs the *pre-limit* system of `L` interacting
//!   particles, in which every occurrence of `Ex` (and, by our documented
//!   choice, `Eu`) is replaced by the empirical mean over the population.
//!   Its whole point is to measure how fast the empirical mean approaches
//!   the deterministic mean path as `L` grows.
//!
//! # Reproducibility
//!
//! Each path (or particle) draws from its own ChaCha stream: the generator
//! is seeded with the run seed and the stream index is the path index, so
//! path `j` produces identical draws no matter how work is sharded. Draw
//! order within a stream is the initial state first, then one noise variate
//! per stage. Reductions over paths run in path order with compensated
//! summation. Together this makes every result bitwise independent of the
//! rayon thread count.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::iter::{IntoParallelIterator, ParallelIterator};
use thiserror::Error;

use crate::linalg::{self, KahanSum};
use crate::problem::{FeedbackPolicy, InitialCondition, ProblemSpec};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("n_paths must be at least 1")]
    NoPaths,
    #[error("particle count must be at least 1")]
    NoParticles,
    #[error("replications must be at least 1")]
    NoReplications,
    #[error("no particle counts supplied")]
    NoCounts,
}

/// The two built-in noise laws; both have mean 0 and variance 1, which is
/// all the optimal solution depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseModel {
    /// `w = ±1` equiprobable. Matches the scenario-tree oracle exactly.
    Rademacher,
    /// `w ~ N(0, 1)`.
    StandardNormal,
}

impl NoiseModel {
    fn draw<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseModel::StandardNormal => rng.sample(StandardNormal),
        }
    }
}

/// Initial-state sampling, prepared once per run (the Gaussian square root
/// must not be refactored per path).
enum InitialSampler {
    Fixed(DVector<f64>),
    Gaussian {
        mean: DVector<f64>,
        factor: DMatrix<f64>,
    },
    Atoms(Vec<(DVector<f64>, f64)>),
}

impl InitialSampler {
    fn prepare(init: &InitialCondition) -> Self {
        match init {
            InitialCondition::Deterministic(v) => Self::Fixed(v.clone()),
            InitialCondition::Gaussian { mean, cov } => {
                let eig = SymmetricEigen::new(cov.clone());
                // Negative eigenvalues can only be rounding noise on a PSD
                // input; clamp instead of propagating NaN.
                let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
                Self::Gaussian {
                    mean: mean.clone(),
                    factor,
                }
            }
            InitialCondition::FiniteSupport(atoms) => Self::Atoms(atoms.clone()),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            Self::Fixed(v) => v.clone(),
            Self::Gaussian { mean, factor } => {
                let z = DVector::from_fn(mean.len(), |_, _| rng.sample(StandardNormal));
                mean + factor * z
            }
            Self::Atoms(atoms) => {
                let t: f64 = rng.random();
                let mut cumulative = 0.0;
                for (value, prob) in atoms {
                    cumulative += prob;
                    if t < cumulative {
                        return value.clone();
                    }
                }
                atoms.last().expect("atoms are nonempty").0.clone()
            }
        }
    }
}

/// Deterministic mean path and mean controls: `Eu = M Ex`,
/// `Ex+ = (A+Ab) Ex + (B+Bb) Eu`.
fn mean_path(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    init: &InitialCondition,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let horizon = spec.horizon();
    let mut means = Vec::with_capacity(horizon + 1);
    let mut control_means = Vec::with_capacity(horizon);
    means.push(init.mean());
    for k in 0..horizon {
        let mu = &means[k];
        let mu_u = &policy.mean_gains[k] * mu;
        let next = (spec.a(k) + spec.a_bar(k)) * mu + (spec.b(k) + spec.b_bar(k)) * &mu_u;
        control_means.push(mu_u);
        means.push(next);
    }
    (means, control_means)
}

/// Monte Carlo estimate of the closed-loop cost and state means.
#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub cost_mean: f64,
    /// Sample standard deviation of the per-path cost over sqrt(n_paths).
    pub cost_stderr: f64,
    pub n_paths: usize,
    /// Per-stage empirical means of the state.
    pub state_means: Vec<DVector<f64>>,
    /// Per-stage, per-coordinate standard errors of those means.
    pub state_stderr: Vec<DVector<f64>>,
    pub seed: u64,
}

/// Simulate `n_paths` independent closed-loop sample paths.
///
/// The mean path is computed deterministically up front; every path uses it
/// for the `Ex`/`Eu` occurrences in both the dynamics and the cost, so the
/// per-path cost is an unbiased sample of the exact cost functional.
///
/// Panics if policy or initial-condition dimensions do not fit the problem.
pub fn simulate(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    init: &InitialCondition,
    noise: NoiseModel,
    n_paths: usize,
    seed: u64,
) -> Result<SimulationResult, SimulationError> {
    if n_paths == 0 {
        return Err(SimulationError::NoPaths);
    }
    policy
        .check_dims(spec)
        .expect("policy dimensions must match the problem");
    init.check(spec.n())
        .expect("initial condition must match the problem");

    let (n, horizon) = (spec.n(), spec.horizon());
    let (means, control_means) = mean_path(spec, policy, init);
    let sampler = InitialSampler::prepare(init);

    // Stage costs that do not depend on the path: Ex'Qb Ex + Eu'Rb Eu, and
    // the terminal Ex'Gb Ex.
    let mut fixed_cost = KahanSum::new();
    for k in 0..horizon {
        fixed_cost.add(linalg::quadratic_form(spec.q_bar(k), &means[k]));
        fixed_cost.add(linalg::quadratic_form(spec.r_bar(k), &control_means[k]));
    }
    fixed_cost.add(linalg::quadratic_form(spec.g_bar(), &means[horizon]));
    let fixed_cost = fixed_cost.value();

    struct PathOut {
        cost: f64,
        states: Vec<f64>,
    }

    let paths: Vec<PathOut> = (0..n_paths)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let mut x = sampler.draw(&mut rng);
            let mut states = Vec::with_capacity((horizon + 1) * n);
            let mut cost = fixed_cost;
            for k in 0..horizon {
                states.extend(x.iter());
                let u = &control_means[k] + &policy.deviation_gains[k] * (&x - &means[k]);
                cost += linalg::quadratic_form(spec.q(k), &x);
                cost += linalg::quadratic_form(spec.r(k), &u);
                let w = noise.draw(&mut rng);
                let drift = spec.a(k) * &x
                    + spec.a_bar(k) * &means[k]
                    + spec.b(k) * &u
                    + spec.b_bar(k) * &control_means[k];
                let diffusion = spec.c(k) * &x
                    + spec.c_bar(k) * &means[k]
                    + spec.d(k) * &u
                    + spec.d_bar(k) * &control_means[k];
                x = drift + diffusion * w;
            }
            states.extend(x.iter());
            cost += linalg::quadratic_form(spec.g(), &x);
            PathOut { cost, states }
        })
        .collect();

    // Path-ordered compensated reductions keep the result independent of the
    // parallel schedule.
    let mut cost_sum = KahanSum::new();
    for p in &paths {
        cost_sum.add(p.cost);
    }
    let cost_mean = cost_sum.value() / n_paths as f64;
    let cost_stderr = if n_paths > 1 {
        let mut sq = KahanSum::new();
        for p in &paths {
            sq.add((p.cost - cost_mean).powi(2));
        }
        (sq.value() / (n_paths - 1) as f64).sqrt() / (n_paths as f64).sqrt()
    } else {
        0.0
    };

    let mut state_means = Vec::with_capacity(horizon + 1);
    let mut state_stderr = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let mut mean = DVector::zeros(n);
        for i in 0..n {
            let mut acc = KahanSum::new();
            for p in &paths {
                acc.add(p.states[k * n + i]);
            }
            mean[i] = acc.value() / n_paths as f64;
        }
        let mut stderr = DVector::zeros(n);
        if n_paths > 1 {
            for i in 0..n {
                let mut sq = KahanSum::new();
                for p in &paths {
                    sq.add((p.states[k * n + i] - mean[i]).powi(2));
                }
                stderr[i] = (sq.value() / (n_paths - 1) as f64).sqrt() / (n_paths as f64).sqrt();
            }
        }
        state_means.push(mean);
        state_stderr.push(stderr);
    }

    Ok(SimulationResult {
        cost_mean,
        cost_stderr,
        n_paths,
        state_means,
        state_stderr,
        seed,
    })
}

/// One interacting-particle run.
#[derive(Clone, Debug)]
pub struct ParticleRun {
    pub particle_count: usize,
    /// Empirical population means per stage.
    pub empirical_means: Vec<DVector<f64>>,
    /// The deterministic mean path the population should track.
    pub deterministic_means: Vec<DVector<f64>>,
    /// `max` over stages of the Euclidean gap between the two.
    pub max_deviation: f64,
    pub seed: u64,
}

/// Simulate `particles` interacting particles: the empirical mean replaces
/// `Ex` in dynamics and control, and the empirical mean of the applied
/// controls replaces `Eu`. Each particle has its own noise stream; particle
/// `i`'s draws are independent of the population size.
pub fn simulate_particles(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    init: &InitialCondition,
    noise: NoiseModel,
    particles: usize,
    seed: u64,
) -> Result<ParticleRun, SimulationError> {
    if particles == 0 {
        return Err(SimulationError::NoParticles);
    }
    policy
        .check_dims(spec)
        .expect("policy dimensions must match the problem");
    init.check(spec.n())
        .expect("initial condition must match the problem");

    let (n, horizon) = (spec.n(), spec.horizon());
    let (deterministic_means, _) = mean_path(spec, policy, init);
    let sampler = InitialSampler::prepare(init);
    let scale = 1.0 / particles as f64;

    let mut rngs: Vec<ChaCha8Rng> = (0..particles)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect();
    let mut states: Vec<DVector<f64>> = rngs.iter_mut().map(|rng| sampler.draw(rng)).collect();

    let empirical = |states: &[DVector<f64>]| {
        let mut mean = DVector::zeros(n);
        for x in states {
            mean += x;
        }
        mean * scale
    };

    let mut empirical_means = Vec::with_capacity(horizon + 1);
    let mut max_deviation = 0.0f64;
    for (k, det_mean) in deterministic_means.iter().enumerate() {
        let x_hat = empirical(&states);
        max_deviation = max_deviation.max((&x_hat - det_mean).norm());
        empirical_means.push(x_hat.clone());
        if k == horizon {
            break;
        }

        let mean_term = &policy.mean_gains[k] * &x_hat;
        let controls: Vec<DVector<f64>> = states
            .iter()
            .map(|x| &mean_term + &policy.deviation_gains[k] * (x - &x_hat))
            .collect();
        let mut u_hat = DVector::zeros(spec.m());
        for u in &controls {
            u_hat += u;
        }
        u_hat *= scale;

        for (i, x) in states.iter_mut().enumerate() {
            let w = noise.draw(&mut rngs[i]);
            let drift = spec.a(k) * &*x
                + spec.a_bar(k) * &x_hat
                + spec.b(k) * &controls[i]
                + spec.b_bar(k) * &u_hat;
            let diffusion = spec.c(k) * &*x
                + spec.c_bar(k) * &x_hat
                + spec.d(k) * &controls[i]
                + spec.d_bar(k) * &u_hat;
            *x = drift + diffusion * w;
        }
    }

    Ok(ParticleRun {
        particle_count: particles,
        empirical_means,
        deterministic_means,
        max_deviation,
        seed,
    })
}

/// Median deviations of the particle system across population sizes.
#[derive(Clone, Debug)]
pub struct DeviationStudy {
    pub counts: Vec<usize>,
    /// Median over replications of [`ParticleRun::max_deviation`], one entry
    /// per count.
    pub median_deviations: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
}

/// Run `replications` particle simulations per count (replication `r` uses
/// seed `seed + r`, so counts share noise — common random numbers) and
/// report the median deviation per count.
pub fn particle_deviation_study(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    init: &InitialCondition,
    noise: NoiseModel,
    counts: &[usize],
    replications: usize,
    seed: u64,
) -> Result<DeviationStudy, SimulationError> {
    if counts.is_empty() {
        return Err(SimulationError::NoCounts);
    }
    if replications == 0 {
        return Err(SimulationError::NoReplications);
    }
    if counts.contains(&0) {
        return Err(SimulationError::NoParticles);
    }

    let jobs: Vec<(usize, u64)> = counts
        .iter()
        .flat_map(|&count| (0..replications).map(move |r| (count, seed.wrapping_add(r as u64))))
        .collect();
    let deviations: Vec<f64> = jobs
        .into_par_iter()
        .map(|(count, run_seed)| {
            simulate_particles(spec, policy, init, noise, count, run_seed)
                .expect("count checked nonzero")
                .max_deviation
        })
        .collect();

    let median_deviations = deviations
        .chunks(replications)
        .map(|chunk| {
            let mut sorted = chunk.to_vec();
            sorted.sort_unstable_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            }
        })
        .collect();

    Ok(DeviationStudy {
        counts: counts.to_vec(),
        median_deviations,
        replications,
        seed,
    })
}
