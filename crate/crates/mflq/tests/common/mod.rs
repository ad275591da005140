//! Seeded random-instance generators shared by the integration suites.
//!
//! Instances are valid by construction: dynamics entries are uniform with a
//! 1/sqrt(n) scale so closed-loop growth stays O(1) over the horizons used
//! here, and weights are built as F F' (plus a positive shift where the
//! standard condition demands definiteness). The barred weights come from
//! subtracting the unbarred ones from an independently drawn sum, so they
//! are free to be indefinite on their own.

#![allow(dead_code)]

use mflq::problem::{FeedbackPolicy, InitialCondition, ProblemData, ProblemSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| uniform(rng, -bound, bound))
}

fn psd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let f = matrix(rng, dim, dim, 0.7);
    &f * f.transpose()
}

fn pd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let shift = uniform(rng, 0.1, 1.0);
    psd(rng, dim) + DMatrix::identity(dim, dim) * shift
}

pub fn random_dims(
    rng: &mut ChaCha8Rng,
    n_max: usize,
    m_max: usize,
    horizon_max: usize,
) -> (usize, usize, usize) {
    (
        rng.random_range(1..=n_max),
        rng.random_range(1..=m_max),
        rng.random_range(1..=horizon_max),
    )
}

pub fn random_spec(rng: &mut ChaCha8Rng, n: usize, m: usize, horizon: usize) -> ProblemSpec {
    let tau = 0.6 / (n as f64).sqrt();
    let stage = |rng: &mut ChaCha8Rng, rows, cols| {
        (0..horizon)
            .map(|_| matrix(rng, rows, cols, tau))
            .collect::<Vec<_>>()
    };
    let a = stage(rng, n, n);
    let a_bar = stage(rng, n, n);
    let b = stage(rng, n, m);
    let b_bar = stage(rng, n, m);
    let c = stage(rng, n, n);
    let c_bar = stage(rng, n, n);
    let d = stage(rng, n, m);
    let d_bar = stage(rng, n, m);

    let mut q = Vec::with_capacity(horizon);
    let mut q_bar = Vec::with_capacity(horizon);
    let mut r = Vec::with_capacity(horizon);
    let mut r_bar = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let qk = psd(rng, n);
        q_bar.push(psd(rng, n) - &qk);
        q.push(qk);
        let rk = pd(rng, m);
        r_bar.push(pd(rng, m) - &rk);
        r.push(rk);
    }
    let g = psd(rng, n);
    let g_bar = psd(rng, n) - &g;

    ProblemSpec::new(ProblemData {
        n,
        m,
        horizon,
        a,
        a_bar,
        b,
        b_bar,
        c,
        c_bar,
        d,
        d_bar,
        q,
        q_bar,
        r,
        r_bar,
        g,
        g_bar,
    })
    .expect("generated instance is dimensionally valid")
}

pub fn random_zeta(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, -1.0, 1.0))
}

pub fn random_policy(rng: &mut ChaCha8Rng, spec: &ProblemSpec) -> FeedbackPolicy {
    let bound = 0.5 / (spec.n() as f64).sqrt();
    let gains = |rng: &mut ChaCha8Rng| {
        (0..spec.horizon())
            .map(|_| matrix(rng, spec.m(), spec.n(), bound))
            .collect::<Vec<_>>()
    };
    let deviation = gains(rng);
    let mean = gains(rng);
    FeedbackPolicy::new(deviation, mean).expect("gain stacks have equal length")
}

/// Copy of `spec` with every barred matrix set to zero.
pub fn without_mean_field_terms(spec: &ProblemSpec) -> ProblemSpec {
    let (n, m, horizon) = (spec.n(), spec.m(), spec.horizon());
    ProblemSpec::new(ProblemData {
        n,
        m,
        horizon,
        a: (0..horizon).map(|k| spec.a(k).clone()).collect(),
        a_bar: vec![DMatrix::zeros(n, n); horizon],
        b: (0..horizon).map(|k| spec.b(k).clone()).collect(),
        b_bar: vec![DMatrix::zeros(n, m); horizon],
        c: (0..horizon).map(|k| spec.c(k).clone()).collect(),
        c_bar: vec![DMatrix::zeros(n, n); horizon],
        d: (0..horizon).map(|k| spec.d(k).clone()).collect(),
        d_bar: vec![DMatrix::zeros(n, m); horizon],
        q: (0..horizon).map(|k| spec.q(k).clone()).collect(),
        q_bar: vec![DMatrix::zeros(n, n); horizon],
        r: (0..horizon).map(|k| spec.r(k).clone()).collect(),
        r_bar: vec![DMatrix::zeros(m, m); horizon],
        g: spec.g().clone(),
        g_bar: DMatrix::zeros(n, n),
    })
    .expect("zeroing couplings preserves validity")
}

/// Additive perturbation of every gain with joint Frobenius norm exactly
/// `magnitude`.
pub fn perturbed_policy(
    rng: &mut ChaCha8Rng,
    base: &FeedbackPolicy,
    magnitude: f64,
) -> FeedbackPolicy {
    let draw = |rng: &mut ChaCha8Rng, like: &[DMatrix<f64>]| {
        like.iter()
            .map(|g| matrix(rng, g.nrows(), g.ncols(), 1.0))
            .collect::<Vec<_>>()
    };
    let d_dev = draw(rng, &base.deviation_gains);
    let d_mean = draw(rng, &base.mean_gains);
    let norm = d_dev
        .iter()
        .chain(d_mean.iter())
        .map(|m| m.norm_squared())
        .sum::<f64>()
        .sqrt();
    let scale = magnitude / norm;
    FeedbackPolicy {
        deviation_gains: base
            .deviation_gains
            .iter()
            .zip(&d_dev)
            .map(|(g, d)| g + d * scale)
            .collect(),
        mean_gains: base
            .mean_gains
            .iter()
            .zip(&d_mean)
            .map(|(g, d)| g + d * scale)
            .collect(),
    }
}

pub fn deterministic(zeta: DVector<f64>) -> InitialCondition {
    InitialCondition::Deterministic(zeta)
}
