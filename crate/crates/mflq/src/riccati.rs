//! The two coupled backward Riccati recursions and their cross-check twin.
//!
//! With `S_N = G_N` and `T_N = G_N + Gb_N`, each backward step forms
//!
//! ```text
//! W1 = R + B'S+B + D'S+D                 H1 = B'S+A + D'S+C
//! W2 = R + Rb + (B+Bb)'T+(B+Bb)          H2 = (B+Bb)'T+(A+Ab)
//!        + (D+Db)'S+(D+Db)                    + (D+Db)'S+(C+Cb)
//!
//! S = Q + A'S+A + C'S+C - H1'W1^-1 H1
//! T = Q + Qb + (C+Cb)'S+(C+Cb) + (A+Ab)'T+(A+Ab) - H2'W2^-1 H2
//! ```
//!
//! (`+` subscripts denote stage `k+1`; stage indices elsewhere omitted). The
//! optimal control splits along mean and deviation,
//! `u = M Ex + L (x - Ex)` with `L = -W1^-1 H1` and `M = -W2^-1 H2`.
//!
//! [`solve_principle`] runs the alternative value recursion for the pair
//! `(P, Pb)` — terminal `P_N = G_N`, `Pb_N = Gb_N` — that arises from the
//! maximum-principle route. In exact arithmetic `P = S` and `P + Pb = T`
//! stage by stage; computing both through different formulas and comparing
//! is a strong transcription check, which `verify`-style tests exploit.
//!
//! Every stored `S, T, P, Pb, W1, W2` is symmetrized after its step;
//! inversions go through Cholesky factorizations, never explicit inverses.

use nalgebra::{Cholesky, DMatrix};
use thiserror::Error;

use crate::linalg;
use crate::problem::{FeedbackPolicy, ProblemSpec};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "{block}_{stage} is not positive definite; the weights violate the \
         standard condition or the recursion degenerated"
    )]
    NotPositiveDefinite { block: &'static str, stage: usize },
}

/// Everything the backward pass produces, stage-indexed: value matrices
/// `S, T` for `k in 0..=N`, intermediates `W1, W2, H1, H2` and gains for
/// `k in 0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiSolution {
    s: Vec<DMatrix<f64>>,
    t: Vec<DMatrix<f64>>,
    w1: Vec<DMatrix<f64>>,
    w2: Vec<DMatrix<f64>>,
    h1: Vec<DMatrix<f64>>,
    h2: Vec<DMatrix<f64>>,
    gain_dev: Vec<DMatrix<f64>>,
    gain_mean: Vec<DMatrix<f64>>,
}

impl RiccatiSolution {
    pub fn horizon(&self) -> usize {
        self.gain_dev.len()
    }

    pub fn s(&self, k: usize) -> &DMatrix<f64> {
        &self.s[k]
    }

    pub fn t(&self, k: usize) -> &DMatrix<f64> {
        &self.t[k]
    }

    pub fn w1(&self, k: usize) -> &DMatrix<f64> {
        &self.w1[k]
    }

    pub fn w2(&self, k: usize) -> &DMatrix<f64> {
        &self.w2[k]
    }

    pub fn h1(&self, k: usize) -> &DMatrix<f64> {
        &self.h1[k]
    }

    pub fn h2(&self, k: usize) -> &DMatrix<f64> {
        &self.h2[k]
    }

    /// Gain on the deviation `x - Ex` (the L of `u = M Ex + L (x - Ex)`).
    pub fn gain_dev(&self, k: usize) -> &DMatrix<f64> {
        &self.gain_dev[k]
    }

    /// Gain on the mean `Ex` (the M of `u = M Ex + L (x - Ex)`).
    pub fn gain_mean(&self, k: usize) -> &DMatrix<f64> {
        &self.gain_mean[k]
    }
}

/// The maximum-principle value pair and its mean-shift gain.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipleSolution {
    p: Vec<DMatrix<f64>>,
    p_bar: Vec<DMatrix<f64>>,
    gain_bar: Vec<DMatrix<f64>>,
}

impl PrincipleSolution {
    pub fn horizon(&self) -> usize {
        self.gain_bar.len()
    }

    pub fn p(&self, k: usize) -> &DMatrix<f64> {
        &self.p[k]
    }

    pub fn p_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.p_bar[k]
    }

    /// The mean-shift gain Lbar; the mean gain in (L, M) form is `L + Lbar`.
    pub fn gain_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.gain_bar[k]
    }
}

fn spd_solve(
    block: &'static str,
    stage: usize,
    w: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SolverError> {
    let chol = Cholesky::new(w.clone()).ok_or(SolverError::NotPositiveDefinite { block, stage })?;
    Ok(chol.solve(rhs))
}

/// Run the coupled backward recursions over the full horizon.
pub fn solve_riccati(spec: &ProblemSpec) -> Result<RiccatiSolution, SolverError> {
    let (n, horizon) = (spec.n(), spec.horizon());
    let mut s = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut t = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut w1 = Vec::with_capacity(horizon);
    let mut w2 = Vec::with_capacity(horizon);
    let mut h1 = Vec::with_capacity(horizon);
    let mut h2 = Vec::with_capacity(horizon);
    let mut gain_dev = Vec::with_capacity(horizon);
    let mut gain_mean = Vec::with_capacity(horizon);

    s[horizon] = spec.g().clone();
    t[horizon] = spec.g() + spec.g_bar();

    for k in (0..horizon).rev() {
        let (sp, tp) = (&s[k + 1], &t[k + 1]);
        let b_sum = spec.b(k) + spec.b_bar(k);
        let d_sum = spec.d(k) + spec.d_bar(k);
        let a_sum = spec.a(k) + spec.a_bar(k);
        let c_sum = spec.c(k) + spec.c_bar(k);

        let sp_a = sp * spec.a(k);
        let sp_c = sp * spec.c(k);
        let tp_a_sum = tp * &a_sum;
        let sp_c_sum = sp * &c_sum;

        let mut w1_k =
            spec.r(k) + spec.b(k).tr_mul(&(sp * spec.b(k))) + spec.d(k).tr_mul(&(sp * spec.d(k)));
        linalg::symmetrize(&mut w1_k);
        let mut w2_k =
            spec.r(k) + spec.r_bar(k) + b_sum.tr_mul(&(tp * &b_sum)) + d_sum.tr_mul(&(sp * &d_sum));
        linalg::symmetrize(&mut w2_k);

        let h1_k = spec.b(k).tr_mul(&sp_a) + spec.d(k).tr_mul(&sp_c);
        let h2_k = b_sum.tr_mul(&tp_a_sum) + d_sum.tr_mul(&sp_c_sum);

        let l_k = -spd_solve("W1", k, &w1_k, &h1_k)?;
        let m_k = -spd_solve("W2", k, &w2_k, &h2_k)?;

        // H1' L = -H1' W1^-1 H1, so the Riccati correction reuses the gain.
        let mut s_k =
            spec.q(k) + spec.a(k).tr_mul(&sp_a) + spec.c(k).tr_mul(&sp_c) + h1_k.tr_mul(&l_k);
        linalg::symmetrize(&mut s_k);
        let mut t_k = spec.q(k)
            + spec.q_bar(k)
            + c_sum.tr_mul(&sp_c_sum)
            + a_sum.tr_mul(&tp_a_sum)
            + h2_k.tr_mul(&m_k);
        linalg::symmetrize(&mut t_k);

        s[k] = s_k;
        t[k] = t_k;
        w1.push(w1_k);
        w2.push(w2_k);
        h1.push(h1_k);
        h2.push(h2_k);
        gain_dev.push(l_k);
        gain_mean.push(m_k);
    }

    w1.reverse();
    w2.reverse();
    h1.reverse();
    h2.reverse();
    gain_dev.reverse();
    gain_mean.reverse();

    Ok(RiccatiSolution {
        s,
        t,
        w1,
        w2,
        h1,
        h2,
        gain_dev,
        gain_mean,
    })
}

/// The optimal feedback law `u = M Ex + L (x - Ex)` read off a solution.
pub fn optimal_policy(sol: &RiccatiSolution) -> FeedbackPolicy {
    FeedbackPolicy {
        deviation_gains: sol.gain_dev.clone(),
        mean_gains: sol.gain_mean.clone(),
    }
}

/// Run the maximum-principle value recursion for `(P, Pb)`.
///
/// The W/H intermediates here are rebuilt from `P` and `P + Pb` (not taken
/// from `sol`), so the returned `gain_bar = -W2^-1 H2 + W1^-1 H1` and the
/// value pair exercise an independent arithmetic path; `sol` supplies only
/// the closed-loop gains `L` and `Lbar = M - L` that the recursion is
/// evaluated along.
pub fn solve_principle(
    spec: &ProblemSpec,
    sol: &RiccatiSolution,
) -> Result<PrincipleSolution, SolverError> {
    let (n, horizon) = (spec.n(), spec.horizon());
    let mut p = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut p_bar = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut gain_bar = Vec::with_capacity(horizon);

    p[horizon] = spec.g().clone();
    p_bar[horizon] = spec.g_bar().clone();

    for k in (0..horizon).rev() {
        let pp = &p[k + 1];
        let pt = &p[k + 1] + &p_bar[k + 1];
        let b_sum = spec.b(k) + spec.b_bar(k);
        let d_sum = spec.d(k) + spec.d_bar(k);
        let a_sum = spec.a(k) + spec.a_bar(k);
        let c_sum = spec.c(k) + spec.c_bar(k);

        let mut w1_k =
            spec.r(k) + spec.b(k).tr_mul(&(pp * spec.b(k))) + spec.d(k).tr_mul(&(pp * spec.d(k)));
        linalg::symmetrize(&mut w1_k);
        let mut w2_k = spec.r(k)
            + spec.r_bar(k)
            + b_sum.tr_mul(&(&pt * &b_sum))
            + d_sum.tr_mul(&(pp * &d_sum));
        linalg::symmetrize(&mut w2_k);
        let h1_k = spec.b(k).tr_mul(&(pp * spec.a(k))) + spec.d(k).tr_mul(&(pp * spec.c(k)));
        let h2_k = b_sum.tr_mul(&(&pt * &a_sum)) + d_sum.tr_mul(&(pp * &c_sum));

        let lbar_from_p = -spd_solve("W2", k, &w2_k, &h2_k)? + spd_solve("W1", k, &w1_k, &h1_k)?;

        // Value updates along the closed-loop gains.
        let l = sol.gain_dev(k);
        let lbar = sol.gain_mean(k) - l;
        let l_sum = l + &lbar;

        let a_cl = spec.a(k) + spec.b(k) * l;
        let c_cl = spec.c(k) + spec.d(k) * l;
        let fa = spec.a_bar(k) + spec.b(k) * &lbar + spec.b_bar(k) * &l_sum;
        let fc = spec.c_bar(k) + spec.d(k) * &lbar + spec.d_bar(k) * &l_sum;
        let fm = &a_sum + &b_sum * &l_sum;

        let rl = spec.r(k) * l;
        let rlbar = spec.r(k) * &lbar;
        let mut p_k =
            spec.q(k) + l.tr_mul(&rl) + a_cl.tr_mul(&(pp * &a_cl)) + c_cl.tr_mul(&(pp * &c_cl));
        linalg::symmetrize(&mut p_k);

        let pp_fa = pp * &fa;
        let pp_fc = pp * &fc;
        let mut pbar_k = spec.q_bar(k)
            + l.tr_mul(&rlbar)
            + lbar.tr_mul(&rl)
            + lbar.tr_mul(&rlbar)
            + l_sum.tr_mul(&(spec.r_bar(k) * &l_sum))
            + a_cl.tr_mul(&pp_fa)
            + pp_fa.tr_mul(&a_cl)
            + fa.tr_mul(&pp_fa)
            + c_cl.tr_mul(&pp_fc)
            + pp_fc.tr_mul(&c_cl)
            + fc.tr_mul(&pp_fc)
            + fm.tr_mul(&(&p_bar[k + 1] * &fm));
        linalg::symmetrize(&mut pbar_k);

        p[k] = p_k;
        p_bar[k] = pbar_k;
        gain_bar.push(lbar_from_p);
    }
    gain_bar.reverse();

    Ok(PrincipleSolution { p, p_bar, gain_bar })
}
