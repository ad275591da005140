//! Forward propagation of the second-moment pair and exact cost evaluation.
//!
//! Under a linear feedback law `u = M Ex + L (x - Ex)` the pair
//! `X = E[xx']`, `Xb = Ex (Ex)'` is itself a linear(-quadratic) dynamical
//! system, so the expected cost of *any* such policy is computable exactly —
//! no sampling. Writing `Lb = M - L` and
//!
//! ```text
//! Ga = A + B L     Gab = Ab + B Lb + Bb (L + Lb)
//! Gc = C + D L     Gcb = Cb + D Lb + Db (L + Lb)
//! F  = (A + Ab) + (B + Bb)(L + Lb)
//! ```
//!
//! the closed-loop moments evolve as
//!
//! ```text
//! X+  = Ga X Ga' + Ga Xb Gab' + Gab Xb Ga' + Gab Xb Gab'
//!     + Gc X Gc' + Gc Xb Gcb' + Gcb Xb Gc' + Gcb Xb Gcb'
//! Xb+ = F Xb F',      Ex+ = F Ex
//! ```
//!
//! and the cost accumulates in trace form,
//!
//! ```text
//! J = sum_k  Tr[(Q + L'RL) X] + Tr[Phib Xb]  +  Tr[G X_N] + Tr[Gb Xb_N],
//! Phib = Qb + (L+Lb)' Rb (L+Lb) + L'R Lb + Lb'R L + Lb'R Lb.
//! ```
//!
//! The optimal value needs no propagation at all: completing the square
//! gives `J* = Tr[S_0 Cov(zeta)] + (E zeta)' T_0 (E zeta)`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, KahanSum};
use crate::problem::{FeedbackPolicy, InitialCondition, ProblemSpec};
use crate::riccati::RiccatiSolution;

/// Closed-loop moments, stage-indexed `0..=N`.
#[derive(Clone, Debug)]
pub struct MomentTrajectory {
    /// `X_k = E[x_k x_k']`, symmetric PSD.
    pub second_moment: Vec<DMatrix<f64>>,
    /// `Xb_k = Ex_k (Ex_k)'`, symmetric, rank <= 1.
    pub mean_outer: Vec<DMatrix<f64>>,
    /// `Ex_k`.
    pub mean: Vec<DVector<f64>>,
}

/// Propagate `(X, Xb, Ex)` from stage 0 to N under a feedback policy.
///
/// Panics if the policy or initial condition does not fit the problem's
/// dimensions.
pub fn propagate(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    init: &InitialCondition,
) -> MomentTrajectory {
    policy
        .check_dims(spec)
        .expect("policy dimensions must match the problem");
    init.check(spec.n())
        .expect("initial condition must match the problem");

    let horizon = spec.horizon();
    let mut second_moment = Vec::with_capacity(horizon + 1);
    let mut mean_outer = Vec::with_capacity(horizon + 1);
    let mut mean = Vec::with_capacity(horizon + 1);

    let mut x = init.second_moment();
    linalg::symmetrize(&mut x);
    let m0 = init.mean();
    let mut xb = &m0 * m0.transpose();
    second_moment.push(x.clone());
    mean_outer.push(xb.clone());
    mean.push(m0);

    for k in 0..horizon {
        let l = &policy.deviation_gains[k];
        let lb = &policy.mean_gains[k] - l;
        let l_sum = l + &lb;

        let ga = spec.a(k) + spec.b(k) * l;
        let gab = spec.a_bar(k) + spec.b(k) * &lb + spec.b_bar(k) * &l_sum;
        let gc = spec.c(k) + spec.d(k) * l;
        let gcb = spec.c_bar(k) + spec.d(k) * &lb + spec.d_bar(k) * &l_sum;
        let f = spec.a(k) + spec.a_bar(k) + (spec.b(k) + spec.b_bar(k)) * &l_sum;

        let x_ga = &x * ga.transpose();
        let xb_gab = &xb * gab.transpose();
        let xb_ga = &xb * ga.transpose();
        let x_gc = &x * gc.transpose();
        let xb_gcb = &xb * gcb.transpose();
        let xb_gc = &xb * gc.transpose();

        let mut x_next = &ga * x_ga
            + &ga * &xb_gab
            + &gab * xb_ga
            + &gab * xb_gab
            + &gc * x_gc
            + &gc * &xb_gcb
            + &gcb * xb_gc
            + &gcb * xb_gcb;
        linalg::symmetrize(&mut x_next);

        let mut xb_next = &f * &xb * f.transpose();
        linalg::symmetrize(&mut xb_next);
        let mean_next = &f * mean.last().expect("nonempty by construction");

        // Redundancy check on the rank-1 invariant: the matrix recursion and
        // the mean recursion must tell the same story.
        debug_assert!(
            (&xb_next - &mean_next * mean_next.transpose()).amax()
                <= 1e-9 * xb_next.amax().max(1.0),
            "mean-outer recursion drifted from the mean at stage {k}"
        );

        x = x_next;
        xb = xb_next;
        second_moment.push(x.clone());
        mean_outer.push(xb.clone());
        mean.push(mean_next);
    }

    MomentTrajectory {
        second_moment,
        mean_outer,
        mean,
    }
}

/// Exact expected cost of a feedback policy, via moment propagation and the
/// trace form. Compensated summation keeps stage accumulation exact enough
/// for the tight identity tests this function is used in.
pub fn exact_cost(spec: &ProblemSpec, policy: &FeedbackPolicy, init: &InitialCondition) -> f64 {
    let traj = propagate(spec, policy, init);
    let mut total = KahanSum::new();
    for k in 0..spec.horizon() {
        let l = &policy.deviation_gains[k];
        let lb = &policy.mean_gains[k] - l;
        let l_sum = l + &lb;

        let rl = spec.r(k) * l;
        let rlb = spec.r(k) * &lb;
        let stage_x = spec.q(k) + l.tr_mul(&rl);
        let phib = spec.q_bar(k)
            + l_sum.tr_mul(&(spec.r_bar(k) * &l_sum))
            + l.tr_mul(&rlb)
            + lb.tr_mul(&rl)
            + lb.tr_mul(&rlb);

        total.add(linalg::trace_product(&stage_x, &traj.second_moment[k]));
        total.add(linalg::trace_product(&phib, &traj.mean_outer[k]));
    }
    let horizon = spec.horizon();
    total.add(linalg::trace_product(
        spec.g(),
        &traj.second_moment[horizon],
    ));
    total.add(linalg::trace_product(
        spec.g_bar(),
        &traj.mean_outer[horizon],
    ));
    total.value()
}

/// The optimal value `Tr[S_0 (E[zz'] - Ez Ez')] + (Ez)' T_0 (Ez)` for a
/// solved problem — the completing-the-square identity, no propagation.
pub fn optimal_value(sol: &RiccatiSolution, init: &InitialCondition) -> f64 {
    let mean = init.mean();
    let cov = init.second_moment() - &mean * mean.transpose();
    linalg::trace_product(sol.s(0), &cov) + linalg::quadratic_form(sol.t(0), &mean)
}
