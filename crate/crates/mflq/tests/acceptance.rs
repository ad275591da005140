//! Acceptance gate for the solver stack. Each numbered criterion prints one
//! `[PASS]`/`[FAIL]` line (indented lines carry diagnostics); the process
//! exits nonzero if any criterion fails.
//!
//! Criteria 1 and 2 compare against the reference tables bundled below,
//! which are known to disagree with the recursion on the mean blocks: the
//! tables' T and M values match a recursion whose terminal mean weight was
//! seeded with `Gbar_N` alone instead of `G_N + Gbar_N`. The comparison is
//! asserted as stated anyway, and the diagnostic lines demonstrate the
//! mis-seeding and the scenario-tree certificate that rules the reference
//! values out. See the failure output for the evidence.

mod common;

use std::time::{Duration, Instant};

use mflq::problem::InitialCondition;
use mflq::riccati::RiccatiSolution;
use mflq::{
    assemble, builtin, eval_policy_on_tree, exact_cost, optimal_policy, optimal_value,
    particle_deviation_study, simulate, solve_open_loop, solve_principle, solve_riccati,
    NoiseModel, ProblemSpec,
};
use nalgebra::{Cholesky, DMatrix, DVector};

// ---------------------------------------------------------------------------
// Reference tables for the built-in instance (4-decimal print precision).
// ---------------------------------------------------------------------------

const REF_S: [[f64; 9]; 4] = [
    [
        0.5227, 0.3542, 0.1966, 0.3542, 1.9655, 0.3170, 0.1966, 0.3170, 1.7009,
    ],
    [
        0.5188, 0.3513, 0.1951, 0.3513, 1.9595, 0.3130, 0.1951, 0.3130, 1.6943,
    ],
    [
        0.4862, 0.3264, 0.1861, 0.3264, 1.9219, 0.2928, 0.1861, 0.2928, 1.6660,
    ],
    [
        0.3747, 0.2421, 0.1492, 0.2421, 1.7652, 0.1849, 0.1492, 0.1849, 1.4532,
    ],
];

const REF_T: [[f64; 9]; 4] = [
    [
        4.3329, 1.7927, -0.2507, 1.7927, 4.4213, 0.4463, -0.2507, 0.4463, 3.4720,
    ],
    [
        4.2341, 1.7868, -0.2366, 1.7868, 4.4007, 0.4611, -0.2366, 0.4611, 3.4411,
    ],
    [
        3.4908, 1.6119, -0.0389, 1.6119, 4.2394, 0.4881, -0.0389, 0.4881, 3.3283,
    ],
    [
        1.4782, 0.3777, 0.3734, 0.3777, 3.2001, 0.5548, 0.3734, 0.5548, 2.4932,
    ],
];

const REF_M: [[f64; 6]; 4] = [
    [-0.3286, -0.4234, -0.3474, -0.3189, -0.4351, -0.7770],
    [-0.3436, -0.4156, -0.3531, -0.3137, -0.4381, -0.7687],
    [-0.4029, -0.3946, -0.3315, -0.2938, -0.4160, -0.7519],
    [-0.2418, -0.2552, -0.3178, -0.1351, -0.2213, -0.5101],
];

const REF_L: [[f64; 6]; 4] = [
    [-0.3455, -0.3271, -0.4240, -0.2467, -0.2937, -0.4941],
    [-0.3436, -0.3235, -0.4207, -0.2446, -0.2897, -0.4885],
    [-0.3290, -0.3009, -0.4043, -0.2298, -0.2692, -0.4650],
    [-0.2552, -0.2084, -0.2954, -0.1744, -0.1608, -0.3028],
];

fn ref_mat(rows: usize, cols: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, entries)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

struct Report {
    label: &'static str,
    pass: bool,
    summary: String,
    notes: Vec<String>,
}

impl Report {
    fn emit(&self) {
        let tag = if self.pass { "[PASS]" } else { "[FAIL]" };
        println!("{tag} {} — {}", self.label, self.summary);
        for note in &self.notes {
            println!("       {note}");
        }
    }
}

/// Re-run only the mean (T) recursion with an arbitrary terminal weight,
/// reusing the solved fluctuation matrices S. Used to demonstrate where the
/// reference tables came from.
fn mean_recursion_with_terminal(
    spec: &ProblemSpec,
    sol: &RiccatiSolution,
    terminal: DMatrix<f64>,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let horizon = spec.horizon();
    let mut t_rev = vec![terminal];
    let mut m_rev = Vec::new();
    for k in (0..horizon).rev() {
        let sp = sol.s(k + 1);
        let tp = t_rev.last().unwrap().clone();
        let a_sum = spec.a(k) + spec.a_bar(k);
        let b_sum = spec.b(k) + spec.b_bar(k);
        let c_sum = spec.c(k) + spec.c_bar(k);
        let d_sum = spec.d(k) + spec.d_bar(k);
        let w2 = spec.r(k)
            + spec.r_bar(k)
            + b_sum.transpose() * &tp * &b_sum
            + d_sum.transpose() * sp * &d_sum;
        let h2 = b_sum.transpose() * &tp * &a_sum + d_sum.transpose() * sp * &c_sum;
        let gain = -Cholesky::new(w2)
            .expect("mean block is positive definite")
            .solve(&h2);
        let t_k = spec.q(k)
            + spec.q_bar(k)
            + c_sum.transpose() * sp * &c_sum
            + a_sum.transpose() * &tp * &a_sum
            + h2.transpose() * &gain;
        t_rev.push((&t_k + t_k.transpose()) * 0.5);
        m_rev.push(gain);
    }
    t_rev.reverse();
    m_rev.reverse();
    (t_rev, m_rev)
}

fn builtin_solution() -> (ProblemSpec, InitialCondition, RiccatiSolution) {
    let (spec, init) = builtin::problem();
    let sol = solve_riccati(&spec).expect("built-in instance satisfies the standard condition");
    (spec, init, sol)
}

fn misseed_notes(spec: &ProblemSpec, sol: &RiccatiSolution) -> Vec<String> {
    let (alt_t, alt_m) = mean_recursion_with_terminal(spec, sol, spec.g_bar().clone());
    let mut alt_t_dev = 0.0f64;
    let mut alt_m_dev = 0.0f64;
    for k in 0..4 {
        alt_t_dev = alt_t_dev.max(max_abs(&(&alt_t[k] - ref_mat(3, 3, &REF_T[k]))));
        alt_m_dev = alt_m_dev.max(max_abs(&(&alt_m[k] - ref_mat(2, 3, &REF_M[k]))));
    }

    let zeta = DVector::from_element(3, 1.0);
    let form = assemble(spec, &zeta).expect("tree fits the horizon guard");
    let (_, certified) = solve_open_loop(&form).expect("assembled form is positive definite");
    let solved_quad = (sol.t(0) * &zeta).dot(&zeta);
    let ref_quad = (ref_mat(3, 3, &REF_T[0]) * &zeta).dot(&zeta);

    vec![
        format!(
            "re-seeding the mean recursion with terminal weight Gbar_N alone (instead of \
             G_N + Gbar_N) reproduces the reference T tables to {alt_t_dev:.1e} and the \
             reference M tables to {alt_m_dev:.1e} — print precision; the reference values \
             come from that mis-seeded recursion"
        ),
        format!(
            "exhaustive scenario-tree optimum over all adapted controls for zeta = (1,1,1) \
             is {certified:.12}; the solved T_0 gives zeta'T_0 zeta = {solved_quad:.12} \
             (relative gap {:.1e}), while the reference T_0 gives {ref_quad:.6} — below the \
             certified optimum, which no valid value matrix can produce",
            (certified - solved_quad).abs() / certified.abs(),
        ),
    ]
}

fn criterion_1() -> Report {
    let (spec, _, _) = builtin_solution();
    let start = Instant::now();
    let sol = solve_riccati(&spec).unwrap();
    let elapsed = start.elapsed();

    let mut s_dev = 0.0f64;
    let mut t_dev = 0.0f64;
    for k in 0..4 {
        s_dev = s_dev.max(max_abs(&(sol.s(k) - ref_mat(3, 3, &REF_S[k]))));
        t_dev = t_dev.max(max_abs(&(sol.t(k) - ref_mat(3, 3, &REF_T[k]))));
    }
    let tol = 5e-4;
    let budget = Duration::from_millis(100);
    let pass = s_dev <= tol && t_dev <= tol && elapsed < budget;
    let mut notes = Vec::new();
    if !pass {
        notes = misseed_notes(&spec, &sol);
    }
    Report {
        label: "criterion 1",
        pass,
        summary: format!(
            "value-matrix tables: max |S - ref| = {s_dev:.1e}, max |T - ref| = {t_dev:.1e} \
             (tolerance {tol:.1e}); solve took {elapsed:?} (budget {budget:?})"
        ),
        notes,
    }
}

fn criterion_2() -> Report {
    let (spec, _, sol) = builtin_solution();
    let mut l_dev = 0.0f64;
    let mut m_dev = 0.0f64;
    for k in 0..4 {
        l_dev = l_dev.max(max_abs(&(sol.gain_dev(k) - ref_mat(2, 3, &REF_L[k]))));
        m_dev = m_dev.max(max_abs(&(sol.gain_mean(k) - ref_mat(2, 3, &REF_M[k]))));
    }
    let tol = 5e-4;
    let pass = l_dev <= tol && m_dev <= tol;
    let mut notes = Vec::new();
    if !pass {
        notes = misseed_notes(&spec, &sol);
    }
    Report {
        label: "criterion 2",
        pass,
        summary: format!(
            "feedback-gain tables: max |L - ref| = {l_dev:.1e}, max |M - ref| = {m_dev:.1e} \
             (tolerance {tol:.1e})"
        ),
        notes,
    }
}

fn criterion_3() -> Report {
    let mut rng = common::rng(3001);
    let mut instances = vec![builtin::problem().0];
    for _ in 0..50 {
        let (n, m, horizon) = common::random_dims(&mut rng, 4, 3, 6);
        instances.push(common::random_spec(&mut rng, n, m, horizon));
    }

    let mut p_dev = 0.0f64;
    let mut t_dev = 0.0f64;
    for spec in &instances {
        let sol = solve_riccati(spec).unwrap();
        let principle = solve_principle(spec, &sol).unwrap();
        for k in 0..=spec.horizon() {
            p_dev = p_dev.max(max_abs(&(principle.p(k) - sol.s(k))));
            t_dev = t_dev.max(max_abs(&(principle.p(k) + principle.p_bar(k) - sol.t(k))));
        }
    }
    let tol = 1e-8;
    Report {
        label: "criterion 3",
        pass: p_dev <= tol && t_dev <= tol,
        summary: format!(
            "minimum principle on {} instances: max |P - S| = {p_dev:.1e}, \
             max |P + Pbar - T| = {t_dev:.1e} (tolerance {tol:.1e})",
            instances.len()
        ),
        notes: Vec::new(),
    }
}

fn criterion_4() -> Report {
    let mut rng = common::rng(4001);
    let mut cases: Vec<(ProblemSpec, DVector<f64>)> =
        vec![(builtin::problem().0, DVector::from_element(3, 1.0))];
    for _ in 0..50 {
        let (n, m, horizon) = common::random_dims(&mut rng, 4, 3, 8);
        let spec = common::random_spec(&mut rng, n, m, horizon);
        let zeta = common::random_zeta(&mut rng, n);
        cases.push((spec, zeta));
    }

    let mut worst_rel = 0.0f64;
    let mut slowest = Duration::ZERO;
    for (spec, zeta) in &cases {
        let start = Instant::now();
        let sol = solve_riccati(spec).unwrap();
        let value = optimal_value(&sol, &InitialCondition::Deterministic(zeta.clone()));
        let form = assemble(spec, zeta).unwrap();
        let (_, best) = solve_open_loop(&form).unwrap();
        slowest = slowest.max(start.elapsed());
        worst_rel = worst_rel.max((best - value).abs() / (1.0 + value.abs()));
    }
    let tol = 1e-6;
    let budget = Duration::from_secs(2);
    Report {
        label: "criterion 4",
        pass: worst_rel <= tol && slowest < budget,
        summary: format!(
            "scenario-tree certification on {} instances: worst relative gap {worst_rel:.1e} \
             (tolerance {tol:.1e}); slowest instance {slowest:?} (budget {budget:?})",
            cases.len()
        ),
        notes: Vec::new(),
    }
}

fn criterion_5() -> Report {
    let (spec, init, sol) = builtin_solution();
    let policy = optimal_policy(&sol);
    let value = optimal_value(&sol, &init);
    let floor = value - 1e-9 * (1.0 + value.abs());

    let mut rng = common::rng(5001);
    let mut min_margin = f64::INFINITY;
    let mut min_strict_increase = f64::INFINITY;
    let mut violations = 0usize;
    for _ in 0..100 {
        let exponent = -3.0 + 3.0 * rand::Rng::random::<f64>(&mut rng);
        let magnitude = 10f64.powf(exponent);
        let perturbed = common::perturbed_policy(&mut rng, &policy, magnitude);
        let cost = exact_cost(&spec, &perturbed, &init);
        min_margin = min_margin.min(cost - floor);
        if cost < floor {
            violations += 1;
        }
        if magnitude >= 1e-2 {
            let increase = cost - value;
            min_strict_increase = min_strict_increase.min(increase);
        }
    }
    let pass = violations == 0 && min_strict_increase > 1e-10;
    Report {
        label: "criterion 5",
        pass,
        summary: format!(
            "suboptimality over 100 gain perturbations (magnitudes 1e-3..1): \
             {violations} below the optimal value; smallest increase at magnitude >= 1e-2 \
             is {min_strict_increase:.2e} (must exceed 1e-10)"
        ),
        notes: Vec::new(),
    }
}

fn criterion_6() -> Report {
    let mut rng = common::rng(6001);
    let mut instances = vec![builtin::problem().0];
    for _ in 0..10 {
        let (n, m, horizon) = common::random_dims(&mut rng, 4, 3, 6);
        instances.push(common::random_spec(&mut rng, n, m, horizon));
    }

    let mut t_dev = 0.0f64;
    let mut m_dev = 0.0f64;
    for spec in &instances {
        let reduced = common::without_mean_field_terms(spec);
        let sol = solve_riccati(&reduced).unwrap();
        for k in 0..=reduced.horizon() {
            t_dev = t_dev.max(max_abs(&(sol.t(k) - sol.s(k))));
        }
        for k in 0..reduced.horizon() {
            m_dev = m_dev.max(max_abs(&(sol.gain_mean(k) - sol.gain_dev(k))));
        }
    }
    let tol = 1e-10;
    Report {
        label: "criterion 6",
        pass: t_dev <= tol && m_dev <= tol,
        summary: format!(
            "zeroed couplings on {} instances: max |T - S| = {t_dev:.1e}, \
             max |M - L| = {m_dev:.1e} (tolerance {tol:.1e})",
            instances.len()
        ),
        notes: Vec::new(),
    }
}

fn criterion_7() -> Report {
    let mut rng = common::rng(7001);
    let mut worst_rel = 0.0f64;
    for _ in 0..50 {
        let (n, m, horizon) = common::random_dims(&mut rng, 4, 3, 8);
        let spec = common::random_spec(&mut rng, n, m, horizon);
        let policy = common::random_policy(&mut rng, &spec);
        let zeta = common::random_zeta(&mut rng, n);
        let from_moments = exact_cost(
            &spec,
            &policy,
            &InitialCondition::Deterministic(zeta.clone()),
        );
        let from_tree = eval_policy_on_tree(&spec, &policy, &zeta).unwrap();
        worst_rel = worst_rel.max((from_moments - from_tree).abs() / (1.0 + from_moments.abs()));
    }
    let tol = 1e-10;
    Report {
        label: "criterion 7",
        pass: worst_rel <= tol,
        summary: format!(
            "moment evaluator vs tree playout on 50 policies: worst relative gap \
             {worst_rel:.1e} (tolerance {tol:.1e})"
        ),
        notes: Vec::new(),
    }
}

fn criterion_8() -> Report {
    let (spec, init, sol) = builtin_solution();
    let policy = optimal_policy(&sol);
    let target = optimal_value(&sol, &init);

    let mut hits = 0usize;
    let mut slowest = Duration::ZERO;
    for seed in 0..20u64 {
        let start = Instant::now();
        let out = simulate(
            &spec,
            &policy,
            &init,
            NoiseModel::StandardNormal,
            100_000,
            seed,
        )
        .unwrap();
        slowest = slowest.max(start.elapsed());
        if (out.cost_mean - target).abs() <= 3.0 * out.cost_stderr {
            hits += 1;
        }
    }
    let budget = Duration::from_secs(5);
    Report {
        label: "criterion 8",
        pass: hits >= 18 && slowest < budget,
        summary: format!(
            "Monte Carlo coverage: {hits}/20 seeds within 3 standard errors of the optimal \
             value over 1e5 Gaussian paths (need >= 18); slowest run {slowest:?} \
             (budget {budget:?})"
        ),
        notes: Vec::new(),
    }
}

fn criterion_9() -> Report {
    let (spec, init, sol) = builtin_solution();
    let policy = optimal_policy(&sol);
    let study = particle_deviation_study(
        &spec,
        &policy,
        &init,
        NoiseModel::StandardNormal,
        &[100, 1000, 10_000],
        50,
        9001,
    )
    .unwrap();
    let d = &study.median_deviations;
    let r1 = d[1] / d[0];
    let r2 = d[2] / d[1];
    let monotone = d[0] > d[1] && d[1] > d[2];
    let in_band = (0.2..=0.5).contains(&r1) && (0.2..=0.5).contains(&r2);
    Report {
        label: "criterion 9",
        pass: monotone && in_band,
        summary: format!(
            "particle-limit trend (50-replication medians): deviations {:.4e} -> {:.4e} -> \
             {:.4e}, successive ratios {r1:.3} and {r2:.3} (band [0.2, 0.5])",
            d[0], d[1], d[2]
        ),
        notes: Vec::new(),
    }
}

fn main() {
    let reports = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];
    for report in &reports {
        report.emit();
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed == 0 {
        println!("all {} criteria passed", reports.len());
    } else {
        println!("{failed} of {} criteria failed", reports.len());
        std::process::exit(1);
    }
}
