//! Brute-force certification on a binary scenario tree.
//!
//! Under Rademacher noise (`w[k] = ±1` with probability 1/2) the horizon-`N`
//! problem is *exactly* a finite-dimensional quadratic program: every noise
//! history is a tree node, expectations are finite sums, and an adapted
//! open-loop control assigns one `R^m` vector to every non-terminal node.
//! This module assembles that program,
//!
//! ```text
//! J(zeta, u) = u' Theta1 u + 2 theta2' u + theta3,
//! ```
//!
//! solves it by a symmetric positive-definite factorization, and plays
//! controls or feedback policies back on the tree. None of it shares code
//! with the Riccati recursions or the moment propagator, which is the point:
//! agreement between the two routes certifies both.
//!
//! # Tree layout
//!
//! Depth-`k` nodes are indexed by the bits of their noise history
//! (`bit j = 1` iff `w[j] = +1`), so the child of node `idx` under sign `s`
//! is `idx | (bit << k)`. A random initial state of finite support is handled
//! by one tree per atom, probability-weighted and coupled through the means.
//! Controls are stacked depth-major, atoms within a depth:
//!
//! ```text
//! column offset of depth k      = atoms * m * (2^k - 1)
//! block (atom a, node idx)      = offset(k) + (a * 2^k + idx) * m
//! total length                  = atoms * m * (2^N - 1)
//! ```
//!
//! which keeps the columns a control can influence in a contiguous prefix:
//! stage-`k` states depend only on controls of depth `< k`. Sensitivities
//! `x = S u + c` are propagated per node at that truncated width.
//!
//! # Determinism
//!
//! Assembly parallelizes over nodes. All reductions run over a fixed binary
//! splitting of the node range, so results are bitwise identical for every
//! thread count.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::iter::{IntoParallelIterator, ParallelIterator};
use thiserror::Error;

use crate::linalg::{self, KahanSum};
use crate::problem::{FeedbackPolicy, ProblemSpec};

/// Largest horizon the tree oracle accepts. At `m = 2` this is about 32k
/// stacked control variables; past it, dense assembly stops being a
/// desk-scale certification tool.
pub const MAX_TREE_HORIZON: usize = 14;

/// Node ranges shorter than this are reduced sequentially inside one task.
const PAR_CHUNK: usize = 16;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "horizon N={horizon} exceeds the scenario-tree capacity guard \
         (N <= {MAX_TREE_HORIZON}); certify on a shorter horizon"
    )]
    HorizonTooLarge { horizon: usize },
    #[error("initial state has dimension {got}, expected {expected}")]
    InitialDimension { got: usize, expected: usize },
    #[error("finite-support initial state has no atoms")]
    EmptySupport,
    #[error("Gaussian initial states have infinite support; the tree oracle needs a deterministic or finite-support initial state")]
    GaussianInitial,
    #[error("Theta1 is not positive definite; the open-loop problem has no unique minimizer")]
    NotPositiveDefinite,
    #[error("open-loop solve residual {residual:e} exceeds {bound:e} after iterative refinement")]
    ResidualTooLarge { residual: f64, bound: f64 },
}

/// Index arithmetic for the binary scenario tree (shapes only, no data).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioTree {
    horizon: usize,
    state_dim: usize,
    control_dim: usize,
    atom_count: usize,
}

impl ScenarioTree {
    pub fn new(spec: &ProblemSpec, atom_count: usize) -> Result<Self, OracleError> {
        if spec.horizon() > MAX_TREE_HORIZON {
            return Err(OracleError::HorizonTooLarge {
                horizon: spec.horizon(),
            });
        }
        if atom_count == 0 {
            return Err(OracleError::EmptySupport);
        }
        Ok(Self {
            horizon: spec.horizon(),
            state_dim: spec.n(),
            control_dim: spec.m(),
            atom_count,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    /// Noise-history nodes per atom at a depth.
    pub fn nodes_at(&self, depth: usize) -> usize {
        1 << depth
    }

    /// Control blocks at a depth, counting all atoms.
    pub fn blocks_at(&self, depth: usize) -> usize {
        self.atom_count << depth
    }

    /// Conditional probability of one depth-`k` history (atom weight excluded).
    pub fn node_probability(&self, depth: usize) -> f64 {
        (0.5f64).powi(depth as i32)
    }

    /// Total width of all control blocks of depth `< k`; stage-`k` states
    /// depend on exactly this prefix of the stacked control vector.
    pub fn prefix_width(&self, depth: usize) -> usize {
        self.atom_count * self.control_dim * ((1 << depth) - 1)
    }

    /// Length of the full stacked control vector.
    pub fn total_controls(&self) -> usize {
        self.prefix_width(self.horizon)
    }

    /// First column of the control block of `(atom, node)` at a depth.
    pub fn block_start(&self, depth: usize, atom: usize, node: usize) -> usize {
        self.prefix_width(depth) + (atom * self.nodes_at(depth) + node) * self.control_dim
    }

    /// Sign of `w[step]` along the history encoded by `node`.
    pub fn noise_sign(&self, node: usize, step: usize) -> f64 {
        if node >> step & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Index of the successor of a depth-`depth` node under `w = sign`.
    pub fn child(&self, node: usize, depth: usize, sign: f64) -> usize {
        node | ((sign > 0.0) as usize) << depth
    }
}

/// The assembled cost `J(zeta, u) = u' Theta1 u + 2 theta2' u + theta3` over
/// stacked adapted controls.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub theta1: DMatrix<f64>,
    pub theta2: DVector<f64>,
    pub theta3: f64,
    pub tree: ScenarioTree,
}

impl QuadraticForm {
    /// Evaluate the form at a control vector.
    pub fn cost_of(&self, u: &DVector<f64>) -> f64 {
        linalg::quadratic_form(&self.theta1, u) + 2.0 * self.theta2.dot(u) + self.theta3
    }
}

/// Fixed-shape parallel reduction over `lo..hi`: the combine tree depends
/// only on the range, never on thread scheduling, so floating-point results
/// are reproducible.
fn reduce_nodes<T, L, C>(lo: usize, hi: usize, leaf: &L, combine: &C) -> T
where
    T: Send,
    L: Fn(usize) -> T + Sync,
    C: Fn(T, T) -> T + Sync,
{
    debug_assert!(lo < hi);
    if hi - lo == 1 {
        return leaf(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (left, right) = if hi - lo >= PAR_CHUNK {
        rayon::join(
            || reduce_nodes(lo, mid, leaf, combine),
            || reduce_nodes(mid, hi, leaf, combine),
        )
    } else {
        (
            reduce_nodes(lo, mid, leaf, combine),
            reduce_nodes(mid, hi, leaf, combine),
        )
    };
    combine(left, right)
}

/// Per-atom noise-free offsets and per-node sensitivities at one depth:
/// `x[block] = sens[block] * u[..width] + offset[block]`.
struct DepthStates {
    sens: Vec<DMatrix<f64>>,
    offset: Vec<DVector<f64>>,
}

fn check_atoms(spec: &ProblemSpec, atoms: &[(DVector<f64>, f64)]) -> Result<(), OracleError> {
    if atoms.is_empty() {
        return Err(OracleError::EmptySupport);
    }
    for (value, _) in atoms {
        if value.len() != spec.n() {
            return Err(OracleError::InitialDimension {
                got: value.len(),
                expected: spec.n(),
            });
        }
    }
    Ok(())
}

/// Atom weight of a depth-`k` block index (blocks are atom-major per depth).
fn block_atom_prob(atoms: &[(DVector<f64>, f64)], depth: usize, block: usize) -> f64 {
    atoms[block >> depth].1
}

/// Assemble the exact quadratic cost for a deterministic initial state.
pub fn assemble(spec: &ProblemSpec, zeta: &DVector<f64>) -> Result<QuadraticForm, OracleError> {
    assemble_mixture(spec, &[(zeta.clone(), 1.0)])
}

/// Assemble the exact quadratic cost for a finite-support initial state: one
/// tree per atom, coupled through the population means. Atom probabilities
/// are taken as given (validate the distribution first).
pub fn assemble_mixture(
    spec: &ProblemSpec,
    atoms: &[(DVector<f64>, f64)],
) -> Result<QuadraticForm, OracleError> {
    check_atoms(spec, atoms)?;
    let tree = ScenarioTree::new(spec, atoms.len())?;
    let (n, m, horizon) = (spec.n(), spec.m(), spec.horizon());
    let total = tree.total_controls();

    let mut theta1 = DMatrix::<f64>::zeros(total, total);
    let mut theta2 = DVector::<f64>::zeros(total);
    let mut theta3 = KahanSum::new();

    let mut states = DepthStates {
        sens: atoms.iter().map(|_| DMatrix::zeros(n, 0)).collect(),
        offset: atoms.iter().map(|(value, _)| value.clone()).collect(),
    };

    for k in 0..=horizon {
        let blocks = tree.blocks_at(k);
        let width = tree.prefix_width(k);
        let depth_prob = tree.node_probability(k);
        let prob = |block: usize| depth_prob * block_atom_prob(atoms, k, block);

        // Population means of the sensitivity and the offset.
        let (sens_mean, offset_mean) = reduce_nodes(
            0,
            blocks,
            &|b| (&states.sens[b] * prob(b), &states.offset[b] * prob(b)),
            &|(s1, c1), (s2, c2)| (s1 + s2, c1 + c2),
        );

        // Stage (or terminal) state cost.
        let (q, q_bar) = if k < horizon {
            (spec.q(k), spec.q_bar(k))
        } else {
            (spec.g(), spec.g_bar())
        };
        let (big, lin, constant) = reduce_nodes(
            0,
            blocks,
            &|b| {
                let p = prob(b);
                let qs = q * &states.sens[b];
                let qc = q * &states.offset[b];
                (
                    states.sens[b].tr_mul(&qs) * p,
                    states.sens[b].tr_mul(&qc) * p,
                    states.offset[b].dot(&qc) * p,
                )
            },
            &|(a1, b1, c1), (a2, b2, c2)| (a1 + a2, b1 + b2, c1 + c2),
        );
        let qbar_s = q_bar * &sens_mean;
        let qbar_c = q_bar * &offset_mean;
        let mut top = theta1.view_mut((0, 0), (width, width));
        top += &big;
        top += sens_mean.tr_mul(&qbar_s);
        let mut lead = theta2.rows_mut(0, width);
        lead += &lin;
        lead += sens_mean.tr_mul(&qbar_c);
        theta3.add(constant);
        theta3.add(offset_mean.dot(&qbar_c));

        if k == horizon {
            break;
        }

        // Control cost: E[u'Ru] on the diagonal blocks, Eu'Rbar Eu across
        // every ordered pair of depth-k blocks.
        let (r, r_bar) = (spec.r(k), spec.r_bar(k));
        for i in 0..blocks {
            let si = tree.prefix_width(k) + i * m;
            theta1
                .view_mut((si, si), (m, m))
                .add_assign_scaled(r, prob(i));
            for j in 0..blocks {
                let sj = tree.prefix_width(k) + j * m;
                theta1
                    .view_mut((si, sj), (m, m))
                    .add_assign_scaled(r_bar, prob(i) * prob(j));
            }
        }

        // Propagate sensitivities to depth k+1. Children are ordered
        // atom-major, then sign bit, then parent node, matching the block
        // index convention.
        let child_width = tree.prefix_width(k + 1);
        let nodes = tree.nodes_at(k);
        let bbar = spec.b_bar(k);
        let dbar = spec.d_bar(k);
        let next: Vec<(DMatrix<f64>, DVector<f64>)> = (0..tree.blocks_at(k + 1))
            .into_par_iter()
            .map(|child| {
                let atom = child >> (k + 1);
                let rest = child & ((1 << (k + 1)) - 1);
                let sign = if rest >> k & 1 == 1 { 1.0 } else { -1.0 };
                let parent_node = rest & (nodes - 1);
                let parent = atom * nodes + parent_node;

                let fa = spec.a(k) + spec.c(k) * sign;
                let fab = spec.a_bar(k) + spec.c_bar(k) * sign;
                let fb = spec.b(k) + spec.d(k) * sign;
                let fbb = bbar + dbar * sign;

                let mut sens = DMatrix::<f64>::zeros(n, child_width);
                {
                    let mut head = sens.view_mut((0, 0), (n, width));
                    head += &fa * &states.sens[parent];
                    head += &fab * &sens_mean;
                }
                let own = tree.prefix_width(k) + parent * m;
                sens.view_mut((0, own), (n, m)).add_assign_scaled(&fb, 1.0);
                for j in 0..blocks {
                    let sj = tree.prefix_width(k) + j * m;
                    sens.view_mut((0, sj), (n, m))
                        .add_assign_scaled(&fbb, prob(j));
                }
                let offset = &fa * &states.offset[parent] + &fab * &offset_mean;
                (sens, offset)
            })
            .collect();
        states = DepthStates {
            sens: Vec::with_capacity(next.len()),
            offset: Vec::with_capacity(next.len()),
        };
        for (sens, offset) in next {
            states.sens.push(sens);
            states.offset.push(offset);
        }
    }

    linalg::symmetrize(&mut theta1);
    Ok(QuadraticForm {
        theta1,
        theta2,
        theta3: theta3.value(),
        tree,
    })
}

/// Minimize the assembled form: solve `Theta1 u = -theta2` by Cholesky
/// factorization with iterative refinement, returning `(u_star, cost_star)`
/// with `cost_star = theta3 + theta2' u_star`.
pub fn solve_open_loop(form: &QuadraticForm) -> Result<(DVector<f64>, f64), OracleError> {
    let chol = Cholesky::new(form.theta1.clone()).ok_or(OracleError::NotPositiveDefinite)?;
    let mut u = chol.solve(&(-&form.theta2));
    let bound = 1e-9 * form.theta2.amax();
    let mut refinements = 0;
    loop {
        let residual = (&form.theta1 * &u + &form.theta2).amax();
        if residual <= bound {
            break;
        }
        if refinements == 3 {
            return Err(OracleError::ResidualTooLarge { residual, bound });
        }
        let correction = chol.solve(&(&form.theta1 * &u + &form.theta2));
        u -= correction;
        refinements += 1;
    }
    let cost = form.theta3 + form.theta2.dot(&u);
    Ok((u, cost))
}

/// States of every `(atom, node)` block at one depth during a playout.
struct Playout<'a> {
    spec: &'a ProblemSpec,
    atoms: &'a [(DVector<f64>, f64)],
    tree: ScenarioTree,
    states: Vec<DVector<f64>>,
    cost: KahanSum,
}

impl<'a> Playout<'a> {
    fn new(spec: &'a ProblemSpec, atoms: &'a [(DVector<f64>, f64)]) -> Result<Self, OracleError> {
        check_atoms(spec, atoms)?;
        let tree = ScenarioTree::new(spec, atoms.len())?;
        Ok(Self {
            spec,
            atoms,
            tree,
            states: atoms.iter().map(|(value, _)| value.clone()).collect(),
            cost: KahanSum::new(),
        })
    }

    fn prob(&self, depth: usize, block: usize) -> f64 {
        self.tree.node_probability(depth) * block_atom_prob(self.atoms, depth, block)
    }

    fn state_mean(&self, depth: usize) -> DVector<f64> {
        let mut mean = DVector::zeros(self.spec.n());
        for (b, x) in self.states.iter().enumerate() {
            mean += x * self.prob(depth, b);
        }
        mean
    }

    /// Add `E[x'Mx] + Ex' Mbar Ex` for the current depth.
    fn add_state_cost(&mut self, depth: usize, mat: &DMatrix<f64>, mat_bar: &DMatrix<f64>) {
        let mean = self.state_mean(depth);
        for (b, x) in self.states.iter().enumerate() {
            self.cost
                .add(self.prob(depth, b) * linalg::quadratic_form(mat, x));
        }
        self.cost.add(linalg::quadratic_form(mat_bar, &mean));
    }

    /// Add the control cost at `depth` and advance every block one stage,
    /// given the per-block controls.
    fn step(&mut self, depth: usize, controls: &[DVector<f64>]) {
        let spec = self.spec;
        let mut control_mean = DVector::zeros(spec.m());
        for (b, u) in controls.iter().enumerate() {
            control_mean += u * self.prob(depth, b);
        }
        for (b, u) in controls.iter().enumerate() {
            self.cost
                .add(self.prob(depth, b) * linalg::quadratic_form(spec.r(depth), u));
        }
        self.cost
            .add(linalg::quadratic_form(spec.r_bar(depth), &control_mean));

        let state_mean = self.state_mean(depth);
        let nodes = self.tree.nodes_at(depth);
        let mut next = vec![DVector::zeros(spec.n()); self.tree.blocks_at(depth + 1)];
        for (parent, x) in self.states.iter().enumerate() {
            let atom = parent / nodes;
            let node = parent % nodes;
            for sign in [-1.0, 1.0] {
                let child = atom * 2 * nodes + self.tree.child(node, depth, sign);
                next[child] = (spec.a(depth) + spec.c(depth) * sign) * x
                    + (spec.a_bar(depth) + spec.c_bar(depth) * sign) * &state_mean
                    + (spec.b(depth) + spec.d(depth) * sign) * &controls[parent]
                    + (spec.b_bar(depth) + spec.d_bar(depth) * sign) * &control_mean;
            }
        }
        self.states = next;
    }

    fn finish(mut self) -> f64 {
        let horizon = self.spec.horizon();
        let g = self.spec.g().clone();
        let g_bar = self.spec.g_bar().clone();
        self.add_state_cost(horizon, &g, &g_bar);
        self.cost.value()
    }
}

/// Exact expected cost of a stacked open-loop control vector, by direct
/// playout over all tree paths. Independent of [`assemble`]'s sensitivity
/// accumulation, so the two can cross-check each other.
///
/// Panics if `u` does not have the stacked length `atoms * m * (2^N - 1)`.
pub fn eval_controls_on_tree(
    spec: &ProblemSpec,
    atoms: &[(DVector<f64>, f64)],
    u: &DVector<f64>,
) -> Result<f64, OracleError> {
    let mut playout = Playout::new(spec, atoms)?;
    let tree = playout.tree;
    assert_eq!(
        u.len(),
        tree.total_controls(),
        "stacked control vector has the wrong length"
    );
    for k in 0..spec.horizon() {
        let q = spec.q(k).clone();
        let q_bar = spec.q_bar(k).clone();
        playout.add_state_cost(k, &q, &q_bar);
        let controls: Vec<DVector<f64>> = (0..tree.blocks_at(k))
            .map(|b| {
                let start = tree.prefix_width(k) + b * spec.m();
                u.rows(start, spec.m()).into_owned()
            })
            .collect();
        playout.step(k, &controls);
    }
    Ok(playout.finish())
}

/// Exact expected cost of a feedback policy for a deterministic initial
/// state, by playing `u = M Ex + L (x - Ex)` on every tree path with exact
/// per-depth expectations.
pub fn eval_policy_on_tree(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    zeta: &DVector<f64>,
) -> Result<f64, OracleError> {
    eval_policy_mixture(spec, policy, &[(zeta.clone(), 1.0)])
}

/// [`eval_policy_on_tree`] for a finite-support initial state.
pub fn eval_policy_mixture(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    atoms: &[(DVector<f64>, f64)],
) -> Result<f64, OracleError> {
    assert_eq!(
        policy.horizon(),
        spec.horizon(),
        "policy horizon does not match the problem"
    );
    let mut playout = Playout::new(spec, atoms)?;
    let tree = playout.tree;
    for k in 0..spec.horizon() {
        let q = spec.q(k).clone();
        let q_bar = spec.q_bar(k).clone();
        playout.add_state_cost(k, &q, &q_bar);
        let mean = playout.state_mean(k);
        let mean_term = &policy.mean_gains[k] * &mean;
        let controls: Vec<DVector<f64>> = (0..tree.blocks_at(k))
            .map(|b| &mean_term + &policy.deviation_gains[k] * (&playout.states[b] - &mean))
            .collect();
        playout.step(k, &controls);
    }
    Ok(playout.finish())
}

/// Largest per-node gap between an open-loop control vector and the feedback
/// law `u = M Ex + L (x - Ex)` evaluated along that vector's own trajectory:
/// `max` over nodes of the infinity norm of the difference. Near zero iff the
/// open-loop minimizer is realized by the policy.
pub fn feedback_residual_max(
    spec: &ProblemSpec,
    atoms: &[(DVector<f64>, f64)],
    u: &DVector<f64>,
    policy: &FeedbackPolicy,
) -> Result<f64, OracleError> {
    assert_eq!(
        policy.horizon(),
        spec.horizon(),
        "policy horizon does not match the problem"
    );
    let mut playout = Playout::new(spec, atoms)?;
    let tree = playout.tree;
    assert_eq!(
        u.len(),
        tree.total_controls(),
        "stacked control vector has the wrong length"
    );
    let mut worst = 0.0f64;
    for k in 0..spec.horizon() {
        let mean = playout.state_mean(k);
        let mean_term = &policy.mean_gains[k] * &mean;
        let controls: Vec<DVector<f64>> = (0..tree.blocks_at(k))
            .map(|b| {
                let start = tree.prefix_width(k) + b * spec.m();
                u.rows(start, spec.m()).into_owned()
            })
            .collect();
        for (b, control) in controls.iter().enumerate() {
            let ideal = &mean_term + &policy.deviation_gains[k] * (&playout.states[b] - &mean);
            worst = worst.max((control - ideal).amax());
        }
        playout.step(k, &controls);
    }
    Ok(worst)
}

/// `view += mat * factor` without a temporary per call site.
trait AddAssignScaled {
    fn add_assign_scaled(&mut self, mat: &DMatrix<f64>, factor: f64);
}

impl AddAssignScaled for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_scaled(&mut self, mat: &DMatrix<f64>, factor: f64) {
        self.zip_apply(mat, |out, rhs| *out += rhs * factor);
    }
}
