//! Small dense-matrix helpers shared across the crate: exact symmetrization,
//! eigenvalue-based definiteness tests, and compensated summation.

use nalgebra::{DMatrix, DVector};

/// Replace `m` by `(m + m')/2`.
///
/// IEEE addition is commutative, so entry `(i,j)` and entry `(j,i)` are
/// computed from the same two summands and come out bitwise equal: the result
/// is exactly symmetric, not merely symmetric up to roundoff.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let nrows = m.nrows();
    debug_assert_eq!(nrows, m.ncols(), "symmetrize expects a square matrix");
    for i in 0..nrows {
        for j in (i + 1)..nrows {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `(m + m')/2` by value.
pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Largest absolute deviation from symmetry, `max_ij |m[i,j] - m[j,i]|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of a symmetric matrix (symmetrizing first so the
/// eigensolver sees exactly what the definiteness test is about).
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = symmetrized(m.clone());
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `trace(a * b)` without forming the product: `sum_ij a[i,j] * b[j,i]`.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = KahanSum::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc.add(a[(i, j)] * b[(j, i)]);
        }
    }
    acc.value()
}

/// Quadratic form `v' m v`.
pub fn quadratic_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (m * v).dot(v)
}

/// Kahan compensated accumulator. The horizons here are short, but several
/// identity tests compare two cost evaluations at 1e-10 relative tolerance,
/// and Monte Carlo means reduce 1e5 terms; the compensation makes both
/// reductions insensitive to term count.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, term: f64) {
        let y = term - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}
