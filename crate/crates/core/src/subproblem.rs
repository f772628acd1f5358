//! Shared plumbing for the four block subproblem solvers.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::conic::{ConicError, ConicSolution, ConicStatus};

type C64 = Complex<f64>;

pub const LN2: f64 = std::f64::consts::LN_2;

/// Tolerances for the block subproblem solves. Exponential-cone problems
/// routinely stall around relative residuals of 1e-6 in f64, so the blocks
/// run a notch looser than the conic defaults; accepted iterates are still
/// re-verified against exact constraints by their callers.
pub fn subproblem_options() -> crate::conic::SolveOptions {
    crate::conic::SolveOptions {
        tol_feas: 1e-6,
        tol_gap: 1e-6,
        max_iters: 200,
        verbose: false,
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("subproblem infeasible")]
    Infeasible,

    #[error("subproblem hit the solver iteration limit")]
    IterationLimit,

    #[error("numerical failure in subproblem solve")]
    Numerical,

    #[error("no feasible candidate after {0} randomization draws")]
    NoFeasibleCandidate(usize),

    #[error(transparent)]
    Conic(#[from] ConicError),
}

/// Intended-user MM bound on the rate at auxiliary `xi` (all quantities in
/// matching units, noise included in `interference` and `total`):
/// log2(xi) + (1 - xi * interference)/ln2 + log2(total).
/// Tight (equal to log2(total/interference)) at xi = 1/interference.
pub fn intended_rate_bound(xi: f64, interference: f64, total: f64) -> f64 {
    xi.log2() + (1.0 - xi * interference) / LN2 + total.log2()
}

/// Eavesdropper MM upper bound on the rate at auxiliary `xi`:
/// -log2(xi) + (xi * total - 1)/ln2 - log2(interference).
/// Tight at xi = 1/total.
pub fn eaves_rate_bound(xi: f64, total: f64, interference: f64) -> f64 {
    -xi.log2() + (xi * total - 1.0) / LN2 - interference.log2()
}

/// Affine surrogate value = intercept + slope * x.
#[derive(Debug, Clone, Copy)]
pub struct AffineSurrogate {
    pub slope: f64,
    pub intercept: f64,
}

impl AffineSurrogate {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// First-order Taylor upper bound of log2 around `v_l` (gradient
/// 1/(v_l ln 2)); a global upper bound by concavity.
pub fn log2_upper_bound(v_l: f64) -> AffineSurrogate {
    debug_assert!(v_l > 0.0);
    AffineSurrogate {
        slope: 1.0 / (v_l * LN2),
        intercept: v_l.log2() - 1.0 / LN2,
    }
}

/// Tangent lower bound of the convex quadratic form x C x^T around the
/// augmented expansion row: 2 Re{x_l C x^T} - x_l C x_l^T. `grad[a]` is the
/// coefficient on the a-th augmented coordinate.
#[derive(Debug, Clone)]
pub struct QuadSurrogate {
    pub grad: Vec<f64>,
    pub intercept: f64,
}

impl QuadSurrogate {
    pub fn eval(&self, x_aug: &[f64]) -> f64 {
        self.intercept
            + self
                .grad
                .iter()
                .zip(x_aug.iter())
                .map(|(g, x)| g * x)
                .sum::<f64>()
    }
}

pub fn quad_form_lower_bound(c: &DMatrix<C64>, x_aug_l: &[f64]) -> QuadSurrogate {
    let dim = x_aug_l.len();
    // for real rows the quadratic form only sees Re(C)
    let mut grad = vec![0.0; dim];
    let mut at_point = 0.0;
    for b in 0..dim {
        let mut acc = 0.0;
        for (a, &xa) in x_aug_l.iter().enumerate() {
            acc += xa * c[(a, b)].re;
        }
        grad[b] = 2.0 * acc;
        at_point += acc * x_aug_l[b];
    }
    QuadSurrogate {
        grad,
        intercept: -at_point,
    }
}

/// Map a non-optimal conic status to the corresponding error.
pub fn require_optimal(sol: &ConicSolution) -> Result<(), SolveError> {
    match sol.status {
        ConicStatus::Optimal => Ok(()),
        ConicStatus::Infeasible => Err(SolveError::Infeasible),
        ConicStatus::IterationLimit => Err(SolveError::IterationLimit),
        ConicStatus::NumericalFailure => Err(SolveError::Numerical),
    }
}

/// Hermitian PSD square root via eigendecomposition; small negative
/// eigenvalues from solver noise are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| C64::new(v.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.adjoint()
}

/// Principal eigenpair (largest eigenvalue) of a Hermitian matrix.
pub fn principal_eigenpair(m: &DMatrix<C64>) -> (f64, DVector<C64>) {
    let eig = m.clone().symmetric_eigen();
    let mut best = 0usize;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Ratio of the second to the largest eigenvalue; 0 for exact rank 1.
pub fn rank1_defect(m: &DMatrix<C64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if vals[0] <= 0.0 {
        return 0.0;
    }
    (vals.get(1).copied().unwrap_or(0.0) / vals[0]).max(0.0)
}

/// Draw a circularly-symmetric complex Gaussian vector CN(0, I_n).
pub fn complex_gaussian(n: usize, rng: &mut impl Rng) -> DVector<C64> {
    let normal = Normal::new(0.0, (0.5f64).sqrt()).expect("valid");
    DVector::from_fn(n, |_, _| C64::new(normal.sample(rng), normal.sample(rng)))
}

/// Align the global phase of `v` to `reference` (multiplies by a unit scalar
/// so that their inner product is real nonnegative). Rate expressions are
/// invariant to this rotation; it makes successive-iterate differences
/// meaningful.
pub fn phase_align(v: &DVector<C64>, reference: &DVector<C64>) -> DVector<C64> {
    let inner = reference.dotc(v);
    if inner.norm() < 1e-300 {
        return v.clone();
    }
    v * (inner.conj() / C64::new(inner.norm(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn psd_sqrt_squares_back() {
        let mut r = rng::stream(1, "subproblem-test", &[0]);
        let a = complex_gaussian(4, &mut r);
        let b = complex_gaussian(4, &mut r);
        let m = &a * a.adjoint() + &b * b.adjoint();
        let s = psd_sqrt(&m);
        let back = &s * &s;
        assert!((&back - &m).norm() < 1e-10 * m.norm());
    }

    #[test]
    fn principal_eigenpair_of_rank1() {
        let mut r = rng::stream(2, "subproblem-test", &[0]);
        let a = complex_gaussian(5, &mut r);
        let m = &a * a.adjoint();
        let (val, vec) = principal_eigenpair(&m);
        assert!((val - a.norm_squared()).abs() < 1e-10 * a.norm_squared());
        let overlap = vec.dotc(&a).norm() / a.norm();
        assert!((overlap - 1.0).abs() < 1e-10);
        assert!(rank1_defect(&m) < 1e-12);
    }

    #[test]
    fn phase_align_makes_inner_product_real() {
        let mut r = rng::stream(3, "subproblem-test", &[0]);
        let a = complex_gaussian(4, &mut r);
        let b = complex_gaussian(4, &mut r);
        let aligned = phase_align(&a, &b);
        let inner = b.dotc(&aligned);
        assert!(inner.im.abs() < 1e-12 * inner.norm().max(1e-30));
        assert!(inner.re >= 0.0);
        assert!((aligned.norm() - a.norm()).abs() < 1e-12);
    }
}
