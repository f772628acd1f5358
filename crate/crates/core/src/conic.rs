//! Conic solver layer shared by the four convex subproblems.
//!
//! A [`ConicProblem`] is a maximize-form program over real scalars plus
//! complex Hermitian PSD matrix variables (carried through their real
//! `[[Re, -Im], [Im, Re]]` embedding), with linear constraints, sum-of-squares
//! (second-order cone) constraints, `t <= log2(affine)` hypographs
//! (exponential cone), and `affine^{-p} <= affine` terms (power cone).
//! Assembly and the interior-point solve are delegated to Clarabel; solutions
//! are re-verified against the original constraint list before a status is
//! reported.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, ExponentialConeT, IPSolver, NonnegativeConeT, PSDTriangleConeT,
    PowerConeT, SecondOrderConeT, SolverStatus, SupportedConeT, ZeroConeT,
};
use nalgebra::{Complex, DMatrix};
use thiserror::Error;

type C64 = Complex<f64>;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("bad problem: {0}")]
    BadProblem(String),

    #[error("solver setup failed: {0}")]
    Setup(String),
}

/// Index of one scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub usize);

/// Sparse affine expression `sum coeff_i * x_i + constant`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr {
            terms: vec![(v.0, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(v: VarId, coeff: f64) -> Self {
        LinExpr {
            terms: vec![(v.0, coeff)],
            constant: 0.0,
        }
    }

    pub fn push(&mut self, v: VarId, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.terms.push((v.0, coeff));
        }
        self
    }

    pub fn offset(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(ix, c) in &other.terms {
            if c * scale != 0.0 {
                self.terms.push((ix, c * scale));
            }
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|&(ix, c)| (ix, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(ix, c)| c * x[ix]).sum::<f64>()
    }
}

/// A complex Hermitian n x n matrix variable, parameterized by n real
/// diagonal entries followed by (re, im) pairs for the strict upper triangle
/// in column-major order. Constrained PSD through its real embedding.
#[derive(Debug, Clone)]
pub struct HermitianVar {
    pub n: usize,
    base: usize,
}

impl HermitianVar {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Variable index of the (real) diagonal entry i.
    pub fn diag(&self, i: usize) -> VarId {
        debug_assert!(i < self.n);
        VarId(self.base + i)
    }

    fn upper_pair(&self, i: usize, j: usize) -> (usize, usize) {
        debug_assert!(i < j && j < self.n);
        let k = j * (j - 1) / 2 + i;
        let base = self.base + self.n + 2 * k;
        (base, base + 1)
    }

    /// Variable index of Re(H_ij), i < j.
    pub fn re(&self, i: usize, j: usize) -> VarId {
        VarId(self.upper_pair(i, j).0)
    }

    /// Variable index of Im(H_ij), i < j.
    pub fn im(&self, i: usize, j: usize) -> VarId {
        VarId(self.upper_pair(i, j).1)
    }

    /// Tr(M H) as a linear expression; M must be Hermitian.
    pub fn trace_with(&self, m: &DMatrix<C64>) -> LinExpr {
        debug_assert_eq!(m.nrows(), self.n);
        let mut e = LinExpr::zero();
        for i in 0..self.n {
            e.push(self.diag(i), m[(i, i)].re);
            for j in (i + 1)..self.n {
                e.push(self.re(i, j), 2.0 * m[(i, j)].re);
                e.push(self.im(i, j), 2.0 * m[(i, j)].im);
            }
        }
        e
    }
}

/// Real symmetric 2n x 2n embedding [[Re H, -Im H], [Im H, Re H]] of a
/// complex Hermitian H. PSD iff H is PSD; the trace doubles.
pub fn hermitian_real_embedding(h: &DMatrix<C64>) -> Result<DMatrix<f64>, ConicError> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(ConicError::BadProblem(format!(
            "embedding needs a square matrix, got {}x{}",
            n,
            h.ncols()
        )));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    if asym > 1e-10 {
        return Err(ConicError::NotHermitian(asym));
    }
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (h[(i, j)].re + h[(j, i)].re);
            let im = 0.5 * (h[(i, j)].im - h[(j, i)].im);
            m[(i, j)] = re;
            m[(n + i, n + j)] = re;
            m[(i, n + j)] = -im;
            m[(n + i, j)] = im;
        }
    }
    Ok(m)
}

enum Cone {
    /// `expr == 0`.
    Eq(LinExpr),
    /// `expr >= 0`.
    Nonneg(LinExpr),
    /// `sum squares_i^2 <= bound`.
    Soc { squares: Vec<LinExpr>, bound: LinExpr },
    /// `t <= log2(arg)`.
    Log2 { t: LinExpr, arg: LinExpr },
    /// `base^{-p} <= bound`, base > 0.
    NegPower { base: LinExpr, p: f64, bound: LinExpr },
    /// svec entries (column-major upper triangle, unscaled) of a symmetric
    /// matrix that must be PSD.
    Psd { dim: usize, entries: Vec<LinExpr> },
}

/// Maximize-form conic program builder.
#[derive(Default)]
pub struct ConicProblem {
    nvars: usize,
    objective: LinExpr,
    cones: Vec<Cone>,
}

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iters: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            max_iters: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

/// Result of one solve, with independently recomputed worst violation.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.0]
    }

    pub fn eval(&self, e: &LinExpr) -> f64 {
        e.eval(&self.x)
    }

    /// Reconstruct a Hermitian matrix variable from the primal point.
    pub fn hermitian(&self, hv: &HermitianVar) -> DMatrix<C64> {
        let n = hv.n;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(self.x[hv.diag(i).0], 0.0);
            for j in (i + 1)..n {
                let v = C64::new(self.x[hv.re(i, j).0], self.x[hv.im(i, j).0]);
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        m
    }
}

impl ConicProblem {
    pub fn new() -> Self {
        ConicProblem::default()
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn free_var(&mut self) -> VarId {
        let id = VarId(self.nvars);
        self.nvars += 1;
        id
    }

    pub fn nonneg_var(&mut self) -> VarId {
        let v = self.free_var();
        self.cones.push(Cone::Nonneg(LinExpr::var(v)));
        v
    }

    pub fn bounded_var(&mut self, lo: f64, hi: f64) -> VarId {
        let v = self.free_var();
        self.add_ge(LinExpr::var(v), lo);
        self.add_le(LinExpr::var(v), hi);
        v
    }

    /// Allocate an n x n complex Hermitian PSD matrix variable.
    pub fn hermitian_psd_var(&mut self, n: usize) -> HermitianVar {
        let base = self.nvars;
        self.nvars += n * n;
        let hv = HermitianVar { n, base };
        let m = 2 * n;
        let mut entries = Vec::with_capacity(m * (m + 1) / 2);
        // column-major upper triangle of the real embedding
        for b in 0..m {
            for a in 0..=b {
                let mut e = LinExpr::zero();
                if b < n {
                    // Re-block
                    if a == b {
                        e.push(hv.diag(a), 1.0);
                    } else {
                        e.push(hv.re(a, b), 1.0);
                    }
                } else if a < n {
                    // (-Im)-block entry (a, b - n)
                    let bp = b - n;
                    use std::cmp::Ordering;
                    match a.cmp(&bp) {
                        Ordering::Less => {
                            e.push(hv.im(a, bp), -1.0);
                        }
                        Ordering::Equal => {}
                        Ordering::Greater => {
                            e.push(hv.im(bp, a), 1.0);
                        }
                    }
                } else {
                    // lower-right Re-block
                    let (ap, bp) = (a - n, b - n);
                    if ap == bp {
                        e.push(hv.diag(ap), 1.0);
                    } else {
                        e.push(hv.re(ap, bp), 1.0);
                    }
                }
                entries.push(e);
            }
        }
        self.cones.push(Cone::Psd { dim: m, entries });
        hv
    }

    /// Maximize this expression.
    pub fn set_objective(&mut self, e: LinExpr) {
        self.objective = e;
    }

    pub fn add_eq(&mut self, mut expr: LinExpr, rhs: f64) {
        expr.offset(-rhs);
        self.cones.push(Cone::Eq(expr));
    }

    /// `expr <= rhs`.
    pub fn add_le(&mut self, expr: LinExpr, rhs: f64) {
        let mut e = LinExpr::constant(rhs);
        e.add(&expr, -1.0);
        self.cones.push(Cone::Nonneg(e));
    }

    /// `expr >= rhs`.
    pub fn add_ge(&mut self, mut expr: LinExpr, rhs: f64) {
        expr.offset(-rhs);
        self.cones.push(Cone::Nonneg(expr));
    }

    /// `t <= log2(arg)`; `arg > 0` is implied by the cone.
    pub fn add_log2_hypograph(&mut self, t: LinExpr, arg: LinExpr) {
        self.cones.push(Cone::Log2 { t, arg });
    }

    /// `sum squares_i(x)^2 <= bound(x)`.
    pub fn add_sum_squares_le(&mut self, squares: Vec<LinExpr>, bound: LinExpr) {
        self.cones.push(Cone::Soc { squares, bound });
    }

    /// `base^{-p} <= bound` for p > 0, with base > 0 implied.
    pub fn add_neg_power_le(&mut self, base: LinExpr, p: f64, bound: LinExpr) {
        assert!(p > 0.0, "exponent must be positive");
        self.cones.push(Cone::NegPower { base, p, bound });
    }

    /// Add `weight * log2(arg)` to the objective via an epigraph variable.
    pub fn maximize_log2_term(&mut self, weight: f64, arg: LinExpr) {
        assert!(weight > 0.0, "concave log term needs positive weight");
        let t = self.free_var();
        self.add_log2_hypograph(LinExpr::var(t), arg);
        self.objective.push(t, weight);
    }

    /// Assemble and solve. Returns `Err` only for malformed problems; solver
    /// outcomes (infeasible, iteration limit, numerical failure) come back in
    /// the solution status.
    pub fn solve(&self, opts: &SolveOptions) -> Result<ConicSolution, ConicError> {
        let n = self.nvars;
        for (ix, _) in &self.objective.terms {
            if *ix >= n {
                return Err(ConicError::BadProblem("objective references unknown variable".into()));
            }
        }

        // rows: (row index, var, coeff) triplets of A; s = b - A x
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        let push_expr = |expr: &LinExpr, scale: f64, row: usize, triplets: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
            debug_assert_eq!(b.len(), row);
            b.push(scale * expr.constant);
            for &(ix, c) in &expr.terms {
                triplets.push((row, ix, -scale * c));
            }
        };

        // equalities first, then scalar inequalities, then the nonlinear cones
        for cone in &self.cones {
            if let Cone::Eq(e) = cone {
                push_expr(e, 1.0, row, &mut triplets, &mut b);
                row += 1;
            }
        }
        if row > 0 {
            cones.push(ZeroConeT(row));
        }
        let ineq_start = row;
        for cone in &self.cones {
            if let Cone::Nonneg(e) = cone {
                push_expr(e, 1.0, row, &mut triplets, &mut b);
                row += 1;
            }
        }
        if row > ineq_start {
            cones.push(NonnegativeConeT(row - ineq_start));
        }
        for cone in &self.cones {
            match cone {
                Cone::Eq(_) | Cone::Nonneg(_) => {}
                Cone::Soc { squares, bound } => {
                    // ((bound+1)/2, (bound-1)/2, squares...) in SOC
                    let mut top = bound.scaled(0.5);
                    top.offset(0.5);
                    let mut second = bound.scaled(0.5);
                    second.offset(-0.5);
                    push_expr(&top, 1.0, row, &mut triplets, &mut b);
                    push_expr(&second, 1.0, row + 1, &mut triplets, &mut b);
                    for (i, sq) in squares.iter().enumerate() {
                        push_expr(sq, 1.0, row + 2 + i, &mut triplets, &mut b);
                    }
                    row += 2 + squares.len();
                    cones.push(SecondOrderConeT(2 + squares.len()));
                }
                Cone::Log2 { t, arg } => {
                    // (t ln2, 1, arg) in K_exp
                    push_expr(&t.scaled(LN2), 1.0, row, &mut triplets, &mut b);
                    push_expr(&LinExpr::constant(1.0), 1.0, row + 1, &mut triplets, &mut b);
                    push_expr(arg, 1.0, row + 2, &mut triplets, &mut b);
                    row += 3;
                    cones.push(ExponentialConeT());
                }
                Cone::NegPower { base, p, bound } => {
                    // (bound, base, 1) in K_pow(1/(1+p))
                    let alpha = 1.0 / (1.0 + p);
                    push_expr(bound, 1.0, row, &mut triplets, &mut b);
                    push_expr(base, 1.0, row + 1, &mut triplets, &mut b);
                    push_expr(&LinExpr::constant(1.0), 1.0, row + 2, &mut triplets, &mut b);
                    row += 3;
                    cones.push(PowerConeT(alpha));
                }
                Cone::Psd { dim, entries } => {
                    let mut k = 0usize;
                    for col in 0..*dim {
                        for r in 0..=col {
                            let scale = if r == col { 1.0 } else { std::f64::consts::SQRT_2 };
                            push_expr(&entries[k], scale, row, &mut triplets, &mut b);
                            row += 1;
                            k += 1;
                        }
                    }
                    cones.push(PSDTriangleConeT(*dim));
                }
            }
        }

        let a = csc_from_triplets(row, n, &mut triplets);
        let p = CscMatrix::zeros((n, n));
        let q: Vec<f64> = {
            let mut q = vec![0.0; n];
            for &(ix, c) in &self.objective.terms {
                q[ix] -= c; // minimize -objective
            }
            q
        };
        let settings = DefaultSettings {
            verbose: opts.verbose || std::env::var_os("ARISIM_CONIC_VERBOSE").is_some(),
            max_iter: opts.max_iters,
            tol_feas: opts.tol_feas,
            tol_gap_abs: opts.tol_gap,
            tol_gap_rel: opts.tol_gap,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| ConicError::Setup(format!("{e:?}")))?;
        solver.solve();

        let x = solver.solution.x.clone();
        let iterations = solver.solution.iterations;
        let raw = solver.solution.status;
        let objective = self.objective.eval(&x);
        let max_violation = self.max_violation(&x);

        let status = match raw {
            SolverStatus::Solved => ConicStatus::Optimal,
            SolverStatus::AlmostSolved => {
                if max_violation <= 10.0 * opts.tol_feas {
                    ConicStatus::Optimal
                } else {
                    if std::env::var_os("ARISIM_CONIC_VERBOSE").is_some() {
                        eprintln!("AlmostSolved downgraded: violation {max_violation:.3e}");
                    }
                    ConicStatus::NumericalFailure
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                ConicStatus::Infeasible
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => ConicStatus::IterationLimit,
            _ => ConicStatus::NumericalFailure,
        };

        Ok(ConicSolution {
            status,
            x,
            objective,
            max_violation,
            iterations,
        })
    }

    /// Worst relative constraint violation at `x`, recomputed from the
    /// original constraint list (not the solver's internal residuals). Each
    /// violation is scaled by the magnitude of the terms entering the
    /// constraint, mirroring how interior-point feasibility is measured.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        fn scale_of(e: &LinExpr, x: &[f64]) -> f64 {
            e.constant.abs() + e.terms.iter().map(|&(ix, c)| (c * x[ix]).abs()).sum::<f64>()
        }
        let mut worst = 0.0f64;
        for cone in &self.cones {
            let v = match cone {
                Cone::Eq(e) => e.eval(x).abs() / (1.0 + scale_of(e, x)),
                Cone::Nonneg(e) => (-e.eval(x)).max(0.0) / (1.0 + scale_of(e, x)),
                Cone::Soc { squares, bound } => {
                    let s: f64 = squares.iter().map(|e| e.eval(x).powi(2)).sum();
                    let b = bound.eval(x);
                    (s - b).max(0.0) / (1.0 + s.abs() + b.abs())
                }
                Cone::Log2 { t, arg } => {
                    let a = arg.eval(x);
                    if a <= 0.0 {
                        1.0 + a.abs()
                    } else {
                        let tv = t.eval(x);
                        (tv - a.log2()).max(0.0) / (1.0 + tv.abs() + a.log2().abs())
                    }
                }
                Cone::NegPower { base, p, bound } => {
                    let u = base.eval(x);
                    if u <= 0.0 {
                        1.0 + u.abs()
                    } else {
                        let lhs = u.powf(-p);
                        let b = bound.eval(x);
                        (lhs - b).max(0.0) / (1.0 + lhs.abs() + b.abs())
                    }
                }
                Cone::Psd { dim, entries } => {
                    let mut m = DMatrix::zeros(*dim, *dim);
                    let mut k = 0usize;
                    for col in 0..*dim {
                        for r in 0..=col {
                            let v = entries[k].eval(x);
                            m[(r, col)] = v;
                            m[(col, r)] = v;
                            k += 1;
                        }
                    }
                    let eig = m.symmetric_eigen();
                    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                    (-eig.eigenvalues.min()).max(0.0) / (1.0 + max_abs)
                }
            };
            worst = worst.max(v);
        }
        worst
    }
}

fn csc_from_triplets(m: usize, n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    triplets.sort_by_key(|&(r, c, _)| (c, r));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval = Vec::with_capacity(triplets.len());
    let mut prev: Option<(usize, usize)> = None;
    for &(r, c, v) in triplets.iter() {
        if prev == Some((c, r)) {
            // duplicate entry: accumulate
            let last = nzval.len() - 1;
            nzval[last] += v;
        } else {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
            prev = Some((c, r));
        }
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> DMatrix<C64> {
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn embedding_of_identity_is_identity() {
        let id = DMatrix::from_diagonal_element(3, 3, C64::new(1.0, 0.0));
        let m = hermitian_real_embedding(&id).unwrap();
        assert_eq!(m, DMatrix::identity(6, 6));
    }

    #[test]
    fn embedding_preserves_spectrum_with_doubled_multiplicity() {
        // H with eigenvalues {1, -1} embeds to a non-PSD matrix.
        let h = DMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0), C64::new(0.0, -1.0),
            C64::new(0.0, 1.0), C64::new(0.0, 0.0),
        ]);
        let m = hermitian_real_embedding(&h).unwrap();
        let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, expect) in eig.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_trace_identity() {
        let mut r = rng::stream(5, "conic-test", &[0]);
        for _ in 0..20 {
            let a = random_hermitian(4, &mut r);
            let b = random_hermitian(4, &mut r);
            let ea = hermitian_real_embedding(&a).unwrap();
            let eb = hermitian_real_embedding(&b).unwrap();
            let lhs = (&ea * &eb).trace();
            let rhs = 2.0 * (&a * b.adjoint()).trace().re;
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn embedding_rejects_non_hermitian() {
        let h = DMatrix::from_row_slice(2, 2, &[
            C64::new(1.0, 0.0), C64::new(1.0, 0.0),
            C64::new(0.0, 0.0), C64::new(1.0, 0.0),
        ]);
        assert!(matches!(hermitian_real_embedding(&h), Err(ConicError::NotHermitian(_))));
    }

    #[test]
    fn min_trace_with_unit_diagonal_is_identity() {
        // min Tr(X) s.t. X psd, diag(X) = 1, n = 3  ->  3 at X = I
        let mut p = ConicProblem::new();
        let x = p.hermitian_psd_var(3);
        for i in 0..3 {
            p.add_eq(LinExpr::var(x.diag(i)), 1.0);
        }
        let id = DMatrix::from_diagonal_element(3, 3, C64::new(1.0, 0.0));
        let tr = x.trace_with(&id);
        p.set_objective(tr.scaled(-1.0)); // maximize -Tr
        let sol = p.solve(&SolveOptions::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.objective + 3.0).abs() < 1e-7, "obj {}", sol.objective);
        let xm = sol.hermitian(&x);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((xm[(i, j)] - C64::new(expect, 0.0)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn log_objective_hits_upper_bound() {
        // max log2(1 + x) s.t. 0 <= x <= 3  ->  2 at x = 3
        let mut p = ConicProblem::new();
        let x = p.bounded_var(0.0, 3.0);
        let mut arg = LinExpr::var(x);
        arg.offset(1.0);
        p.maximize_log2_term(1.0, arg);
        let sol = p.solve(&SolveOptions::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-6, "obj {}", sol.objective);
        assert!((sol.value(x) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn random_sdp_matches_grid_oracle() {
        // max Tr(C X) over 2x2 Hermitian X psd with fixed diagonal.
        // Feasible set is |X12|^2 <= X11 X22: brute-force the off-diagonal.
        let mut r = rng::stream(9, "conic-test", &[1]);
        for trial in 0..5 {
            let c = random_hermitian(2, &mut r);
            let (d1, d2) = (0.5 + r.gen::<f64>(), 0.5 + r.gen::<f64>());
            let mut p = ConicProblem::new();
            let x = p.hermitian_psd_var(2);
            p.add_eq(LinExpr::var(x.diag(0)), d1);
            p.add_eq(LinExpr::var(x.diag(1)), d2);
            p.set_objective(x.trace_with(&c));
            let sol = p.solve(&SolveOptions::default()).unwrap();
            assert_eq!(sol.status, ConicStatus::Optimal);

            let rad = (d1 * d2).sqrt();
            let mut best = f64::NEG_INFINITY;
            let steps = 400;
            for a in 0..=steps {
                for bi in 0..=steps {
                    let re = rad * (2.0 * a as f64 / steps as f64 - 1.0);
                    let im = rad * (2.0 * bi as f64 / steps as f64 - 1.0);
                    if re * re + im * im > d1 * d2 {
                        continue;
                    }
                    let val = c[(0, 0)].re * d1
                        + c[(1, 1)].re * d2
                        + 2.0 * (c[(0, 1)].re * re + c[(0, 1)].im * im);
                    best = best.max(val);
                }
            }
            assert!(
                (sol.objective - best).abs() < 1e-3,
                "trial {trial}: solver {} vs grid {best}",
                sol.objective
            );
        }
    }

    #[test]
    fn log_of_affine_matches_golden_section_oracle() {
        // max 2 log2(x + 1) + log2(4 - x) over x in [0, 3.5]
        let f = |x: f64| 2.0 * (x + 1.0).log2() + (4.0 - x).log2();
        let mut p = ConicProblem::new();
        let x = p.bounded_var(0.0, 3.5);
        let mut a1 = LinExpr::var(x);
        a1.offset(1.0);
        let mut a2 = LinExpr::term(x, -1.0);
        a2.offset(4.0);
        p.maximize_log2_term(2.0, a1);
        p.maximize_log2_term(1.0, a2);
        let sol = p.solve(&SolveOptions::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);

        // golden-section oracle
        let (mut lo, mut hi) = (0.0f64, 3.5f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        while hi - lo > 1e-10 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if f(m1) < f(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let oracle = f(0.5 * (lo + hi));
        assert!(
            (sol.objective - oracle).abs() < 1e-6,
            "solver {} vs oracle {oracle}",
            sol.objective
        );
    }

    #[test]
    fn sum_squares_constraint_binds() {
        // max x + y s.t. x^2 + y^2 <= 2 -> 2 at (1, 1)
        let mut p = ConicProblem::new();
        let x = p.free_var();
        let y = p.free_var();
        let mut obj = LinExpr::var(x);
        obj.push(y, 1.0);
        p.set_objective(obj);
        p.add_sum_squares_le(vec![LinExpr::var(x), LinExpr::var(y)], LinExpr::constant(2.0));
        let sol = p.solve(&SolveOptions::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-7);
        assert!((sol.value(x) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn neg_power_constraint_matches_closed_form() {
        // max u s.t. u^{-p} <= t0  ->  unbounded upward; instead:
        // min u s.t. u^{-p} <= t0 with u free means u -> t0^{-1/p} from above.
        // maximize -u with u >= 0 and u^{-p} <= 4 -> u = 4^{-1/p}
        let p_exp = 4.0 / 2.3;
        let mut p = ConicProblem::new();
        let u = p.nonneg_var();
        p.set_objective(LinExpr::term(u, -1.0));
        p.add_neg_power_le(LinExpr::var(u), p_exp, LinExpr::constant(4.0));
        let sol = p.solve(&SolveOptions::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        let expect = 4f64.powf(-1.0 / p_exp);
        assert!(
            (sol.value(u) - expect).abs() < 1e-6,
            "u {} vs {expect}",
            sol.value(u)
        );
    }

    #[test]
    fn infeasible_problem_is_reported() {
        let mut p = ConicProblem::new();
        let x = p.nonneg_var();
        p.add_le(LinExpr::var(x), -1.0);
        p.set_objective(LinExpr::var(x));
        let sol = p.solve(&SolveOptions::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Infeasible);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let build = || {
            let mut p = ConicProblem::new();
            let x = p.hermitian_psd_var(3);
            for i in 0..3 {
                p.add_eq(LinExpr::var(x.diag(i)), 1.0 + i as f64 * 0.25);
            }
            let mut r = rng::stream(3, "conic-test", &[7]);
            let c = random_hermitian(3, &mut r);
            p.set_objective(x.trace_with(&c));
            p
        };
        let a = build().solve(&SolveOptions::default()).unwrap();
        let b = build().solve(&SolveOptions::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert!((a.objective - b.objective).abs() < 1e-9);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn reported_optimal_violations_stay_small() {
        let opts = SolveOptions::default();
        let mut p = ConicProblem::new();
        let x = p.hermitian_psd_var(4);
        for i in 0..4 {
            p.add_eq(LinExpr::var(x.diag(i)), 1.0);
        }
        let mut r = rng::stream(11, "conic-test", &[2]);
        let c = random_hermitian(4, &mut r);
        p.set_objective(x.trace_with(&c));
        let sol = p.solve(&opts).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!(
            sol.max_violation <= 10.0 * opts.tol_feas,
            "violation {}",
            sol.max_violation
        );
    }
}
