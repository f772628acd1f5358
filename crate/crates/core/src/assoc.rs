//! ARIS-group association block: binary variables relaxed to [0, 1] with a
//! concave penalty driving them back to {0, 1}, solved by successive convex
//! approximation over first-order Taylor surrogates, then rounded to a
//! feasible assignment.

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use thiserror::Error;

use crate::channel::ChannelSet;
use crate::conic::{ConicProblem, LinExpr, VarId};
use crate::rates::DecisionState;
use crate::scenario::{ScenarioConfig, Topology, UserRole};
use crate::subproblem::{
    log2_upper_bound, quad_form_lower_bound, require_optimal, subproblem_options,
    AffineSurrogate, QuadSurrogate, SolveError,
};

type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum AssocError {
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Per-(user, beam) response vectors c = Gamma w_l where Gamma stacks the
/// direct channel row over every ARIS's reflected row. With the augmented
/// association row chi = [1, chi_1k, ..., chi_Jk], the received beam power
/// is |chi . c|^2 = chi C chi^T for C = c c^dag.
#[derive(Debug, Clone)]
pub struct CMatrices {
    /// c[user][beam], each of length J + 1.
    pub c_vec: Vec<Vec<DVector<C64>>>,
}

impl CMatrices {
    /// The lifted Hermitian matrix C = c c^dag of one (user, beam) pair.
    pub fn matrix(&self, user: usize, beam: usize) -> DMatrix<C64> {
        let c = &self.c_vec[user][beam];
        c * c.adjoint()
    }

    /// chi_aug C chi_aug^T for a real augmented row.
    pub fn quad(&self, user: usize, beam: usize, chi_aug: &[f64]) -> f64 {
        let c = &self.c_vec[user][beam];
        let mut acc = C64::new(0.0, 0.0);
        for (a, &x) in chi_aug.iter().enumerate() {
            acc += c[a] * x;
        }
        acc.norm_sqr()
    }
}

/// Build the response vectors at the current phases and beamformers.
pub fn build_c_matrices(
    channels: &ChannelSet,
    topo: &Topology,
    theta: &[DVector<f64>],
    w_set: &[DVector<C64>],
) -> CMatrices {
    let j_count = channels.g_sat.len();
    let l = channels.h.first().map_or(0, |h| h.len());
    let c_vec = (0..topo.users.len())
        .map(|i| {
            // Gamma: (J+1) x L
            let mut gamma = DMatrix::zeros(j_count + 1, l);
            for c in 0..l {
                gamma[(0, c)] = channels.h[i][c].conj();
            }
            for j in 0..j_count {
                for n in 0..channels.g_ref[j][i].len() {
                    let wcoef = channels.g_ref[j][i][n].conj() * C64::from_polar(1.0, theta[j][n]);
                    for c in 0..l {
                        gamma[(j + 1, c)] += wcoef * channels.g_sat[j][(n, c)];
                    }
                }
            }
            w_set.iter().map(|w| &gamma * w).collect()
        })
        .collect();
    CMatrices { c_vec }
}

/// Linearization of the concave penalty term chi - chi^2 around `chi_l`;
/// a global upper bound with equality at the expansion point.
pub fn penalty_upper_bound(chi_l: f64) -> AffineSurrogate {
    AffineSurrogate {
        slope: 1.0 - 2.0 * chi_l,
        intercept: chi_l * chi_l,
    }
}

/// One SCA iterate of the relaxed association problem.
#[derive(Debug, Clone)]
pub struct AssociationIterate {
    /// Relaxed association, J x K in [0, 1].
    pub chi: DMatrix<f64>,
    /// Numerator slack per user (normalized units, noise = 1).
    pub psi_bar: Vec<f64>,
    /// Denominator slack per user.
    pub psi_hat: Vec<f64>,
    pub omega: Vec<f64>,
    pub tau: f64,
}

fn chi_aug_row(chi: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(chi.nrows() + 1);
    row.push(1.0);
    for j in 0..chi.nrows() {
        row.push(chi[(j, k)]);
    }
    row
}

impl AssociationIterate {
    /// Initialize slacks and omega consistently at `chi` (surrogate
    /// constraints then hold with equality, so the point is SCA-feasible).
    pub fn at_point(
        chi: DMatrix<f64>,
        c_set: &CMatrices,
        topo: &Topology,
        tau: f64,
    ) -> AssociationIterate {
        let users = topo.users.len();
        let mut psi_bar = vec![0.0; users];
        let mut psi_hat = vec![0.0; users];
        let mut omega = vec![f64::INFINITY; topo.group_count()];
        for (i, u) in topo.users.iter().enumerate() {
            let sigma2 = u.noise_power_w;
            let aug = chi_aug_row(&chi, u.group);
            let mut interf = 1.0;
            let mut total = 1.0;
            for l in 0..topo.group_count() {
                let p = c_set.quad(i, l, &aug) / sigma2;
                total += p;
                if l != u.group {
                    interf += p;
                }
            }
            psi_bar[i] = total;
            psi_hat[i] = interf;
            if u.role == UserRole::Intended {
                let r = (total / interf).log2();
                if r < omega[u.group] {
                    omega[u.group] = r;
                }
            }
        }
        AssociationIterate {
            chi,
            psi_bar,
            psi_hat,
            omega,
            tau,
        }
    }

    /// True penalized objective (31): sum_k Omega_k(chi) - tau sum (chi - chi^2),
    /// with Omega_k evaluated exactly from the quadratic forms.
    pub fn penalized_objective(&self, c_set: &CMatrices, topo: &Topology) -> f64 {
        let mut value = 0.0;
        for k in 0..topo.group_count() {
            let aug = chi_aug_row(&self.chi, k);
            let mut min_rate = f64::INFINITY;
            for &i in &topo.intended_of(k) {
                let sigma2 = topo.users[i].noise_power_w;
                let mut interf = 1.0;
                let mut total = 1.0;
                for l in 0..topo.group_count() {
                    let p = c_set.quad(i, l, &aug) / sigma2;
                    total += p;
                    if l != k {
                        interf += p;
                    }
                }
                min_rate = min_rate.min((total / interf).log2());
            }
            value += min_rate;
        }
        for j in 0..self.chi.nrows() {
            for k in 0..self.chi.ncols() {
                let c = self.chi[(j, k)];
                value -= self.tau * (c - c * c);
            }
        }
        value
    }

    /// Worst distance of any entry from {0, 1}.
    pub fn binarization_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for v in self.chi.iter() {
            worst = worst.max(v * (1.0 - v));
        }
        worst
    }
}

/// Surrogate bundle at one expansion point: everything problem (34) needs.
#[derive(Debug, Clone)]
pub struct AssocSurrogates {
    /// Penalty upper bounds per (j, k).
    pub penalty: Vec<Vec<AffineSurrogate>>,
    /// Quadratic-form lower bounds per (user, beam).
    pub quad_lb: Vec<Vec<QuadSurrogate>>,
    /// log2 upper bound at psi_hat (intended users' denominator slack).
    pub log_hat_ub: Vec<AffineSurrogate>,
    /// log2 upper bound at psi_bar (eavesdroppers' numerator slack).
    pub log_bar_ub: Vec<AffineSurrogate>,
}

/// Build every first-order surrogate of the association problem at `point`.
pub fn fts_association(
    point: &AssociationIterate,
    c_set: &CMatrices,
    topo: &Topology,
) -> AssocSurrogates {
    let j_count = point.chi.nrows();
    let k_count = point.chi.ncols();
    let penalty = (0..j_count)
        .map(|j| {
            (0..k_count)
                .map(|k| penalty_upper_bound(point.chi[(j, k)]))
                .collect()
        })
        .collect();
    let quad_lb = (0..topo.users.len())
        .map(|i| {
            let aug = chi_aug_row(&point.chi, topo.users[i].group);
            (0..k_count)
                .map(|l| {
                    let sigma2 = topo.users[i].noise_power_w;
                    let c = self_scaled_matrix(c_set, i, l, sigma2);
                    quad_form_lower_bound(&c, &aug)
                })
                .collect()
        })
        .collect();
    let log_hat_ub = point.psi_hat.iter().map(|&v| log2_upper_bound(v)).collect();
    let log_bar_ub = point.psi_bar.iter().map(|&v| log2_upper_bound(v)).collect();
    AssocSurrogates {
        penalty,
        quad_lb,
        log_hat_ub,
        log_bar_ub,
    }
}

fn self_scaled_matrix(c_set: &CMatrices, user: usize, beam: usize, sigma2: f64) -> DMatrix<C64> {
    c_set.matrix(user, beam) / C64::new(sigma2, 0.0)
}

/// Solve one convexified association step (34) around `point`.
pub fn association_sca_step(
    point: &AssociationIterate,
    c_set: &CMatrices,
    topo: &Topology,
    cfg: &ScenarioConfig,
) -> Result<AssociationIterate, SolveError> {
    let (p, chi_vars, omega, psi_bar, psi_hat, caps) =
        build_association_problem(point, c_set, topo, cfg);
    let sol = p.solve(&subproblem_options())?;
    require_optimal(&sol)?;

    let j_count = point.chi.nrows();
    let k_count = point.chi.ncols();
    let mut chi = DMatrix::zeros(j_count, k_count);
    for j in 0..j_count {
        for k in 0..k_count {
            chi[(j, k)] = sol.value(chi_vars[j][k]).clamp(0.0, 1.0);
        }
    }
    Ok(AssociationIterate {
        chi,
        psi_bar: (0..caps.len()).map(|i| sol.value(psi_bar[i]) * caps[i]).collect(),
        psi_hat: (0..caps.len()).map(|i| sol.value(psi_hat[i]) * caps[i]).collect(),
        omega: omega.iter().map(|&v| sol.value(v)).collect(),
        tau: point.tau,
    })
}

#[doc(hidden)]
pub fn build_association_problem(
    point: &AssociationIterate,
    c_set: &CMatrices,
    topo: &Topology,
    cfg: &ScenarioConfig,
) -> (ConicProblem, Vec<Vec<VarId>>, Vec<VarId>, Vec<VarId>, Vec<VarId>, Vec<f64>) {
    let j_count = point.chi.nrows();
    let k_count = point.chi.ncols();
    let sur = fts_association(point, c_set, topo);

    let mut p = ConicProblem::new();
    let chi_vars: Vec<Vec<VarId>> = (0..j_count)
        .map(|_| (0..k_count).map(|_| p.bounded_var(0.0, 1.0)).collect())
        .collect();
    let omega: Vec<VarId> = (0..k_count).map(|_| p.free_var()).collect();
    // slack variables are solved in units of the per-user power cap so every
    // row mixes O(1) quantities; caps also scale the log arguments
    let caps: Vec<f64> = (0..topo.users.len())
        .map(|i| {
            let sigma2 = topo.users[i].noise_power_w;
            let mut cap = 1.0;
            for l in 0..k_count {
                cap += (1 + j_count) as f64 * c_set.c_vec[i][l].norm_squared() / sigma2;
            }
            cap
        })
        .collect();
    let psi_bar: Vec<VarId> = (0..topo.users.len()).map(|_| p.free_var()).collect();
    let psi_hat: Vec<VarId> = (0..topo.users.len()).map(|_| p.free_var()).collect();

    // rows sum to one, columns at most one
    for j in 0..j_count {
        let mut row = LinExpr::zero();
        for k in 0..k_count {
            row.push(chi_vars[j][k], 1.0);
        }
        p.add_eq(row, 1.0);
    }
    for k in 0..k_count {
        let mut col = LinExpr::zero();
        for j in 0..j_count {
            col.push(chi_vars[j][k], 1.0);
        }
        p.add_le(col, 1.0);
    }

    // objective: sum Omega_k - tau * sum penalty_ub
    let mut obj = LinExpr::zero();
    for &o in &omega {
        obj.push(o, 1.0);
    }
    for j in 0..j_count {
        for k in 0..k_count {
            obj.push(chi_vars[j][k], -point.tau * sur.penalty[j][k].slope);
            obj.offset(-point.tau * sur.penalty[j][k].intercept);
        }
    }
    p.set_objective(obj);

    let quad_lb_expr = |sur_q: &QuadSurrogate, k: usize| -> LinExpr {
        let mut e = LinExpr::constant(sur_q.intercept + sur_q.grad[0]);
        for j in 0..j_count {
            e.push(chi_vars[j][k], sur_q.grad[j + 1]);
        }
        e
    };

    for (i, u) in topo.users.iter().enumerate() {
        let k = u.group;
        let sigma2 = u.noise_power_w;
        let cap = caps[i];
        // squares of the kept-convex quadratics, in per-cap amplitude units
        let soc_squares = |beams: &dyn Fn(usize) -> bool| -> Vec<LinExpr> {
            let mut squares = Vec::new();
            for l in 0..k_count {
                if !beams(l) {
                    continue;
                }
                let c = &c_set.c_vec[i][l];
                let scale = 1.0 / (sigma2 * cap).sqrt();
                let mut re = LinExpr::constant(c[0].re * scale);
                let mut im = LinExpr::constant(c[0].im * scale);
                for j in 0..j_count {
                    re.push(chi_vars[j][k], c[j + 1].re * scale);
                    im.push(chi_vars[j][k], c[j + 1].im * scale);
                }
                squares.push(re);
                squares.push(im);
            }
            squares
        };
        match u.role {
            UserRole::Intended => {
                // psi_bar <= sum_l (quad)^lb + 1   (in cap units)
                let mut rhs = LinExpr::constant(1.0 / cap);
                for l in 0..k_count {
                    rhs.add(&quad_lb_expr(&sur.quad_lb[i][l], k), 1.0 / cap);
                }
                let mut lhs = LinExpr::var(psi_bar[i]);
                lhs.add(&rhs, -1.0);
                p.add_le(lhs, 0.0);
                // psi_hat >= sum_{l != k} chi C chi^T + 1 (kept convex: SOC)
                let mut bound = LinExpr::var(psi_hat[i]);
                bound.offset(-1.0 / cap);
                p.add_sum_squares_le(soc_squares(&|l| l != k), bound);
                // Omega_k <= log2(psi_bar) - (log2(psi_hat))^ub
                let t = p.free_var();
                p.add_log2_hypograph(LinExpr::var(t), LinExpr::var(psi_bar[i]));
                let mut lhs = LinExpr::var(omega[k]);
                lhs.push(t, -1.0);
                lhs.push(psi_hat[i], sur.log_hat_ub[i].slope * cap);
                p.add_le(lhs, -sur.log_hat_ub[i].intercept + cap.log2());
            }
            UserRole::Eavesdropper => {
                // psi_hat <= sum_{l != k} (quad)^lb + 1
                let mut rhs = LinExpr::constant(1.0 / cap);
                for l in 0..k_count {
                    if l != k {
                        rhs.add(&quad_lb_expr(&sur.quad_lb[i][l], k), 1.0 / cap);
                    }
                }
                let mut lhs = LinExpr::var(psi_hat[i]);
                lhs.add(&rhs, -1.0);
                p.add_le(lhs, 0.0);
                // psi_bar >= sum_l chi C chi^T + 1 (SOC)
                let mut bound = LinExpr::var(psi_bar[i]);
                bound.offset(-1.0 / cap);
                p.add_sum_squares_le(soc_squares(&|_| true), bound);
                // (log2(psi_bar))^ub - log2(psi_hat) <= Upsilon_k
                let t = p.free_var();
                p.add_log2_hypograph(LinExpr::var(t), LinExpr::var(psi_hat[i]));
                let mut lhs = LinExpr::term(psi_bar[i], sur.log_bar_ub[i].slope * cap);
                lhs.push(t, -1.0);
                p.add_le(lhs, cfg.upsilon(k) - sur.log_bar_ub[i].intercept + cap.log2());
            }
        }
    }

    (p, chi_vars, omega, psi_bar, psi_hat, caps)
}

/// Round a relaxed association to a feasible binary one: each ARIS takes its
/// argmax group (ties to the lower group index); on conflicts the
/// lower-index ARIS keeps the group and later ones re-argmax over what is
/// left. Terminates because J <= K.
pub fn round_and_repair(chi_relaxed: &DMatrix<f64>) -> DMatrix<f64> {
    let j_count = chi_relaxed.nrows();
    let k_count = chi_relaxed.ncols();
    let mut taken = vec![false; k_count];
    let mut out = DMatrix::zeros(j_count, k_count);
    for j in 0..j_count {
        let mut best: Option<usize> = None;
        for k in 0..k_count {
            if taken[k] {
                continue;
            }
            if best.map_or(true, |b| chi_relaxed[(j, k)] > chi_relaxed[(j, b)]) {
                best = Some(k);
            }
        }
        let k = best.expect("J <= K leaves a free group for every ARIS");
        taken[k] = true;
        out[(j, k)] = 1.0;
    }
    out
}

/// Outcome of one association block invocation.
#[derive(Debug, Clone)]
pub struct AssocOutcome {
    /// Rounded feasible binary association.
    pub chi: DMatrix<f64>,
    /// Final relaxed iterate (diagnostic).
    pub relaxed: DMatrix<f64>,
    pub sca_steps: usize,
    /// max chi (1 - chi) of the final relaxed iterate.
    pub binarization_residual: f64,
    pub stopped_early: bool,
}

/// Run the association SCA warm-started from the current association at the
/// current beams and phases, then round. Starting the whole optimization
/// from the uniform relaxed association (see the orchestrator) is what lets
/// this block pick an assignment; once the iterate is binary, the penalty
/// holds it there and the loop is a cheap fixed point.
pub fn association_loop(
    state: &DecisionState,
    channels: &ChannelSet,
    topo: &Topology,
    cfg: &ScenarioConfig,
) -> Result<AssocOutcome, SolveError> {
    let j_count = state.chi.nrows();
    let k_count = state.chi.ncols();
    let c_set = build_c_matrices(channels, topo, &state.theta, &state.w);

    let mut point =
        AssociationIterate::at_point(state.chi.clone(), &c_set, topo, cfg.penalty_tau);
    let mut steps = 0usize;
    let mut stopped_early = false;

    loop {
        for it in 0..cfg.cap_sca {
            steps += 1;
            let next = match association_sca_step(&point, &c_set, topo, cfg) {
                Ok(n) => n,
                Err(e) => {
                    if it == 0 && steps == 1 {
                        return Err(e);
                    }
                    stopped_early = true;
                    break;
                }
            };
            let delta = (0..j_count)
                .flat_map(|j| (0..k_count).map(move |k| (j, k)))
                .map(|(j, k)| (next.chi[(j, k)] - point.chi[(j, k)]).abs())
                .fold(0.0f64, f64::max);
            // re-anchor slacks at the accepted chi so the next expansion is tight
            point = AssociationIterate::at_point(next.chi, &c_set, topo, point.tau);
            if delta <= cfg.eps_a {
                break;
            }
        }
        let residual = point.binarization_residual();
        if residual < 1e-2 || !cfg.tau_escalation || point.tau >= 1e3 {
            break;
        }
        point.tau = (point.tau * 2.0).min(1e3);
    }

    let chi = round_and_repair(&point.chi);
    Ok(AssocOutcome {
        binarization_residual: point.binarization_residual(),
        relaxed: point.chi.clone(),
        chi,
        sca_steps: steps,
        stopped_early,
    })
}

/// Rate of user `i` under a relaxed association row via the augmented
/// quadratic forms (the association-variable rate reformulation).
pub fn relaxed_rate(
    c_set: &CMatrices,
    topo: &Topology,
    chi: &DMatrix<f64>,
    user: usize,
) -> f64 {
    let u = &topo.users[user];
    let aug = chi_aug_row(chi, u.group);
    let x = RowDVector::from_iterator(aug.len(), aug.iter().map(|&v| C64::new(v, 0.0)));
    let a_set: Vec<DMatrix<C64>> = (0..topo.group_count())
        .map(|l| c_set.matrix(user, l))
        .collect();
    crate::rates::quadratic_form_rate(&a_set, &x, u.group, u.noise_power_w)
}
