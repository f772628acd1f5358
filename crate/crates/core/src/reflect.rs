//! Passive-beamforming block: per-ARIS phase-shift optimization through a
//! lifted unit-diagonal PSD variable, with auxiliary MM updates and phase
//! recovery by eigendecomposition / Gaussian randomization.

use nalgebra::{Complex, DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::TAU;

use crate::channel::ChannelSet;
use crate::conic::{ConicProblem, LinExpr};
use crate::rates::{user_rate, DecisionState};
use crate::scenario::{ScenarioConfig, Topology, UserRole};
use crate::subproblem::{
    complex_gaussian, psd_sqrt, principal_eigenpair, require_optimal, subproblem_options,
    SolveError, LN2,
};

type C64 = Complex<f64>;

/// Per-(user, beam) lifted quadratic forms Lambda = (H w)(H w)^dag for one
/// ARIS-group pair, where H stacks the direct channel row over the
/// reflection map rows.
#[derive(Debug, Clone)]
pub struct LambdaMatrices {
    /// Global indices of the group's users, in topology order.
    pub users: Vec<usize>,
    /// lambda[local user][beam l], each (N+1) x (N+1) Hermitian PSD rank-1.
    pub lambda: Vec<Vec<DMatrix<C64>>>,
}

/// Stacked channel map H_i = [h_i^dag ; diag(g_{j,i}^dag) G_j] of user `i`
/// for ARIS `j`: with v = [1, vartheta], v H_i w is the effective channel
/// response of beam w.
pub fn stacked_channel(channels: &ChannelSet, j: usize, user: usize) -> DMatrix<C64> {
    let l = channels.h[user].len();
    let n = channels.g_ref[j][user].len();
    let mut h = DMatrix::zeros(n + 1, l);
    for c in 0..l {
        h[(0, c)] = channels.h[user][c].conj();
    }
    for r in 0..n {
        let gc = channels.g_ref[j][user][r].conj();
        for c in 0..l {
            h[(r + 1, c)] = gc * channels.g_sat[j][(r, c)];
        }
    }
    h
}

/// Build the Lambda matrices of ARIS `j` for its associated group `k`.
///
/// Lambda is formed from the conjugated response vector so that with the
/// lifted variable V = v v^dag over columns v = [1, e^{i theta}], the trace
/// Tr(Lambda V) equals |sum_n v_n (H w)_n|^2 (the unconjugated row-vector
/// response of the signal model) and the leading-element phase recovery
/// formula applies verbatim.
pub fn build_lambda(
    channels: &ChannelSet,
    topo: &Topology,
    w_set: &[DVector<C64>],
    j: usize,
    k: usize,
) -> LambdaMatrices {
    let users = topo.users_of(k);
    let lambda = users
        .iter()
        .map(|&i| {
            let h = stacked_channel(channels, j, i);
            w_set
                .iter()
                .map(|w| {
                    let hw = (&h * w).conjugate();
                    &hw * hw.adjoint()
                })
                .collect()
        })
        .collect();
    LambdaMatrices { users, lambda }
}

/// Closed-form MM auxiliaries for the reflection subproblem, one per group
/// user (absolute units), mirroring the transmit-side rules.
#[derive(Debug, Clone)]
pub struct ReflectAuxiliaries {
    pub mu: Vec<f64>,
}

fn trace_powers(
    lambda_i: &[DMatrix<C64>],
    v_mat: &DMatrix<C64>,
    group: usize,
    sigma2: f64,
) -> (f64, f64) {
    let mut interf = sigma2;
    let mut total = sigma2;
    for (l, lam) in lambda_i.iter().enumerate() {
        let p = (lam * v_mat).trace().re.max(0.0);
        total += p;
        if l != group {
            interf += p;
        }
    }
    (interf, total)
}

pub fn update_mu_aux(
    v_mat: &DMatrix<C64>,
    lambdas: &LambdaMatrices,
    topo: &Topology,
    group: usize,
) -> ReflectAuxiliaries {
    let mu = lambdas
        .users
        .iter()
        .enumerate()
        .map(|(local, &i)| {
            let u = &topo.users[i];
            let (interf, total) =
                trace_powers(&lambdas.lambda[local], v_mat, group, u.noise_power_w);
            match u.role {
                UserRole::Intended => 1.0 / interf,
                UserRole::Eavesdropper => 1.0 / total,
            }
        })
        .collect();
    ReflectAuxiliaries { mu }
}

/// Result of one V-step.
#[derive(Debug, Clone)]
pub struct VSolve {
    pub v_mat: DMatrix<C64>,
    pub omega_k: f64,
}

/// Solve the lifted per-ARIS reflection subproblem at fixed auxiliaries:
/// maximize Omega_k over unit-diagonal Hermitian PSD V under the MM rate
/// bounds of the associated group's users.
pub fn solve_v_subproblem(
    aux: &ReflectAuxiliaries,
    lambdas: &LambdaMatrices,
    topo: &Topology,
    cfg: &ScenarioConfig,
    group: usize,
) -> Result<VSolve, SolveError> {
    let dim = lambdas.lambda[0][0].nrows();
    let mut p = ConicProblem::new();
    let v = p.hermitian_psd_var(dim);
    for i in 0..dim {
        p.add_eq(LinExpr::var(v.diag(i)), 1.0);
    }
    let omega = p.free_var();
    p.set_objective(LinExpr::var(omega));

    for (local, &i) in lambdas.users.iter().enumerate() {
        let u = &topo.users[i];
        let sigma2 = u.noise_power_w;
        let mut interf = LinExpr::constant(1.0);
        let mut total = LinExpr::constant(1.0);
        let mut cap = 1.0;
        for (l, lam) in lambdas.lambda[local].iter().enumerate() {
            let lam_norm = lam / C64::new(sigma2, 0.0);
            // rank-1: Tr(Lambda V) <= ||H w||^2 * lambda_max(V) <= ||H w||^2 * (N+1)
            cap += lam_norm.trace().re.max(0.0) * dim as f64;
            let tr = v.trace_with(&lam_norm);
            total.add(&tr, 1.0);
            if l != group {
                interf.add(&tr, 1.0);
            }
        }
        let mu = aux.mu[local] * sigma2;
        match u.role {
            UserRole::Intended => {
                let t = p.free_var();
                p.add_log2_hypograph(LinExpr::var(t), total.scaled(1.0 / cap));
                let mut lhs = LinExpr::var(omega);
                lhs.push(t, -1.0);
                lhs.add(&interf, mu / LN2);
                p.add_le(lhs, mu.log2() + 1.0 / LN2 + cap.log2());
            }
            UserRole::Eavesdropper => {
                let r = p.free_var();
                p.add_log2_hypograph(LinExpr::var(r), interf.scaled(1.0 / cap));
                let mut lhs = total.scaled(mu / LN2);
                lhs.push(r, -1.0);
                p.add_le(lhs, cfg.upsilon(group) + mu.log2() + 1.0 / LN2 + cap.log2());
            }
        }
    }

    let sol = p.solve(&subproblem_options())?;
    require_optimal(&sol)?;
    Ok(VSolve {
        v_mat: sol.hermitian(&v),
        omega_k: sol.objective,
    })
}

fn wrap_angle(a: f64) -> f64 {
    let mut v = a % TAU;
    if v < 0.0 {
        v += TAU;
    }
    v
}

/// Recover phase shifts from a lifted solution: principal eigenvector,
/// entries normalized by the leading element.
pub fn extract_phases(v_mat: &DMatrix<C64>) -> DVector<f64> {
    let (_, u) = principal_eigenpair(v_mat);
    extract_phases_from_vec(&u)
}

/// Phase recovery from a candidate vector v = [v_1, v_2, ...]:
/// theta_n = angle(v_{n+1} / v_1), wrapped to [0, 2 pi).
pub fn extract_phases_from_vec(v: &DVector<C64>) -> DVector<f64> {
    let lead = if v[0].norm() > 0.0 {
        v[0]
    } else {
        C64::new(1.0, 0.0)
    };
    DVector::from_fn(v.len() - 1, |n, _| wrap_angle((v[n + 1] / lead).arg()))
}

fn unit_vector_from_phases(theta: &DVector<f64>) -> DVector<C64> {
    let mut v = DVector::zeros(theta.len() + 1);
    v[0] = C64::new(1.0, 0.0);
    for n in 0..theta.len() {
        v[n + 1] = C64::from_polar(1.0, theta[n]);
    }
    v
}

/// Exact rates of the group's users at phases `theta`, from the Lambda forms.
fn group_rates(lambdas: &LambdaMatrices, theta: &DVector<f64>, topo: &Topology, group: usize) -> Vec<f64> {
    let v = unit_vector_from_phases(theta);
    lambdas
        .users
        .iter()
        .enumerate()
        .map(|(local, &i)| {
            let u = &topo.users[i];
            let mut num = 0.0;
            let mut den = u.noise_power_w;
            for (l, lam) in lambdas.lambda[local].iter().enumerate() {
                let p = (v.adjoint() * lam * &v)[(0, 0)].re.max(0.0);
                if l == group {
                    num = p;
                } else {
                    den += p;
                }
            }
            user_rate(num / den)
        })
        .collect()
}

fn group_score(
    rates: &[f64],
    lambdas: &LambdaMatrices,
    topo: &Topology,
    cfg: &ScenarioConfig,
    group: usize,
) -> Option<f64> {
    let mut min_intended = f64::INFINITY;
    for (local, &i) in lambdas.users.iter().enumerate() {
        match topo.users[i].role {
            UserRole::Intended => min_intended = min_intended.min(rates[local]),
            UserRole::Eavesdropper => {
                if rates[local] > cfg.upsilon(group) + 1e-9 {
                    return None;
                }
            }
        }
    }
    Some(min_intended)
}

/// Outcome of the per-ARIS reflection loops.
#[derive(Debug, Clone)]
pub struct ReflectOutcome {
    pub theta: Vec<DVector<f64>>,
    /// Total inner iterations across ARISs.
    pub iterations: usize,
    pub stopped_early: bool,
}

/// Run the per-ARIS reflection inner loops in index order. Each loop
/// alternates the mu update with the V-solve until the recovered coefficient
/// vector moves less than eps_r, then picks the best exactly-feasible phase
/// candidate (eigenvector recovery, Gaussian randomization, or the previous
/// phases as fallback).
pub fn reflection_loop(
    state: &DecisionState,
    channels: &ChannelSet,
    topo: &Topology,
    cfg: &ScenarioConfig,
    rng: &mut ChaCha12Rng,
) -> Result<ReflectOutcome, SolveError> {
    let mut theta = state.theta.clone();
    let mut iterations = 0usize;
    let mut stopped_early = false;

    for j in 0..theta.len() {
        let Some(k) = state.associated_group(j) else {
            continue;
        };
        let lambdas = build_lambda(channels, topo, &state.w, j, k);
        let v0 = unit_vector_from_phases(&theta[j]);
        let mut v_mat = &v0 * v0.adjoint();
        let mut proxy = v0.clone();
        let mut solved_once = false;

        for it in 0..cfg.cap_reflect_inner {
            iterations += 1;
            let aux = update_mu_aux(&v_mat, &lambdas, topo, k);
            let solve = match solve_v_subproblem(&aux, &lambdas, topo, cfg, k) {
                Ok(s) => s,
                Err(e) => {
                    if it == 0 {
                        return Err(e);
                    }
                    stopped_early = true;
                    break;
                }
            };
            v_mat = solve.v_mat;
            solved_once = true;

            let next_proxy = unit_vector_from_phases(&extract_phases(&v_mat));
            let delta = (&next_proxy - &proxy).norm();
            proxy = next_proxy;
            if delta <= cfg.eps_r {
                break;
            }
        }
        if !solved_once {
            continue;
        }

        // candidate pool: eigenvector recovery, randomized draws, previous phases
        let mut candidates = vec![extract_phases(&v_mat), theta[j].clone()];
        let root = psd_sqrt(&v_mat);
        for _ in 0..cfg.n_rand_v {
            let z = complex_gaussian(v_mat.nrows(), rng);
            let mut draw = &root * z;
            for e in draw.iter_mut() {
                let n = e.norm();
                *e = if n > 0.0 { *e / C64::new(n, 0.0) } else { C64::new(1.0, 0.0) };
            }
            candidates.push(extract_phases_from_vec(&draw));
        }

        let mut best: Option<(f64, DVector<f64>)> = None;
        for cand in candidates {
            let rates = group_rates(&lambdas, &cand, topo, k);
            if let Some(score) = group_score(&rates, &lambdas, topo, cfg, k) {
                if best.as_ref().map_or(true, |(s, _)| score > *s) {
                    best = Some((score, cand));
                }
            }
        }
        if let Some((_, cand)) = best {
            theta[j] = cand;
        }
    }

    Ok(ReflectOutcome {
        theta,
        iterations,
        stopped_early,
    })
}
