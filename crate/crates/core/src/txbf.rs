//! Transmit-beamforming block: alternates closed-form auxiliary updates with
//! a semidefinite program in the lifted beamformers {W_k}, then recovers
//! rank-1 beamformers by eigendecomposition or Gaussian randomization.

use nalgebra::{Complex, DMatrix, DVector};
use rand_chacha::ChaCha12Rng;

use crate::channel::{effective_rows, ChannelSet};
use crate::conic::{ConicProblem, LinExpr};
use crate::rates::{user_rate, DecisionState};
use crate::scenario::{ScenarioConfig, Topology, UserRole};
use crate::subproblem::{
    complex_gaussian, phase_align, principal_eigenpair, psd_sqrt, rank1_defect, require_optimal,
    subproblem_options, SolveError, LN2,
};

type C64 = Complex<f64>;

/// Effective-channel outer products Xi_i = h_eff,i h_eff,i^dag, one L x L
/// Hermitian PSD rank-1 matrix per user.
#[derive(Debug, Clone)]
pub struct XiMatrices {
    pub xi: Vec<DMatrix<C64>>,
}

/// Build the Xi matrices at the current phases and association.
pub fn build_xi(
    channels: &ChannelSet,
    topo: &Topology,
    theta: &[DVector<f64>],
    chi: &DMatrix<f64>,
) -> XiMatrices {
    let rows = effective_rows(channels, &theta.to_vec(), chi, topo);
    XiMatrices {
        xi: rows.iter().map(|r| r.adjoint() * r).collect(),
    }
}

/// Closed-form MM auxiliaries, one per user (absolute units):
/// intended users get 1/(interference + sigma^2), eavesdroppers
/// 1/(total received power + sigma^2).
#[derive(Debug, Clone)]
pub struct TxAuxiliaries {
    pub xi: Vec<f64>,
}

/// Interference and total received power (absolute, including sigma^2) of
/// user `i` under the lifted beamformers.
fn powers_abs(
    xi_i: &DMatrix<C64>,
    w_mats: &[DMatrix<C64>],
    group: usize,
    sigma2: f64,
) -> (f64, f64) {
    let mut interf = sigma2;
    let mut total = sigma2;
    for (l, w) in w_mats.iter().enumerate() {
        let p = (xi_i * w).trace().re.max(0.0);
        total += p;
        if l != group {
            interf += p;
        }
    }
    (interf, total)
}

pub fn update_xi_aux(
    w_mats: &[DMatrix<C64>],
    xi_set: &XiMatrices,
    topo: &Topology,
) -> TxAuxiliaries {
    let xi = topo
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let (interf, total) = powers_abs(&xi_set.xi[i], w_mats, u.group, u.noise_power_w);
            match u.role {
                UserRole::Intended => 1.0 / interf,
                UserRole::Eavesdropper => 1.0 / total,
            }
        })
        .collect();
    TxAuxiliaries { xi }
}

/// Result of one W-step.
#[derive(Debug, Clone)]
pub struct WSolve {
    pub w_mats: Vec<DMatrix<C64>>,
    pub omega: Vec<f64>,
    /// sum of omega (the SDP objective).
    pub objective: f64,
}

/// Solve the lifted transmit subproblem at fixed auxiliaries: maximize
/// sum_k Omega_k over Hermitian PSD {W_k} under the power budget, the MM
/// lower bounds on intended rates, and the MM upper bounds on eavesdropper
/// rates. Exponential-cone arguments are pre-scaled by their full-power
/// maxima so the solver sees O(1) data.
pub fn solve_w_subproblem(
    aux: &TxAuxiliaries,
    xi_set: &XiMatrices,
    topo: &Topology,
    cfg: &ScenarioConfig,
) -> Result<WSolve, SolveError> {
    let k_groups = topo.group_count();
    let l = cfg.antennas;
    let mut p = ConicProblem::new();
    let w_vars: Vec<_> = (0..k_groups).map(|_| p.hermitian_psd_var(l)).collect();
    let omega: Vec<_> = (0..k_groups).map(|_| p.free_var()).collect();

    let mut obj = LinExpr::zero();
    let mut power = LinExpr::zero();
    for wv in &w_vars {
        for i in 0..l {
            power.push(wv.diag(i), 1.0 / cfg.total_power_w);
        }
    }
    p.add_le(power, 1.0);
    for &o in &omega {
        obj.push(o, 1.0);
    }
    p.set_objective(obj);

    for (i, u) in topo.users.iter().enumerate() {
        let sigma2 = u.noise_power_w;
        let xi_norm = &xi_set.xi[i] / C64::new(sigma2, 0.0);
        // normalized interference/total-power expressions (noise = 1)
        let mut interf = LinExpr::constant(1.0);
        let mut total = LinExpr::constant(1.0);
        for (lbeam, wv) in w_vars.iter().enumerate() {
            let tr = wv.trace_with(&xi_norm);
            total.add(&tr, 1.0);
            if lbeam != u.group {
                interf.add(&tr, 1.0);
            }
        }
        let (lam_max, _) = principal_eigenpair(&xi_norm);
        let scale = 1.0 + cfg.total_power_w * lam_max.max(0.0);
        let xi_aux = aux.xi[i] * sigma2; // auxiliary in normalized units
        match u.role {
            UserRole::Intended => {
                // Omega_k <= log2(xi) + (1 - xi*I)/ln2 + log2(S)
                // with log2(S) = t + log2(scale), t <= log2(S/scale) <= 0
                let t = p.free_var();
                p.add_log2_hypograph(LinExpr::var(t), total.scaled(1.0 / scale));
                let mut lhs = LinExpr::var(omega[u.group]);
                lhs.push(t, -1.0);
                lhs.add(&interf, xi_aux / LN2);
                p.add_le(lhs, xi_aux.log2() + 1.0 / LN2 + scale.log2());
            }
            UserRole::Eavesdropper => {
                // -log2(xi) + (xi*S - 1)/ln2 - log2(I) <= Upsilon
                let r = p.free_var();
                p.add_log2_hypograph(LinExpr::var(r), interf.scaled(1.0 / scale));
                let mut lhs = total.scaled(xi_aux / LN2);
                lhs.push(r, -1.0);
                p.add_le(
                    lhs,
                    cfg.upsilon(u.group) + xi_aux.log2() + 1.0 / LN2 + scale.log2(),
                );
            }
        }
    }

    let sol = p.solve(&subproblem_options())?;
    require_optimal(&sol)?;
    Ok(WSolve {
        w_mats: w_vars.iter().map(|wv| sol.hermitian(wv)).collect(),
        omega: omega.iter().map(|&o| sol.value(o)).collect(),
        objective: sol.objective,
    })
}

/// Exact rates of every user for candidate beamformers, computed from the Xi
/// quadratic forms.
fn exact_rates(w: &[DVector<C64>], xi_set: &XiMatrices, topo: &Topology) -> Vec<f64> {
    topo.users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let mut num = 0.0;
            let mut den = u.noise_power_w;
            for (l, wl) in w.iter().enumerate() {
                let pw = (wl.adjoint() * &xi_set.xi[i] * wl)[(0, 0)].re.max(0.0);
                if l == u.group {
                    num = pw;
                } else {
                    den += pw;
                }
            }
            user_rate(num / den)
        })
        .collect()
}

fn candidate_score(rates: &[f64], topo: &Topology, cfg: &ScenarioConfig) -> Option<f64> {
    // feasible iff every eavesdropper sits at or below its threshold
    for (i, u) in topo.users.iter().enumerate() {
        if u.role == UserRole::Eavesdropper && rates[i] > cfg.upsilon(u.group) + 1e-9 {
            return None;
        }
    }
    let mut score = 0.0;
    for k in 0..topo.group_count() {
        let min_rate = topo
            .intended_of(k)
            .iter()
            .map(|&i| rates[i])
            .fold(f64::INFINITY, f64::min);
        score += min_rate;
    }
    Some(score)
}

/// Recover rank-1 beamformers from the lifted solution. Uses the principal
/// eigenvector when W_k is (numerically) rank-1; otherwise draws `n_rand`
/// Gaussian candidates shaped by W_k, rescales each beam to its trace power,
/// and keeps the exactly-feasible candidate with the best min-rate objective.
pub fn extract_beamformers(
    w_mats: &[DMatrix<C64>],
    xi_set: &XiMatrices,
    topo: &Topology,
    cfg: &ScenarioConfig,
    n_rand: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<DVector<C64>>, SolveError> {
    let eig_candidate: Vec<DVector<C64>> = w_mats
        .iter()
        .map(|wm| {
            let (_, u1) = principal_eigenpair(wm);
            let tr = wm.trace().re.max(0.0);
            &u1 * C64::new(tr.sqrt(), 0.0)
        })
        .collect();

    let all_rank1 = w_mats.iter().all(|wm| rank1_defect(wm) <= 1e-6);
    let mut best: Option<(f64, Vec<DVector<C64>>)> = None;
    let mut consider = |cand: Vec<DVector<C64>>| {
        let rates = exact_rates(&cand, xi_set, topo);
        if let Some(score) = candidate_score(&rates, topo, cfg) {
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, cand));
            }
        }
    };

    consider(eig_candidate);
    if !all_rank1 {
        let roots: Vec<DMatrix<C64>> = w_mats.iter().map(psd_sqrt).collect();
        for _ in 0..n_rand {
            let cand: Vec<DVector<C64>> = w_mats
                .iter()
                .zip(roots.iter())
                .map(|(wm, root)| {
                    let z = complex_gaussian(wm.nrows(), rng);
                    let v = root * z;
                    let n = v.norm();
                    let tr = wm.trace().re.max(0.0);
                    if n < 1e-300 {
                        v
                    } else {
                        &v * C64::new(tr.sqrt() / n, 0.0)
                    }
                })
                .collect();
            consider(cand);
        }
    }

    best.map(|(_, w)| w).ok_or(SolveError::NoFeasibleCandidate(n_rand))
}

/// Outcome of the transmit inner loop.
#[derive(Debug, Clone)]
pub struct TxOutcome {
    pub w: Vec<DVector<C64>>,
    pub w_mats: Vec<DMatrix<C64>>,
    pub omega: Vec<f64>,
    pub iterations: usize,
    /// SDP objective per iteration (non-decreasing under the MM updates).
    pub objective_trajectory: Vec<f64>,
    /// True when a mid-loop solve failed and the loop fell back to the last
    /// good iterate instead of running to its stop criterion.
    pub stopped_early: bool,
}

/// Alternate auxiliary updates and W-solves until the stacked beamformer
/// proxy moves less than eps_t, then extract rank-1 beamformers. A solver
/// failure after at least one successful step ends the loop at the last good
/// iterate; a failure on the very first step is propagated.
pub fn tx_beamforming_loop(
    state: &DecisionState,
    channels: &ChannelSet,
    topo: &Topology,
    cfg: &ScenarioConfig,
    rng: &mut ChaCha12Rng,
) -> Result<TxOutcome, SolveError> {
    let xi_set = build_xi(channels, topo, &state.theta, &state.chi);
    let mut w_mats: Vec<DMatrix<C64>> =
        state.w.iter().map(|wk| wk * wk.adjoint()).collect();
    let mut proxy: Vec<DVector<C64>> = state.w.clone();
    let mut trajectory = Vec::new();
    let mut omega = state.omega.clone();
    let mut iterations = 0usize;
    let mut stopped_early = false;

    for it in 0..cfg.cap_tx_inner {
        iterations += 1;
        let aux = update_xi_aux(&w_mats, &xi_set, topo);
        let solve = match solve_w_subproblem(&aux, &xi_set, topo, cfg) {
            Ok(s) => s,
            Err(e) => {
                if it == 0 {
                    return Err(e);
                }
                stopped_early = true;
                break;
            }
        };
        trajectory.push(solve.objective);
        w_mats = solve.w_mats;
        omega = solve.omega;

        let next_proxy: Vec<DVector<C64>> = w_mats
            .iter()
            .zip(proxy.iter())
            .map(|(wm, prev)| {
                let (_, u1) = principal_eigenpair(wm);
                let tr = wm.trace().re.max(0.0);
                phase_align(&(&u1 * C64::new(tr.sqrt(), 0.0)), prev)
            })
            .collect();
        let delta: f64 = next_proxy
            .iter()
            .zip(proxy.iter())
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        proxy = next_proxy;
        if delta <= cfg.eps_t {
            break;
        }
    }

    let extracted = extract_beamformers(&w_mats, &xi_set, topo, cfg, cfg.n_rand_w, rng);
    // never regress below the (feasible) incumbent beamformers
    let incumbent_rates = exact_rates(&state.w, &xi_set, topo);
    let incumbent_score = candidate_score(&incumbent_rates, topo, cfg);
    let w = match (extracted, incumbent_score) {
        (Ok(cand), Some(inc)) => {
            let cand_rates = exact_rates(&cand, &xi_set, topo);
            match candidate_score(&cand_rates, topo, cfg) {
                Some(score) if score >= inc => cand,
                _ => state.w.clone(),
            }
        }
        (Ok(cand), None) => cand,
        (Err(_), Some(_)) => state.w.clone(),
        (Err(e), None) => return Err(e),
    };
    Ok(TxOutcome {
        w,
        w_mats,
        omega,
        iterations,
        objective_trajectory: trajectory,
        stopped_early,
    })
}

/// Initial feasible beamformers at equal power split. Tries, in order:
/// matched filtering on each group's strongest intended user; the same
/// direction projected off the group's eavesdropper channels (which zeroes
/// every wiretap rate exactly, so full power stays feasible); and finally a
/// common power scale bisected down until the wiretap constraints hold. The
/// matched-filter-plus-bisection fallback alone can start many orders of
/// magnitude below the achievable power and stalls the auxiliary updates.
pub fn initial_beamformers(
    channels: &ChannelSet,
    topo: &Topology,
    cfg: &ScenarioConfig,
    theta: &[DVector<f64>],
    chi: &DMatrix<f64>,
) -> Vec<DVector<C64>> {
    let xi_set = build_xi(channels, topo, theta, chi);
    let rows = effective_rows(channels, &theta.to_vec(), chi, topo);
    let k_groups = topo.group_count();
    let per_beam = cfg.total_power_w / k_groups as f64;

    let mrt_dir: Vec<DVector<C64>> = (0..k_groups)
        .map(|k| {
            let strongest = topo
                .intended_of(k)
                .into_iter()
                .max_by(|&a, &b| rows[a].norm().partial_cmp(&rows[b].norm()).unwrap())
                .expect("every group has an intended user");
            rows[strongest].adjoint()
        })
        .collect();
    let scale_to = |dirs: &[DVector<C64>]| -> Vec<DVector<C64>> {
        dirs.iter()
            .map(|d| {
                let n = d.norm();
                if n < 1e-300 {
                    DVector::zeros(d.len())
                } else {
                    d * C64::new(per_beam.sqrt() / n, 0.0)
                }
            })
            .collect()
    };
    let feasible = |cand: &[DVector<C64>]| -> bool {
        let rates = exact_rates(cand, &xi_set, topo);
        topo.users.iter().enumerate().all(|(i, u)| {
            u.role != UserRole::Eavesdropper || rates[i] <= cfg.upsilon(u.group) + 1e-12
        })
    };

    let w_mrt = scale_to(&mrt_dir);
    if feasible(&w_mrt) {
        return w_mrt;
    }

    // null each beam at its own group's eavesdroppers: the wiretap rates
    // vanish exactly and full power is feasible
    let zf_dir: Vec<DVector<C64>> = (0..k_groups)
        .map(|k| {
            let mut basis: Vec<DVector<C64>> = Vec::new();
            for &e in &topo.eaves_of(k) {
                let mut v: DVector<C64> = rows[e].adjoint();
                for b in &basis {
                    let coef = b.dotc(&v);
                    v -= b * coef;
                }
                let n = v.norm();
                if n > 1e-12 * rows[e].norm() {
                    basis.push(v / C64::new(n, 0.0));
                }
            }
            let mut dir = mrt_dir[k].clone();
            for b in &basis {
                let coef = b.dotc(&dir);
                dir -= b * coef;
            }
            dir
        })
        .collect();
    if zf_dir.iter().all(|d| d.norm() > 1e-9) {
        let w_zf = scale_to(&zf_dir);
        if feasible(&w_zf) {
            return w_zf;
        }
    }

    // wiretap rates increase with a common power scale, so bisect on it
    let feasible_at = |alpha: f64| -> bool {
        let cand: Vec<DVector<C64>> = w_mrt.iter().map(|w| w * C64::new(alpha, 0.0)).collect();
        feasible(&cand)
    };
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    if !feasible_at(1e-9) {
        return w_mrt.iter().map(|w| w * C64::new(0.0, 0.0)).collect();
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    w_mrt.iter().map(|w| w * C64::new(lo, 0.0)).collect()
}
