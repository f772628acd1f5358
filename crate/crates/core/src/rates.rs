//! SINR, per-user rates, the secure multicast objective, and constraint
//! residual evaluation.
//!
//! Rates are bits/s/Hz throughout (log base 2). The evaluators are pure;
//! [`DecisionState`] is value-semantic and cheap to clone between threads.

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::channel::{effective_rows, ChannelSet};
use crate::scenario::{ScenarioConfig, Topology, UserRole};

type C64 = Complex<f64>;

/// The full block-coordinate iterate: transmit beamformers, ARIS phases,
/// association, ARIS positions, and the per-group rate lower bounds.
#[derive(Debug, Clone)]
pub struct DecisionState {
    /// Beamforming vectors w_k (K of them, length L).
    pub w: Vec<DVector<C64>>,
    /// SDR covariance matrices W_k when the last transmit solve kept them.
    pub w_mat: Option<Vec<DMatrix<C64>>>,
    /// Phase shifts theta_j in [0, 2pi) (J vectors of length N).
    pub theta: Vec<DVector<f64>>,
    /// Association matrix chi (J x K); binary in every accepted state.
    pub chi: DMatrix<f64>,
    /// ARIS horizontal positions q_j (m).
    pub q: Vec<[f64; 2]>,
    /// Per-group achievable-rate lower bounds Omega_k (bits/s/Hz).
    pub omega: Vec<f64>,
}

impl DecisionState {
    /// State with all-zero phases, the given association, and positions.
    pub fn new(
        w: Vec<DVector<C64>>,
        theta: Vec<DVector<f64>>,
        chi: DMatrix<f64>,
        q: Vec<[f64; 2]>,
    ) -> Self {
        let k = w.len();
        DecisionState {
            w,
            w_mat: None,
            theta,
            chi,
            q,
            omega: vec![0.0; k],
        }
    }

    /// Group associated with ARIS `j`, if its chi row is binary.
    pub fn associated_group(&self, j: usize) -> Option<usize> {
        (0..self.chi.ncols()).find(|&k| self.chi[(j, k)] > 0.5)
    }

    /// ARIS associated with group `k`, if any.
    pub fn aris_of_group(&self, k: usize) -> Option<usize> {
        (0..self.chi.nrows()).find(|&j| self.chi[(j, k)] > 0.5)
    }
}

/// Per-user rates and the multicast objective for one state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    /// Per-user SINR (linear), in topology user order.
    pub sinr: Vec<f64>,
    /// Per-user rate (bits/s/Hz).
    pub rates: Vec<f64>,
    /// Minimum intended-user rate per group.
    pub group_min_intended: Vec<f64>,
    /// Maximum eavesdropper rate per group (0 when the group has none).
    pub group_max_eaves: Vec<f64>,
    /// Sum over groups of the minimum intended rate.
    pub objective: f64,
    /// Sum over all intended users of their rates (diagnostic).
    pub sum_rate_intended: f64,
}

/// SINR of a user in group `k` from its effective channel row.
pub fn sinr_from_row(row: &RowDVector<C64>, w_set: &[DVector<C64>], k: usize, sigma2: f64) -> f64 {
    debug_assert!(sigma2 > 0.0);
    let mut num = 0.0;
    let mut den = sigma2;
    for (l, w) in w_set.iter().enumerate() {
        let p = (row * w)[(0, 0)].norm_sqr();
        if l == k {
            num = p;
        } else {
            den += p;
        }
    }
    num / den
}

/// SINR in the lifted trace form: Tr(Xi W_k) / (sum_{l != k} Tr(Xi W_l) + sigma^2).
pub fn sinr_trace(xi: &DMatrix<C64>, w_mats: &[DMatrix<C64>], k: usize, sigma2: f64) -> f64 {
    let mut num = 0.0;
    let mut den = sigma2;
    for (l, w) in w_mats.iter().enumerate() {
        let p = (xi * w).trace().re;
        if l == k {
            num = p;
        } else {
            den += p;
        }
    }
    num / den
}

/// Achievable rate log2(1 + sinr) in bits/s/Hz.
pub fn user_rate(sinr: f64) -> f64 {
    debug_assert!(sinr >= -1e-12);
    (1.0 + sinr.max(0.0)).log2()
}

/// Generic quadratic-form rate: log2 of (sum_l x A_l x^dag + sigma^2) over
/// (sum_{l != k} x A_l x^dag + sigma^2). Evaluates every condensed rate form
/// (trace, reflection-vector, association-vector, distance-vector) under the
/// appropriate (x, A_l) pairing.
pub fn quadratic_form_rate(
    a_set: &[DMatrix<C64>],
    x: &RowDVector<C64>,
    k: usize,
    sigma2: f64,
) -> f64 {
    let mut num = sigma2;
    let mut den = sigma2;
    for (l, a) in a_set.iter().enumerate() {
        debug_assert_eq!(a.nrows(), x.ncols());
        let v = (x * a * x.adjoint())[(0, 0)].re;
        num += v;
        if l != k {
            den += v;
        }
    }
    (num / den).log2()
}

/// Whether reflections from every chi-weighted ARIS enter each user's channel
/// (the exact composition) or only the group's own associated ARIS (the
/// decomposition the per-ARIS solvers work under). The two coincide for
/// binary association.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    Exact,
    AssociatedOnly,
}

/// Effective channel rows for every user under `composition`.
pub fn composed_rows(
    state: &DecisionState,
    channels: &ChannelSet,
    topo: &Topology,
    composition: Composition,
) -> Vec<RowDVector<C64>> {
    match composition {
        Composition::Exact => effective_rows(channels, &state.theta, &state.chi, topo),
        Composition::AssociatedOnly => {
            let mut chi = DMatrix::zeros(state.chi.nrows(), state.chi.ncols());
            for k in 0..state.chi.ncols() {
                if let Some(j) = (0..state.chi.nrows())
                    .max_by(|&a, &b| state.chi[(a, k)].partial_cmp(&state.chi[(b, k)]).unwrap())
                {
                    if state.chi[(j, k)] > 0.5 {
                        chi[(j, k)] = 1.0;
                    }
                }
            }
            effective_rows(channels, &state.theta, &chi, topo)
        }
    }
}

/// Evaluate per-user rates and the objective with the exact composition.
pub fn rate_report(state: &DecisionState, channels: &ChannelSet, topo: &Topology) -> RateReport {
    rate_report_composed(state, channels, topo, Composition::Exact)
}

pub fn rate_report_composed(
    state: &DecisionState,
    channels: &ChannelSet,
    topo: &Topology,
    composition: Composition,
) -> RateReport {
    let rows = composed_rows(state, channels, topo, composition);
    let k_groups = topo.group_count();
    let mut sinr = Vec::with_capacity(topo.users.len());
    let mut rates = Vec::with_capacity(topo.users.len());
    for (i, u) in topo.users.iter().enumerate() {
        let s = sinr_from_row(&rows[i], &state.w, u.group, u.noise_power_w);
        sinr.push(s);
        rates.push(user_rate(s));
    }
    let mut group_min_intended = vec![f64::INFINITY; k_groups];
    let mut group_max_eaves = vec![0.0f64; k_groups];
    let mut sum_rate_intended = 0.0;
    for (i, u) in topo.users.iter().enumerate() {
        match u.role {
            UserRole::Intended => {
                sum_rate_intended += rates[i];
                if rates[i] < group_min_intended[u.group] {
                    group_min_intended[u.group] = rates[i];
                }
            }
            UserRole::Eavesdropper => {
                if rates[i] > group_max_eaves[u.group] {
                    group_max_eaves[u.group] = rates[i];
                }
            }
        }
    }
    let objective = group_min_intended.iter().sum();
    RateReport {
        sinr,
        rates,
        group_min_intended,
        group_max_eaves,
        objective,
        sum_rate_intended,
    }
}

/// Sum over groups of the per-group minimum intended rate; eavesdroppers are
/// excluded from the minimum.
pub fn objective(report: &RateReport) -> f64 {
    report.group_min_intended.iter().sum()
}

/// Signed constraint residuals of a state. Feasible iff every entry is at or
/// below its tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// sum_k ||w_k||^2 - P_T.
    pub power_residual: f64,
    /// R_{e} - Upsilon_k per eavesdropper, topology order.
    pub wiretap_residuals: Vec<f64>,
    /// max over reflection coefficients of ||vartheta| - 1|.
    pub modulus_residual: f64,
    /// max over entries of |chi - round(chi)|.
    pub chi_binary_residual: f64,
    /// max over ARIS rows of |sum_k chi_{jk} - 1|.
    pub chi_row_residual: f64,
    /// max over groups of max(0, sum_j chi_{jk} - 1).
    pub chi_col_residual: f64,
    /// max distance of any ARIS outside the deployment box (m).
    pub box_residual: f64,
    /// max_k (Omega_k - min intended rate of group k).
    pub omega_residual: f64,
}

impl FeasibilityReport {
    /// True when rate-type residuals are within `tol_rate` and the exact
    /// (power, modulus, binary, box) residuals within `tol_exact`.
    pub fn feasible(&self, tol_rate: f64, tol_exact: f64) -> bool {
        self.power_residual <= self.wiretap_power_scale() * tol_exact
            && self.wiretap_residuals.iter().all(|&r| r <= tol_rate)
            && self.modulus_residual <= tol_exact
            && self.chi_binary_residual <= tol_exact
            && self.chi_col_residual <= tol_exact
            && self.box_residual <= tol_exact
            && self.omega_residual <= tol_rate
    }

    fn wiretap_power_scale(&self) -> f64 {
        1.0
    }
}

/// Evaluate every constraint residual of problem (feasibility of the emitted
/// state) against the exact rate composition.
pub fn check_feasibility(
    state: &DecisionState,
    channels: &ChannelSet,
    topo: &Topology,
    cfg: &ScenarioConfig,
) -> FeasibilityReport {
    let report = rate_report(state, channels, topo);
    let power: f64 = state.w.iter().map(|w| w.norm_squared()).sum();

    let mut wiretap = Vec::new();
    for (i, u) in topo.users.iter().enumerate() {
        if u.role == UserRole::Eavesdropper {
            wiretap.push(report.rates[i] - cfg.upsilon(u.group));
        }
    }

    // phases are stored as angles, so the coefficients are unit modulus by
    // construction; evaluate anyway as the spec's residual
    let mut modulus = 0.0f64;
    for th in &state.theta {
        for &a in th.iter() {
            let v = Complex::from_polar(1.0, a);
            modulus = modulus.max((v.norm() - 1.0).abs());
        }
    }

    let mut binary = 0.0f64;
    let mut row_res = 0.0f64;
    for j in 0..state.chi.nrows() {
        let mut row_sum = 0.0;
        for k in 0..state.chi.ncols() {
            let c = state.chi[(j, k)];
            binary = binary.max((c - c.round()).abs());
            row_sum += c;
        }
        row_res = row_res.max((row_sum - 1.0).abs());
    }
    let mut col_res = 0.0f64;
    for k in 0..state.chi.ncols() {
        let col_sum: f64 = (0..state.chi.nrows()).map(|j| state.chi[(j, k)]).sum();
        col_res = col_res.max((col_sum - 1.0).max(0.0));
    }

    let half = cfg.region_half_extent_m;
    let mut box_res = 0.0f64;
    for q in &state.q {
        box_res = box_res.max((q[0].abs() - half).max(0.0));
        box_res = box_res.max((q[1].abs() - half).max(0.0));
    }

    let mut omega_res = f64::NEG_INFINITY;
    for k in 0..topo.group_count() {
        omega_res = omega_res.max(state.omega[k] - report.group_min_intended[k]);
    }

    FeasibilityReport {
        power_residual: power - cfg.total_power_w,
        wiretap_residuals: wiretap,
        modulus_residual: modulus,
        chi_binary_residual: binary,
        chi_row_residual: row_res,
        chi_col_residual: col_res,
        box_residual: box_res,
        omega_residual: omega_res,
    }
}
