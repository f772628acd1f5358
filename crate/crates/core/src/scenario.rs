//! Static scenario configuration, topology sampling, and geometric primitives.
//!
//! A [`ScenarioConfig`] holds every static parameter of the network (counts,
//! powers, geometry, channel constants, convergence thresholds). A
//! [`Topology`] is one sampled realization of node positions. Both are
//! immutable after construction and safe to share across threads.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Parse { line: usize, text: String },

    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("config line {line}: bad value for `{key}`: {reason}")]
    BadValue { line: usize, key: String, reason: String },

    #[error("invalid scenario: {field}: {reason}")]
    Invariant { field: &'static str, reason: String },
}

/// All static parameters of one scenario.
///
/// Angles are radians, gains and losses linear, distances meters, rates
/// bits/s/Hz. The text-config surface accepts the dB/degree forms people
/// actually quote (see [`ScenarioConfig::from_text`] and the README schema);
/// conversion happens at parse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of multicast groups K (one beam per group).
    pub groups: usize,
    /// Number of aerial RISs J (0 <= J <= K; J = 0 degenerates to no reflection).
    pub aris_count: usize,
    /// Satellite antenna count L.
    pub antennas: usize,
    /// Subsurfaces per ARIS N.
    pub subsurfaces: usize,
    /// Reflecting elements aggregated per subsurface.
    pub elements_per_subsurface: usize,
    /// Intended users per group M_k.
    pub intended_per_group: usize,
    /// Eavesdroppers per group E_k.
    pub eaves_per_group: usize,
    /// Total satellite transmit power P_T (W).
    pub total_power_w: f64,
    /// Satellite altitude (m).
    pub sat_altitude_m: f64,
    /// ARIS hover altitude H (m).
    pub aris_altitude_m: f64,
    /// Radius of the user disc of each group (m).
    pub group_radius_m: f64,
    /// Distance between adjacent group centers on the ring layout (m).
    pub group_spacing_m: f64,
    /// Half extent of the deployment region box X x Y (m).
    pub region_half_extent_m: f64,
    /// Carrier frequency (Hz); wavelength is derived.
    pub carrier_freq_hz: f64,
    /// Processing bandwidth B (Hz).
    pub bandwidth_hz: f64,
    /// Receiver noise temperature T (K).
    pub noise_temp_k: f64,
    /// Maximum satellite antenna gain G_max (linear).
    pub max_gain_linear: f64,
    /// Off-axis angle of the 3 dB point of the beam pattern (rad).
    pub phi_3db_rad: f64,
    /// Reflecting-element spacing over wavelength d/lambda.
    pub element_spacing_ratio: f64,
    /// Ground path loss exponent beta.
    pub path_loss_exponent: f64,
    /// Ground path loss at 1 m reference distance L_0 (linear power).
    pub reference_loss_linear: f64,
    /// Rician factor rho (linear power ratio).
    pub rician_factor_linear: f64,
    /// Rain attenuation: mean of ln(xi_dB).
    pub rain_mu: f64,
    /// Rain attenuation: std dev of ln(xi_dB).
    pub rain_sigma: f64,
    /// Per-group wiretap rate thresholds Upsilon_k (bits/s/Hz), length K.
    pub wiretap_thresholds: Vec<f64>,
    /// Association penalty factor tau.
    pub penalty_tau: f64,
    /// Double tau (capped at 1e3) when association fails to binarize.
    pub tau_escalation: bool,
    /// Gaussian randomization draws for beamformer extraction.
    pub n_rand_w: usize,
    /// Gaussian randomization draws for phase extraction.
    pub n_rand_v: usize,
    /// Stop threshold for the transmit-beamforming inner loop.
    pub eps_t: f64,
    /// Stop threshold for the per-ARIS reflection inner loop.
    pub eps_r: f64,
    /// Stop threshold for the association SCA loop.
    pub eps_a: f64,
    /// Stop threshold for the deployment SCA loop (m on ||dq||).
    pub eps_d: f64,
    /// Stop threshold for the small-scale block (relative stacked change).
    pub eps_s: f64,
    /// Stop threshold for the large-scale block (relative stacked change).
    pub eps_l: f64,
    /// Stop threshold for the outer loop (relative objective change).
    pub eps_outer: f64,
    /// Iteration cap for the transmit-beamforming inner loop.
    pub cap_tx_inner: usize,
    /// Iteration cap for each per-ARIS reflection inner loop.
    pub cap_reflect_inner: usize,
    /// Iteration cap for each SCA loop (association, deployment).
    pub cap_sca: usize,
    /// Iteration cap for the small-scale block.
    pub cap_small: usize,
    /// Iteration cap for the large-scale block.
    pub cap_large: usize,
    /// Iteration cap for the outer loop.
    pub cap_outer: usize,
}

impl Default for ScenarioConfig {
    /// Full-scale defaults: LEO at 220 km, 6 GHz, K=5 groups, J=3 ARISs,
    /// L=5 antennas, N=25 subsurfaces of 25 elements, P_T=100 W, B=200 MHz,
    /// T=290 K, 50 dBi peak gain, 300 m groups, beta=2.3, rho=3 dB, tau=10.
    fn default() -> Self {
        ScenarioConfig {
            groups: 5,
            aris_count: 3,
            antennas: 5,
            subsurfaces: 25,
            elements_per_subsurface: 25,
            intended_per_group: 3,
            eaves_per_group: 1,
            total_power_w: 100.0,
            sat_altitude_m: 220e3,
            aris_altitude_m: 100.0,
            group_radius_m: 300.0,
            group_spacing_m: 3000.0,
            region_half_extent_m: 5000.0,
            carrier_freq_hz: 6e9,
            bandwidth_hz: 2e8,
            noise_temp_k: 290.0,
            max_gain_linear: 1e5,
            phi_3db_rad: 0.4_f64.to_radians(),
            element_spacing_ratio: 0.5,
            path_loss_exponent: 2.3,
            reference_loss_linear: 1e-2,
            rician_factor_linear: 10f64.powf(0.3),
            // Config defaults only; the rain distribution parameters are
            // frequency/site dependent and not pinned by the model.
            rain_mu: -3.125,
            rain_sigma: 1.591,
            wiretap_thresholds: vec![0.5; 5],
            penalty_tau: 10.0,
            tau_escalation: false,
            n_rand_w: 200,
            n_rand_v: 100,
            eps_t: 1e-3,
            eps_r: 1e-3,
            eps_a: 1e-2,
            eps_d: 1e-2,
            eps_s: 1e-3,
            eps_l: 1e-2,
            eps_outer: 1e-3,
            cap_tx_inner: 50,
            cap_reflect_inner: 50,
            cap_sca: 30,
            cap_small: 20,
            cap_large: 20,
            cap_outer: 15,
        }
    }
}

impl ScenarioConfig {
    /// Desk-scale preset used by the experiment sweeps: K=3, J=2, L=4, N=8
    /// subsurfaces of 8 elements, 2 intended users + 1 eavesdropper per group.
    pub fn desk() -> Self {
        ScenarioConfig {
            groups: 3,
            aris_count: 2,
            antennas: 4,
            subsurfaces: 8,
            elements_per_subsurface: 8,
            intended_per_group: 2,
            eaves_per_group: 1,
            wiretap_thresholds: vec![0.5; 3],
            ..ScenarioConfig::default()
        }
    }

    /// Carrier wavelength (m).
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Receiver noise power k_B * B * T (W).
    pub fn noise_power_w(&self) -> f64 {
        BOLTZMANN * self.bandwidth_hz * self.noise_temp_k
    }

    /// Users per group (intended + eavesdroppers).
    pub fn users_per_group(&self) -> usize {
        self.intended_per_group + self.eaves_per_group
    }

    /// Wiretap threshold of group `k`.
    pub fn upsilon(&self, k: usize) -> f64 {
        self.wiretap_thresholds[k]
    }

    /// Set every group's wiretap threshold.
    pub fn set_wiretap_threshold(&mut self, upsilon: f64) {
        self.wiretap_thresholds = vec![upsilon; self.groups];
    }

    /// Parse a flat `key = value` config text. Missing keys take defaults,
    /// unknown keys are errors. See the README for the full key schema.
    pub fn from_text(text: &str) -> Result<Self, ScenarioError> {
        let mut cfg = ScenarioConfig::default();
        let mut wiretap: Option<f64> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(ScenarioError::Parse {
                line,
                text: stripped.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            apply_key(&mut cfg, &mut wiretap, key, value, line)?;
        }
        if let Some(u) = wiretap {
            cfg.wiretap_thresholds = vec![u; cfg.groups];
        } else if cfg.wiretap_thresholds.len() != cfg.groups {
            let u = cfg.wiretap_thresholds[0];
            cfg.wiretap_thresholds = vec![u; cfg.groups];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every invariant; names the offending field on failure.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        fn positive(field: &'static str, v: f64) -> Result<(), ScenarioError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ScenarioError::Invariant {
                    field,
                    reason: format!("must be strictly positive, got {v}"),
                })
            }
        }
        if self.groups < 1 {
            return Err(ScenarioError::Invariant {
                field: "groups",
                reason: "K must be at least 1".into(),
            });
        }
        if self.aris_count > self.groups {
            return Err(ScenarioError::Invariant {
                field: "aris_count",
                reason: format!("J exceeds K ({} > {})", self.aris_count, self.groups),
            });
        }
        if self.antennas < 1 || self.subsurfaces < 1 || self.elements_per_subsurface < 1 {
            return Err(ScenarioError::Invariant {
                field: "antennas/subsurfaces/elements_per_subsurface",
                reason: "counts must be at least 1".into(),
            });
        }
        if self.intended_per_group < 1 {
            return Err(ScenarioError::Invariant {
                field: "intended_per_group",
                reason: "each group needs at least one intended user".into(),
            });
        }
        positive("total_power_w", self.total_power_w)?;
        positive("sat_altitude_m", self.sat_altitude_m)?;
        positive("aris_altitude_m", self.aris_altitude_m)?;
        positive("group_radius_m", self.group_radius_m)?;
        if self.groups > 1 {
            positive("group_spacing_m", self.group_spacing_m)?;
        }
        positive("region_half_extent_m", self.region_half_extent_m)?;
        positive("carrier_freq_hz", self.carrier_freq_hz)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("noise_temp_k", self.noise_temp_k)?;
        positive("max_gain_linear", self.max_gain_linear)?;
        positive("element_spacing_ratio", self.element_spacing_ratio)?;
        positive("path_loss_exponent", self.path_loss_exponent)?;
        positive("reference_loss_linear", self.reference_loss_linear)?;
        positive("rician_factor_linear", self.rician_factor_linear)?;
        positive("penalty_tau", self.penalty_tau)?;
        if !(self.phi_3db_rad > 0.0 && self.phi_3db_rad < PI / 2.0) {
            return Err(ScenarioError::Invariant {
                field: "phi_3db_rad",
                reason: format!("must lie in (0, pi/2), got {}", self.phi_3db_rad),
            });
        }
        if self.rain_sigma < 0.0 {
            return Err(ScenarioError::Invariant {
                field: "rain_sigma",
                reason: "must be nonnegative".into(),
            });
        }
        if self.wiretap_thresholds.len() != self.groups {
            return Err(ScenarioError::Invariant {
                field: "wiretap_thresholds",
                reason: format!(
                    "need one threshold per group ({} != {})",
                    self.wiretap_thresholds.len(),
                    self.groups
                ),
            });
        }
        for (k, &u) in self.wiretap_thresholds.iter().enumerate() {
            if !(u >= 0.0) {
                return Err(ScenarioError::Invariant {
                    field: "wiretap_thresholds",
                    reason: format!("Upsilon_{k} must be nonnegative, got {u}"),
                });
            }
        }
        let ring = self.ring_radius() + self.group_radius_m;
        if ring > self.region_half_extent_m {
            return Err(ScenarioError::Invariant {
                field: "region_half_extent_m",
                reason: format!(
                    "region half extent {} m does not cover the group layout ({} m needed)",
                    self.region_half_extent_m, ring
                ),
            });
        }
        for (field, eps) in [
            ("eps_t", self.eps_t),
            ("eps_r", self.eps_r),
            ("eps_a", self.eps_a),
            ("eps_d", self.eps_d),
            ("eps_s", self.eps_s),
            ("eps_l", self.eps_l),
            ("eps_outer", self.eps_outer),
        ] {
            if !(eps > 0.0) {
                return Err(ScenarioError::Invariant {
                    field: "eps_*",
                    reason: format!("{field} must be strictly positive"),
                });
            }
        }
        Ok(())
    }

    /// Radius of the ring on which group centers sit (0 for K = 1).
    pub fn ring_radius(&self) -> f64 {
        if self.groups <= 1 {
            0.0
        } else {
            self.group_spacing_m / (2.0 * (PI / self.groups as f64).sin())
        }
    }
}

fn apply_key(
    cfg: &mut ScenarioConfig,
    wiretap: &mut Option<f64>,
    key: &str,
    value: &str,
    line: usize,
) -> Result<(), ScenarioError> {
    let bad = |reason: &str| ScenarioError::BadValue {
        line,
        key: key.to_string(),
        reason: reason.to_string(),
    };
    let as_f64 = |v: &str| v.parse::<f64>().map_err(|e| bad(&e.to_string()));
    let as_usize = |v: &str| v.parse::<usize>().map_err(|e| bad(&e.to_string()));
    let as_bool = |v: &str| match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(bad("expected true/false")),
    };
    match key {
        "groups" => cfg.groups = as_usize(value)?,
        "aris_count" => cfg.aris_count = as_usize(value)?,
        "antennas" => cfg.antennas = as_usize(value)?,
        "subsurfaces" => cfg.subsurfaces = as_usize(value)?,
        "elements_per_subsurface" => cfg.elements_per_subsurface = as_usize(value)?,
        "intended_per_group" => cfg.intended_per_group = as_usize(value)?,
        "eaves_per_group" => cfg.eaves_per_group = as_usize(value)?,
        "total_power_w" => cfg.total_power_w = as_f64(value)?,
        "sat_altitude_m" => cfg.sat_altitude_m = as_f64(value)?,
        "aris_altitude_m" => cfg.aris_altitude_m = as_f64(value)?,
        "group_radius_m" => cfg.group_radius_m = as_f64(value)?,
        "group_spacing_m" => cfg.group_spacing_m = as_f64(value)?,
        "region_half_extent_m" => cfg.region_half_extent_m = as_f64(value)?,
        "carrier_freq_hz" => cfg.carrier_freq_hz = as_f64(value)?,
        "bandwidth_hz" => cfg.bandwidth_hz = as_f64(value)?,
        "noise_temp_k" => cfg.noise_temp_k = as_f64(value)?,
        "max_gain_dbi" => cfg.max_gain_linear = 10f64.powf(as_f64(value)? / 10.0),
        "beam_3db_deg" => cfg.phi_3db_rad = as_f64(value)?.to_radians(),
        "element_spacing_ratio" => cfg.element_spacing_ratio = as_f64(value)?,
        "path_loss_exponent" => cfg.path_loss_exponent = as_f64(value)?,
        "reference_loss_db" => cfg.reference_loss_linear = 10f64.powf(-as_f64(value)? / 10.0),
        "rician_factor_db" => cfg.rician_factor_linear = 10f64.powf(as_f64(value)? / 10.0),
        "rain_mu" => cfg.rain_mu = as_f64(value)?,
        "rain_sigma" => cfg.rain_sigma = as_f64(value)?,
        "wiretap_threshold" => *wiretap = Some(as_f64(value)?),
        "penalty_tau" => cfg.penalty_tau = as_f64(value)?,
        "tau_escalation" => cfg.tau_escalation = as_bool(value)?,
        "n_rand_w" => cfg.n_rand_w = as_usize(value)?,
        "n_rand_v" => cfg.n_rand_v = as_usize(value)?,
        "eps_t" => cfg.eps_t = as_f64(value)?,
        "eps_r" => cfg.eps_r = as_f64(value)?,
        "eps_a" => cfg.eps_a = as_f64(value)?,
        "eps_d" => cfg.eps_d = as_f64(value)?,
        "eps_s" => cfg.eps_s = as_f64(value)?,
        "eps_l" => cfg.eps_l = as_f64(value)?,
        "eps_outer" => cfg.eps_outer = as_f64(value)?,
        "cap_tx_inner" => cfg.cap_tx_inner = as_usize(value)?,
        "cap_reflect_inner" => cfg.cap_reflect_inner = as_usize(value)?,
        "cap_sca" => cfg.cap_sca = as_usize(value)?,
        "cap_small" => cfg.cap_small = as_usize(value)?,
        "cap_large" => cfg.cap_large = as_usize(value)?,
        "cap_outer" => cfg.cap_outer = as_usize(value)?,
        _ => {
            return Err(ScenarioError::UnknownKey {
                line,
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

/// Parse and validate a scenario from config text.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    ScenarioConfig::from_text(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserRole {
    Intended,
    Eavesdropper,
}

/// One ground node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserNode {
    /// Horizontal coordinates (m).
    pub position: [f64; 2],
    pub role: UserRole,
    /// Group index k.
    pub group: usize,
    /// Noise power k_B * B * T (W).
    pub noise_power_w: f64,
}

/// One sampled network layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub group_centers: Vec<[f64; 2]>,
    /// Users in group order: group 0 intended, group 0 eavesdroppers, group 1 ...
    pub users: Vec<UserNode>,
    /// Initial ARIS horizontal positions (centroid of intended users of the
    /// first J groups), clamped to the region box.
    pub aris_initial: Vec<[f64; 2]>,
    pub aris_altitude_m: f64,
    /// Satellite position above the centroid of the group centers.
    pub satellite_position: [f64; 3],
}

impl Topology {
    /// Global indices of every user in group `k`.
    pub fn users_of(&self, k: usize) -> Vec<usize> {
        (0..self.users.len())
            .filter(|&i| self.users[i].group == k)
            .collect()
    }

    /// Global indices of the intended users in group `k`.
    pub fn intended_of(&self, k: usize) -> Vec<usize> {
        (0..self.users.len())
            .filter(|&i| self.users[i].group == k && self.users[i].role == UserRole::Intended)
            .collect()
    }

    /// Global indices of the eavesdroppers in group `k`.
    pub fn eaves_of(&self, k: usize) -> Vec<usize> {
        (0..self.users.len())
            .filter(|&i| self.users[i].group == k && self.users[i].role == UserRole::Eavesdropper)
            .collect()
    }

    pub fn group_count(&self) -> usize {
        self.group_centers.len()
    }
}

/// Sample a topology. Deterministic in `(cfg, seed)`: users are uniform in
/// the disc of `group_radius_m` around their group center.
pub fn sample_topology(cfg: &ScenarioConfig, seed: u64) -> Topology {
    let k = cfg.groups;
    let ring = cfg.ring_radius();
    let group_centers: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let ang = 2.0 * PI * i as f64 / k as f64;
            [ring * ang.cos(), ring * ang.sin()]
        })
        .collect();

    let noise = cfg.noise_power_w();
    let mut users = Vec::with_capacity(k * cfg.users_per_group());
    for (g, center) in group_centers.iter().enumerate() {
        for i in 0..cfg.users_per_group() {
            let mut rng = rng::stream(seed, "user", &[g as u64, i as u64]);
            let r = cfg.group_radius_m * rng.gen::<f64>().sqrt();
            let ang = 2.0 * PI * rng.gen::<f64>();
            let role = if i < cfg.intended_per_group {
                UserRole::Intended
            } else {
                UserRole::Eavesdropper
            };
            users.push(UserNode {
                position: [center[0] + r * ang.cos(), center[1] + r * ang.sin()],
                role,
                group: g,
                noise_power_w: noise,
            });
        }
    }

    let centroid = {
        let mut c = [0.0; 2];
        for gc in &group_centers {
            c[0] += gc[0];
            c[1] += gc[1];
        }
        [c[0] / k as f64, c[1] / k as f64]
    };

    let clamp = |v: f64| v.clamp(-cfg.region_half_extent_m, cfg.region_half_extent_m);
    let aris_initial: Vec<[f64; 2]> = (0..cfg.aris_count)
        .map(|j| {
            let mut c = [0.0; 2];
            let mut n = 0usize;
            for u in users.iter().filter(|u| u.group == j && u.role == UserRole::Intended) {
                c[0] += u.position[0];
                c[1] += u.position[1];
                n += 1;
            }
            [clamp(c[0] / n as f64), clamp(c[1] / n as f64)]
        })
        .collect();

    Topology {
        group_centers,
        users,
        aris_initial,
        aris_altitude_m: cfg.aris_altitude_m,
        satellite_position: [centroid[0], centroid[1], cfg.sat_altitude_m],
    }
}

/// Distance between an ARIS at horizontal `q` (altitude `h`) and a ground
/// point `omega`: sqrt(||q - omega||^2 + h^2).
pub fn aris_user_distance(q: [f64; 2], omega: [f64; 2], h: f64) -> f64 {
    let dx = q[0] - omega[0];
    let dy = q[1] - omega[1];
    (dx * dx + dy * dy + h * h).sqrt()
}

/// Euclidean distance between two 3-D points.
pub fn distance_3d(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Angle at the satellite between the ray to `node` and the ray to beam
/// center `beam_center` (a ground point). Result in [0, pi].
pub fn off_axis_angle(sat: [f64; 3], node: [f64; 3], beam_center: [f64; 2]) -> f64 {
    let a = [node[0] - sat[0], node[1] - sat[1], node[2] - sat[2]];
    let b = [
        beam_center[0] - sat[0],
        beam_center[1] - sat[1],
        -sat[2],
    ];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
    dot.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_config_gives_full_scale_defaults() {
        let cfg = load_scenario("").unwrap();
        assert_eq!(cfg.groups, 5);
        assert_eq!(cfg.aris_count, 3);
        assert_eq!(cfg.antennas, 5);
        assert_eq!(cfg.subsurfaces, 25);
        assert_eq!(cfg.elements_per_subsurface, 25);
        assert_eq!(cfg.total_power_w, 100.0);
        assert_eq!(cfg.bandwidth_hz, 2e8);
        assert_eq!(cfg.noise_temp_k, 290.0);
        assert_eq!(cfg.max_gain_linear, 1e5);
    }

    #[test]
    fn j_exceeding_k_is_rejected() {
        let err = load_scenario("aris_count = 6\ngroups = 5\n").unwrap_err();
        match err {
            ScenarioError::Invariant { field, reason } => {
                assert_eq!(field, "aris_count");
                assert!(reason.contains("J exceeds K"), "{reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn db_keys_convert_to_linear() {
        let cfg =
            load_scenario("penalty_tau = 10\npath_loss_exponent = 2.3\nrician_factor_db = 3\n")
                .unwrap();
        assert_eq!(cfg.penalty_tau, 10.0);
        assert_eq!(cfg.path_loss_exponent, 2.3);
        assert!((cfg.rician_factor_linear - 1.995).abs() < 1e-2);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = load_scenario("bogus_key = 1\n").unwrap_err();
        assert!(matches!(err, ScenarioError::UnknownKey { .. }));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = load_scenario("# heading\n\ngroups = 2  # trailing\naris_count = 1\n").unwrap();
        assert_eq!(cfg.groups, 2);
        assert_eq!(cfg.aris_count, 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = ScenarioConfig::desk();
        let a = sample_topology(&cfg, 42);
        let b = sample_topology(&cfg, 42);
        assert_eq!(a.users.len(), b.users.len());
        for (x, y) in a.users.iter().zip(b.users.iter()) {
            assert_eq!(x.position, y.position);
        }
        assert_eq!(a.aris_initial, b.aris_initial);
        let c = sample_topology(&cfg, 43);
        assert_ne!(a.users[0].position, c.users[0].position);
    }

    #[test]
    fn users_stay_inside_group_radius() {
        let mut cfg = ScenarioConfig::desk();
        cfg.groups = 1;
        cfg.aris_count = 1;
        cfg.intended_per_group = 1;
        cfg.eaves_per_group = 0;
        cfg.wiretap_thresholds = vec![0.5];
        let mut max_r: f64 = 0.0;
        for seed in 0..10_000u64 {
            let topo = sample_topology(&cfg, seed);
            let c = topo.group_centers[0];
            for u in &topo.users {
                let d = ((u.position[0] - c[0]).powi(2) + (u.position[1] - c[1]).powi(2)).sqrt();
                max_r = max_r.max(d);
            }
        }
        assert!(max_r <= cfg.group_radius_m + 1e-9, "max radius {max_r}");
    }

    #[test]
    fn mean_radial_distance_matches_uniform_disc_moment() {
        // E[r] over the uniform disc is 2R/3.
        let mut cfg = ScenarioConfig::desk();
        cfg.groups = 1;
        cfg.aris_count = 1;
        cfg.intended_per_group = 1;
        cfg.eaves_per_group = 0;
        cfg.wiretap_thresholds = vec![0.5];
        let n = 100_000u64;
        let mut acc = 0.0;
        for seed in 0..n {
            let topo = sample_topology(&cfg, seed);
            let c = topo.group_centers[0];
            let u = &topo.users[0];
            acc += ((u.position[0] - c[0]).powi(2) + (u.position[1] - c[1]).powi(2)).sqrt();
        }
        let mean = acc / n as f64;
        let expected = 2.0 / 3.0 * cfg.group_radius_m;
        assert!(
            (mean - expected).abs() / expected < 0.01,
            "mean {mean}, expected {expected}"
        );
    }

    #[test]
    fn distance_344_triangle_and_vertical() {
        assert!((aris_user_distance([0.0, 0.0], [3.0, 4.0], 0.0) - 5.0).abs() < 1e-12);
        assert!((aris_user_distance([7.0, -2.0], [7.0, -2.0], 100.0) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn off_axis_angle_zero_at_center_and_symmetric() {
        let sat = [0.0, 0.0, 220e3];
        assert!(off_axis_angle(sat, [500.0, 0.0, 0.0], [500.0, 0.0]) < 1e-15);
        let left = off_axis_angle(sat, [-300.0, 0.0, 0.0], [0.0, 0.0]);
        let right = off_axis_angle(sat, [300.0, 0.0, 0.0], [0.0, 0.0]);
        assert!((left - right).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_at_least_h(
            qx in -5e3..5e3f64, qy in -5e3..5e3f64,
            wx in -5e3..5e3f64, wy in -5e3..5e3f64,
            h in 0.0..500.0f64,
        ) {
            let d = aris_user_distance([qx, qy], [wx, wy], h);
            let d2 = aris_user_distance([wx, wy], [qx, qy], h);
            prop_assert!((d - d2).abs() < 1e-9);
            prop_assert!(d >= h - 1e-12);
            // independent 3-D norm oracle
            let oracle = distance_3d([qx, qy, h], [wx, wy, 0.0]);
            prop_assert!((d - oracle).abs() <= 1e-12 * oracle.max(1.0));
        }

        #[test]
        fn off_axis_angle_matches_dot_product_oracle(
            nx in -2e3..2e3f64, ny in -2e3..2e3f64,
            bx in -2e3..2e3f64, by in -2e3..2e3f64,
            nz in 0.0..200.0f64,
        ) {
            let sat = [37.0, -11.0, 220e3];
            let ang = off_axis_angle(sat, [nx, ny, nz], [bx, by]);
            prop_assert!((0.0..=PI).contains(&ang));
            let a = [nx - sat[0], ny - sat[1], nz - sat[2]];
            let b = [bx - sat[0], by - sat[1], -sat[2]];
            let na = (a[0]*a[0]+a[1]*a[1]+a[2]*a[2]).sqrt();
            let nb = (b[0]*b[0]+b[1]*b[1]+b[2]*b[2]).sqrt();
            let oracle = ((a[0]*b[0]+a[1]*b[1]+a[2]*b[2])/(na*nb)).clamp(-1.0, 1.0).acos();
            prop_assert!((ang - oracle).abs() < 1e-12);
        }
    }
}
