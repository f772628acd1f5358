//! Batch experiment runner: Monte Carlo trials over sweep grids, baseline
//! schemes sharing channel draws, and deterministic result export.
//!
//! Result files are byte-stable given identical specs: rows are emitted in
//! (point, seed, scheme) order, numbers use Rust's shortest-roundtrip float
//! formatting, and wall-clock timings live in a separate diagnostics table
//! excluded from the determinism guarantee.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bcd::{run_bcd_on, RunOutcome, SchemeMode};
use crate::channel::ChannelSet;
use crate::scenario::{sample_topology, ScenarioConfig, ScenarioError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),

    #[error("experiment line {line}: bad value for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("invalid experiment: {0}")]
    Invalid(String),

    #[error("unknown figure {0} (supported: 3, 4, 5, 6, 7)")]
    UnknownFigure(u8),

    #[error("export I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

/// One sweep axis; the grid is the cartesian product of all axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Axis {
    ElementsPerSubsurface(Vec<usize>),
    Subsurfaces(Vec<usize>),
    WiretapThreshold(Vec<f64>),
    PathLossExponent(Vec<f64>),
    TotalPowerW(Vec<f64>),
    ArisAltitudeM(Vec<f64>),
}

impl Axis {
    fn name(&self) -> &'static str {
        match self {
            Axis::ElementsPerSubsurface(_) => "elements_per_subsurface",
            Axis::Subsurfaces(_) => "subsurfaces",
            Axis::WiretapThreshold(_) => "wiretap_threshold",
            Axis::PathLossExponent(_) => "path_loss_exponent",
            Axis::TotalPowerW(_) => "total_power_w",
            Axis::ArisAltitudeM(_) => "aris_altitude_m",
        }
    }

    fn len(&self) -> usize {
        match self {
            Axis::ElementsPerSubsurface(v) => v.len(),
            Axis::Subsurfaces(v) => v.len(),
            Axis::WiretapThreshold(v) => v.len(),
            Axis::PathLossExponent(v) => v.len(),
            Axis::TotalPowerW(v) => v.len(),
            Axis::ArisAltitudeM(v) => v.len(),
        }
    }

    fn value(&self, ix: usize) -> f64 {
        match self {
            Axis::ElementsPerSubsurface(v) => v[ix] as f64,
            Axis::Subsurfaces(v) => v[ix] as f64,
            Axis::WiretapThreshold(v) => v[ix],
            Axis::PathLossExponent(v) => v[ix],
            Axis::TotalPowerW(v) => v[ix],
            Axis::ArisAltitudeM(v) => v[ix],
        }
    }

    fn apply(&self, ix: usize, cfg: &mut ScenarioConfig) {
        match self {
            Axis::ElementsPerSubsurface(v) => cfg.elements_per_subsurface = v[ix],
            Axis::Subsurfaces(v) => cfg.subsurfaces = v[ix],
            Axis::WiretapThreshold(v) => cfg.set_wiretap_threshold(v[ix]),
            Axis::PathLossExponent(v) => cfg.path_loss_exponent = v[ix],
            Axis::TotalPowerW(v) => cfg.total_power_w = v[ix],
            Axis::ArisAltitudeM(v) => cfg.aris_altitude_m = v[ix],
        }
    }
}

/// A batch of Monte Carlo trials over a sweep grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub axes: Vec<Axis>,
    pub trials: usize,
    pub seed_base: u64,
    pub schemes: Vec<SchemeMode>,
    pub figure: Option<u8>,
}

impl ExperimentSpec {
    /// Single-point spec at the given scenario.
    pub fn single(scenario: ScenarioConfig, trials: usize, seed_base: u64) -> Self {
        ExperimentSpec {
            scenario,
            axes: Vec::new(),
            trials,
            seed_base,
            schemes: vec![SchemeMode::Proposed],
            figure: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.scenario.validate()?;
        if self.trials < 1 {
            return Err(ExperimentError::Invalid("trial count must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(ExperimentError::Invalid("no schemes enabled".into()));
        }
        if self.axes.iter().any(|a| a.len() == 0) {
            return Err(ExperimentError::Invalid("empty sweep axis".into()));
        }
        Ok(())
    }

    /// Number of grid points (product of axis lengths; 1 with no axes).
    pub fn grid_size(&self) -> usize {
        self.axes.iter().map(Axis::len).product::<usize>().max(1)
    }

    /// The scenario at grid point `point`, with the applied (name, value)
    /// pairs.
    pub fn scenario_at(&self, point: usize) -> (ScenarioConfig, Vec<(String, f64)>) {
        let mut cfg = self.scenario.clone();
        let mut params = Vec::new();
        let mut rest = point;
        for axis in &self.axes {
            let ix = rest % axis.len();
            rest /= axis.len();
            axis.apply(ix, &mut cfg);
            params.push((axis.name().to_string(), axis.value(ix)));
        }
        (cfg, params)
    }

    /// Parse an experiment spec file: scenario keys plus the experiment keys
    /// `trials`, `seed_base`, `schemes`, and `sweep_*` lists. Unknown keys
    /// are errors.
    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let mut scenario_lines = String::new();
        let mut axes = Vec::new();
        let mut trials = 20usize;
        let mut seed_base = 0u64;
        let mut schemes = vec![
            SchemeMode::Proposed,
            SchemeMode::FixedDeployment,
            SchemeMode::WithoutRis,
        ];
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
            let Some((key, value)) = stripped.split_once('=') else {
                scenario_lines.push_str(raw);
                scenario_lines.push('\n');
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |reason: String| ExperimentError::BadValue {
                line,
                key: key.to_string(),
                reason,
            };
            let parse_list_f64 = |v: &str| -> Result<Vec<f64>, ExperimentError> {
                v.split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                    .collect()
            };
            let parse_list_usize = |v: &str| -> Result<Vec<usize>, ExperimentError> {
                v.split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|e| bad(e.to_string())))
                    .collect()
            };
            match key {
                "trials" => trials = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "seed_base" => seed_base = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "schemes" => {
                    schemes = value
                        .split(',')
                        .map(|s| match s.trim() {
                            "proposed" => Ok(SchemeMode::Proposed),
                            "fixed-deployment" => Ok(SchemeMode::FixedDeployment),
                            "without-ris" => Ok(SchemeMode::WithoutRis),
                            other => Err(bad(format!("unknown scheme `{other}`"))),
                        })
                        .collect::<Result<_, _>>()?;
                }
                "sweep_elements_per_subsurface" => {
                    axes.push(Axis::ElementsPerSubsurface(parse_list_usize(value)?))
                }
                "sweep_subsurfaces" => axes.push(Axis::Subsurfaces(parse_list_usize(value)?)),
                "sweep_wiretap_threshold" => {
                    axes.push(Axis::WiretapThreshold(parse_list_f64(value)?))
                }
                "sweep_path_loss_exponent" => {
                    axes.push(Axis::PathLossExponent(parse_list_f64(value)?))
                }
                "sweep_total_power_w" => axes.push(Axis::TotalPowerW(parse_list_f64(value)?)),
                "sweep_aris_altitude_m" => axes.push(Axis::ArisAltitudeM(parse_list_f64(value)?)),
                _ => {
                    scenario_lines.push_str(raw);
                    scenario_lines.push('\n');
                }
            }
        }
        let spec = ExperimentSpec {
            scenario: ScenarioConfig::from_text(&scenario_lines)?,
            axes,
            trials,
            seed_base,
            schemes,
            figure: None,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One result row. Deterministic content only; timing lives in
/// [`TimingTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub point: usize,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
    pub scheme: String,
    /// "ok" or the error description; failed trials keep their row.
    pub status: String,
    /// Sum of per-group minimum intended rates (bits/s/Hz).
    pub objective: f64,
    /// Sum of all intended users' rates (bits/s/Hz).
    pub sum_rate: f64,
    pub group_min_rates: Vec<f64>,
    pub max_eaves_rate: f64,
    pub outer_iterations: usize,
    pub tx_iterations: usize,
    pub reflect_iterations: usize,
    pub assoc_steps: usize,
    pub deploy_steps: usize,
    /// Hash of the scheme-independent channel realization of this
    /// (point, seed); equal across schemes by construction.
    pub channel_hash: u64,
    pub audit_flagged: bool,
}

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub schema_version: u32,
    pub rows: Vec<ResultRow>,
}

/// Wall-clock diagnostics, exported separately; not byte-stable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<(usize, u64, String, f64)>,
}

/// Run every (grid point, seed, scheme) trial. All schemes of one
/// (point, seed) consume the identical topology and draw streams; trials run
/// in parallel and results are merged in deterministic order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(ResultsTable, TimingTable), ExperimentError> {
    spec.validate()?;
    let points = spec.grid_size();
    let jobs: Vec<(usize, u64)> = (0..points)
        .flat_map(|p| (0..spec.trials).map(move |t| (p, spec.seed_base + t as u64)))
        .collect();

    let per_job: Vec<(Vec<ResultRow>, Vec<(usize, u64, String, f64)>)> = jobs
        .par_iter()
        .map(|&(point, seed)| {
            let (cfg, params) = spec.scenario_at(point);
            let topo = sample_topology(&cfg, seed);
            let reference_hash =
                ChannelSet::synthesize(&cfg, &topo, &topo.aris_initial, seed).content_hash();
            let mut rows = Vec::new();
            let mut timing = Vec::new();
            for &scheme in &spec.schemes {
                let started = std::time::Instant::now();
                let outcome = run_bcd_on(&cfg, &topo, seed, scheme);
                let wall_ms = started.elapsed().as_secs_f64() * 1e3;
                rows.push(row_from_outcome(
                    point,
                    &params,
                    seed,
                    scheme,
                    outcome,
                    reference_hash,
                ));
                timing.push((point, seed, scheme.label().to_string(), wall_ms));
            }
            (rows, timing)
        })
        .collect();

    let mut rows: Vec<ResultRow> = per_job.iter().flat_map(|(r, _)| r.clone()).collect();
    rows.sort_by(|a, b| (a.point, a.seed, a.scheme.clone()).cmp(&(b.point, b.seed, b.scheme.clone())));
    let mut timing: Vec<(usize, u64, String, f64)> =
        per_job.into_iter().flat_map(|(_, t)| t).collect();
    timing.sort_by(|a, b| (a.0, a.1, a.2.clone()).cmp(&(b.0, b.1, b.2.clone())));

    Ok((
        ResultsTable {
            schema_version: RESULTS_SCHEMA_VERSION,
            rows,
        },
        TimingTable { rows: timing },
    ))
}

fn row_from_outcome(
    point: usize,
    params: &[(String, f64)],
    seed: u64,
    scheme: SchemeMode,
    outcome: Result<RunOutcome, crate::bcd::RunError>,
    channel_hash: u64,
) -> ResultRow {
    match outcome {
        Ok(out) => {
            let totals = out.trace.outer.iter().fold((0, 0, 0, 0), |acc, rec| {
                (
                    acc.0 + rec.tx_iterations,
                    acc.1 + rec.reflect_iterations,
                    acc.2 + rec.assoc_steps,
                    acc.3 + rec.deploy_steps,
                )
            });
            ResultRow {
                point,
                params: params.to_vec(),
                seed,
                scheme: scheme.label().to_string(),
                status: "ok".into(),
                objective: out.report.objective,
                sum_rate: out.report.sum_rate_intended,
                group_min_rates: out.report.group_min_intended.clone(),
                max_eaves_rate: out
                    .report
                    .group_max_eaves
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max),
                outer_iterations: out.trace.outer.len(),
                tx_iterations: totals.0,
                reflect_iterations: totals.1,
                assoc_steps: totals.2,
                deploy_steps: totals.3,
                channel_hash,
                audit_flagged: out.trace.flagged,
            }
        }
        Err(e) => ResultRow {
            point,
            params: params.to_vec(),
            seed,
            scheme: scheme.label().to_string(),
            status: e.to_string(),
            objective: 0.0,
            sum_rate: 0.0,
            group_min_rates: Vec::new(),
            max_eaves_rate: 0.0,
            outer_iterations: 0,
            tx_iterations: 0,
            reflect_iterations: 0,
            assoc_steps: 0,
            deploy_steps: 0,
            channel_hash,
            audit_flagged: true,
        },
    }
}

/// Transmit-beamforming-only baseline: the reflection, association, and
/// deployment blocks never run (chi = 0 throughout).
pub fn baseline_without_ris(
    cfg: &ScenarioConfig,
    topo: &crate::scenario::Topology,
    seed: u64,
) -> Result<RunOutcome, crate::bcd::RunError> {
    run_bcd_on(cfg, topo, seed, SchemeMode::WithoutRis)
}

/// Full pipeline minus the deployment block; ARISs stay at the configured
/// fixed positions (group centers of the first J groups).
pub fn baseline_fixed_deployment(
    cfg: &ScenarioConfig,
    topo: &crate::scenario::Topology,
    seed: u64,
) -> Result<RunOutcome, crate::bcd::RunError> {
    run_bcd_on(cfg, topo, seed, SchemeMode::FixedDeployment)
}

/// Desk-scale sweep grid reproducing one result figure's axes.
pub fn sweep_figure_data(
    figure: u8,
    base: Option<ScenarioConfig>,
    trials: usize,
    seed_base: u64,
) -> Result<ExperimentSpec, ExperimentError> {
    let scenario = base.unwrap_or_else(ScenarioConfig::desk);
    let (axes, schemes) = match figure {
        // objective versus reflecting elements per subsurface, all schemes
        3 => (
            vec![Axis::ElementsPerSubsurface(vec![4, 8, 16])],
            vec![
                SchemeMode::Proposed,
                SchemeMode::FixedDeployment,
                SchemeMode::WithoutRis,
            ],
        ),
        // objective versus the wiretap threshold; the top of the grid sits
        // above any achievable rate so saturation is observable
        4 => (
            vec![Axis::WiretapThreshold(vec![0.2, 0.7, 2.0, 24.0, 48.0])],
            vec![SchemeMode::Proposed],
        ),
        // objective versus the ground path loss exponent
        5 => (
            vec![Axis::PathLossExponent(vec![2.0, 2.3, 2.6])],
            vec![SchemeMode::Proposed],
        ),
        // objective versus satellite transmit power
        6 => (
            vec![Axis::TotalPowerW(vec![25.0, 50.0, 100.0])],
            vec![SchemeMode::Proposed],
        ),
        // objective versus ARIS altitude
        7 => (
            vec![Axis::ArisAltitudeM(vec![50.0, 100.0, 200.0])],
            vec![SchemeMode::Proposed],
        ),
        other => return Err(ExperimentError::UnknownFigure(other)),
    };
    Ok(ExperimentSpec {
        scenario,
        axes,
        trials,
        seed_base,
        schemes,
        figure: Some(figure),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

fn params_str(params: &[(String, f64)]) -> String {
    params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Render the deterministic results file.
pub fn render_results(table: &ResultsTable, format: ExportFormat) -> String {
    match format {
        ExportFormat::Json => {
            let mut s = serde_json::to_string_pretty(table).expect("table serializes");
            s.push('\n');
            s
        }
        ExportFormat::Csv => {
            let mut s = String::new();
            s.push_str("schema_version,point,params,seed,scheme,status,objective_bps_hz,sum_rate_bps_hz,group_min_rates,max_eaves_rate_bps_hz,outer_iters,tx_iters,reflect_iters,assoc_steps,deploy_steps,channel_hash,audit_flagged\n");
            for r in &table.rows {
                let groups = r
                    .group_min_rates
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(";");
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    table.schema_version,
                    r.point,
                    params_str(&r.params),
                    r.seed,
                    r.scheme,
                    r.status,
                    r.objective,
                    r.sum_rate,
                    groups,
                    r.max_eaves_rate,
                    r.outer_iterations,
                    r.tx_iterations,
                    r.reflect_iterations,
                    r.assoc_steps,
                    r.deploy_steps,
                    r.channel_hash,
                    r.audit_flagged,
                );
            }
            s
        }
    }
}

/// Write the deterministic results file plus the timing diagnostics file.
/// Returns the written paths (results first).
pub fn export_results(
    table: &ResultsTable,
    timing: Option<&TimingTable>,
    format: ExportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let results_path = dir.join(match format {
        ExportFormat::Csv => "results.csv",
        ExportFormat::Json => "results.json",
    });
    std::fs::write(&results_path, render_results(table, format))?;
    written.push(results_path);
    if let Some(t) = timing {
        let mut s = String::from("point,seed,scheme,wall_ms\n");
        for (p, seed, scheme, ms) in &t.rows {
            let _ = writeln!(s, "{p},{seed},{scheme},{ms}");
        }
        let timing_path = dir.join("timing.csv");
        std::fs::write(&timing_path, s)?;
        written.push(timing_path);
    }
    Ok(written)
}

/// Parse a results JSON file back into a table.
pub fn parse_results_json(text: &str) -> Result<ResultsTable, ExperimentError> {
    serde_json::from_str(text)
        .map_err(|e| ExperimentError::Invalid(format!("results JSON parse: {e}")))
}
