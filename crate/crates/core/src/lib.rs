//! Simulator for secure multibeam satellite downlinks assisted by multiple
//! aerial reconfigurable intelligent surfaces.
//!
//! The library models the satellite, reflection, and ground channels,
//! evaluates secure multicast rates, and jointly optimizes transmit
//! beamforming, per-subsurface reflection phases, ARIS-group association,
//! and ARIS placement through a block-coordinate-descent pipeline built on
//! small conic programs. The [`experiment`] module runs Monte Carlo sweeps
//! with baseline schemes on shared channel draws.

pub mod assoc;
pub mod bcd;
pub mod channel;
pub mod conic;
pub mod deploy;
pub mod experiment;
pub mod rates;
pub mod reflect;
pub mod rng;
pub mod scenario;
pub mod subproblem;
pub mod txbf;

pub use bcd::{run_bcd, run_bcd_on, BcdTrace, RunOutcome, SchemeMode};
pub use channel::ChannelSet;
pub use experiment::{
    run_experiment, sweep_figure_data, ExperimentSpec, ExportFormat, ResultsTable,
};
pub use rates::{check_feasibility, rate_report, DecisionState, FeasibilityReport, RateReport};
pub use scenario::{load_scenario, sample_topology, ScenarioConfig, Topology};
