//! Command-line batch runner for the ARIS-assisted secure downlink
//! simulator: experiment execution, figure-style sweeps, and config
//! validation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use arisim_core::experiment::{
    export_results, run_experiment, sweep_figure_data, ExperimentSpec, ExportFormat,
};
use arisim_core::scenario::{load_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "arisim",
    about = "Secure multibeam satellite downlink simulator with aerial RIS optimization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> ExportFormat {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec file (scenario keys plus trials/schemes/sweep_* keys).
    spec: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Figure-style sweep to run (3, 4, 5, 6, or 7).
    #[arg(long)]
    figure: u8,
    /// Optional scenario config overriding the desk-scale preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// Base seed; trial t uses seed base + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $ARISIM_OUT or ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format for the results table.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a spec file.
    Run(RunArgs),
    /// Run a preconfigured desk-scale figure sweep.
    Sweep(SweepArgs),
    /// Parse and validate a scenario config file.
    Validate {
        /// Scenario config file.
        config: PathBuf,
    },
}

fn out_dir(chosen: &Option<PathBuf>) -> PathBuf {
    chosen
        .clone()
        .or_else(|| std::env::var_os("ARISIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn apply_common(spec: &mut ExperimentSpec, common: &CommonArgs) {
    if let Some(seed) = common.seed {
        spec.seed_base = seed;
    }
    if let Some(trials) = common.trials {
        spec.trials = trials;
    }
}

fn execute(spec: &ExperimentSpec, common: &CommonArgs) -> Result<(), String> {
    if let Some(workers) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| format!("worker pool: {e}"))?;
    }
    let (table, timing) = run_experiment(spec).map_err(|e| e.to_string())?;
    let dir = out_dir(&common.out);
    let paths = export_results(&table, Some(&timing), common.format.into(), &dir)
        .map_err(|e| e.to_string())?;

    let mut by_scheme: Vec<(String, f64, usize)> = Vec::new();
    for row in table.rows.iter().filter(|r| r.status == "ok") {
        match by_scheme.iter_mut().find(|(s, _, _)| *s == row.scheme) {
            Some(entry) => {
                entry.1 += row.objective;
                entry.2 += 1;
            }
            None => by_scheme.push((row.scheme.clone(), row.objective, 1)),
        }
    }
    println!("{} rows over {} grid points", table.rows.len(), spec.grid_size());
    for (scheme, sum, n) in &by_scheme {
        println!("  {scheme}: mean objective {:.4} bits/s/Hz over {n} trials", sum / *n as f64);
    }
    let failures = table.rows.iter().filter(|r| r.status != "ok").count();
    if failures > 0 {
        println!("  {failures} failed trials recorded in the results table");
    }
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => std::fs::read_to_string(&args.spec)
            .map_err(|e| format!("{}: {e}", args.spec.display()))
            .and_then(|text| ExperimentSpec::from_text(&text).map_err(|e| e.to_string()))
            .and_then(|mut spec| {
                apply_common(&mut spec, &args.common);
                execute(&spec, &args.common)
            }),
        Command::Sweep(args) => {
            let base: Result<Option<ScenarioConfig>, String> = match &args.config {
                Some(path) => std::fs::read_to_string(path)
                    .map_err(|e| format!("{}: {e}", path.display()))
                    .and_then(|text| load_scenario(&text).map_err(|e| e.to_string()))
                    .map(Some),
                None => Ok(None),
            };
            base.and_then(|base| {
                sweep_figure_data(
                    args.figure,
                    base,
                    args.common.trials.unwrap_or(20),
                    args.common.seed.unwrap_or(0),
                )
                .map_err(|e| e.to_string())
            })
            .and_then(|spec| execute(&spec, &args.common))
        }
        Command::Validate { config } => std::fs::read_to_string(&config)
            .map_err(|e| format!("{}: {e}", config.display()))
            .and_then(|text| load_scenario(&text).map_err(|e| e.to_string()))
            .map(|cfg| {
                println!(
                    "valid scenario: K={} J={} L={} N={} E_sub={}, {} intended + {} eavesdroppers per group",
                    cfg.groups,
                    cfg.aris_count,
                    cfg.antennas,
                    cfg.subsurfaces,
                    cfg.elements_per_subsurface,
                    cfg.intended_per_group,
                    cfg.eaves_per_group
                );
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
