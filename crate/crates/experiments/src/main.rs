use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use basehop_core::energy::{CostMatrix, RechargeTrace, SlotConfig};
use basehop_core::schedulers::{exhaustive_opt, opt_offline};
use basehop_experiments::output::emit_outputs;
use basehop_experiments::{run_experiment, ExperimentError, ExperimentSpec};
use clap::{Parser, Subcommand};
use serde::Deserialize;

/// Largest horizon the exhaustive oracle accepts.
const ORACLE_MAX_SLOTS: usize = 12;

#[derive(Parser)]
#[command(name = "basehop", version, about = "Base-station hopping experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write its outputs.
    Run {
        spec: PathBuf,
        /// Replace the spec's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the spec's `output` or `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Override the slot horizon.
        #[arg(long)]
        max_slots: Option<usize>,
    },
    /// Parse and validate a spec without running it.
    Validate { spec: PathBuf },
    /// Compare the offline optimum with brute force on a tiny instance.
    Oracle { instance: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleInstance {
    cost: Vec<Vec<f64>>,
    /// One row of per-station recharge per slot.
    trace: Vec<Vec<f64>>,
    e0: f64,
    tau: f64,
    max_slots: usize,
}

/// Failed assertions inside an otherwise successful run.
#[derive(Debug)]
struct AssertionFailure(String);

impl std::fmt::Display for AssertionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AssertionFailure {}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    Ok(ExperimentSpec::from_path(path)?)
}

fn run(spec_path: &Path, seed: Option<u64>, out: Option<PathBuf>, jobs: usize, max_slots: Option<usize>) -> Result<()> {
    let mut spec = load_spec(spec_path)?;
    if let Some(s) = seed {
        spec.seeds = vec![s];
    }
    if let Some(n) = max_slots {
        spec.base.max_slots = n;
    }
    spec.validate()?;
    let dir = out.or_else(|| spec.output.clone()).unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().context("building worker pool")?;
    let outcome = pool.install(|| run_experiment(&spec))?;
    let files = emit_outputs(&spec, &outcome, &dir)?;
    println!("{}: {} rows, {} files in {}", spec.name, outcome.table.len(), files.len(), dir.display());
    for w in outcome.warnings() {
        eprintln!("warning: {}: {}", w.name, w.detail);
    }
    let failed = outcome.failed_assertions();
    if !failed.is_empty() {
        let msg = failed.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("\n");
        return Err(AssertionFailure(msg).into());
    }
    Ok(())
}

fn oracle(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    let inst: OracleInstance =
        toml::from_str(&text).map_err(|e| ExperimentError::Validation(format!("{}: {e}", path.display())))?;
    if inst.max_slots > ORACLE_MAX_SLOTS {
        return Err(ExperimentError::Validation(format!(
            "oracle horizon {} exceeds {ORACLE_MAX_SLOTS} slots",
            inst.max_slots
        ))
        .into());
    }
    let invalid = |e: basehop_core::Error| ExperimentError::Validation(e.to_string());
    let c = CostMatrix::new(inst.cost).map_err(invalid)?;
    let trace = RechargeTrace::from_samples(inst.trace).map_err(invalid)?;
    let cfg = SlotConfig::new(inst.tau, inst.max_slots).map_err(invalid)?;
    let brute = exhaustive_opt(inst.e0, &trace, &c, &cfg, ORACLE_MAX_SLOTS).map_err(invalid)?;
    let opt = opt_offline(inst.e0, &trace, &c, &cfg).map_err(invalid)?;
    println!("exhaustive: {:?}", brute);
    println!("opt:        {:?} ({:?})", opt.lifetime, opt.optimality);
    if brute != opt.lifetime {
        bail!(AssertionFailure(format!("OPT {:?} differs from exhaustive {:?}", opt.lifetime, brute)));
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<AssertionFailure>().is_some() {
        return 2;
    }
    match err.downcast_ref::<ExperimentError>() {
        Some(ExperimentError::Io { .. }) | Some(ExperimentError::Trace { .. }) => 3,
        Some(ExperimentError::Validation(_)) | Some(ExperimentError::Toml(_)) => 1,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { spec, seed, out, jobs, max_slots } => run(&spec, seed, out, jobs, max_slots),
        Command::Validate { spec } => load_spec(&spec).map(|s| println!("{}: ok ({})", s.name, s.hash())),
        Command::Oracle { instance } => oracle(&instance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
