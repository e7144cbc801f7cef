//! `lis-sim`: command-line front end of the LIS simulator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use lis_core::asymptotics::{asymptotic_sse, moment_set};
use lis_core::channel::BlockKey;
use lis_core::config::{key_reference, RunConfig};
use lis_core::harness::experiments::{
    placement, run_experiment, schedule_placement, simulate_network, worker_pool, ExperimentId, ExperimentSpec, PlacementContext,
};
use lis_core::harness::output::write_output;
use lis_core::optimize::optimal_pilot_length;
use lis_core::{LisError, Result};

#[derive(Parser, Debug)]
#[command(name = "lis-sim", version, about = "Uplink multi-LIS simulator and analysis toolkit", after_help = key_reference())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (same as --set system.seed=N).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "LIS_SIM_WORKERS")]
    workers: Option<usize>,
    /// Configuration override `key=value`, repeatable. See the key list below.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo ergodic SSE of every LIS at the configured parameters.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form moments, deterministic SSE and bound of every LIS (placement 0, block 0).
    Asymptotic {
        #[command(flatten)]
        common: Common,
    },
    /// Pilot length maximizing the deterministic SSE of LIS 0 (placement 0, block 0).
    OptimizeT {
        #[command(flatten)]
        common: Common,
    },
    /// Number of scheduled devices from the bound objective, per placement of the candidate pool.
    OptimizeK {
        #[command(flatten)]
        common: Common,
    },
    /// Checks the closed-form moments against sampling; exit 0 iff every exact term passes.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Runs a figure experiment (fig4, fig5, fig6, fig6b, fig7, fig8, fig9, oracle).
    Reproduce {
        /// Experiment id.
        figure: String,
        /// Use full-scale realization and placement counts.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, base: RunConfig) -> Result<RunConfig> {
    let mut run = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => base,
    };
    if let Some(seed) = common.seed {
        run.system.seed = seed;
    }
    for o in &common.overrides {
        run.apply_override(o)?;
    }
    run.validate()?;
    Ok(run)
}

fn workers(common: &Common) -> Result<usize> {
    match common.workers {
        Some(0) => Err(LisError::config("--workers", "must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn in_pool<T: Send>(common: &Common, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    worker_pool(workers(common)?)?.install(f)
}

fn emit(common: &Common, name: &str, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{name}.json"));
            std::fs::write(&path, &text)?;
            println!("{}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn simulate(common: &Common) -> Result<()> {
    let run = resolve(common, RunConfig::default())?;
    let sim = in_pool(common, || simulate_network(&run))?;
    emit(common, "simulate", &json!({"config": run, "result": sim}))
}

fn asymptotic(common: &Common) -> Result<()> {
    let run = resolve(common, RunConfig::default())?;
    let dep = placement(&run, 0)?;
    let ctx = PlacementContext::new(run.system.clone(), &dep)?;
    let key = BlockKey { seed: run.system.seed, placement: 0, block: 0 };
    let t = run.system.pilot_length() as f64;
    let mut per_lis = Vec::new();
    for n in 0..run.system.lis_count {
        let ms: Vec<_> = (0..run.system.devices).map(|k| ctx.unit(key, n, k).map(|u| moment_set(&u))).collect::<Result<_>>()?;
        let a = asymptotic_sse(&ctx.cfg, &dep, &ms, t)?;
        let nonfinite = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
        per_lis.push(json!({
            "lis": n,
            "sse_bar": a.sse_bar,
            "sse_hat": nonfinite(a.sse_hat),
            "unbounded": a.unbounded,
            "gamma_bar": a.gamma_bar,
            "gamma_hat": a.gamma_hat.iter().map(|g| nonfinite(*g)).collect::<Vec<_>>(),
            "p_bar": a.p_bar,
            "moments": ms.iter().map(|m| m.report(t)).collect::<Vec<_>>(),
        }));
    }
    emit(common, "asymptotic", &json!({"config": run, "pilot_len": t, "lis": per_lis}))
}

fn optimize_t(common: &Common) -> Result<()> {
    let run = resolve(common, RunConfig::default())?;
    let dep = placement(&run, 0)?;
    let ctx = PlacementContext::new(run.system.clone(), &dep)?;
    let key = BlockKey { seed: run.system.seed, placement: 0, block: 0 };
    let ms: Vec<_> = (0..run.system.devices).map(|k| ctx.unit(key, 0, k).map(|u| moment_set(&u))).collect::<Result<_>>()?;
    let sol = optimal_pilot_length(&ctx.cfg, &dep, &ms)?;
    emit(
        common,
        "optimize_t",
        &json!({
            "t_opt": sol.t_opt,
            "t_opt_continuous": sol.t_opt_continuous,
            "objective": sol.objective,
            "iterations": sol.iterations,
            "curve": sol.curve,
        }),
    )
}

fn optimize_k(common: &Common) -> Result<()> {
    let mut base = RunConfig::default();
    base.system.coherence_len = 50;
    base.system.antennas = 400;
    base.experiment.blocks = 3;
    let run = resolve(common, base)?;
    let schedules = in_pool(common, || {
        (0..run.experiment.placements).map(|p| schedule_placement(&run, run.system.antennas, p)).collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<Value> = schedules
        .iter()
        .map(|s| {
            json!({
                "placement": s.placement,
                "pool": s.pool,
                "k_opt": s.k_opt,
                "bound_curve": s.bound_curve,
                "mc_curve": s.mc_curve,
                "mc_best_k": s.mc_best_k,
                "mean_interference_k": s.mean_interference_k,
            })
        })
        .collect();
    emit(common, "optimize_k", &json!({"config": run, "placements": rows}))
}

fn validate(common: &Common) -> Result<bool> {
    let spec = ExperimentSpec { id: ExperimentId::Oracle, run: resolve(common, ExperimentSpec::preset(ExperimentId::Oracle, false).run)? };
    let out = run_experiment(&spec, workers(common)?)?;
    let pass = out.notes.get("all_exact_inside_ci").and_then(Value::as_bool).unwrap_or(false);
    if let Some(dir) = &common.out {
        write_output(dir, &spec, &out)?;
    }
    if let Some(Value::Array(reports)) = out.notes.get("reports") {
        for r in reports {
            for t in r["terms"].as_array().into_iter().flatten() {
                println!(
                    "M={} {:<6} closed form {:.6e}  sample mean {:.6e}  99% CI [{:.6e}, {:.6e}]  {}",
                    r["antennas"],
                    t["term"].as_str().unwrap_or(""),
                    t["closed_form"].as_f64().unwrap_or(f64::NAN),
                    t["sample_mean"].as_f64().unwrap_or(f64::NAN),
                    t["ci_low"].as_f64().unwrap_or(f64::NAN),
                    t["ci_high"].as_f64().unwrap_or(f64::NAN),
                    match (t["exact"].as_bool(), t["inside_ci"].as_bool()) {
                        (Some(true), Some(true)) => "pass",
                        (Some(true), _) => "FAIL",
                        _ => "asymptotic",
                    }
                );
            }
        }
    }
    println!("{}", if pass { "all exact moments inside their 99% confidence intervals" } else { "moment check failed" });
    Ok(pass)
}

fn reproduce(figure: &str, full: bool, common: &Common) -> Result<()> {
    let id: ExperimentId = figure.parse()?;
    let run = resolve(common, ExperimentSpec::preset(id, full).run)?;
    let spec = ExperimentSpec { id, run };
    let out = run_experiment(&spec, workers(common)?)?;
    let dir = common.out.clone().unwrap_or_else(|| Path::new("out").to_path_buf());
    for path in write_output(&dir, &spec, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common } => simulate(common),
        Command::Asymptotic { common } => asymptotic(common),
        Command::OptimizeT { common } => optimize_t(common),
        Command::OptimizeK { common } => optimize_k(common),
        Command::Validate { common } => match validate(common) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Reproduce { figure, full, common } => reproduce(figure, *full, common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
