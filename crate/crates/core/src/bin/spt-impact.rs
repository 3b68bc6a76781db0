use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spt_impact::config::{parse_config, parse_config_str, ExperimentConfig};
use spt_impact::impact::calibrate_linear_lambda;
use spt_impact::output::{emit_outputs, to_json, unix_now, write_manifest, RunManifest, RunOutputs};
use spt_impact::relarb::{self, derived_constants};
use spt_impact::Result;

#[derive(Parser)]
#[command(name = "spt-impact", version, about = "Functionally generated portfolios under price impact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; defaults reproduce the desk-scale experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; path i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo ensemble and write paths, panels and summary.
    Simulate(RunArgs),
    /// Run the desk-scale experiment and write the four figure panels.
    #[command(name = "reproduce-fig1")]
    ReproduceFig1(RunArgs),
    /// Linear impact coefficient from a TWAP price-move target.
    #[command(name = "calibrate-lambda")]
    CalibrateLambda {
        #[arg(long, default_value_t = relarb::DESK_S0)]
        s0: f64,
        #[arg(long, default_value_t = relarb::DESK_TARGET_BP)]
        target_bp: f64,
        #[arg(long, default_value_t = relarb::DESK_ADV_FRAC)]
        adv_frac: f64,
        #[arg(long, default_value_t = relarb::DESK_ADV)]
        adv: f64,
        #[arg(long, default_value_t = relarb::DESK_BETA)]
        beta: f64,
    },
    /// Print the relative-arbitrage constants of a configuration.
    Constants {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => parse_config(p),
        None => parse_config_str(""),
    }
}

fn run(args: &RunArgs, reproduce: bool) -> Result<()> {
    let mut cfg = load(args.config.as_ref())?;
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.paths = args.paths.unwrap_or(cfg.paths);
    cfg.threads = args.threads.unwrap_or(cfg.threads);
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let started = unix_now();
    let exp = &cfg.experiment;
    let report = relarb::reproduce_experiment(exp, &cfg.constants, cfg.paths, cfg.seed, cfg.threads, cfg.path_csv_cap)?;
    let warnings = if reproduce { report.warnings.clone() } else { Vec::new() };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    emit_outputs(
        &RunOutputs {
            summary: &report.summary,
            constants: report.constants.as_ref(),
            warnings: &warnings,
            digest: &cfg.digest,
            stride: exp.sim.record_stride,
        },
        &dir,
    )?;
    write_manifest(
        &RunManifest {
            config_digest: cfg.digest.clone(),
            base_seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: unix_now(),
            statuses: report.summary.scalars.statuses.clone(),
        },
        &dir,
    )?;
    let s = &report.summary.scalars;
    println!("paths {} completed {}", s.n_paths, s.completed);
    if let (Some(v), Some(f)) = (s.mean_v_impact_at_t, s.mean_v_frictionless_at_t) {
        println!("mean V at T: impact {v:.6} frictionless {f:.6}");
    }
    if let Some(gap) = s.nominal_gap_at_t {
        println!("nominal gap at T: {gap:.0}");
    }
    if let Some(dv) = &s.dv {
        println!("daily volume: median {:.0} p05 {:.0} p95 {:.0}", dv.median, dv.p05, dv.p95);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run(a, false),
        Command::ReproduceFig1(a) => run(a, true),
        Command::CalibrateLambda {
            s0,
            target_bp,
            adv_frac,
            adv,
            beta,
        } => calibrate_linear_lambda(*s0, *target_bp, *adv_frac, *adv, *beta).map(|l| println!("{l:e}")),
        Command::Constants { config } => load(config.as_ref()).and_then(|cfg| {
            let exp = &cfg.experiment;
            let cap0 = spt_impact::total_cap(&exp.market.initial_prices(), &exp.model.n);
            let c = derived_constants(&cfg.constants, &exp.model.n, &exp.model.impacts, cap0, exp.model.w)?;
            print!("{}", to_json(&c)?);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
