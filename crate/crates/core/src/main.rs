use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fl_e2ws::harness::config::parse_config;
use fl_e2ws::harness::metrics::{summary_table, write_metrics};
use fl_e2ws::harness::run_experiment;
use fl_e2ws::scheduler::{brute_force_schedule, solve_schedule, ScheduleInstance};
use fl_e2ws::{ExperimentConfig, StrategyKind};

#[derive(Parser, Debug)]
#[command(
    name = "fl-e2ws",
    version,
    about = "Energy-aware federated learning over a simulated wireless uplink"
)]
struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Strategy to run (repeatable): fedavg, poc, fedavg_wopt, poc_wopt, fl_e2ws.
    #[arg(long = "strategy", global = true, value_parser = parse_kind)]
    strategies: Vec<StrategyKind>,
    #[arg(long, global = true)]
    rounds: Option<usize>,
    /// Output directory for CSVs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the per-strategy comparison table after `run`.
    #[arg(long, global = true)]
    emit_summary: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured experiment and write CSV metrics.
    Run,
    /// Solve a JSON scheduling instance exactly and print the schedule.
    Schedule { instance: PathBuf },
    /// Check the configuration and exit.
    Validate,
    /// Brute-force a small JSON scheduling instance.
    Oracle { instance: PathBuf },
}

fn parse_kind(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if !cli.strategies.is_empty() {
        cfg.strategies = cli.strategies.clone();
    }
    if let Some(rounds) = cli.rounds {
        cfg.rounds = rounds;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_instance(path: &Path) -> Result<ScheduleInstance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate => {
            let cfg = load_config(cli)?;
            println!(
                "config ok: {} devices, n_f={}, n_p={}, {} RBs, {} rounds x {} repeats",
                cfg.network.devices,
                cfg.network.n_f,
                cfg.n_p(),
                cfg.rb_count(),
                cfg.rounds,
                cfg.repeats
            );
        }
        Command::Run => {
            let cfg = load_config(cli)?;
            let result = run_experiment(&cfg)?;
            let files = write_metrics(&result, &cfg.output_dir)?;
            eprintln!("wrote {} files to {}", files.len(), cfg.output_dir.display());
            if cli.emit_summary {
                print!("{}", summary_table(&result));
            }
        }
        Command::Schedule { instance } => {
            let inst = read_instance(instance)?;
            let schedule = solve_schedule(&inst.candidates, &inst.config)?;
            println!("{}", serde_json::to_string_pretty(&schedule)?);
        }
        Command::Oracle { instance } => {
            let inst = read_instance(instance)?;
            let schedule = brute_force_schedule(&inst.candidates, &inst.config)?;
            println!("{}", serde_json::to_string_pretty(&schedule)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
