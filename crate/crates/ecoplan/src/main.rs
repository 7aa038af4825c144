use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecoplan::commands::{self, RunConfig};
use ecoplan::{overrides, CliError};
use ecoplan_core::sim::PlannerKind;

#[derive(Parser)]
#[command(name = "ecoplan", version, about = "Energy-aware motion planning experiments")]
struct Cli {
    /// More log output (repeatable)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Planner {
    Ehmpp,
    Baseline,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
    /// Scenario override `key=value`, dotted keys (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replaces the scenario's rng_seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Single closed-loop run
    Run {
        #[command(flatten)]
        common: Common,
        /// Speed planner variant
        #[arg(long, value_enum, default_value = "ehmpp")]
        planner: Planner,
    },
    /// Both planners on the same scenario
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// One comparison per value of a scenario parameter
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Scenario key to vary, dotted or short
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Concurrent comparisons
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write schemas/ and scenarios/ under a directory
    #[command(hide = true)]
    Assets {
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(c: Common, planner: PlannerKind) -> Result<RunConfig, CliError> {
    let overrides = c.set.iter().map(|s| overrides::parse_assignment(s)).collect::<Result<_, _>>()?;
    Ok(RunConfig { scenario: c.scenario, planner, out: c.out, overrides, seed: c.seed })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, planner } => {
            let kind = match planner {
                Planner::Ehmpp => PlannerKind::Ehmpp,
                Planner::Baseline => PlannerKind::Baseline,
            };
            let r = commands::cmd_run(&config(common, kind)?)?;
            println!("regen energy: {:.3} J, (0,0.5) decel bin: {:.3} %", r.energy.regen_energy_j, 100.0 * r.energy.accel_histogram.decel[0]);
        }
        Command::Compare { common } => {
            let cfg = config(common, PlannerKind::Ehmpp)?;
            let sc = commands::prepare(&cfg)?;
            let doc = commands::compare_into(&sc, &cfg.out)?;
            print!("{}", commands::headline_text(&doc));
            commands::check_compare(&doc)?;
        }
        Command::Sweep { common, param, values, jobs } => {
            let values: Vec<String> = values.into_iter().map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = commands::cmd_sweep(&config(common, PlannerKind::Ehmpp)?, &param, &values, jobs)?;
            println!("{} comparison(s) written", rows.len());
        }
        Command::Assets { out } => ecoplan::write_assets(&out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
