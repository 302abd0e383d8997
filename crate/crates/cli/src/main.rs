//! Command-line entry point.
//!
//! Exit codes: 0 all checks/criteria pass, 1 at least one failed, 2 for
//! configuration or I/O problems. Malformed input never panics.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wiener_lab_cli::checks::{run_all, Status};
use wiener_lab_cli::config::ScenarioConfig;
use wiener_lab_cli::report::write_reports;

#[derive(Parser)]
#[command(
    name = "wiener-lab",
    about = "Numerical laboratory for adapted perturbations of identity on Wiener space",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the check battery described by a scenario config (JSON).
    Run {
        /// Path to the scenario JSON.
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory for report.csv/report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's Monte Carlo path count.
        #[arg(long)]
        paths: Option<usize>,
        /// Override the config's grid step count.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// List the builtin drift types accepted in scenario configs.
    ListDrifts,
    /// Run the fifteen-criterion acceptance suite.
    Acceptance {
        /// Seed for the whole suite.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Force every numeric tolerance to zero (harness self-test; the
        /// suite must then exit 1).
        #[arg(long)]
        zero_tolerances: bool,
    },
}

fn run_scenario(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    paths: Option<usize>,
    steps: Option<usize>,
) -> u8 {
    let mut cfg = match ScenarioConfig::load(&config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprint!("{e}");
            return 2;
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = paths {
        cfg.paths = p;
    }
    if let Some(n) = steps {
        cfg.n = n;
    }
    if let Some(dir) = out {
        cfg.out_dir = Some(dir);
    }
    if let Err(e) = cfg.validate() {
        eprint!("{e}");
        return 2;
    }

    let results = match run_all(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    for r in &results {
        println!(
            "{:<20} {:<4} estimate {:>12.5e}  observed {:>12.5e}  threshold {:>12.5e}",
            r.check_id,
            r.status.as_str(),
            r.estimate,
            r.observed,
            r.threshold
        );
    }
    if let Some(dir) = &cfg.out_dir {
        if let Err(e) = write_reports(&results, &cfg, dir) {
            eprintln!("config error: cannot write reports to {}: {e}", dir.display());
            return 2;
        }
        println!("reports written to {}", dir.display());
    }
    let failed = results.iter().filter(|r| r.status == Status::Fail).count();
    if failed == 0 {
        println!("scenario {}: all {} checks pass", cfg.scenario, results.len());
        0
    } else {
        println!(
            "scenario {}: {failed} of {} checks FAILED",
            cfg.scenario,
            results.len()
        );
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            paths,
            steps,
        } => run_scenario(config, seed, out, paths, steps),
        Command::ListDrifts => {
            for tag in wiener_lab::SUPPORTED_DRIFTS {
                println!("{tag}");
            }
            0
        }
        Command::Acceptance {
            seed,
            zero_tolerances,
        } => {
            let factor = if zero_tolerances { 0.0 } else { 1.0 };
            match wiener_lab_cli::acceptance::acceptance_suite(seed, factor) {
                Ok(code) => code as u8,
                Err(e) => {
                    eprintln!("config error: {e}");
                    2
                }
            }
        }
    };
    ExitCode::from(code)
}
