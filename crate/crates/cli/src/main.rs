use std::path::{Path, PathBuf};
use std::process::ExitCode;

use authsim::harness::{self, Scenario};
use clap::{Parser, Subcommand};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "authsim",
    version,
    about = "Channel-reciprocity authentication simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics, trajectories, outcomes and costs.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the fleet cost table for both schemes.
    CompareBaseline {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Hash vectors, LFSR period and the SVM closed-form case.
    Selftest,
}

fn load(path: &Path, seed: Option<u64>) -> Result<(Scenario, u64), ExitCode> {
    let scenario = harness::load_scenario(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_VALIDATION)
    })?;
    let seed = scenario.resolve_seed(seed).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_VALIDATION)
    })?;
    Ok((scenario, seed))
}

fn runtime(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_RUNTIME)
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}

fn run(command: Command) -> Result<(), ExitCode> {
    match command {
        Command::Run {
            scenario,
            out,
            seed,
        } => {
            let (s, seed) = load(&scenario, seed)?;
            let bundle = harness::run_scenario(&s, seed).map_err(runtime)?;
            for path in harness::report(&bundle, &out).map_err(runtime)? {
                println!("wrote {}", path.display());
            }
            let rate = |r: Option<f64>| r.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            println!(
                "{}: seed {seed}, seed match {:.4}, FAR {}, FRR {}",
                bundle.scenario,
                bundle.seed_match_rate,
                rate(bundle.far),
                rate(bundle.frr)
            );
        }
        Command::CompareBaseline {
            scenario,
            out,
            seed,
        } => {
            let (s, seed) = load(&scenario, seed)?;
            let rows = harness::compare_baseline(&s, seed).map_err(runtime)?;
            let path = harness::report_costs(&rows, &out).map_err(runtime)?;
            print!("{}", harness::costs_csv(&rows));
            println!("wrote {}", path.display());
        }
        Command::Validate { scenario } => {
            let (s, seed) = load(&scenario, None)?;
            println!(
                "{}: valid (schema version {}, seed {seed})",
                s.name, s.schema_version
            );
        }
        Command::Selftest => {
            let checks = harness::selftest();
            for c in &checks {
                let mark = if c.passed { "ok" } else { "FAIL" };
                println!("{mark:>4}  {}  ({})", c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Err(ExitCode::from(EXIT_RUNTIME));
            }
        }
    }
    Ok(())
}
