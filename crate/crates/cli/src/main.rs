use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use datamarket::harness::{
    beta_sweep, fmt_float, load_policy, load_scenario, property_suite, region_grid, run_scenario,
    write_region_csv, Axis, HarnessError, HarnessResult, RegionGridSpec, Scenario, EXIT_INVALID,
    EXIT_OK,
};
use datamarket::{Exec, PlatformSet};

/// Exit code of `properties` when a check fails.
const EXIT_PROPERTY_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "datamarket", version, about = "Equilibria of a user / platform / buyer data market")]
struct Cli {
    /// Run every computation on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and print the equilibrium report as JSON.
    Solve {
        scenario: PathBuf,
    },
    /// Classify the user's sharing decision over a grid of noise variances (K = 2).
    RegionGrid {
        scenario: PathBuf,
        /// Platform 1 noise variance range, lo:hi:n.
        #[arg(long)]
        sigma1: Axis,
        /// Platform 2 noise variance range, lo:hi:n.
        #[arg(long)]
        sigma2: Axis,
        /// Entry profile as flags, e.g. 11 or 10.
        #[arg(long, default_value = "11")]
        entry: String,
        /// Write CSV here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve the scenario over a range of buyer valuations.
    BetaSweep {
        scenario: PathBuf,
        /// Valuation range, lo:hi:n.
        #[arg(long)]
        beta: Axis,
        /// Write CSV here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve the scenario under a noise-floor policy read from a JSON file.
    Regulate {
        scenario: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Run the randomized property suite.
    Properties {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn load(path: &PathBuf, sequential: bool) -> HarnessResult<Scenario> {
    let mut s = load_scenario(path)?;
    if sequential {
        s.settings.exec = Exec::Sequential;
    }
    Ok(s)
}

fn sink(output: &Option<PathBuf>) -> HarnessResult<Box<dyn Write>> {
    Ok(match output {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_entry(flags: &str) -> HarnessResult<PlatformSet> {
    let bits: Option<Vec<u8>> = flags
        .chars()
        .map(|c| match c {
            '0' => Some(0),
            '1' => Some(1),
            _ => None,
        })
        .collect();
    match bits {
        Some(b) if b.len() == 2 => Ok(PlatformSet::from_flags(&b)),
        _ => Err(HarnessError::Argument {
            what: "entry profile",
            input: flags.to_string(),
            reason: "expected two 0/1 flags".into(),
        }),
    }
}

fn run(cli: Cli) -> HarnessResult<u8> {
    match cli.command {
        Command::Solve { scenario } => {
            let s = load(&scenario, cli.sequential)?;
            let report = run_scenario(&s, None)?;
            println!("{}", report.to_json());
            Ok(report.exit_code() as u8)
        }
        Command::Regulate { scenario, policy } => {
            let s = load(&scenario, cli.sequential)?;
            let policy = load_policy(&policy, s.market.k)?;
            let report = run_scenario(&s, Some(&policy))?;
            println!("{}", report.to_json());
            Ok(report.exit_code() as u8)
        }
        Command::RegionGrid {
            scenario,
            sigma1,
            sigma2,
            entry,
            output,
        } => {
            let s = load(&scenario, cli.sequential)?;
            let grid = RegionGridSpec {
                sigma1_sq: sigma1,
                sigma2_sq: sigma2,
                entry: parse_entry(&entry)?,
            };
            let rows = region_grid(&s.market, &grid, &s.settings)?;
            write_region_csv(&rows, sink(&output)?)?;
            Ok(EXIT_OK as u8)
        }
        Command::BetaSweep {
            scenario,
            beta,
            output,
        } => {
            let s = load(&scenario, cli.sequential)?;
            let sweep = beta_sweep(&s.market, s.policy.as_ref(), &beta, &s.settings)?;
            if let Some(thresholds) = &sweep.beta_entry {
                let cells: Vec<String> = thresholds.iter().map(|&b| fmt_float(b)).collect();
                eprintln!("entry thresholds: {}", cells.join(", "));
            }
            sweep.write_csv(sink(&output)?)?;
            Ok(EXIT_OK as u8)
        }
        Command::Properties { seed, trials } => {
            if trials == 0 {
                return Err(HarnessError::Argument {
                    what: "trial count",
                    input: "0".into(),
                    reason: "needs at least one trial".into(),
                });
            }
            let report = property_suite(seed, trials, exec(cli.sequential));
            println!("{report}");
            Ok(if report.passed() { EXIT_OK as u8 } else { EXIT_PROPERTY_FAILURE })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
