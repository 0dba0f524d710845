use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};
use wickcal_cli::{describe, list, load_scenario, parse_check_filter, render, run, CliError, ExitCode, RunOptions};

#[derive(Parser)]
#[command(name = "wickcal", version, about = "Runs verification scenarios for Hadamard and Calderón projectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        scenario: String,
        /// Output directory [default: ./wickcal-out/<name>]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated check names or groups to evaluate.
        #[arg(long)]
        checks: Option<String>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Prints only the summary line.
        #[arg(long)]
        quiet: bool,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// List bundled scenarios and checks.
    List,
    /// Show the statement, tolerance and rationale of a check or group.
    Describe { name: String },
}

fn exec(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { scenario, out, checks, seed, quiet, jobs } => {
            let checks = checks.as_deref().map(parse_check_filter).transpose()?;
            let s = load_scenario(&scenario)?;
            if jobs > 0 {
                rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
            }
            let result = run(s, &RunOptions { out, checks, seed })?;
            let text = render(&result);
            if quiet {
                print!("{}", text.lines().last().map(|l| format!("{l}\n")).unwrap_or_default());
            } else {
                print!("{text}");
            }
            Ok(result.exit_code())
        }
        Command::List => {
            print!("{}", list());
            Ok(ExitCode::Pass)
        }
        Command::Describe { name } => {
            print!("{}", describe(&name)?);
            Ok(ExitCode::Pass)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match exec(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    process::exit(code as i32);
}
