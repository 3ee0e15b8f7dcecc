use std::path::PathBuf;
use std::process::ExitCode;

use advice_reuse::advising::StudentMode;
use advice_reuse::harness::{
    self, diversity_report, format_table, load_summaries, run_dir, run_suite, RunConfig, RunStatus,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "advice-reuse", version, about = "Action advising with imitation and advice reuse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one student and write its metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<StudentMode>,
        /// Run directory; defaults to `<output_dir>/<env>/<mode>/seed<N>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every mode for seeds `seed .. seed + N` and aggregate.
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[arg(long, num_args = 1.., default_values_t = StudentMode::ALL.to_vec())]
        modes: Vec<StudentMode>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate the run summaries found under the given directories.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare advice-buffer coverage between modes sharing a seed.
    Diversity {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write_or_print(text: &str, out: Option<PathBuf>) -> Result<(), harness::HarnessError> {
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn execute(command: Command) -> Result<ExitCode, harness::HarnessError> {
    match command {
        Command::Run { config, seed, mode, out } => {
            let mut config = RunConfig::load(config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(mode) = mode {
                config.advising.mode = mode;
            }
            let dir = out.unwrap_or_else(|| run_dir(&config.output_dir, &config));
            let summary = harness::run(&config, &dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            eprintln!("wrote {}", dir.display());
            Ok(if summary.status == RunStatus::Completed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Suite {
            config,
            seeds,
            modes,
            jobs,
            out,
        } => {
            let config = RunConfig::load(config)?;
            let root = out.unwrap_or_else(|| PathBuf::from(&config.output_dir));
            let seed_list: Vec<u64> = (config.seed..config.seed + seeds).collect();
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let outcome = run_suite(&config, &seed_list, &modes, jobs, &root)?;
            let mut failures = 0;
            for (dir, result) in &outcome.runs {
                match result {
                    Ok(s) if s.status == RunStatus::Completed => {}
                    Ok(s) => {
                        failures += 1;
                        eprintln!("failed: {} ({})", dir.display(), s.error.as_deref().unwrap_or("unknown"));
                    }
                    Err(e) => {
                        failures += 1;
                        eprintln!("failed: {}: {e}", dir.display());
                    }
                }
            }
            print!("{}", format_table(&outcome.rows));
            Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Report { inputs, out } => {
            let summaries = load_summaries(&inputs)?;
            if summaries.is_empty() {
                eprintln!("no run summaries found");
                return Ok(ExitCode::FAILURE);
            }
            write_or_print(&format_table(&harness::aggregate(&summaries)), out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Diversity { inputs, out } => {
            let report = diversity_report(&inputs)?;
            for m in &report.missing {
                eprintln!("missing advice buffer: {m}");
            }
            write_or_print(&report.to_csv(), out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
