use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hooploop::{emit_report, load_scenario, load_scenario_with_seed, run_tasks_with_threads, Format};

#[derive(Parser)]
#[command(name = "hooploop", version, about = "Run hooploop scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a scenario and write a report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Replaces every seed in the scenario.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "HOOPLOOP_THREADS")]
        threads: Option<usize>,
    },
    /// Load and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(s) => {
                println!("ok: {} edges, {} loops, {} tasks", s.n_edges(), s.loops.len(), s.tasks().len());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { scenario, out, format, seed, threads } => {
            let s = match load_scenario_with_seed(&scenario, seed) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if threads == Some(0) {
                eprintln!("error: --threads must be positive");
                return ExitCode::from(2);
            }
            let report = match run_tasks_with_threads(&s, threads) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = emit_report(&report, format, &out) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            for r in &report.results {
                let status = if r.pass { "pass" } else { "FAIL" };
                match &r.error {
                    Some(e) => eprintln!("{status} {} ({}): {e}", r.task, r.kind),
                    None => eprintln!("{status} {} ({})", r.task, r.kind),
                }
            }
            ExitCode::from(report.exit_code() as u8)
        }
    }
}
