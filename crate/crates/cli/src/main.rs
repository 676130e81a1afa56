//! `isac`: run designs, heatmaps, tradeoff sweeps, Monte Carlo batches and
//! self-validation from a JSON config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hris_isac::harness::{exit_code, exit_code_for, execute, Command, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "isac", version, about = "Secure ISAC design with a hybrid RIS")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single genie-aided or robust design (run.mode genie|robust).
    Solve(RunArgs),
    /// Area-wide PEB of an optimized design.
    Heatmap(RunArgs),
    /// Secrecy rate vs PEB over the absorption coefficient.
    Tradeoff(RunArgs),
    /// Designs for randomly drawn target positions.
    Montecarlo(RunArgs),
    /// Numerical self-checks.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Write the first precoder SDP as JSON next to the results.
    #[arg(long)]
    dump_sdp: bool,
    /// Heatmap only: re-optimize the design with the UE at every cell.
    #[arg(long)]
    reoptimize_per_cell: bool,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Heatmap(a) => (Command::Heatmap, a),
        Cmd::Tradeoff(a) => (Command::Tradeoff, a),
        Cmd::Montecarlo(a) => (Command::Montecarlo, a),
        Cmd::Validate(a) => (Command::Validate, a),
    };
    ExitCode::from(run(cmd, args) as u8)
}

fn run(cmd: Command, args: RunArgs) -> i32 {
    let cfg = match ScenarioConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let opts = RunOptions {
        seed: args.seed,
        out_dir: args.out,
        workers: args.workers,
        dump_sdp: args.dump_sdp,
        reoptimize_per_cell: args.reoptimize_per_cell,
    };
    match execute(&cfg, cmd, &opts) {
        Ok(summary) => {
            if let Some(report) = &summary.validation {
                print!("{}", report.table());
                if !report.passed() {
                    eprintln!("validation failed: {}", report.failures().join(", "));
                    return exit_code::VALIDATION;
                }
            }
            if let Some(p) = &summary.csv_path {
                println!("wrote {} rows to {}", summary.records.len(), p.display());
            }
            println!("config hash {}", summary.config_hash);
            exit_code::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
