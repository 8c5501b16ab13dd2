use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fexp::commands;
use fexp::parallel::{init_pool, thread_cap, THREADS_VAR};
use fexp::{AppError, AppResult};

/// Verifier-constrained flow expansion.
#[derive(Debug, Parser)]
#[command(name = "fexp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's `out` directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a flow model on the configured dataset and checkpoint it.
    Pretrain(Common),
    /// Run the expansion loop and write iterates, metrics and samples.
    Expand(Common),
    /// Run the discrete mirror-descent checks.
    Oracle(Common),
    /// Compute metrics of a sample CSV.
    Eval(Common),
    /// Render an SVG figure.
    Plot(Common),
}

fn execute(cli: Cli) -> AppResult<()> {
    init_pool(thread_cap(std::env::var(THREADS_VAR).ok().as_deref())?);
    let (Command::Pretrain(c) | Command::Expand(c) | Command::Oracle(c) | Command::Eval(c) | Command::Plot(c)) = &cli.command;
    let run = commands::load_run(&c.config, c.seed, c.out.as_deref())?;
    match cli.command {
        Command::Pretrain(_) => {
            commands::pretrain(&run)?;
            println!("wrote {}", run.out.join("pretrained.fexp").display());
        }
        Command::Expand(_) => {
            let done = commands::expand(&run)?;
            if let Some(s) = done.records.last().and_then(|r| r.snapshot) {
                println!("final entropy {:.4} validity {:.4}", s.entropy, s.validity);
            }
            println!("wrote {}", run.out.join("metrics.csv").display());
        }
        Command::Oracle(_) => {
            // the summary is printed whether or not the checks pass
            let result = commands::oracle(&run);
            if let Ok(text) = std::fs::read_to_string(run.out.join("oracle_summary.txt")) {
                print!("{text}");
            }
            result?;
        }
        Command::Eval(_) => {
            let r = commands::eval(&run)?;
            let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
            println!("n {} entropy {} validity {} vendi {}", r.n, show(r.entropy), show(r.validity), show(r.vendi));
        }
        Command::Plot(_) => println!("wrote {}", commands::plot(&run)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fexp: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &AppError) -> u8 {
    e.exit_code() as u8
}
