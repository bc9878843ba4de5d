//! `conef run | sweep | verify`.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 divergence,
//! 3 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conef::harness::{self, RunConfig, Suite, SweepGrid};
use conef::Error;

#[derive(Parser, Debug)]
#[command(name = "conef", version, about = "Compressed error-feedback training simulator")]
struct Cli {
    /// Override the master seed of every run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the worker count of every run.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one configuration and write its metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; defaults to the config's `out` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of a grid, one CSV per cell plus summary.csv.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Cells run concurrently; defaults to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run property-verification suites and print a JSON report.
    Verify {
        /// compressors, sketch, reductions, rowspace or all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    })
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(workers) = cli.workers {
                cfg.workers = workers;
            }
            cfg.validate()?;
            let out = out.or_else(|| cfg.out.clone()).ok_or_else(|| Error::Config {
                key: "out".into(),
                message: "no output path given (use --out or set `out`)".into(),
            })?;
            for s in harness::run(&cfg, &out)? {
                eprintln!(
                    "seed {}: {} steps, final loss {:e}, {} bytes sent",
                    s.seed, s.steps_completed, s.last.train_loss, s.comm.bytes
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { grid, out_dir, threads } => {
            let mut grid = SweepGrid::load(&grid)?;
            if let Some(seed) = cli.seed {
                grid.base.insert("seed".into(), toml::Value::Integer(seed as i64));
            }
            if let Some(workers) = cli.workers {
                grid.base.insert("workers".into(), toml::Value::Integer(workers as i64));
            }
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let results = harness::sweep(&grid, &out_dir, threads)?;
            let ok = results
                .iter()
                .filter(|r| r.status == harness::CellStatus::Ok)
                .count();
            eprintln!("{} cells, {ok} completed", results.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, report } => {
            let suite: Suite = suite.parse()?;
            let result = harness::verify(suite);
            for c in &result.checks {
                eprintln!("{} [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
            }
            let json = result.to_json();
            println!("{json}");
            if let Some(path) = report {
                std::fs::write(path, &json)?;
            }
            Ok(if result.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    run(cli).unwrap_or_else(|e| exit_for(&e))
}
