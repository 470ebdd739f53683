use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nvmag::{configure_threads, run, Mode, RunOptions};

/// Simulate NV-ensemble ODMR and Ramsey readout, optimize CW sensitivity,
/// and analyse magnetometer traces.
#[derive(Debug, Parser)]
#[command(name = "nvmag", version)]
struct Args {
    mode: Mode,

    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,

    /// Output directory.
    #[arg(short, long, default_value = "nvmag-out")]
    out: PathBuf,

    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| {
        run(&RunOptions {
            mode: args.mode,
            config: args.config,
            out_dir: args.out,
            seed: args.seed,
        })
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            eprintln!("outputs written to {}", outcome.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
