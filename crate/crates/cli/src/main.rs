mod args;
mod commands;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use wtc_core::Exec;

use args::{Cli, Command};

/// Applies `WTC_THREADS` to the global pool.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("WTC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("WTC_THREADS must be a positive integer, got `{raw}`"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Prune(a) => commands::prune_cmd(a),
        Command::Quantize(a) => commands::quantize_cmd(a),
        Command::Pack(a) => commands::pack(a),
        Command::Unpack(a) => commands::unpack(a),
        Command::Analyze(a) => commands::analyze(a, exec),
        Command::Sweep(a) => commands::sweep_cmd(a, exec),
        Command::CompareRounding(a) => commands::compare_rounding_cmd(a, exec),
        Command::CompareHuffman(a) => commands::compare_huffman(a, exec),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
