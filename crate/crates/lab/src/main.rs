//! `consensus-lab` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use consensus_lab::config::load_scenario;
use consensus_lab::output::{report_json, write_csv, write_report};
use consensus_lab::run::{check_scenario, exit, run_scenario, RunError};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "consensus-lab", about = "Consensus stability experiments for linear Metzler systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, write trajectory.csv and report.json.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every *.toml in a directory, each into <out>/<stem>/.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Connectivity and spectral analyses only; prints the report.
    Check { config: PathBuf },
    /// Print the version.
    Version,
}

fn fail(context: &Path, e: &RunError) -> i32 {
    log::error!("{}: {e}", context.display());
    eprintln!("error: {}: {e}", context.display());
    e.exit_code()
}

fn run_one(config: &Path, out: &Path) -> anyhow::Result<i32> {
    let cfg = match load_scenario(config) {
        Ok(c) => c,
        Err(e) => return Ok(fail(config, &e.into())),
    };
    let result = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => return Ok(fail(config, &e)),
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(&out.join("trajectory.csv"), &result.trajectory, result.stride)?;
    write_report(&out.join("report.json"), &result.summary)?;
    log::info!("{}: exit {}", config.display(), result.exit_code());
    Ok(result.exit_code())
}

fn batch(dir: &Path, out: &Path) -> anyhow::Result<i32> {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        eprintln!("error: no *.toml scenarios in {}", dir.display());
        return Ok(exit::CONFIG_ERROR);
    }
    let codes: Vec<(PathBuf, anyhow::Result<i32>)> = configs
        .par_iter()
        .map(|p| {
            let stem = p.file_stem().unwrap_or_default();
            (p.clone(), run_one(p, &out.join(stem)))
        })
        .collect();
    let mut worst = exit::PASS;
    for (p, code) in codes {
        let code = code?;
        println!("{}\t{code}", p.display());
        worst = worst.max(code);
    }
    Ok(worst)
}

fn check(config: &Path) -> i32 {
    let result = load_scenario(config).map_err(RunError::from).and_then(|c| check_scenario(&c));
    match result {
        Ok(r) => {
            // a closed pipe is not a scenario failure
            let _ = std::io::stdout().write_all(report_json(&r).as_bytes());
            r.exit_code
        }
        Err(e) => fail(config, &e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONSENSUS_LAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out } => run_one(&config, &out),
        Command::Batch { dir, out } => batch(&dir, &out),
        Command::Check { config } => Ok(check(&config)),
        Command::Version => {
            println!("consensus-lab {}", env!("CARGO_PKG_VERSION"));
            Ok(exit::PASS)
        }
    };
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::CONFIG_ERROR as u8)
        }
    }
}
