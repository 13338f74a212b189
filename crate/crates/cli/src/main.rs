//! `bridgelab` experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod plots;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Preset};

#[derive(Parser, Debug)]
#[command(
    name = "bridgelab",
    version,
    about = "Weakly asymmetric bridge experiments"
)]
struct Cli {
    /// TOML file overriding the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Parent directory of run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Smoke)]
    preset: Preset,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Equilibrium profile and fluctuation covariance.
    StaticClt,
    /// Partition function: recursion, product form and asymptotics.
    Partition,
    /// Stationary fluctuations under the dynamics.
    FluctEq,
    /// Hydrodynamic limit against the matching PDE.
    Hydro,
    /// Finer height scaling for 1 < alpha < 3/2.
    HydroFiner,
    /// Hopf-Cole field, bracket and front position.
    Kpz,
    /// Discrete heat kernel representations and bounds.
    KernelCheck,
    /// Exact small-N enumeration against sampling and dynamics.
    Oracle,
    /// Writes a matplotlib script for the CSVs of a run directory.
    EmitPlots { run_dir: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    StaticClt,
    Partition,
    FluctEq,
    Hydro,
    HydroFiner,
    Kpz,
    KernelCheck,
    Oracle,
    EmitPlots,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::StaticClt => "static-clt",
            Command::Partition => "partition",
            Command::FluctEq => "fluct-eq",
            Command::Hydro => "hydro",
            Command::HydroFiner => "hydro-finer",
            Command::Kpz => "kpz",
            Command::KernelCheck => "kernel-check",
            Command::Oracle => "oracle",
            Command::EmitPlots => "emit-plots",
        }
    }
}

impl From<&Cmd> for Command {
    fn from(c: &Cmd) -> Self {
        match c {
            Cmd::StaticClt => Command::StaticClt,
            Cmd::Partition => Command::Partition,
            Cmd::FluctEq => Command::FluctEq,
            Cmd::Hydro => Command::Hydro,
            Cmd::HydroFiner => Command::HydroFiner,
            Cmd::Kpz => Command::Kpz,
            Cmd::KernelCheck => Command::KernelCheck,
            Cmd::Oracle => Command::Oracle,
            Cmd::EmitPlots { .. } => Command::EmitPlots,
        }
    }
}

/// Runs an experiment; `Ok(true)` when every check passed.
fn run_experiment(cli: &Cli, cmd: Command) -> Result<bool> {
    let cfg = ExperimentConfig::resolve(cmd, cli.preset, cli.config.as_deref(), cli.seed)?;
    let hash = cfg.content_hash();
    let dir = cli.out.join(format!("{}-{}", cfg.name, &hash[..12]));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    std::fs::write(dir.join("config.sha256"), format!("{hash}\n"))?;

    let reports = experiments::run(cmd, &cfg, &dir)?;
    let all = reports.iter().all(|r| r.pass);
    for r in &reports {
        let p = r.p_value.map_or(String::new(), |p| format!(" p={p:.4}"));
        println!(
            "{} {}: statistic={:.6}{p} n={}",
            if r.pass { "PASS" } else { "FAIL" },
            r.test,
            r.statistic,
            r.n
        );
    }
    let doc = serde_json::json!({
        "experiment": cmd.name(),
        "config_sha256": hash,
        "pass": all,
        "tests": reports,
    });
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    println!("{}", dir.display());
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.cmd {
        Cmd::EmitPlots { run_dir } => plots::emit_plots(Path::new(run_dir)).map(|path| {
            println!("{}", path.display());
            true
        }),
        c => run_experiment(&cli, c.into()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
