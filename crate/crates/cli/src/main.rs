use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use splitmerge::config::load_config;
use splitmerge::harness::{self, Command, Overrides};
use splitmerge::report::RunReport;

#[derive(Parser)]
#[command(name = "splitmerge", version, about = "Monte Carlo for markets with regulatory splits and random mergers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate paths and write series, per-path table and event log.
    Simulate(Common),
    /// Run every acceptance check.
    Verify(Common),
    /// Bound checks: split-before-clock grid, reflected BM, double jumps.
    BoundCheck(Common),
    /// Martingale-measure checks on the density and wealth processes.
    Martingale(Common),
    /// Tail of the maximal company count.
    Tail(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "configs/default.toml")]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_report(r: &RunReport) {
    for c in &r.checks {
        println!("{}", c.summary_line());
    }
    if !r.failures.is_empty() {
        println!("{} path(s) aborted", r.failures.len());
    }
    let passed = r.checks.iter().filter(|c| c.pass).count();
    println!("{}: {passed}/{} checks passed in {:.1}s", r.command, r.checks.len(), r.wall_clock_secs);
}

fn run(cmd: Command, common: Common) -> anyhow::Result<bool> {
    let mut cfg = load_config(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    let overrides = Overrides {
        seed: common.seed,
        paths: common.paths,
        horizon: common.horizon,
        dt: common.dt,
        workers: common.workers,
        out: common.out,
    };
    harness::apply_overrides(&mut cfg, &overrides, cmd)?;
    cfg.model.validate()?;
    let dir = cfg.output.dir.join(cmd.name());
    let report = match cmd {
        Command::Simulate => {
            let sim = harness::simulate(&cfg);
            sim.write_to(&dir)?;
            sim.report
        }
        Command::Verify => harness::verify(&cfg)?,
        Command::BoundCheck => harness::bound_check(&cfg)?,
        Command::Martingale => harness::martingale(&cfg)?,
        Command::Tail => harness::tail(&cfg)?,
    };
    report.write_to(&dir)?;
    print_report(&report);
    println!("output written to {}", dir.display());
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::BoundCheck(c) => (Command::BoundCheck, c),
        Cmd::Martingale(c) => (Command::Martingale, c),
        Cmd::Tail(c) => (Command::Tail, c),
    };
    match run(cmd, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
