//! `cia-sim`: runs the Monte Carlo experiments and writes CSV tables and
//! plot-ready series.

mod config;
mod error;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::error::CliError;
use crate::run::Experiment;

#[derive(Debug, Parser)]
#[command(name = "cia-sim", version, about = "Two-tier OFDMA interference alignment simulator")]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,

    /// theta_map, se_vs_snr, eta_vs_tau, percent_increase or custom.
    #[arg(long)]
    experiment: Experiment,

    /// Parent directory of the run directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,

    /// Master seed, overriding `run.seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Trials per grid point, overriding `run.trials`.
    #[arg(long)]
    trials: Option<usize>,

    /// `key=value` or `section.key=value`; repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Also render an SVG chart per experiment.
    #[arg(long)]
    plots: bool,

    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

fn execute(args: &Args) -> Result<(), CliError> {
    let mut overrides = args.overrides.clone();
    if let Some(s) = args.seed {
        overrides.push(format!("run.seed={s}"));
    }
    if let Some(t) = args.trials {
        overrides.push(format!("run.trials={t}"));
    }
    if args.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let plan = config::parse_config(&args.config, &overrides)?;
    let outcome = run::run(&plan, args.experiment, args.jobs)?;
    let name = args.experiment.name();
    if !outcome.reports.is_empty() {
        let dir = output::fresh_run_dir(&args.out, &format!("{name}-seed{}", plan.base.master_seed))?;
        std::fs::write(dir.join("config.toml"), &plan.resolved).map_err(|e| CliError::io(dir.join("config.toml"), e))?;
        let csv = output::emit_report(name, &outcome.reports, &dir)?;
        if !outcome.series.is_empty() {
            output::emit_plot_data(name, &outcome.series, &dir, args.plots)?;
        }
        eprintln!("wrote {}", csv.display());
    }
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!("failed: {f}");
        }
        return Err(CliError::Runtime(format!("{} grid point(s) failed", outcome.failures.len())));
    }
    if outcome.reports.is_empty() {
        return Err(CliError::Runtime("no grid points".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
