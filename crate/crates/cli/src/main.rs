mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hmcycle::experiment::{KernelChoice, Preset, Strategy};
use hmcycle::Hormone;

use commands::Failure;
use config::{Overrides, RunConfig};

/// Simulate hormonal cycles, fit Gaussian processes and score phase prediction.
#[derive(Parser, Debug)]
#[command(name = "hmcycle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file with [solver], [gp], [experiment], [simulate] and [fit] sections.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "hmcycle-out")]
    out: PathBuf,

    /// Seed for sampling, noise and optimizer restarts.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[arg(long, global = true, value_parser = parse_with::<Preset>)]
    preset: Option<Preset>,

    /// Single sampling period in days, replacing the grid axis.
    #[arg(long, global = true, value_name = "D")]
    sampling_period: Option<u32>,

    #[arg(long, global = true, value_parser = parse_with::<Strategy>)]
    strategy: Option<Strategy>,

    /// Single noise ratio, replacing the grid axis.
    #[arg(long, global = true, value_name = "R")]
    noise_ratio: Option<f64>,

    #[arg(long, global = true, value_parser = parse_with::<KernelChoice>)]
    kernel: Option<KernelChoice>,

    /// Output sampling step for `simulate`, in days.
    #[arg(long, global = true, value_name = "S")]
    sample_step: Option<f64>,

    #[arg(long, global = true, value_name = "K")]
    peaks_required: Option<usize>,

    /// Parameter file (`name = value` lines) for `simulate`.
    #[arg(long, global = true, value_name = "PATH")]
    params: Option<PathBuf>,

    /// Simulated span in days.
    #[arg(long, global = true, value_name = "DAYS")]
    span_days: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the model and write trajectory.csv and phases.csv.
    Simulate,
    /// Fit one GP, to a CSV (`--data`) or to one sampled experiment trial.
    Fit {
        /// Two-column `day,value` CSV.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_with::<Hormone>)]
        hormone: Option<Hormone>,
    },
    /// Run the accuracy grid and write report.csv, overlay.csv and summary.json.
    Experiment,
    /// Estimate the cycle period over the alpha_LH x Km_LH grid.
    PeriodSweep,
}

fn parse_with<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (data, hormone) = match &cli.command {
        Command::Fit { data, hormone } => (data.clone(), *hormone),
        _ => (None, None),
    };
    config.apply(&Overrides {
        seed: cli.seed,
        trials: cli.trials,
        jobs: cli.jobs,
        preset: cli.preset,
        sampling_period: cli.sampling_period,
        strategy: cli.strategy,
        noise_ratio: cli.noise_ratio,
        kernel: cli.kernel,
        sample_step: cli.sample_step,
        peaks_required: cli.peaks_required,
        parameters: cli.params.clone(),
        span_days: cli.span_days,
        data,
        hormone,
    });
    config.validate()?;
    commands::prepare_output(&cli.out, &config)?;
    match cli.command {
        Command::Simulate => commands::simulate(&config, &cli.out),
        Command::Fit { .. } => commands::fit_command(&config, &cli.out),
        Command::Experiment => commands::experiment(&config, &cli.out),
        Command::PeriodSweep => commands::period_sweep_command(&config, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hmcycle: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
