use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use expma_lab::experiments::{
    emit, moments_report, run_experiment, strategy_report, write_analytics_csv, write_rows_csv, write_signal_csv,
    ExperimentConfig, ExperimentKind, OutputFormat,
};
use expma_lab::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(name = "expma-lab", version, about = "Optimal ExpMA strategies: analytics and Monte Carlo backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal strategy coefficients (or the CTMC filter weight).
    Strategy(Common),
    /// Moment functions on a monthly grid.
    Moments(Common),
    /// The performance experiment.
    Simulate(Common),
    /// A lambda, horizon, volatility or cost sweep.
    Sweep(Common),
    /// Solve the filter PDE and write the grid.
    Pde(Common),
    /// Long-run growth rates.
    Growth(Common),
    /// ExpMA signal and strategy weights for a price file.
    Signal(Common),
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Numeric | ErrorClass::Io => 3,
            })
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("EXPMA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("EXPMA_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cmd: Command) -> Result<()> {
    let common = match &cmd {
        Command::Strategy(c)
        | Command::Moments(c)
        | Command::Simulate(c)
        | Command::Sweep(c)
        | Command::Pde(c)
        | Command::Growth(c)
        | Command::Signal(c) => c,
    };
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.sim.seed = seed;
    }
    let format = match common.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => config.output.format.unwrap_or_default(),
    };
    let out_dir = common.out.clone().or_else(|| config.output.dir.clone());

    let expected: &[ExperimentKind] = match &cmd {
        Command::Simulate(_) => &[ExperimentKind::Performance],
        Command::Sweep(_) => &[
            ExperimentKind::LambdaSweep,
            ExperimentKind::HorizonSweep,
            ExperimentKind::VolSweep,
            ExperimentKind::CostSweep,
        ],
        Command::Pde(_) => &[ExperimentKind::Pde],
        Command::Growth(_) => &[ExperimentKind::GrowthRates],
        Command::Signal(_) => &[ExperimentKind::Signal],
        Command::Strategy(_) | Command::Moments(_) => &[],
    };

    let reports = match &cmd {
        Command::Strategy(_) => strategy_report(&config)?,
        Command::Moments(_) => moments_report(&config)?,
        _ => {
            match config.experiment {
                None if expected.len() == 1 => config.experiment = Some(expected[0]),
                None => return Err(Error::Config("sweep needs an `experiment` id in the config".into())),
                Some(k) if !expected.contains(&k) => {
                    return Err(Error::Config(format!("experiment `{}` does not belong to this subcommand", k.id())));
                }
                Some(_) => {}
            }
            run_experiment(&config)?
        }
    };

    match out_dir {
        Some(dir) => {
            for p in emit(&reports, format, &dir)? {
                println!("{}", p.display());
            }
        }
        None => {
            let stdout = std::io::stdout().lock();
            match format {
                OutputFormat::Json => {
                    serde_json::to_writer_pretty(stdout, &reports)?;
                    println!();
                }
                OutputFormat::Csv if !reports.rows.is_empty() => {
                    write_rows_csv(&reports.rows, stdout)?;
                }
                OutputFormat::Csv if !reports.signal.is_empty() => {
                    write_signal_csv(&reports.signal, stdout)?;
                }
                OutputFormat::Csv => match &reports.grid {
                    Some(grid) => grid.write_csv(stdout)?,
                    None => write_analytics_csv(&reports.analytics, stdout)?,
                },
            }
        }
    }
    Ok(())
}
