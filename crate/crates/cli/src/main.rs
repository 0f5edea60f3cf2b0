use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod data;
mod exit;
mod io;

use exit::Failure;

#[derive(Parser, Debug)]
#[command(name = "proxisim", version, about = "Epidemic simulation and particle inference on a moving population")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a config value, e.g. `--set filter.particles=500`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate a ground-truth world.
    Simulate,
    /// Generate volunteer observations of a simulated world.
    SynthObs,
    /// Run the particle filter over observations.
    Filter,
    /// Smoothed marginals from the particle genealogy.
    Smooth,
    /// Gibbs learning of the epidemic rates.
    Learn,
    /// Forecast individual and population infection.
    Predict,
    /// Cross-validation, population experiment and statistical tests.
    Evaluate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SynthObs => "synth-obs",
            Command::Filter => "filter",
            Command::Smooth => "smooth",
            Command::Learn => "learn",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = config::load(cli.config.as_deref(), &cli.sets, cli.seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    pool.build_global().map_err(|e| Failure::config(anyhow::anyhow!("thread pool: {e}")))?;
    let threads = rayon::current_num_threads();
    let mut out = io::OutputDir::create(&cli.out).map_err(Failure::data)?;
    let steps = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::SynthObs => commands::synth_obs(&cfg, &mut out),
        Command::Filter => commands::filter(&cfg, &mut out),
        Command::Smooth => commands::smooth(&cfg, &mut out),
        Command::Learn => commands::learn(&cfg, &mut out),
        Command::Predict => commands::predict(&cfg, &mut out),
        Command::Evaluate => commands::evaluate(&cfg, &mut out),
    }?;
    out.finish(cli.command.name(), &cfg, threads, steps).map_err(Failure::data)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code as u8)
        }
    }
}
