use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use apla_lab::commands::{run_command, Command, EXIT_CONFIG};
use apla_lab::config::{ExperimentConfig, Overrides};
use apla_lab::dynamics::Mode;

/// Aspiration-based perturbed learning automata: simulation and
/// stochastic-stability analysis.
#[derive(Parser)]
#[command(name = "apla-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the standing hypotheses for a configuration.
    Validate(Common),
    /// Write one trajectory as CSV.
    Simulate(Common),
    /// Compare iterated and closed-form strategies under a constant profile.
    Closedform(Common),
    /// Estimate the transition matrix among pure strategy states.
    Phat(Common),
    /// Estimate long-run occupancy of pure-state neighborhoods.
    Occupancy(Common),
    /// Occupancy-vs-stationary distance over a range of lambda.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment file; the reference stag-hunt experiment if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin game name, e.g. `stag_hunt` or `typewriter`.
    #[arg(long)]
    game: Option<String>,
    /// Master seed (falls back to the config, then APLA_LAB_SEED).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long = "burn-in")]
    burn_in: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "t-max")]
    t_max: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long = "dump-config")]
    dump_config: bool,
    /// Run even if the standing hypotheses fail.
    #[arg(long = "allow-unvalidated")]
    allow_unvalidated: bool,
}

fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var("APLA_LAB_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("APLA_LAB_SEED={s:?} is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, c) = match cli.command {
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Closedform(c) => (Command::Closedform, c),
        Cmd::Phat(c) => (Command::Phat, c),
        Cmd::Occupancy(c) => (Command::Occupancy, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };
    let config_err = |msg: String| {
        eprintln!("error: {msg}");
        ExitCode::from(EXIT_CONFIG as u8)
    };
    let mut config = match &c.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(cfg) => cfg,
            Err(e) => return config_err(e.to_string()),
        },
        None => ExperimentConfig::default(),
    };
    let env = match env_seed() {
        Ok(s) => s,
        Err(e) => return config_err(e),
    };
    let overrides = Overrides {
        game: c.game,
        seed: c.seed,
        mode: c.mode,
        lambda: c.lambda,
        delta: c.delta,
        horizon: c.horizon,
        burn_in: c.burn_in,
        samples: c.samples,
        t_max: c.t_max,
        out: c.out,
        threads: c.threads,
        allow_unvalidated: c.allow_unvalidated,
    };
    config.apply(&overrides, env);
    if c.dump_config {
        println!("{}", config.to_json_pretty());
        return ExitCode::SUCCESS;
    }
    ExitCode::from(run_command(cmd, &config) as u8)
}
