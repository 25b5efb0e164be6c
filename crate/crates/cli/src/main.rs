use std::fs;
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use deffuant_core::verify::Suite;
use deffuant_core::Execution;

mod commands;
mod config;

use commands::{EXIT_CONFIG, EXIT_INVARIANT};
use config::{ConfigError, Overrides};

/// Mixed Deffuant bounded-confidence model: simulate, estimate, verify.
#[derive(Parser)]
#[command(name = "deffuant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory with all invariant checks; write states, events and a summary.
    Simulate(RunArgs),
    /// Estimate the consensus probability and compare it with the lower bound.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// Also write per-trial records to trials.csv.
        #[arg(long)]
        trials_csv: bool,
    },
    /// Run a named property suite (lemma1, eq1, zc, triviality, geometry, all).
    Verify {
        suite: Suite,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, env = "DEFFUANT_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<NonZeroUsize>,
}

impl OutputArgs {
    fn prepare(&self) -> anyhow::Result<(&PathBuf, Execution)> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok((&self.out_dir, Execution::with_threads(self.threads.map(NonZeroUsize::get))))
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment file.
    config: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Constant mu, replacing the file's schedule.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            epsilon: self.epsilon,
            mu: self.mu,
            n: self.n,
            horizon: self.horizon,
            seed: self.seed,
            trials: self.trials,
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<deffuant_core::Error>() {
            if e.is_config() {
                return EXIT_CONFIG;
            }
            if matches!(e, deffuant_core::Error::Invariant(_)) {
                return EXIT_INVARIANT;
            }
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Simulate(args) => {
            let exp = config::load(&args.config, &args.overrides())?;
            let (out, _) = args.output.prepare()?;
            commands::simulate(&exp, out)
        }
        Command::Estimate { run, trials_csv } => {
            let exp = config::load(&run.config, &run.overrides())?;
            let (out, exec) = run.output.prepare()?;
            commands::estimate(&exp, out, exec, trials_csv)
        }
        Command::Verify { suite, seed, output } => {
            let (out, exec) = output.prepare()?;
            commands::verify(suite, seed, out, exec)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
