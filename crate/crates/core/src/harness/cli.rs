//! Command-line front end. Exit codes: 0 success, 1 invalid invocation or
//! configuration, 2 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::*;

#[derive(Parser, Debug)]
#[command(name = "colora", version, about = "CoLoRA reduced models for parameterized PDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the full-order model at the training and test parameters.
    Generate(Common),
    /// Pre-train the reduced network and hyper-network.
    Train(Common),
    /// CoLoRA-D prediction at the test parameters.
    Forecast(Common),
    /// CoLoRA-EQ latent integration at the test parameters.
    Integrate(Common),
    /// Linear baselines.
    Baseline {
        #[command(subcommand)]
        which: BaselineCmd,
    },
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCmd,
    },
    /// PDE residual over a lattice of latent states (latent_dim = 2).
    Landscape(Common),
    /// Export latent trajectories as CSV.
    Latents {
        #[command(flatten)]
        common: Common,
        /// Also integrate CoLoRA-EQ and export its latents.
        #[arg(long)]
        eq: bool,
    },
}

#[derive(Subcommand, Debug)]
pub enum BaselineCmd {
    /// POD projection error over the reduced dimension.
    Pod(Common),
    /// Linear interpolation in the parameter.
    Interp(Common),
}

#[derive(Subcommand, Debug)]
pub enum BenchCmd {
    /// Error against latent dimension, CoLoRA versus POD.
    Nwidth(Common),
    /// Wall-clock comparison with the full-order solver.
    Speed(Common),
    /// Error against training-set size, CoLoRA versus interpolation.
    DataEfficiency(Common),
    /// Mass drift of constrained and unconstrained CoLoRA-EQ.
    Conservation(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Generate(c)
            | Command::Train(c)
            | Command::Forecast(c)
            | Command::Integrate(c)
            | Command::Landscape(c)
            | Command::Latents { common: c, .. } => c,
            Command::Baseline { which } => match which {
                BaselineCmd::Pod(c) | BaselineCmd::Interp(c) => c,
            },
            Command::Bench { which } => match which {
                BenchCmd::Nwidth(c) | BenchCmd::Speed(c) | BenchCmd::DataEfficiency(c) | BenchCmd::Conservation(c) => c,
            },
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig) -> Result<()> {
    match cmd {
        Command::Generate(_) => generate(cfg).map(drop),
        Command::Train(_) => train(cfg).map(drop),
        Command::Forecast(_) => forecast(cfg).map(drop),
        Command::Integrate(_) => integrate_test(cfg).map(drop),
        Command::Baseline { which } => match which {
            BaselineCmd::Pod(_) => baseline_pod(cfg).map(drop),
            BaselineCmd::Interp(_) => baseline_interp(cfg).map(drop),
        },
        Command::Bench { which } => match which {
            BenchCmd::Nwidth(_) => bench_nwidth(cfg).map(drop),
            BenchCmd::Speed(_) => bench_speed(cfg).map(drop),
            BenchCmd::DataEfficiency(_) => bench_data_efficiency(cfg).map(drop),
            BenchCmd::Conservation(_) => bench_conservation(cfg).map(drop),
        },
        Command::Landscape(_) => landscape(cfg).map(drop),
        Command::Latents { eq, .. } => latents(cfg, *eq).map(drop),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load_config(cli.command.common()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match dispatch(&cli.command, &cfg) {
        Ok(()) => 0,
        Err(e @ (Error::Config(_) | Error::Json(_))) => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
