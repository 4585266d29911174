//! `selfgrasp`: pretrain the evaluator, train, evaluate, export embedding
//! features and replay runs.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use selfgrasp::detector::FeedbackMode;
use selfgrasp::simenv::{ObjectKind, OptimumDesign};

#[derive(Parser, Debug)]
#[command(name = "selfgrasp", version, about = "Online self-supervised grasp learning on a 2-D picking cell")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags layered over the config file. Every flag also reads a
/// `SELFGRASP_*` environment variable; a flag on the command line wins.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// TOML (or `.json`) run config; unknown keys are rejected.
    #[arg(long, global = true, env = "SELFGRASP_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "SELFGRASP_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, env = "SELFGRASP_MODE")]
    pub mode: Option<ModeArg>,
    /// Designed optimum grasp position on each object.
    #[arg(long, global = true, value_enum, env = "SELFGRASP_OPTIMUM_OFFSET")]
    pub optimum_offset: Option<OffsetArg>,
    #[arg(long, global = true, value_enum, env = "SELFGRASP_OBJECT_KIND")]
    pub object_kind: Option<KindArg>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the pre-samples and pretrain the evaluator.
    Pretrain {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run online training into a run directory.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Continue from the run directory's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on the fixed evaluation scenes.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = ConditionArg::Both)]
        condition: ConditionArg,
        /// Checkpoint directory (default `<run>/checkpoint`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Embed a seeded probe set and write a CSV and an SVG scatter.
    ExportFeatures {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 200)]
        probes: usize,
        #[arg(long, default_value_t = 7)]
        probe_seed: u64,
    },
    /// Re-run a training run from its echoed config and compare every trial.
    Replay {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Proposed,
    Baseline,
}

impl From<ModeArg> for FeedbackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Proposed => FeedbackMode::Proposed,
            ModeArg::Baseline => FeedbackMode::Baseline,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffsetArg {
    Center,
    Left,
    Right,
}

impl From<OffsetArg> for OptimumDesign {
    fn from(o: OffsetArg) -> Self {
        match o {
            OffsetArg::Center => OptimumDesign::Center,
            OffsetArg::Left => OptimumDesign::Left,
            OffsetArg::Right => OptimumDesign::Right,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindArg {
    Cylinder,
    Elongated,
}

impl From<KindArg> for ObjectKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Cylinder => ObjectKind::Cylinder,
            KindArg::Elongated => ObjectKind::Elongated,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
