//! `avid` command-line front end: data generation, training, inference and evaluation.

pub mod commands;
pub mod config;
pub mod render;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use avid_core::AvidError;
pub use config::{DataKind, Profile, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "avid", version, about = "Adversarial inpainter/detector for visual irregularities")]
pub struct Cli {
    /// key = value config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["full", "quick"])]
    pub profile: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (IR-MNIST composites or a walking-texture clip).
    GenData(GenArgs),
    /// Train the inpainter and detector adversarially.
    Train(TrainArgs),
    /// Write masks, heatmaps and frame scores for a dataset split.
    Infer(InferArgs),
    /// Compute ROC curves, EER and AUC.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_parser = ["ir-mnist", "walking-clip"])]
    pub kind: Option<String>,
    #[arg(long)]
    pub train: Option<String>,
    #[arg(long)]
    pub test: Option<String>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub exclude: Option<String>,
    /// Directory with uncompressed MNIST idx files; synthetic digits otherwise.
    #[arg(long)]
    pub mnist: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset root.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = ["ir_mnist", "frame_directory"])]
    pub layout: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub steps: Option<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory holding inpainter_best.ckpt and detector_best.ckpt.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    #[arg(long, value_parser = ["train", "test"])]
    pub split: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub zeta: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    #[arg(long, value_parser = ["train", "test"])]
    pub split: Option<String>,
    /// Evaluate a `score,label` CSV instead of running the networks.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

/// Exit status classes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 1).
    Usage(String),
    /// Failure while running (exit 2).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<AvidError> for CliError {
    fn from(e: AvidError) -> Self {
        match e {
            AvidError::Argument(_) | AvidError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Builds the effective configuration: preset, then file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let profile = cli.profile.as_deref().map(str::parse::<Profile>).transpose()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Usage(format!("config file {} does not exist", path.display())));
            }
            RunConfig::load(path, profile)?
        }
        None => RunConfig::preset(profile.unwrap_or(Profile::Full)),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    let mut set = |key: &str, v: &Option<String>| -> Result<(), CliError> {
        if let Some(v) = v {
            cfg.set(key, v).map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
        }
        Ok(())
    };
    let data_flags = |cfg: &mut RunConfig, d: &DataArgs| -> Result<(), CliError> {
        if let Some(p) = &d.data {
            cfg.data = Some(p.clone());
        }
        if let Some(l) = &d.layout {
            cfg.set("layout", l)?;
        }
        Ok(())
    };
    match &cli.command {
        Command::GenData(a) => {
            set("kind", &a.kind)?;
            set("n_train", &a.train)?;
            set("n_test", &a.test)?;
            set("grid_side", &a.grid)?;
            set("excluded_digit", &a.exclude)?;
            if let Some(m) = &a.mnist {
                cfg.mnist_dir = Some(m.clone());
            }
        }
        Command::Train(a) => {
            set("max_steps", &a.steps)?;
            data_flags(&mut cfg, &a.data)?;
        }
        Command::Infer(a) => {
            set("split", &a.split)?;
            set("alpha", &a.alpha)?;
            set("zeta", &a.zeta)?;
            data_flags(&mut cfg, &a.data)?;
            if let Some(c) = &a.checkpoints {
                cfg.checkpoints = Some(c.clone());
            }
        }
        Command::Eval(a) => {
            set("split", &a.split)?;
            data_flags(&mut cfg, &a.data)?;
            if let Some(c) = &a.checkpoints {
                cfg.checkpoints = Some(c.clone());
            }
        }
    }
    cfg.sync_seeds();
    Ok(cfg)
}

/// Parses arguments and runs the selected command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::GenData(_) => commands::gen_data(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Infer(_) => commands::infer(&cfg),
        Command::Eval(a) => match &a.scores {
            Some(path) => commands::eval_scores(&cfg, path),
            None => commands::eval(&cfg),
        },
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
