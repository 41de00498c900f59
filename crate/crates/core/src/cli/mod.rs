//! The `partret` command line: prepare, train, retarget, eval, attn-viz.
//!
//! Every failure prints one line `error[E_CODE]: message` to stderr and
//! exits nonzero.

mod commands;
mod config;
mod dataset;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::training::Mode;

pub use commands::{
    attention_viz, checkpoint_dir, checkpoint_path, evaluate, latest_checkpoint, prepare, retarget_file, train,
    whole_clip, RetargetArgs, RetargetOutcome, SkeletonPairRow, TrainOutcome,
};
pub use config::{EvalSection, RunConfig, StructureConfig, TrainSection, RUN_ROOT_ENV};
pub use dataset::{DatasetSummary, PreparedClip, PreparedDataset};

#[derive(Debug, Parser)]
#[command(name = "partret", version, about = "Body-part motion retargeting with pose-aware attention")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config mode: humanoid or biped_quad.
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, localize and clip both structures' datasets.
    Prepare,
    /// Train on prepared data, optionally resuming from a checkpoint.
    Train {
        /// Total epochs, counting those already in a resumed checkpoint.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Retarget a BVH file onto a trained structure.
    Retarget {
        #[arg(long)]
        input: PathBuf,
        /// Structure id, or a BVH file whose skeleton is the target.
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Source structure id; inferred from the input skeleton if absent.
        #[arg(long)]
        from: Option<String>,
        /// Joint mapping applied to the input before encoding.
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Score both retargeting directions on the test splits.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output directory; defaults to `<run_dir>/eval`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export first-layer attention of a BVH file as CSV and PNG.
    AttnViz {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        from: Option<String>,
        /// Output directory; defaults to `<run_dir>/attention`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pixel size of one heatmap cell.
        #[arg(long, default_value_t = 8)]
        cell: u32,
    },
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let path = self.config.as_deref().ok_or_else(|| Error::Config("this command needs --config".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn optional_config(&self) -> Result<Option<RunConfig>> {
        self.config.as_ref().map(|_| self.run_config()).transpose()
    }
}

/// Checkpoint from the flag, else the config, else the newest one in the
/// run directory.
pub fn resolve_checkpoint(flag: Option<&Path>, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    if let Some(c) = cfg {
        if let Some(p) = &c.checkpoint {
            return Ok(p.clone());
        }
        if let Some(p) = latest_checkpoint(c) {
            return Ok(p);
        }
    }
    Err(Error::Config("no checkpoint: pass --checkpoint or a config whose run has one".into()))
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Prepare => {
            prepare(&cli.run_config()?)?;
        }
        Command::Train { epochs, checkpoint } => {
            let mut cfg = cli.run_config()?;
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            let resume = checkpoint.clone().or_else(|| cfg.checkpoint.clone());
            let out = train(&cfg, resume.as_deref())?;
            if let Some(p) = out.checkpoints.last() {
                println!("saved {}", p.display());
            }
        }
        Command::Retarget { input, target, out, checkpoint, from, mapping } => {
            let cfg = cli.optional_config()?;
            let path = resolve_checkpoint(checkpoint.as_deref(), cfg.as_ref())?;
            let models = checkpoint::load(&path)?;
            let args = RetargetArgs {
                input: input.clone(),
                target: target.clone(),
                out: out.clone(),
                from: from.clone(),
                mapping: mapping.clone(),
            };
            let r = retarget_file(&models, &args)?;
            println!("{} -> {}: {} frames written to {}", r.source, r.target, r.clip.frames(), out.display());
        }
        Command::Eval { checkpoint, out } => {
            let cfg = cli.run_config()?;
            let path = resolve_checkpoint(checkpoint.as_deref(), Some(&cfg))?;
            let models = checkpoint::load(&path)?;
            let out = out.clone().unwrap_or_else(|| cfg.run_dir.join("eval"));
            evaluate(&cfg, &models, &out)?;
            println!("reports written to {}", out.display());
        }
        Command::AttnViz { input, checkpoint, from, out, cell } => {
            let cfg = cli.optional_config()?;
            let path = resolve_checkpoint(checkpoint.as_deref(), cfg.as_ref())?;
            let models = checkpoint::load(&path)?;
            let out = match (out, &cfg) {
                (Some(o), _) => o.clone(),
                (None, Some(c)) => c.run_dir.join("attention"),
                (None, None) => PathBuf::from("attention"),
            };
            let heat = attention_viz(&models, input, from.as_deref(), &out, *cell)?;
            println!("{} frames of attention written to {}", heat.frames(), out.display());
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Entry point of the `partret` binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
