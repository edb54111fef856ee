//! `vabark`: valence-arousal labelling and multi-task training pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use vabark::model::checkpoint::FORMAT_VERSION;

#[derive(Parser, Debug)]
#[command(name = "vabark", version, about = "Valence-arousal labelling and multi-task training for animal vocalizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Jobs {
    /// Worker threads for corpus-level work; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Full run configuration (spectrogram, model, train, loss sections).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model section only; overrides `--config`.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Train section only; overrides `--config`.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus: WAV files plus `manifest.jsonl`.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Class-mix JSON; defaults to the reference corpus proportions.
        #[arg(long)]
        mix: Option<PathBuf>,
        /// Emotion to acoustic-parameter table JSON.
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Acoustic features per manifest row, written to `features.jsonl`.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        /// Run configuration; only the spectrogram section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Fit corpus anchors, written to `anchors.json`.
    Anchors {
        #[arg(long)]
        features: PathBuf,
        /// Needed for `--anchor-scope train` and `--exclude-enhanced`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        anchor_scope: String,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Fit on original recordings only.
        #[arg(long)]
        exclude_enhanced: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Attach valence/arousal labels, written to `labeled.jsonl`.
    Label {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        anchors: PathBuf,
        /// Precomputed features; computed from audio when absent.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        bias_table: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Emotion-stratified train/val/test split, written to `split.json`.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Comma-separated train,val,test fractions.
        #[arg(long, default_value = "0.7,0.15,0.15")]
        fractions: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one model.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Labels an unlabeled manifest on the fly.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Auxiliary-task ablations and size-group generalization runs.
    Experiment {
        /// Comma-separated kinds (full_mtl, va_only, emotion, size, gender, logo) or `ablation`.
        #[arg(long, default_value = "ablation")]
        kind: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Evaluate a checkpoint: `report.json`, `va_scatter.csv`, `top_errors.csv`.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        subset: String,
        #[arg(long, default_value = "eq6")]
        mae_mode: String,
        /// Copied next to the report when given.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Predict one WAV file; prints JSON.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        wav: PathBuf,
    },
    /// Summarize a training or experiment directory; prints JSON.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let version = format!("{} (checkpoint format v{FORMAT_VERSION})", env!("CARGO_PKG_VERSION"));
    let parsed = Cli::command().version(version).try_get_matches().and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VA_BARK_LOG", "info")).format_timestamp(None).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
