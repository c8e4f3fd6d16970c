//! Command arguments. Each struct doubles as the `[inputs]` table of a run manifest.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "spectrakit",
    version,
    about = "Spectral diagnostics and surgery for transformer checkpoints"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-matrix singular-value drift between two checkpoints.
    SvdDiff(SvdDiffArgs),
    /// Principal-angle spectra between the singular subspaces of two checkpoints.
    Angles(AnglesArgs),
    /// Splice singular values or vectors of a donor checkpoint into a host.
    Restore(RestoreArgs),
    /// Advantage-distribution statistics and trainability verdict.
    AdvStats(AdvStatsArgs),
    /// Rotation penalty of a checkpoint against a reference.
    Penalty(PenaltyArgs),
    /// Execute a manifest, expanding any sweep grid.
    Run(RunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvdDiffArgs {
    /// Baseline checkpoint.
    #[arg(long)]
    pub a: PathBuf,
    /// Compared checkpoint.
    #[arg(long)]
    pub b: PathBuf,
    /// Built-in profile name or TOML profile path.
    #[arg(long, default_value = "llama-style")]
    pub profile: String,
    /// all, first:K, last:K or list:I,J
    #[arg(long, default_value = "all")]
    pub layers: String,
    /// Comma-separated kinds (q,k,v,o,mlp_up,mlp_gate,mlp_down); all when omitted.
    #[arg(long)]
    pub kinds: Option<String>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub emit_plot_data: bool,
    /// Record a generation timestamp in reports (breaks byte-reproducibility).
    #[arg(long)]
    pub stamp: bool,
}

impl Default for SvdDiffArgs {
    fn default() -> Self {
        Self {
            a: PathBuf::new(),
            b: PathBuf::new(),
            profile: "llama-style".into(),
            layers: "all".into(),
            kinds: None,
            out: PathBuf::new(),
            emit_plot_data: false,
            stamp: false,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnglesArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value = "llama-style")]
    pub profile: String,
    /// all, first:K, last:K or list:I,J
    #[arg(long, default_value = "all")]
    pub layers: String,
    /// Comma-separated kinds; all when omitted.
    #[arg(long)]
    pub kinds: Option<String>,
    /// Compare only the leading `rank` singular directions.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-kind line-series CSVs under `plot/`.
    #[arg(long)]
    pub emit_plot_data: bool,
    /// Record a generation timestamp in reports.
    #[arg(long)]
    pub stamp: bool,
}

impl Default for AnglesArgs {
    fn default() -> Self {
        Self {
            a: PathBuf::new(),
            b: PathBuf::new(),
            profile: "llama-style".into(),
            layers: "all".into(),
            kinds: None,
            rank: None,
            out: PathBuf::new(),
            emit_plot_data: false,
            stamp: false,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestoreArgs {
    /// `values` or `vectors`.
    #[arg(long)]
    pub mode: String,
    /// Source of the restored part.
    #[arg(long)]
    pub donor: PathBuf,
    /// Source of the kept part.
    #[arg(long)]
    pub host: PathBuf,
    /// all, first:K, last:K or list:I,J
    #[arg(long, default_value = "all")]
    pub layers: String,
    /// all, top:K, bottom:K or range:A..B (0-based, end exclusive)
    #[arg(long, default_value = "all")]
    pub ranks: String,
    /// Comma-separated kinds; defaults to q,k,v,mlp_up,mlp_gate,mlp_down.
    #[arg(long)]
    pub kinds: Option<String>,
    #[arg(long, default_value = "llama-style")]
    pub profile: String,
    /// `none` or `procrustes` (vectors mode only).
    #[arg(long, default_value = "none")]
    pub align: String,
    /// Store edited tensors as F32 regardless of their original dtype.
    #[arg(long)]
    pub force_f32: bool,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// Record a generation timestamp in reports.
    #[arg(long)]
    pub stamp: bool,
}

impl Default for RestoreArgs {
    fn default() -> Self {
        Self {
            mode: String::new(),
            donor: PathBuf::new(),
            host: PathBuf::new(),
            layers: "all".into(),
            ranks: "all".into(),
            kinds: None,
            profile: "llama-style".into(),
            align: "none".into(),
            force_f32: false,
            out: PathBuf::new(),
            stamp: false,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvStatsArgs {
    /// Line-delimited JSON rollout log.
    #[arg(long)]
    pub input: PathBuf,
    /// `fd` (Freedman–Diaconis) or a fixed bin count.
    #[arg(long, default_value = "fd")]
    pub bins: String,
    /// Silverman bootstrap replicates.
    #[arg(long, default_value_t = 500)]
    pub bootstrap: usize,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// `default` or a TOML thresholds file.
    #[arg(long, default_value = "default")]
    pub thresholds: String,
    /// Discount for GAE when the log carries rewards and values.
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    /// GAE lambda.
    #[arg(long, default_value_t = 0.95)]
    pub lambda: f64,
    /// `step` or `token`: what one advantage sample represents (recorded, not interpreted).
    #[arg(long, default_value = "step")]
    pub level: String,
    /// Fewer samples than this is a validation error.
    #[arg(long, default_value_t = 200)]
    pub min_samples: usize,
    /// `empirical-first` or `normal-first`.
    #[arg(long, default_value = "empirical-first")]
    pub kl_direction: String,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the empirical and matched-normal density series under `plot/`.
    #[arg(long)]
    pub emit_plot_data: bool,
    /// Record a generation timestamp in reports.
    #[arg(long)]
    pub stamp: bool,
}

impl Default for AdvStatsArgs {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            bins: "fd".into(),
            bootstrap: 500,
            seed: 7,
            thresholds: "default".into(),
            gamma: 0.99,
            lambda: 0.95,
            level: "step".into(),
            min_samples: 200,
            kl_direction: "empirical-first".into(),
            out: PathBuf::new(),
            emit_plot_data: false,
            stamp: false,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyArgs {
    /// Reference checkpoint whose top-r subspaces are preserved.
    #[arg(long = "ref")]
    #[serde(rename = "ref")]
    pub reference: PathBuf,
    /// Checkpoint being scored.
    #[arg(long)]
    pub current: PathBuf,
    /// Rank budget; clamped to each matrix's thin rank.
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value = "llama-style")]
    pub profile: String,
    /// all, first:K, last:K or list:I,J
    #[arg(long, default_value = "all")]
    pub layers: String,
    /// Comma-separated kinds; all when omitted.
    #[arg(long)]
    pub kinds: Option<String>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: PathBuf,
    /// Record a generation timestamp in reports.
    #[arg(long)]
    pub stamp: bool,
}

impl Default for PenaltyArgs {
    fn default() -> Self {
        Self {
            reference: PathBuf::new(),
            current: PathBuf::new(),
            rank: 0,
            profile: "llama-style".into(),
            layers: "all".into(),
            kinds: None,
            out: PathBuf::new(),
            stamp: false,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
