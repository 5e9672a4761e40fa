//! Command-line arguments. Every option is optional so that a config file
//! can fill it; defaults are applied by the commands themselves.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::table::Format;

pub const DEFAULT_SEEDS: &str = "0..4";
pub const DEFAULT_EPOCHS: usize = 40;
pub const DEFAULT_N_BOOT: usize = 10_000;
pub const DEFAULT_N_SPLITS: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_REFERENCE: &str = "things";

#[derive(Debug, Parser)]
#[command(name = "crossrsa", version, about = "Model-to-brain RSA across species and learning rules")]
pub struct Cli {
    /// TOML file with one table per subcommand; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train (or initialise) networks under one learning rule.
    Train(TrainArgs),
    /// Write layer activations for a stimulus set.
    Extract(ExtractArgs),
    /// Score feature files against a neural dataset.
    Score(ScoreArgs),
    /// Split-half noise ceiling of a neural dataset.
    Ceiling(CeilingArgs),
    /// Cross-species ranking, V1 spread and interaction tables.
    Compare(CompareArgs),
    /// Ranking stability across stimulus sets within one species.
    Stimcontrol(StimcontrolArgs),
    /// Figure tables and SVG renderings from results files.
    Report(ReportArgs),
    /// Synthetic population with a planted code from a feature file.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Extract(_) => "extract",
            Command::Score(_) => "score",
            Command::Ceiling(_) => "ceiling",
            Command::Compare(_) => "compare",
            Command::Stimcontrol(_) => "stimcontrol",
            Command::Report(_) => "report",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// bp, fa, pc, stdp or random.
    #[arg(long)]
    pub rule: Option<String>,
    /// Single seed; overrides --seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inclusive range `a..b` or list `a,b,c` [default: 0..4].
    #[arg(long)]
    pub seeds: Option<String>,
    /// [default: 40]
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// CIFAR-10 binary batches or a directory of per-class PNG folders.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use at most this many training images.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Seed of the FA feedback matrices [default: the training seed].
    #[arg(long)]
    pub feedback_seed: Option<u64>,
    /// Output directory for `<rule>-seed<N>.ckpt` and training logs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ExtractArgs {
    /// Checkpoint files (repeatable).
    #[arg(long, num_args = 1..)]
    pub ckpt: Vec<PathBuf>,
    /// Stimulus manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Layers to extract (repeatable) [default: Conv1 Conv2 Conv3 FC1].
    #[arg(long, num_args = 1..)]
    pub layer: Vec<String>,
    /// Side length stimuli are resized to [default: 224].
    #[arg(long)]
    pub target: Option<usize>,
    /// Output directory for `<rule>-seed<N>-<layer>.feat`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    /// Neural dataset (text or `.bin`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feature files to score (repeatable).
    #[arg(long, num_args = 1..)]
    pub features: Vec<PathBuf>,
    /// Region label for the records [default: the dataset's].
    #[arg(long)]
    pub region: Option<String>,
    /// Stimulus-set label [default: the data file stem].
    #[arg(long)]
    pub stimulus_set: Option<String>,
    /// Only score feature layers mapped to the region: `default` for the
    /// species map, or `Layer=Region,...`.
    #[arg(long)]
    pub map: Option<String>,
    /// Bootstrap resamples; 0 skips the interval [default: 10000].
    #[arg(long)]
    pub n_boot: Option<usize>,
    /// [default: 0.05]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Append to an existing results file instead of replacing it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CeilingArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// [default: 100]
    #[arg(long)]
    pub n_splits: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub region: Option<String>,
    #[arg(long)]
    pub stimulus_set: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    /// Results files (repeatable).
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Region whose spread across rules is reported [default: V1].
    #[arg(long)]
    pub region: Option<String>,
    /// [default: 0.05]
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct StimcontrolArgs {
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Stimulus set every other set is compared against [default: things].
    #[arg(long)]
    pub reference: Option<String>,
    /// Restrict to one species.
    #[arg(long)]
    pub species: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Results files (repeatable).
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Results for the stimulus-control figure [default: --data].
    #[arg(long, num_args = 1..)]
    pub control: Vec<PathBuf>,
    #[arg(long)]
    pub reference: Option<String>,
    /// Region of the single-region bar figure [default: V1].
    #[arg(long)]
    pub region: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Source feature file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Signal-to-noise variance ratio per neuron [default: 1].
    #[arg(long)]
    pub snr: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    pub neurons: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    pub reps: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset; `.bin` selects the binary variant.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `a..b` (inclusive) or `a,b,c`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("invalid seed list {s:?}");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds: Vec<u64> = s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seeds("1..=2").unwrap(), vec![1, 2]);
        assert_eq!(parse_seeds("3, 5").unwrap(), vec![3, 5]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
