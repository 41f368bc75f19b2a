//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "rkt",
    version,
    about = "Relation-aware knowledge tracing: mine exercise relations, train and evaluate the attention model",
    propagate_version = true
)]
pub struct Cli {
    /// Cap worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset with known relation structure.
    GenSynth(GenSynthArgs),
    /// Mine the exercise-relation matrix from logs and/or texts.
    BuildRelations(BuildRelationsArgs),
    /// Train the model on an interaction log.
    Train(TrainArgs),
    /// Evaluate a checkpoint (AUC/ACC, optional online updates and groups).
    Eval(EvalArgs),
    /// Train and evaluate all eight ablation variants.
    Ablate(TrainArgs),
    /// Export per-pair attention weights or the aggregate heatmap.
    ExportAttention(ExportAttentionArgs),
    /// Check model gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Replay a command from its run manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    /// Directory for logs.jsonl, texts.jsonl, truth.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub students: Option<usize>,
    #[arg(long)]
    pub interactions: Option<usize>,
    #[arg(long)]
    pub skills: Option<usize>,
    #[arg(long)]
    pub exercises_per_skill: Option<usize>,
    #[arg(long)]
    pub guess: Option<f64>,
    #[arg(long)]
    pub slip: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BuildRelationsArgs {
    #[arg(long)]
    pub logs: PathBuf,
    /// Exercise texts (JSONL); required by methods 1, 2 and 4.
    #[arg(long)]
    pub texts: Option<PathBuf>,
    /// Output CSV path; a `<out>.json` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// 1 same-KC, 2 text similarity, 3 performance Phi, 4 Phi + similarity.
    #[arg(long, default_value_t = 4)]
    pub method: u8,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub min_support: Option<u64>,
    #[arg(long)]
    pub sif_a: Option<f64>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    /// Pretrained word vectors (text: word followed by values); defaults to
    /// deterministic seeded vectors.
    #[arg(long)]
    pub word_vectors: Option<PathBuf>,
    /// Also write the SIF exercise-embedding matrix here.
    #[arg(long)]
    pub save_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long)]
    pub texts: PathBuf,
    /// Relation CSV from `build-relations`.
    #[arg(long)]
    pub relations: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON config file; command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Remove the positional embedding (PE ablation).
    #[arg(long)]
    pub no_position: bool,
    /// Remove forget-kernel modeling (TE ablation).
    #[arg(long)]
    pub no_forget: bool,
    /// Remove exercise-relation modeling (RE ablation).
    #[arg(long)]
    pub no_relation: bool,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Early-stop patience on validation AUC (uses the test split as
    /// validation; off by default).
    #[arg(long)]
    pub early_stop: Option<usize>,
    #[arg(long)]
    pub sif_a: Option<f64>,
    #[arg(long)]
    pub word_vectors: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint file written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sidecar config.json written next to the checkpoint.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long)]
    pub relations: PathBuf,
    /// Report JSON output path.
    #[arg(long)]
    pub report: PathBuf,
    /// One gradient step per revealed response before the next prediction.
    #[arg(long)]
    pub online: bool,
    /// Break metrics down by student interaction volume.
    #[arg(long)]
    pub groups: bool,
    /// Evaluate every student instead of the held-out test split.
    #[arg(long)]
    pub all: bool,
}

#[derive(Args, Debug)]
pub struct ExportAttentionArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long)]
    pub relations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Export the first window of this student (default: window 0 overall).
    #[arg(long)]
    pub student: Option<u64>,
    /// Export this window index instead.
    #[arg(long)]
    pub window_index: Option<usize>,
    /// Position-averaged l x l heatmap over all windows.
    #[arg(long)]
    pub aggregate: bool,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value_t = 5)]
    pub l: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    #[arg(long, default_value_t = 250)]
    pub coords: usize,
    /// Report JSON output path.
    #[arg(long, default_value = "gradcheck_report.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RerunArgs {
    /// Manifest written by a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
}
