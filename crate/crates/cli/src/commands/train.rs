use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rkt_core::corpus;
use rkt_core::dataio::{self, DEFAULT_TRAIN_FRACTION};
use rkt_core::model::{Rkt, RktConfig, RktParams};
use rkt_core::relation::read_relation_csv;
use rkt_core::traineval::{self, TrainConfig};

use crate::args::TrainArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;
use crate::pipeline::{
    build_embeddings, ensure_dir, log_median_gap, manifest_path_for_dir, read_sidecar,
    windows_for, write_sidecar, EmbedSettings, SidecarConfig,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub logs: String,
    pub texts: String,
    pub relations: String,
    pub out_dir: String,
    pub model: RktConfig,
    pub train: TrainConfig,
    pub embed: EmbedSettings,
    pub split_fraction: f64,
    pub split_seed: u64,
}

/// Optional config-file fields; command-line flags take precedence, then
/// these, then built-in defaults.
#[derive(Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    d: Option<usize>,
    l: Option<usize>,
    lambda: Option<f64>,
    dropout: Option<f64>,
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    decay: Option<f64>,
    split: Option<f64>,
    seed: Option<u64>,
    clip_norm: Option<f64>,
    early_stop: Option<usize>,
    sif_a: Option<f64>,
    word_vectors: Option<String>,
    no_position: Option<bool>,
    no_forget: Option<bool>,
    no_relation: Option<bool>,
}

pub fn resolve(args: TrainArgs) -> Result<Resolved> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)?
        }
        None => FileConfig::default(),
    };
    let defaults_model = RktConfig::default();
    let defaults_train = TrainConfig::default();
    let seed = args.seed.or(file.seed).unwrap_or(defaults_train.seed);
    let model = RktConfig {
        d: args.d.or(file.d).unwrap_or(defaults_model.d),
        l: args.l.or(file.l).unwrap_or(defaults_model.l),
        lambda: args.lambda.or(file.lambda).unwrap_or(defaults_model.lambda),
        dropout: args
            .dropout
            .or(file.dropout)
            .unwrap_or(defaults_model.dropout),
        use_position: !(args.no_position || file.no_position.unwrap_or(false)),
        use_forget: !(args.no_forget || file.no_forget.unwrap_or(false)),
        use_exercise_relation: !(args.no_relation || file.no_relation.unwrap_or(false)),
        ..defaults_model
    };
    model.validate()?;
    let train = TrainConfig {
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults_train.epochs),
        batch_size: args.batch.or(file.batch).unwrap_or(defaults_train.batch_size),
        learning_rate: args.lr.or(file.lr).unwrap_or(defaults_train.learning_rate),
        weight_decay: args
            .decay
            .or(file.decay)
            .unwrap_or(defaults_train.weight_decay),
        seed,
        clip_norm: args.clip_norm.or(file.clip_norm),
        early_stop_patience: args.early_stop.or(file.early_stop),
    };
    Ok(Resolved {
        logs: args.logs.display().to_string(),
        texts: args.texts.display().to_string(),
        relations: args.relations.display().to_string(),
        out_dir: args.out_dir.display().to_string(),
        model,
        train,
        embed: EmbedSettings {
            sif_a: args.sif_a.or(file.sif_a).unwrap_or(corpus::DEFAULT_SIF_A),
            word_dim: corpus::DEFAULT_WORD_DIM,
            word_vectors: args
                .word_vectors
                .map(|p| p.display().to_string())
                .or(file.word_vectors),
            seed,
        },
        split_fraction: args.split.or(file.split).unwrap_or(DEFAULT_TRAIN_FRACTION),
        split_seed: seed,
    })
}

/// Loaded inputs shared by `train` and `ablate`.
pub struct Prepared {
    pub embeddings: corpus::ExerciseEmbeddings,
    pub relations: rkt_core::relation::RelationMatrix,
    pub train_windows: Vec<dataio::Window>,
    pub test_windows: Vec<dataio::Window>,
    pub student_ids: Vec<u64>,
    pub s0_base: f64,
}

pub fn prepare(resolved: &Resolved, mb: &mut ManifestBuilder) -> Result<Prepared> {
    let logs_path = PathBuf::from(&resolved.logs);
    let texts_path = PathBuf::from(&resolved.texts);
    let relations_path = PathBuf::from(&resolved.relations);
    mb.input(&logs_path);
    mb.input(&texts_path);
    mb.input(&relations_path);

    let logs = dataio::parse_logs(&logs_path)?;
    let relations = read_relation_csv(&relations_path)?;
    let universe = relations.num_exercises();
    let from_logs = dataio::num_exercises(&logs);
    if from_logs > universe {
        return Err(CliError::Data(format!(
            "logs reference exercise ids up to {} but the relation matrix covers {}",
            from_logs - 1,
            universe
        )));
    }
    let mut embed = resolved.embed.clone();
    embed.word_dim = resolved.model.d_w;
    let (_texts, embeddings) = build_embeddings(&texts_path, &embed, universe)?;

    let (train_logs, test_logs) =
        dataio::split_students(&logs, resolved.split_fraction, resolved.split_seed)?;
    let train_windows = windows_for(&train_logs, resolved.model.l, universe)?;
    let test_windows = windows_for(&test_logs, resolved.model.l, universe)?;
    let student_ids: Vec<u64> = train_logs.iter().map(|(id, _)| *id).collect();
    let s0_base = log_median_gap(&train_logs);
    Ok(Prepared {
        embeddings,
        relations,
        train_windows,
        test_windows,
        student_ids,
        s0_base,
    })
}

pub fn execute(resolved: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new("train", resolved, resolved.train.seed);
    let out_dir = PathBuf::from(&resolved.out_dir);
    ensure_dir(&out_dir)?;
    let prepared = prepare(resolved, &mut mb)?;

    let model = Rkt::new(&resolved.model, &prepared.embeddings, &prepared.relations)?;
    let mut params = RktParams::init(
        &resolved.model,
        &prepared.student_ids,
        prepared.s0_base,
        resolved.train.seed,
    );
    let val = if resolved.train.early_stop_patience.is_some() {
        Some(prepared.test_windows.as_slice())
    } else {
        None
    };
    let mut report = traineval::train(
        &model,
        &mut params,
        &prepared.train_windows,
        val,
        &resolved.train,
    )?;

    let checkpoint_path = out_dir.join("checkpoint.rktm");
    params.save(&checkpoint_path)?;
    report.checkpoint_path = Some(checkpoint_path.display().to_string());
    let sidecar_path = out_dir.join("config.json");
    write_sidecar(
        &sidecar_path,
        &SidecarConfig {
            model: resolved.model.clone(),
            embed: EmbedSettings {
                word_dim: resolved.model.d_w,
                ..resolved.embed.clone()
            },
            split_fraction: resolved.split_fraction,
            split_seed: resolved.split_seed,
        },
    )?;
    let report_path = out_dir.join("train_report.json");
    traineval::save_report_json(&report_path, &report)?;

    let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} epochs on {} windows; final loss {:.4} ({:.1}s)",
        report.epoch_losses.len(),
        prepared.train_windows.len(),
        last,
        report.wall_clock_secs
    );
    mb.finish(
        &[checkpoint_path, sidecar_path, report_path],
        &manifest_path_for_dir(&out_dir),
    )
}

/// Re-derives the training-time setup from a sidecar for eval/export.
pub struct Loaded {
    pub sidecar: SidecarConfig,
    pub params: RktParams,
    pub embeddings: corpus::ExerciseEmbeddings,
    pub relations: rkt_core::relation::RelationMatrix,
    pub all_windows: Vec<dataio::Window>,
    pub test_windows: Vec<dataio::Window>,
}

pub fn load_for_eval(
    checkpoint: &Path,
    config: &Path,
    logs: &Path,
    texts: &Path,
    relations: &Path,
) -> Result<Loaded> {
    let sidecar = read_sidecar(config)?;
    let params = RktParams::load(checkpoint)?;
    let logs_data = dataio::parse_logs(logs)?;
    let relation_matrix = read_relation_csv(relations)?;
    let universe = relation_matrix.num_exercises();
    let (_texts, embeddings) = build_embeddings(texts, &sidecar.embed, universe)?;
    let (_, test_logs) =
        dataio::split_students(&logs_data, sidecar.split_fraction, sidecar.split_seed)?;
    let all_windows = windows_for(&logs_data, sidecar.model.l, universe)?;
    let test_windows = windows_for(&test_logs, sidecar.model.l, universe)?;
    Ok(Loaded {
        sidecar,
        params,
        embeddings,
        relations: relation_matrix,
        all_windows,
        test_windows,
    })
}
