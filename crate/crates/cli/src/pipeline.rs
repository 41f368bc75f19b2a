//! Shared data-loading steps used by several commands.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rkt_core::corpus::{
    self, ExerciseEmbeddings, ExerciseText,
};
use rkt_core::dataio::{self, StudentLogs, Window};
use rkt_core::model::RktConfig;

use crate::error::{CliError, Result};

/// How exercise embeddings are produced from texts; recorded in the
/// train sidecar so evaluation rebuilds them identically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedSettings {
    pub sif_a: f64,
    pub word_dim: usize,
    pub word_vectors: Option<String>,
    pub seed: u64,
}

impl Default for EmbedSettings {
    fn default() -> Self {
        EmbedSettings {
            sif_a: corpus::DEFAULT_SIF_A,
            word_dim: corpus::DEFAULT_WORD_DIM,
            word_vectors: None,
            seed: 0,
        }
    }
}

/// Everything evaluation needs to reproduce the training-time setup.
/// Serializes with the model fields at the top level:
/// `{"d":64,"l":50,"lambda":0.5,...,"embed":{...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SidecarConfig {
    #[serde(flatten)]
    pub model: RktConfig,
    pub embed: EmbedSettings,
    pub split_fraction: f64,
    pub split_seed: u64,
}

pub fn read_sidecar(path: &Path) -> Result<SidecarConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_sidecar(path: &Path, sidecar: &SidecarConfig) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

/// Loads texts and embeds every exercise into SIF space.
pub fn build_embeddings(
    texts_path: &Path,
    settings: &EmbedSettings,
    num_exercises: usize,
) -> Result<(Vec<ExerciseText>, ExerciseEmbeddings)> {
    let texts = corpus::load_texts(texts_path)?;
    let vocab = corpus::build_vocabulary(&texts)?;
    let vectors = match &settings.word_vectors {
        Some(path) => corpus::load_word_vectors(
            Path::new(path),
            &vocab,
            settings.word_dim,
            settings.seed,
        )?,
        None => corpus::deterministic_vectors(&vocab, settings.word_dim, settings.seed),
    };
    let embeddings =
        corpus::embed_exercises(&texts, &vocab, &vectors, settings.sif_a, num_exercises);
    Ok((texts, embeddings))
}

/// Exercise universe spanning both the logs and the texts.
pub fn universe_size(logs: &StudentLogs, texts: &[ExerciseText]) -> usize {
    let from_logs = dataio::num_exercises(logs);
    let from_texts = texts
        .iter()
        .map(|t| t.exercise_id as usize + 1)
        .max()
        .unwrap_or(0);
    from_logs.max(from_texts)
}

pub fn kc_labels(texts: &[ExerciseText]) -> HashMap<u32, String> {
    texts
        .iter()
        .filter_map(|t| t.kc.clone().map(|kc| (t.exercise_id, kc)))
        .collect()
}

/// Windows for a set of student logs with the model's padding id.
pub fn windows_for(logs: &StudentLogs, l: usize, num_exercises: usize) -> Result<Vec<Window>> {
    Ok(dataio::make_windows(logs, l, num_exercises as u32)?)
}

/// Log of the median positive gap between consecutive interactions; the
/// starting point for the global memory strength.
pub fn log_median_gap(logs: &StudentLogs) -> f64 {
    let mut gaps: Vec<f64> = Vec::new();
    for (_, seq) in logs {
        for pair in seq.windows(2) {
            let d = pair[1].timestamp - pair[0].timestamp;
            if d > 0.0 {
                gaps.push(d);
            }
        }
    }
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).expect("finite gaps"));
    gaps[gaps.len() / 2].max(1.0).ln()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

pub fn manifest_path_for_dir(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn manifest_path_for_file(file: &Path) -> PathBuf {
    let mut os = file.as_os_str().to_os_string();
    os.push(".manifest.json");
    PathBuf::from(os)
}
