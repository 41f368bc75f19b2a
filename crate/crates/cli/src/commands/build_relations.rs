use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rkt_core::corpus;
use rkt_core::dataio;
use rkt_core::relation::{
    build_relation_matrix, write_relation_csv, RelationInputs, RelationMethod, DEFAULT_MIN_SUPPORT,
    DEFAULT_THETA,
};

use crate::args::BuildRelationsArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;
use crate::pipeline::{
    build_embeddings, kc_labels, manifest_path_for_file, universe_size, EmbedSettings,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub logs: String,
    pub texts: Option<String>,
    pub out: String,
    pub method: u8,
    pub theta: f64,
    pub min_support: u64,
    pub embed: EmbedSettings,
    pub save_embeddings: Option<String>,
}

pub fn resolve(args: BuildRelationsArgs) -> Result<Resolved> {
    RelationMethod::new(args.method)?;
    let needs_texts = matches!(args.method, 1 | 2 | 4);
    if needs_texts && args.texts.is_none() {
        return Err(CliError::Usage(format!(
            "method {} requires --texts{}",
            args.method,
            if args.method == 1 { " with kc labels" } else { "" }
        )));
    }
    Ok(Resolved {
        logs: args.logs.display().to_string(),
        texts: args.texts.map(|p| p.display().to_string()),
        out: args.out.display().to_string(),
        method: args.method,
        theta: args.theta.unwrap_or(DEFAULT_THETA),
        min_support: args.min_support.unwrap_or(DEFAULT_MIN_SUPPORT),
        embed: EmbedSettings {
            sif_a: args.sif_a.unwrap_or(corpus::DEFAULT_SIF_A),
            word_dim: args.word_dim.unwrap_or(corpus::DEFAULT_WORD_DIM),
            word_vectors: args.word_vectors.map(|p| p.display().to_string()),
            seed: args.seed.unwrap_or(0),
        },
        save_embeddings: args.save_embeddings.map(|p| p.display().to_string()),
    })
}

pub fn execute(resolved: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new("build-relations", resolved, resolved.embed.seed);
    let logs_path = PathBuf::from(&resolved.logs);
    mb.input(&logs_path);
    let logs = dataio::parse_logs(&logs_path)?;

    let method = RelationMethod::new(resolved.method)?;
    let mut outputs = Vec::new();

    let (texts, embeddings) = match &resolved.texts {
        Some(texts_path) => {
            let texts_path = Path::new(texts_path);
            mb.input(texts_path);
            let texts = corpus::load_texts(texts_path)?;
            let universe = universe_size(&logs, &texts);
            let (texts, emb) = {
                let (t, e) = build_embeddings(texts_path, &resolved.embed, universe)?;
                (t, e)
            };
            (texts, Some(emb))
        }
        None => (Vec::new(), None),
    };
    let universe = if texts.is_empty() {
        dataio::num_exercises(&logs)
    } else {
        universe_size(&logs, &texts)
    };

    let kc;
    let inputs = RelationInputs {
        logs: Some(&logs),
        embeddings: embeddings.as_ref(),
        kc_labels: {
            kc = kc_labels(&texts);
            if kc.is_empty() {
                None
            } else {
                Some(&kc)
            }
        },
    };
    let matrix = build_relation_matrix(
        &inputs,
        universe,
        resolved.theta,
        method,
        resolved.min_support,
    )?;

    let out = PathBuf::from(&resolved.out);
    write_relation_csv(&out, &matrix)?;
    println!(
        "relation matrix: {} entries over {} exercises (method {}, theta {})",
        matrix.len(),
        universe,
        resolved.method,
        resolved.theta
    );
    let mut sidecar = out.as_os_str().to_os_string();
    sidecar.push(".json");
    outputs.push(out.clone());
    outputs.push(PathBuf::from(sidecar));

    if let Some(path) = &resolved.save_embeddings {
        if let Some(emb) = &embeddings {
            corpus::write_embeddings(Path::new(path), emb)?;
            outputs.push(PathBuf::from(path));
        }
    }
    mb.finish(&outputs, &manifest_path_for_file(&out))
}
