use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use rkt_core::synth::{self, SynthConfig};

use crate::args::GenSynthArgs;
use crate::error::Result;
use crate::manifest::ManifestBuilder;
use crate::pipeline::{ensure_dir, manifest_path_for_dir};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub out_dir: String,
    pub config: SynthConfig,
}

pub fn resolve(args: GenSynthArgs) -> Result<Resolved> {
    let mut config = SynthConfig::default();
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.students {
        config.num_students = v;
    }
    if let Some(v) = args.interactions {
        config.interactions_per_student = v;
    }
    if let Some(v) = args.skills {
        config.num_skills = v;
        config.skill_edges = synth::chain_edges(v, 0.8);
    }
    if let Some(v) = args.exercises_per_skill {
        config.exercises_per_skill = v;
    }
    if let Some(v) = args.guess {
        config.guess = v;
    }
    if let Some(v) = args.slip {
        config.slip = v;
    }
    Ok(Resolved {
        out_dir: args.out_dir.display().to_string(),
        config,
    })
}

pub fn execute(resolved: &Resolved) -> Result<()> {
    let mb = ManifestBuilder::new("gen-synth", resolved, resolved.config.seed);
    let out_dir = PathBuf::from(&resolved.out_dir);
    ensure_dir(&out_dir)?;
    let data = synth::generate(&resolved.config);
    let logs_path = out_dir.join("logs.jsonl");
    let texts_path = out_dir.join("texts.jsonl");
    let truth_path = out_dir.join("truth.json");
    synth::write_logs_jsonl(&logs_path, &data.logs)?;
    synth::write_texts_jsonl(&texts_path, &data.texts)?;
    synth::write_truth_json(&truth_path, &data.truth)?;
    println!(
        "generated {} students, {} exercises -> {}",
        data.logs.len(),
        data.truth.num_exercises(),
        out_dir.display()
    );
    mb.finish(
        &[logs_path, texts_path, truth_path],
        &manifest_path_for_dir(&out_dir),
    )
}
