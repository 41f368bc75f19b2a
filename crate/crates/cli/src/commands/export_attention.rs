use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use rkt_core::model::Rkt;
use rkt_core::traineval::{aggregate_attention, export_attention, write_aggregate_csv};

use crate::args::ExportAttentionArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;
use crate::pipeline::manifest_path_for_file;

use super::train::load_for_eval;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub checkpoint: String,
    pub config: String,
    pub logs: String,
    pub texts: String,
    pub relations: String,
    pub out: String,
    pub student: Option<u64>,
    pub window_index: Option<usize>,
    pub aggregate: bool,
}

pub fn resolve(args: ExportAttentionArgs) -> Result<Resolved> {
    if args.student.is_some() && args.window_index.is_some() {
        return Err(CliError::Usage(
            "--student and --window-index are mutually exclusive".into(),
        ));
    }
    Ok(Resolved {
        checkpoint: args.checkpoint.display().to_string(),
        config: args.config.display().to_string(),
        logs: args.logs.display().to_string(),
        texts: args.texts.display().to_string(),
        relations: args.relations.display().to_string(),
        out: args.out.display().to_string(),
        student: args.student,
        window_index: args.window_index,
        aggregate: args.aggregate,
    })
}

pub fn execute(resolved: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new("export-attention", resolved, 0);
    for p in [
        &resolved.checkpoint,
        &resolved.config,
        &resolved.logs,
        &resolved.texts,
        &resolved.relations,
    ] {
        mb.input(&PathBuf::from(p));
    }
    let loaded = load_for_eval(
        &PathBuf::from(&resolved.checkpoint),
        &PathBuf::from(&resolved.config),
        &PathBuf::from(&resolved.logs),
        &PathBuf::from(&resolved.texts),
        &PathBuf::from(&resolved.relations),
    )?;
    let model = Rkt::new(&loaded.sidecar.model, &loaded.embeddings, &loaded.relations)?;
    let out = PathBuf::from(&resolved.out);

    if resolved.aggregate {
        let matrix = aggregate_attention(&model, &loaded.params, &loaded.all_windows)?;
        write_aggregate_csv(&out, &matrix)?;
        println!(
            "aggregate attention over {} windows -> {}",
            loaded.all_windows.len(),
            out.display()
        );
    } else {
        let window = match (resolved.student, resolved.window_index) {
            (Some(student), _) => loaded
                .all_windows
                .iter()
                .find(|w| w.student_id == student)
                .ok_or_else(|| CliError::Data(format!("no windows for student {student}")))?,
            (None, Some(idx)) => loaded
                .all_windows
                .get(idx)
                .ok_or_else(|| CliError::Data(format!("window index {idx} out of range")))?,
            (None, None) => loaded
                .all_windows
                .first()
                .ok_or_else(|| CliError::Data("no windows in the logs".into()))?,
        };
        export_attention(&model, &loaded.params, window, &out)?;
        println!(
            "attention for student {} -> {}",
            window.student_id,
            out.display()
        );
    }
    mb.finish(std::slice::from_ref(&out), &manifest_path_for_file(&out))
}
