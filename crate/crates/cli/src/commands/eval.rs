use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use rkt_core::model::Rkt;
use rkt_core::traineval::{self, EvalOptions};

use crate::args::EvalArgs;
use crate::error::Result;
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
    pub report: String,
    pub online: bool,
    pub groups: bool,
    pub all: bool,
}

pub fn resolve(args: EvalArgs) -> Result<Resolved> {
    Ok(Resolved {
        checkpoint: args.checkpoint.display().to_string(),
        config: args.config.display().to_string(),
        logs: args.logs.display().to_string(),
        texts: args.texts.display().to_string(),
        relations: args.relations.display().to_string(),
        report: args.report.display().to_string(),
        online: args.online,
        groups: args.groups,
        all: args.all,
    })
}

pub fn execute(resolved: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new("eval", resolved, 0);
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
    let windows = if resolved.all {
        &loaded.all_windows
    } else {
        &loaded.test_windows
    };
    let options = EvalOptions {
        online_update: resolved.online,
        online_learning_rate: 0.001,
        groups: resolved.groups,
    };
    let report = traineval::evaluate(&model, &loaded.params, windows, &options)?;

    println!("{:<12} {:>8}", "metric", "value");
    println!("{:<12} {:>8.4}", "AUC", report.auc);
    println!("{:<12} {:>8.4}", "ACC", report.acc);
    println!("{:<12} {:>8}", "predictions", report.prediction_count);
    if let Some(groups) = &report.groups {
        for g in groups {
            println!(
                "{:<12} {:>8} {:>8} {:>8}",
                format!("<{}", g.max_interactions),
                g.auc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                g.acc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                g.prediction_count
            );
        }
    }

    let report_path = PathBuf::from(&resolved.report);
    traineval::save_report_json(&report_path, &report)?;
    mb.finish(std::slice::from_ref(&report_path), &manifest_path_for_file(&report_path))
}
