use std::path::PathBuf;

use rkt_core::traineval::{ablation_grid, format_grid, save_report_json};

use crate::error::Result;
use crate::manifest::ManifestBuilder;
use crate::pipeline::{ensure_dir, manifest_path_for_dir};

use super::train::{prepare, Resolved};

pub fn execute(resolved: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new("ablate", resolved, resolved.train.seed);
    let out_dir = PathBuf::from(&resolved.out_dir);
    ensure_dir(&out_dir)?;
    let prepared = prepare(resolved, &mut mb)?;

    let rows = ablation_grid(
        &resolved.model,
        &prepared.embeddings,
        &prepared.relations,
        &prepared.train_windows,
        &prepared.test_windows,
        &resolved.train,
        &prepared.student_ids,
        prepared.s0_base,
    )?;
    print!("{}", format_grid(&rows));

    let grid_path = out_dir.join("ablation.json");
    save_report_json(&grid_path, &rows)?;
    mb.finish(&[grid_path], &manifest_path_for_dir(&out_dir))
}
