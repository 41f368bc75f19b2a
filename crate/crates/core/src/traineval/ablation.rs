//! The eight-variant ablation grid: every combination of removing position
//! encoding (PE), forget modeling (TE), and exercise-relation modeling (RE).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ExerciseEmbeddings;
use crate::dataio::Window;
use crate::model::{Rkt, RktConfig, RktParams};
use crate::relation::RelationMatrix;

use super::eval::{evaluate, EvalOptions, EvalReport};
use super::{train, Result, TrainConfig, TrainReport};

/// `(name, use_position, use_forget, use_exercise_relation)`, full model
/// first; a listed tag means that component is removed.
pub const ABLATION_VARIANTS: [(&str, bool, bool, bool); 8] = [
    ("full", true, true, true),
    ("PE", false, true, true),
    ("TE", true, false, true),
    ("RE", true, true, false),
    ("PE+TE", false, false, true),
    ("PE+RE", false, true, false),
    ("RE+TE", true, false, false),
    ("PE+RE+TE", false, false, false),
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub use_position: bool,
    pub use_forget: bool,
    pub use_exercise_relation: bool,
    pub train: TrainReport,
    pub eval: EvalReport,
}

/// Trains and evaluates all eight variants with a shared seed and split.
///
/// Cells are independent and run in parallel; each is deterministic on its
/// own, so the grid is reproducible regardless of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn ablation_grid(
    base: &RktConfig,
    embeddings: &ExerciseEmbeddings,
    relations: &RelationMatrix,
    train_windows: &[Window],
    test_windows: &[Window],
    train_config: &TrainConfig,
    student_ids: &[u64],
    s0_base: f64,
) -> Result<Vec<AblationRow>> {
    let rows: Vec<Result<AblationRow>> = ABLATION_VARIANTS
        .par_iter()
        .map(|&(name, pe, te, re)| {
            let config = RktConfig {
                use_position: pe,
                use_forget: te,
                use_exercise_relation: re,
                ..base.clone()
            };
            let model = Rkt::new(&config, embeddings, relations)?;
            let mut params =
                RktParams::init(&config, student_ids, s0_base, train_config.seed);
            let train_report =
                train(&model, &mut params, train_windows, None, train_config)?;
            let eval_report =
                evaluate(&model, &params, test_windows, &EvalOptions::static_eval())?;
            Ok(AblationRow {
                name: name.to_string(),
                use_position: pe,
                use_forget: te,
                use_exercise_relation: re,
                train: train_report,
                eval: eval_report,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Fixed-width table of the grid, one row per variant.
pub fn format_grid(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<10} {:>8} {:>8} {:>8}\n", "variant", "AUC", "ACC", "preds"));
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>8.4} {:>8.4} {:>8}\n",
            r.name, r.eval.auc, r.eval.acc, r.eval.prediction_count
        ));
    }
    out
}
