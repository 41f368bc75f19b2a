//! Static and online-update evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Window;
use crate::model::{Rkt, RktParams};
use crate::numerics::{adam_step, AdamConfig, AdamState, Graph};

use super::metrics::{accuracy, auc};
use super::{Result, TrainEvalError};

/// Student-group boundaries by total interaction count.
pub const GROUP_LIMITS: [usize; 4] = [10, 100, 1000, 10_000];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// After each revealed response, take one gradient step on it before
    /// predicting the next.
    pub online_update: bool,
    pub online_learning_rate: f64,
    /// Break metrics down by per-student interaction volume.
    pub groups: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            online_update: false,
            online_learning_rate: 0.001,
            groups: false,
        }
    }
}

impl EvalOptions {
    pub fn static_eval() -> Self {
        EvalOptions::default()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupReport {
    /// Upper bound (exclusive) on the group's interactions per student.
    pub max_interactions: usize,
    pub students: usize,
    pub prediction_count: usize,
    /// Absent when the group lacks both classes.
    pub auc: Option<f64>,
    pub acc: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub acc: f64,
    pub prediction_count: usize,
    pub groups: Option<Vec<GroupReport>>,
}

/// Scores every predictable position of the test windows.
pub fn evaluate(
    model: &Rkt<'_>,
    params: &RktParams,
    windows: &[Window],
    options: &EvalOptions,
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(TrainEvalError::EmptyTestSet);
    }
    // (student, score, label) per predicted position, in window order.
    let triples: Vec<(u64, f64, u8)> = if options.online_update {
        online_predictions(model, params, windows, options)?
    } else {
        let per_window: Vec<Result<Vec<(u64, f64, u8)>>> = windows
            .par_iter()
            .map(|w| {
                let fwd = model.forward_window(params, w)?;
                Ok(window_triples(w, &fwd.probs, &fwd.predict_mask))
            })
            .collect();
        let mut all = Vec::new();
        for r in per_window {
            all.extend(r?);
        }
        all
    };
    if triples.is_empty() {
        return Err(TrainEvalError::EmptyTestSet);
    }
    let scores: Vec<f64> = triples.iter().map(|t| t.1).collect();
    let labels: Vec<u8> = triples.iter().map(|t| t.2).collect();
    let report_auc = auc(&scores, &labels)?;
    let report_acc = accuracy(&scores, &labels, 0.5)?;

    let groups = if options.groups {
        Some(group_breakdown(windows, &triples))
    } else {
        None
    };
    Ok(EvalReport {
        auc: report_auc,
        acc: report_acc,
        prediction_count: triples.len(),
        groups,
    })
}

fn window_triples(w: &Window, probs: &[f64], predict_mask: &[bool]) -> Vec<(u64, f64, u8)> {
    predict_mask
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(t, _)| (w.student_id, probs[t], w.correct[t]))
        .collect()
}

/// One prediction, then one Adam step per revealed response, walking each
/// student's windows in order. Parameters are cloned; the caller's stay
/// untouched.
fn online_predictions(
    model: &Rkt<'_>,
    params: &RktParams,
    windows: &[Window],
    options: &EvalOptions,
) -> Result<Vec<(u64, f64, u8)>> {
    let mut live = params.clone();
    let adam_cfg = AdamConfig {
        learning_rate: options.online_learning_rate,
        ..AdamConfig::default()
    };
    let refs: Vec<&crate::numerics::Tensor> = live.named().iter().map(|(_, t)| *t).collect();
    let mut adam = AdamState::new(adam_cfg, &refs);
    drop(refs);

    let mut triples = Vec::new();
    for w in windows {
        let l = w.len();
        for t in 0..l {
            let predictable = w.mask[t] && t > w.first_valid();
            if !predictable {
                continue;
            }
            let fwd = model.forward_window(&live, w)?;
            triples.push((w.student_id, fwd.probs[t], w.correct[t]));

            // Reveal the response at t and take one step on it.
            let mut loss_positions = vec![false; l];
            loss_positions[t] = true;
            let mut g = Graph::new();
            let nodes = live.register(&mut g);
            let wg =
                model.build_window_with_loss(&mut g, &nodes, &live, w, false, 0, &loss_positions)?;
            if wg.prediction_count == 0 {
                continue;
            }
            g.backward(wg.loss_sum)?;
            let grads: Vec<crate::numerics::Tensor> = nodes
                .ordered()
                .iter()
                .map(|id| g.grad_tensor(*id))
                .collect();
            let grad_refs: Vec<&crate::numerics::Tensor> = grads.iter().collect();
            let mut tensors = live.tensors_mut();
            adam_step(&mut tensors, &grad_refs, &mut adam)?;
        }
    }
    Ok(triples)
}

fn group_breakdown(windows: &[Window], triples: &[(u64, f64, u8)]) -> Vec<GroupReport> {
    use std::collections::HashMap;
    let mut per_student: HashMap<u64, usize> = HashMap::new();
    for w in windows {
        *per_student.entry(w.student_id).or_insert(0) += w.valid_count();
    }
    let bucket_of = |student: u64| -> usize {
        let n = per_student.get(&student).copied().unwrap_or(0);
        GROUP_LIMITS
            .iter()
            .position(|&lim| n < lim)
            .unwrap_or(GROUP_LIMITS.len() - 1)
    };
    let mut reports = Vec::with_capacity(GROUP_LIMITS.len());
    for (b, &lim) in GROUP_LIMITS.iter().enumerate() {
        let scores: Vec<f64> = triples
            .iter()
            .filter(|(s, _, _)| bucket_of(*s) == b)
            .map(|(_, p, _)| *p)
            .collect();
        let labels: Vec<u8> = triples
            .iter()
            .filter(|(s, _, _)| bucket_of(*s) == b)
            .map(|(_, _, r)| *r)
            .collect();
        let students = per_student
            .iter()
            .filter(|(s, _)| bucket_of(**s) == b)
            .count();
        reports.push(GroupReport {
            max_interactions: lim,
            students,
            prediction_count: scores.len(),
            auc: auc(&scores, &labels).ok(),
            acc: accuracy(&scores, &labels, 0.5).ok(),
        });
    }
    reports
}
