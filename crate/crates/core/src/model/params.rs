//! Trainable parameters and their checkpoint layout.

use std::path::Path;

use crate::numerics::{read_checkpoint, write_checkpoint, Graph, NodeId, Tensor};
use crate::rng::Rng;

use super::{ModelError, Result, RktConfig};

/// All trainable parameters of the network.
///
/// Per-student memory is parameterized in log space: `S_u = exp(s0 + s_u)`
/// keeps the memory strength positive. Students unseen at training time use
/// the global `s0` alone.
#[derive(Clone, Debug, PartialEq)]
pub struct RktParams {
    /// `d_w x d` map from SIF space into model space.
    pub exercise_proj: Tensor,
    /// `l x 2d` learned positional matrix.
    pub pos: Tensor,
    /// Query projection, `d x d` (`2d x d` when the query is the full
    /// interaction embedding).
    pub w_q: Tensor,
    /// Key projection, `2d x d`.
    pub w_k: Tensor,
    /// Value projection, `2d x d`.
    pub w_v: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    /// Prediction head, `d x 1` plus scalar bias.
    pub pred_w: Tensor,
    pub pred_b: Tensor,
    /// Global log-memory strength.
    pub s0: Tensor,
    /// Per-student log-memory offsets, `n_students x 1`.
    pub s_u: Tensor,
    /// Sorted student ids mapping to rows of `s_u`.
    student_ids: Vec<u64>,
}

impl RktParams {
    /// Fresh parameters, Normal(0, 0.01) initialized.
    ///
    /// Exceptions: layer-norm gains start at `1 + noise` so signals pass
    /// through the normalizations, and `s0` starts at `s0_base + noise` so
    /// the forget kernel opens up at the data's time scale (pass the log of
    /// a typical gap, e.g. `ln(median delta)`).
    pub fn init(config: &RktConfig, student_ids: &[u64], s0_base: f64, seed: u64) -> Self {
        let std = 0.01;
        let mut rng = Rng::new(seed);
        let d = config.d;
        let mut ids = student_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let n_students = ids.len().max(1);
        let mut gaussian = |shape: Vec<usize>| Tensor::randn(shape, std, &mut rng);
        let exercise_proj = gaussian(vec![config.d_w, d]);
        let pos = gaussian(vec![config.l, 2 * d]);
        let w_q = gaussian(vec![config.query_dim(), d]);
        let w_k = gaussian(vec![2 * d, d]);
        let w_v = gaussian(vec![2 * d, d]);
        let ffn_w1 = gaussian(vec![d, d]);
        let ffn_b1 = gaussian(vec![d]);
        let ffn_w2 = gaussian(vec![d, d]);
        let ffn_b2 = gaussian(vec![d]);
        let mut ln1_gain = gaussian(vec![d]);
        let ln1_bias = gaussian(vec![d]);
        let mut ln2_gain = gaussian(vec![d]);
        let ln2_bias = gaussian(vec![d]);
        for t in [&mut ln1_gain, &mut ln2_gain] {
            for v in t.data_mut() {
                *v += 1.0;
            }
        }
        let pred_w = gaussian(vec![d, 1]);
        let pred_b = gaussian(vec![1]);
        let mut s0 = gaussian(vec![1, 1]);
        s0.data_mut()[0] += s0_base;
        let s_u = gaussian(vec![n_students, 1]);
        RktParams {
            exercise_proj,
            pos,
            w_q,
            w_k,
            w_v,
            ffn_w1,
            ffn_b1,
            ffn_w2,
            ffn_b2,
            ln1_gain,
            ln1_bias,
            ln2_gain,
            ln2_bias,
            pred_w,
            pred_b,
            s0,
            s_u,
            student_ids: ids,
        }
    }

    /// All-zero parameters (testing: every prediction is exactly 0.5).
    pub fn zeros(config: &RktConfig, student_ids: &[u64]) -> Self {
        let mut p = Self::init(config, student_ids, 0.0, 0);
        let n = p.student_ids.len();
        p.exercise_proj = Tensor::zeros(vec![config.d_w, config.d]);
        p.pos = Tensor::zeros(vec![config.l, 2 * config.d]);
        p.w_q = Tensor::zeros(vec![config.query_dim(), config.d]);
        p.w_k = Tensor::zeros(vec![2 * config.d, config.d]);
        p.w_v = Tensor::zeros(vec![2 * config.d, config.d]);
        p.ffn_w1 = Tensor::zeros(vec![config.d, config.d]);
        p.ffn_b1 = Tensor::zeros(vec![config.d]);
        p.ffn_w2 = Tensor::zeros(vec![config.d, config.d]);
        p.ffn_b2 = Tensor::zeros(vec![config.d]);
        p.ln1_gain = Tensor::zeros(vec![config.d]);
        p.ln1_bias = Tensor::zeros(vec![config.d]);
        p.ln2_gain = Tensor::zeros(vec![config.d]);
        p.ln2_bias = Tensor::zeros(vec![config.d]);
        p.pred_w = Tensor::zeros(vec![config.d, 1]);
        p.pred_b = Tensor::zeros(vec![1]);
        p.s0 = Tensor::zeros(vec![1, 1]);
        p.s_u = Tensor::zeros(vec![n, 1]);
        p
    }

    pub fn student_ids(&self) -> &[u64] {
        &self.student_ids
    }

    /// Row of `s_u` for a known student.
    pub fn student_row(&self, student_id: u64) -> Option<usize> {
        self.student_ids.binary_search(&student_id).ok()
    }

    /// Memory strength `S_u` for a student (global-only when unseen).
    pub fn memory_strength(&self, student_id: u64) -> f64 {
        let mut s = self.s0.item();
        if let Some(row) = self.student_row(student_id) {
            s += self.s_u.data()[row];
        }
        s.exp()
    }

    /// Named views of the trainable tensors, in checkpoint order.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("exercise_proj", &self.exercise_proj),
            ("pos", &self.pos),
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("ffn_w1", &self.ffn_w1),
            ("ffn_b1", &self.ffn_b1),
            ("ffn_w2", &self.ffn_w2),
            ("ffn_b2", &self.ffn_b2),
            ("ln1_gain", &self.ln1_gain),
            ("ln1_bias", &self.ln1_bias),
            ("ln2_gain", &self.ln2_gain),
            ("ln2_bias", &self.ln2_bias),
            ("pred_w", &self.pred_w),
            ("pred_b", &self.pred_b),
            ("s0", &self.s0),
            ("s_u", &self.s_u),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.exercise_proj,
            &mut self.pos,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.pred_w,
            &mut self.pred_b,
            &mut self.s0,
            &mut self.s_u,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }

    /// Registers every trainable tensor as a graph leaf.
    pub fn register(&self, g: &mut Graph) -> ParamNodes {
        ParamNodes {
            exercise_proj: g.leaf(self.exercise_proj.clone()),
            pos: g.leaf(self.pos.clone()),
            w_q: g.leaf(self.w_q.clone()),
            w_k: g.leaf(self.w_k.clone()),
            w_v: g.leaf(self.w_v.clone()),
            ffn_w1: g.leaf(self.ffn_w1.clone()),
            ffn_b1: g.leaf(self.ffn_b1.clone()),
            ffn_w2: g.leaf(self.ffn_w2.clone()),
            ffn_b2: g.leaf(self.ffn_b2.clone()),
            ln1_gain: g.leaf(self.ln1_gain.clone()),
            ln1_bias: g.leaf(self.ln1_bias.clone()),
            ln2_gain: g.leaf(self.ln2_gain.clone()),
            ln2_bias: g.leaf(self.ln2_bias.clone()),
            pred_w: g.leaf(self.pred_w.clone()),
            pred_b: g.leaf(self.pred_b.clone()),
            s0: g.leaf(self.s0.clone()),
            s_u: g.leaf(self.s_u.clone()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut named: Vec<(String, Tensor)> = self
            .named()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        let ids: Vec<f64> = self.student_ids.iter().map(|&id| id as f64).collect();
        let n = ids.len();
        named.push((
            "student_index".to_string(),
            Tensor::new(vec![n, 1], ids).expect("sized by construction"),
        ));
        write_checkpoint(path, &named)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let named = read_checkpoint(path)?;
        let get = |name: &str| -> Result<Tensor> {
            named
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| ModelError::MissingParam(name.to_string()))
        };
        let student_ids: Vec<u64> = get("student_index")?
            .data()
            .iter()
            .map(|&v| v as u64)
            .collect();
        Ok(RktParams {
            exercise_proj: get("exercise_proj")?,
            pos: get("pos")?,
            w_q: get("w_q")?,
            w_k: get("w_k")?,
            w_v: get("w_v")?,
            ffn_w1: get("ffn_w1")?,
            ffn_b1: get("ffn_b1")?,
            ffn_w2: get("ffn_w2")?,
            ffn_b2: get("ffn_b2")?,
            ln1_gain: get("ln1_gain")?,
            ln1_bias: get("ln1_bias")?,
            ln2_gain: get("ln2_gain")?,
            ln2_bias: get("ln2_bias")?,
            pred_w: get("pred_w")?,
            pred_b: get("pred_b")?,
            s0: get("s0")?,
            s_u: get("s_u")?,
            student_ids,
        })
    }
}

/// Graph leaves for one registration of the parameters.
pub struct ParamNodes {
    pub exercise_proj: NodeId,
    pub pos: NodeId,
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
    pub ffn_w1: NodeId,
    pub ffn_b1: NodeId,
    pub ffn_w2: NodeId,
    pub ffn_b2: NodeId,
    pub ln1_gain: NodeId,
    pub ln1_bias: NodeId,
    pub ln2_gain: NodeId,
    pub ln2_bias: NodeId,
    pub pred_w: NodeId,
    pub pred_b: NodeId,
    pub s0: NodeId,
    pub s_u: NodeId,
}

impl ParamNodes {
    /// Node ids in the same order as [`RktParams::named`].
    pub fn ordered(&self) -> Vec<NodeId> {
        vec![
            self.exercise_proj,
            self.pos,
            self.w_q,
            self.w_k,
            self.w_v,
            self.ffn_w1,
            self.ffn_b1,
            self.ffn_w2,
            self.ffn_b2,
            self.ln1_gain,
            self.ln1_bias,
            self.ln2_gain,
            self.ln2_bias,
            self.pred_w,
            self.pred_b,
            self.s0,
            self.s_u,
        ]
    }
}
