//! Batched forward pass over windows, as a recorded computation graph.

use crate::corpus::ExerciseEmbeddings;
use crate::dataio::Window;
use crate::numerics::{sigmoid, softmax_row_masked, Graph, NodeId, Tensor};
use crate::relation::RelationMatrix;
use crate::rng::Rng;

use super::coeffs::{layer_norm_row, vec_mat};
use super::{ModelError, ParamNodes, Result, RktConfig, RktParams};

/// The model bundled with its static inputs.
pub struct Rkt<'a> {
    pub config: &'a RktConfig,
    pub embeddings: &'a ExerciseEmbeddings,
    pub relations: &'a RelationMatrix,
}

/// Node handles for one window's sub-graph.
pub struct WindowGraph {
    pub probs: NodeId,
    pub logits: NodeId,
    pub alpha: NodeId,
    /// Equals `alpha` when relation coefficients are ablated away.
    pub beta: NodeId,
    pub r_fused: Option<NodeId>,
    pub r_forget: Option<NodeId>,
    /// Constant relation-matrix lookups, `l x l`.
    pub r_exercise: Option<Tensor>,
    pub loss_sum: NodeId,
    /// `l x l` attention mask: `[t][j]` true when both positions are valid
    /// and `j < t`.
    pub attn_mask: Vec<bool>,
    /// Positions that emit a prediction (valid, with at least one prior).
    pub predict_mask: Vec<bool>,
    pub prediction_count: usize,
}

/// A batch loss graph plus its per-window handles.
pub struct BatchGraph {
    pub loss: NodeId,
    pub windows: Vec<WindowGraph>,
    pub prediction_count: usize,
}

/// Eval-mode forward output for one window.
#[derive(Clone, Debug)]
pub struct WindowForward {
    pub student_id: u64,
    /// Probability per position; meaningful where `predict_mask` is true.
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
    pub predict_mask: Vec<bool>,
    pub attn_mask: Vec<bool>,
    /// `l x l` matrices, zero at masked cells.
    pub alpha: Tensor,
    pub beta: Tensor,
    pub r_exercise: Tensor,
    pub r_forget: Tensor,
}

impl<'a> Rkt<'a> {
    pub fn new(
        config: &'a RktConfig,
        embeddings: &'a ExerciseEmbeddings,
        relations: &'a RelationMatrix,
    ) -> Result<Self> {
        config.validate()?;
        if embeddings.dim() != config.d_w {
            return Err(ModelError::BadConfig(format!(
                "embedding dim {} != config d_w {}",
                embeddings.dim(),
                config.d_w
            )));
        }
        if relations.num_exercises() != embeddings.num_exercises() {
            return Err(ModelError::BadConfig(format!(
                "relation matrix covers {} exercises, embeddings {}",
                relations.num_exercises(),
                embeddings.num_exercises()
            )));
        }
        Ok(Rkt {
            config,
            embeddings,
            relations,
        })
    }

    pub fn num_exercises(&self) -> usize {
        self.embeddings.num_exercises()
    }

    /// Reserved padding id: one past the last real exercise id.
    pub fn padding_id(&self) -> u32 {
        self.num_exercises() as u32
    }

    /// Records the forward computation of one window onto `g`.
    ///
    /// Stored values at padded positions are never read: embeddings,
    /// correctness extensions, time deltas, and relation lookups are zeroed
    /// there by construction, and the masks keep them out of attention and
    /// loss.
    pub fn build_window(
        &self,
        g: &mut Graph,
        nodes: &ParamNodes,
        params: &RktParams,
        window: &Window,
        train: bool,
        dropout_seed: u64,
    ) -> Result<WindowGraph> {
        self.build_window_inner(g, nodes, params, window, train, dropout_seed, None)
    }

    /// Like [`Rkt::build_window`] but restricts the loss to an explicit set
    /// of positions (each must already be a predictable position).
    #[allow(clippy::too_many_arguments)]
    pub fn build_window_with_loss(
        &self,
        g: &mut Graph,
        nodes: &ParamNodes,
        params: &RktParams,
        window: &Window,
        train: bool,
        dropout_seed: u64,
        loss_positions: &[bool],
    ) -> Result<WindowGraph> {
        self.build_window_inner(
            g,
            nodes,
            params,
            window,
            train,
            dropout_seed,
            Some(loss_positions),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build_window_inner(
        &self,
        g: &mut Graph,
        nodes: &ParamNodes,
        params: &RktParams,
        window: &Window,
        train: bool,
        dropout_seed: u64,
        loss_override: Option<&[bool]>,
    ) -> Result<WindowGraph> {
        let cfg = self.config;
        let l = cfg.l;
        let d = cfg.d;
        if window.len() != l {
            return Err(ModelError::BadConfig(format!(
                "window length {} != configured l {}",
                window.len(),
                l
            )));
        }
        let universe = self.num_exercises();
        for (t, &e) in window.exercise_ids.iter().enumerate() {
            if window.mask[t] && e as usize >= universe {
                return Err(ModelError::ExerciseOutOfRange {
                    id: e,
                    universe,
                });
            }
        }

        // Constant inputs. Padded rows are all-zero regardless of stored values.
        let mut sif_rows = vec![0.0; l * cfg.d_w];
        let mut r_ext = vec![0.0; l * d];
        let mut labels = vec![0.0; l];
        for t in 0..l {
            if window.mask[t] {
                let row = self.embeddings.row(window.exercise_ids[t]);
                sif_rows[t * cfg.d_w..(t + 1) * cfg.d_w].copy_from_slice(row);
                let r = window.correct[t] as f64;
                for j in 0..d {
                    r_ext[t * d + j] = r;
                }
                labels[t] = r;
            }
        }
        let sif_const = g.leaf(Tensor::new(vec![l, cfg.d_w], sif_rows)?);
        let r_const = g.leaf(Tensor::new(vec![l, d], r_ext)?);

        // Interaction embeddings x = [E o r] (+ P), zeroed at padding.
        let projected = g.matmul(sif_const, nodes.exercise_proj)?;
        let mut x = g.concat(projected, r_const)?;
        if cfg.use_position {
            x = g.add(x, nodes.pos)?;
        }
        let mut row_mask = vec![0.0; l * 2 * d];
        for t in 0..l {
            if window.mask[t] {
                for j in 0..2 * d {
                    row_mask[t * 2 * d + j] = 1.0;
                }
            }
        }
        let row_mask_const = g.leaf(Tensor::new(vec![l, 2 * d], row_mask)?);
        x = g.mul(x, row_mask_const)?;
        let train = train && !cfg.eval_mode;
        let seeds = dropout_seeds(dropout_seed);
        x = g.dropout(x, cfg.dropout, train, seeds[0]);

        // Attention scores over strictly earlier valid positions.
        let keys = g.matmul(x, nodes.w_k)?;
        let values = g.matmul(x, nodes.w_v)?;
        let query_src = if cfg.query_uses_interaction { x } else { projected };
        let queries = g.matmul(query_src, nodes.w_q)?;
        let scores_raw = g.matmul_nt(queries, keys)?;
        let scores = g.scale(scores_raw, 1.0 / (d as f64).sqrt());

        let mut attn_mask = vec![false; l * l];
        for t in 0..l {
            if !window.mask[t] {
                continue;
            }
            for j in 0..t {
                attn_mask[t * l + j] = window.mask[j];
            }
        }
        let alpha = g.masked_softmax(scores, &attn_mask)?;

        // Relation coefficients R = softmax(R^E + R^T) over the same mask.
        let mut r_exercise = None;
        let mut r_forget = None;
        let mut r_fused = None;
        let beta = if cfg.uses_relation_coeffs() {
            let mut pre: Option<NodeId> = None;
            if cfg.use_exercise_relation {
                let mut re = vec![0.0; l * l];
                for t in 0..l {
                    for j in 0..t {
                        if attn_mask[t * l + j] {
                            re[t * l + j] = self
                                .relations
                                .value(window.exercise_ids[t], window.exercise_ids[j]);
                        }
                    }
                }
                let re_t = Tensor::new(vec![l, l], re)?;
                r_exercise = Some(re_t.clone());
                pre = Some(g.leaf(re_t));
            }
            if cfg.use_forget {
                let rt = self.forget_node(g, nodes, params, window, &attn_mask)?;
                r_forget = Some(rt);
                pre = Some(match pre {
                    Some(p) => g.add(p, rt)?,
                    None => rt,
                });
            }
            let fused = g.masked_softmax(pre.expect("at least one relation source"), &attn_mask)?;
            r_fused = Some(fused);
            let lam = cfg.effective_lambda();
            let sa = g.scale(alpha, lam);
            let sr = g.scale(fused, 1.0 - lam);
            g.add(sa, sr)?
        } else {
            alpha
        };
        let beta_dropped = g.dropout(beta, cfg.dropout, train, seeds[1]);

        // Context, post-norm residual blocks, prediction head.
        let context = g.matmul(beta_dropped, values)?;
        let res1 = g.add(context, projected)?;
        let h = g.layer_norm(res1, nodes.ln1_gain, nodes.ln1_bias)?;
        let f1 = g.matmul(h, nodes.ffn_w1)?;
        let f1b = g.add_row(f1, nodes.ffn_b1)?;
        let f1r = g.relu(f1b);
        let f2 = g.matmul(f1r, nodes.ffn_w2)?;
        let f2b = g.add_row(f2, nodes.ffn_b2)?;
        let f2d = g.dropout(f2b, cfg.dropout, train, seeds[2]);
        let res2 = g.add(f2d, h)?;
        let out = g.layer_norm(res2, nodes.ln2_gain, nodes.ln2_bias)?;
        let logits = {
            let z = g.matmul(out, nodes.pred_w)?;
            g.add_row(z, nodes.pred_b)?
        };
        let probs = g.sigmoid(logits);

        let first_valid = window.first_valid();
        let predict_mask: Vec<bool> = (0..l)
            .map(|t| window.mask[t] && t > first_valid)
            .collect();
        let loss_mask: Vec<bool> = match loss_override {
            Some(m) => m
                .iter()
                .zip(&predict_mask)
                .map(|(want, can)| *want && *can)
                .collect(),
            None => predict_mask.clone(),
        };
        let prediction_count = loss_mask.iter().filter(|m| **m).count();
        let loss_sum = g.masked_bce_sum(logits, &labels, &loss_mask)?;

        Ok(WindowGraph {
            probs,
            logits,
            alpha,
            beta,
            r_fused,
            r_forget,
            r_exercise,
            loss_sum,
            attn_mask,
            predict_mask,
            prediction_count,
        })
    }

    /// `R^T[t][j] = exp(-(ts_t - ts_j) * exp(-(s0 + s_u)))` at masked-in
    /// cells, with the log-memory read from the graph so gradients reach it.
    fn forget_node(
        &self,
        g: &mut Graph,
        nodes: &ParamNodes,
        params: &RktParams,
        window: &Window,
        attn_mask: &[bool],
    ) -> Result<NodeId> {
        let l = self.config.l;
        let mut neg_delta = vec![0.0; l * l];
        for t in 0..l {
            for j in 0..t {
                if attn_mask[t * l + j] {
                    let delta = window.timestamps[t] - window.timestamps[j];
                    if delta < 0.0 {
                        return Err(ModelError::ClockViolation(delta));
                    }
                    neg_delta[t * l + j] = -delta;
                }
            }
        }
        let neg_delta_const = g.leaf(Tensor::new(vec![l, l], neg_delta)?);
        let s_eff = match params.student_row(window.student_id) {
            Some(row) => {
                let su = g.embed_lookup(nodes.s_u, &[row])?;
                g.add(nodes.s0, su)?
            }
            None => nodes.s0,
        };
        let neg_s = g.scale(s_eff, -1.0);
        let inv_strength = g.exp(neg_s);
        let scaled = g.mul_scalar(neg_delta_const, inv_strength)?;
        Ok(g.exp(scaled))
    }

    /// Mean-over-predictions loss for a batch of windows.
    pub fn build_batch_loss(
        &self,
        g: &mut Graph,
        params: &RktParams,
        windows: &[&Window],
        train: bool,
        seed: u64,
    ) -> Result<BatchGraph> {
        let nodes = params.register(g);
        let mut graphs = Vec::with_capacity(windows.len());
        let mut total = 0usize;
        let root = Rng::new(seed);
        for (w, window) in windows.iter().enumerate() {
            let wseed = root.stream_u64(w as u64);
            let wg = self.build_window(g, &nodes, params, window, train, wseed)?;
            total += wg.prediction_count;
            graphs.push(wg);
        }
        if total == 0 {
            return Err(ModelError::NoHistory);
        }
        let mut acc: Option<NodeId> = None;
        for wg in &graphs {
            acc = Some(match acc {
                Some(a) => g.add(a, wg.loss_sum)?,
                None => wg.loss_sum,
            });
        }
        let loss = g.scale(acc.unwrap(), 1.0 / total as f64);
        Ok(BatchGraph {
            loss,
            windows: graphs,
            prediction_count: total,
        })
    }

    /// Evaluation-mode forward (no dropout) for one window.
    pub fn forward_window(&self, params: &RktParams, window: &Window) -> Result<WindowForward> {
        let mut g = Graph::new();
        let nodes = params.register(&mut g);
        let wg = self.build_window(&mut g, &nodes, params, window, false, 0)?;
        let l = self.config.l;
        let zeros = || Tensor::zeros(vec![l, l]);
        Ok(WindowForward {
            student_id: window.student_id,
            probs: g.value(wg.probs).data().to_vec(),
            labels: window.correct.clone(),
            predict_mask: wg.predict_mask.clone(),
            attn_mask: wg.attn_mask.clone(),
            alpha: g.value(wg.alpha).clone(),
            beta: g.value(wg.beta).clone(),
            r_exercise: wg.r_exercise.clone().unwrap_or_else(zeros),
            r_forget: wg
                .r_forget
                .map(|id| masked_only(g.value(id), &wg.attn_mask))
                .unwrap_or_else(zeros),
        })
    }
}

/// End-to-end gradient check of the full network on a deterministic toy
/// problem: two windows (one left-padded), all relation machinery active,
/// dropout off.
///
/// Returns the max relative error between analytic gradients and central
/// finite differences over `sample_coords` random coordinates.
pub fn full_model_gradcheck(
    config: &RktConfig,
    seed: u64,
    sample_coords: usize,
) -> Result<f64> {
    use crate::numerics::{gradcheck, GradCheckConfig, NumericsError};
    use crate::relation::{RelationMatrix, RelationMethod};

    let mut cfg = config.clone();
    cfg.dropout = 0.0;
    cfg.validate()?;
    let l = cfg.l;
    let num_exercises = 6;
    let mut rng = Rng::new(seed);
    let embeddings = ExerciseEmbeddings {
        matrix: Tensor::randn(vec![num_exercises, cfg.d_w], 1.0, &mut rng),
        sif_a: 1e-3,
    };
    let relations = RelationMatrix::from_entries(
        num_exercises,
        0.8,
        RelationMethod(4),
        [(1, 0, 1.2), (2, 0, 0.9), (2, 1, 1.5), (4, 3, 1.1)],
    );
    let model = Rkt::new(&cfg, &embeddings, &relations)?;

    let mut make_window = |student: u64, pad: usize| -> Window {
        let mut w = Window {
            student_id: student,
            exercise_ids: Vec::with_capacity(l),
            correct: Vec::with_capacity(l),
            timestamps: Vec::with_capacity(l),
            mask: Vec::with_capacity(l),
        };
        let mut t = 0.0;
        for k in 0..l {
            t += 30.0 + rng.next_f64() * 400.0;
            w.exercise_ids.push(rng.next_range(num_exercises) as u32);
            w.correct.push(rng.bernoulli(0.5) as u8);
            w.timestamps.push(t);
            w.mask.push(k >= pad);
        }
        w
    };
    let windows = [make_window(7, 0), make_window(8, 1)];

    // Parameters scaled up so ReLU kinks sit far from the probe step.
    let mut params = RktParams::init(&cfg, &[7, 8], 3.0, seed ^ 0xabcd);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v *= 30.0;
        }
    }

    let flat: Vec<Tensor> = params.named().iter().map(|(_, t)| (*t).clone()).collect();
    let rebuild = |ts: &[Tensor]| {
        let mut p = params.clone();
        for (dst, src) in p.tensors_mut().into_iter().zip(ts) {
            *dst = src.clone();
        }
        p
    };
    let loss_of = |p: &RktParams,
                   want_grads: bool|
     -> crate::numerics::Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let nodes = p.register(&mut g);
        let mut acc: Option<NodeId> = None;
        let mut total = 0usize;
        for w in &windows {
            let wg = model
                .build_window(&mut g, &nodes, p, w, false, 0)
                .map_err(|_| NumericsError::NonFinite("model forward"))?;
            total += wg.prediction_count;
            acc = Some(match acc {
                Some(a) => g.add(a, wg.loss_sum)?,
                None => wg.loss_sum,
            });
        }
        let loss = g.scale(acc.expect("windows present"), 1.0 / total as f64);
        let val = g.value(loss).item();
        let grads = if want_grads {
            g.backward(loss)?;
            nodes.ordered().iter().map(|id| g.grad_tensor(*id)).collect()
        } else {
            Vec::new()
        };
        Ok((val, grads))
    };
    let err = gradcheck(
        &flat,
        |ts| loss_of(&rebuild(ts), false).map(|(v, _)| v),
        |ts| loss_of(&rebuild(ts), true).map(|(_, g)| g),
        &GradCheckConfig {
            sample_coords,
            seed,
            ..GradCheckConfig::default()
        },
    )?;
    Ok(err)
}

/// Zeroes cells outside the mask (the forget node computes exp(0)=1 there).
fn masked_only(t: &Tensor, mask: &[bool]) -> Tensor {
    let data: Vec<f64> = t
        .data()
        .iter()
        .zip(mask)
        .map(|(v, m)| if *m { *v } else { 0.0 })
        .collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

fn dropout_seeds(seed: u64) -> [u64; 3] {
    let root = Rng::new(seed);
    [
        root.stream_u64(1),
        root.stream_u64(2),
        root.stream_u64(3),
    ]
}

/// Plain self-attention forward with no relation machinery at all, written
/// as straight loops: the reference for the ablated model path.
///
/// Mirrors the graph arithmetic operation for operation, so outputs of the
/// ablated configuration must match bit for bit.
pub fn plain_attention_forward(
    config: &RktConfig,
    embeddings: &ExerciseEmbeddings,
    params: &RktParams,
    window: &Window,
) -> Result<Vec<f64>> {
    let l = config.l;
    let d = config.d;
    let d_w = config.d_w;
    let universe = embeddings.num_exercises();
    for (t, &e) in window.exercise_ids.iter().enumerate() {
        if window.mask[t] && e as usize >= universe {
            return Err(ModelError::ExerciseOutOfRange { id: e, universe });
        }
    }

    // Projected exercise embeddings and interaction embeddings.
    let mut projected = vec![vec![0.0; d]; l];
    let mut x = vec![vec![0.0; 2 * d]; l];
    for t in 0..l {
        let mut sif = vec![0.0; d_w];
        if window.mask[t] {
            sif.copy_from_slice(embeddings.row(window.exercise_ids[t]));
        }
        projected[t] = vec_mat(&sif, &params.exercise_proj);
        let r = if window.mask[t] {
            window.correct[t] as f64
        } else {
            0.0
        };
        for j in 0..d {
            x[t][j] = projected[t][j];
            x[t][d + j] = r;
        }
        if config.use_position {
            let p = params.pos.row(t);
            for (v, pj) in x[t].iter_mut().zip(p) {
                *v += pj;
            }
        }
        let m = if window.mask[t] { 1.0 } else { 0.0 };
        for v in x[t].iter_mut() {
            *v *= m;
        }
    }

    let keys: Vec<Vec<f64>> = x.iter().map(|row| vec_mat(row, &params.w_k)).collect();
    let values: Vec<Vec<f64>> = x.iter().map(|row| vec_mat(row, &params.w_v)).collect();
    let queries: Vec<Vec<f64>> = if config.query_uses_interaction {
        x.iter().map(|row| vec_mat(row, &params.w_q)).collect()
    } else {
        projected.iter().map(|row| vec_mat(row, &params.w_q)).collect()
    };

    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut probs = vec![0.0; l];
    for t in 0..l {
        let mut scores = vec![0.0; l];
        let mut mask = vec![false; l];
        for j in 0..l {
            let mut s = 0.0;
            for p in 0..d {
                s += queries[t][p] * keys[j][p];
            }
            scores[j] = s * inv_sqrt_d;
            mask[j] = window.mask[t] && window.mask[j] && j < t;
        }
        let mut beta = vec![0.0; l];
        softmax_row_masked(&scores, &mask, &mut beta);

        let mut o = vec![0.0; d];
        for (j, b) in beta.iter().enumerate() {
            for p in 0..d {
                o[p] += b * values[j][p];
            }
        }
        let res1: Vec<f64> = o.iter().zip(&projected[t]).map(|(a, b)| a + b).collect();
        let h = layer_norm_row(&res1, params.ln1_gain.data(), params.ln1_bias.data());
        let mut f1 = vec_mat(&h, &params.ffn_w1);
        for (v, b) in f1.iter_mut().zip(params.ffn_b1.data()) {
            *v = (*v + b).max(0.0);
        }
        let mut f2 = vec_mat(&f1, &params.ffn_w2);
        for ((v, b), r) in f2.iter_mut().zip(params.ffn_b2.data()).zip(&h) {
            *v = *v + b + r;
        }
        let out = layer_norm_row(&f2, params.ln2_gain.data(), params.ln2_bias.data());
        let mut z = 0.0;
        for (v, w) in out.iter().zip(params.pred_w.data()) {
            z += v * w;
        }
        z += params.pred_b.item();
        probs[t] = sigmoid(z);
    }
    Ok(probs)
}
