//! Per-position relation coefficients and attention pieces as pure
//! functions over slices.
//!
//! These single-query forms mirror the batched graph forward and double as
//! an independent route for testing it; [`crate::traineval`] uses them for
//! attention-weight export.

use crate::numerics::Tensor;
use crate::relation::RelationMatrix;

use super::{ModelError, Result};

/// Relation-matrix row lookups `R^E_j = A[target, past_j]`.
///
/// Invalid (padded) positions get 0; the downstream masked softmax removes
/// them entirely.
pub fn exercise_rel_coeffs(
    relations: &RelationMatrix,
    target: u32,
    past: &[u32],
    valid: &[bool],
) -> Vec<f64> {
    past.iter()
        .zip(valid)
        .map(|(&j, &ok)| if ok { relations.value(target, j) } else { 0.0 })
        .collect()
}

/// Forget kernel `R^T_j = exp(-(t_target - t_j) / s_u)`.
pub fn forget_coeffs(past_times: &[f64], t_target: f64, s_u: f64) -> Result<Vec<f64>> {
    debug_assert!(s_u > 0.0);
    let mut out = Vec::with_capacity(past_times.len());
    for &t in past_times {
        let delta = t_target - t;
        if delta < 0.0 {
            return Err(ModelError::ClockViolation(delta));
        }
        out.push((-delta / s_u).exp());
    }
    Ok(out)
}

/// Fused relation coefficients `R = softmax(R^E + R^T)` over valid
/// positions. Either term may be ablated away by passing `None`.
pub fn fuse_coeffs(
    r_exercise: Option<&[f64]>,
    r_forget: Option<&[f64]>,
    mask: &[bool],
) -> Result<Vec<f64>> {
    if !mask.iter().any(|m| *m) {
        return Err(ModelError::NoHistory);
    }
    let n = mask.len();
    let mut pre = vec![0.0; n];
    if let Some(re) = r_exercise {
        for (p, v) in pre.iter_mut().zip(re) {
            *p += v;
        }
    }
    if let Some(rt) = r_forget {
        for (p, v) in pre.iter_mut().zip(rt) {
            *p += v;
        }
    }
    let mut out = vec![0.0; n];
    crate::numerics::softmax_row_masked(&pre, mask, &mut out);
    Ok(out)
}

/// Scaled dot-product attention for a single query:
/// `e_j = (q W^Q)(k_j W^K)^T / sqrt(d)`, masked softmax over `j`.
pub fn attention_weights(
    query: &[f64],
    keys: &Tensor,
    w_q: &Tensor,
    w_k: &Tensor,
    mask: &[bool],
) -> Result<Vec<f64>> {
    if !mask.iter().any(|m| *m) {
        return Err(ModelError::NoHistory);
    }
    let d = w_q.cols();
    let q_proj = vec_mat(query, w_q);
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let n = keys.rows();
    let mut scores = vec![0.0; n];
    for (j, score) in scores.iter_mut().enumerate() {
        let k_proj = vec_mat(keys.row(j), w_k);
        let mut e = 0.0;
        for (a, b) in q_proj.iter().zip(&k_proj) {
            e += a * b;
        }
        *score = e * inv_sqrt_d;
    }
    let mut out = vec![0.0; n];
    crate::numerics::softmax_row_masked(&scores, mask, &mut out);
    Ok(out)
}

/// Convex fusion `beta_j = lambda * alpha_j + (1 - lambda) * r_j`.
pub fn fuse_attention(alpha: &[f64], r: &[f64], lambda: f64) -> Vec<f64> {
    alpha
        .iter()
        .zip(r)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect()
}

/// Attended context `o = sum_j beta_j (x_j W^V)`.
pub fn weighted_context(beta: &[f64], keys: &Tensor, w_v: &Tensor) -> Vec<f64> {
    let d = w_v.cols();
    let mut out = vec![0.0; d];
    for (j, &b) in beta.iter().enumerate() {
        let v = vec_mat(keys.row(j), w_v);
        for (o, x) in out.iter_mut().zip(&v) {
            *o += b * x;
        }
    }
    out
}

/// Feed-forward sublayer with post-norm residual:
/// `layernorm(relu(h W1 + b1) W2 + b2 + h)`.
#[allow(clippy::too_many_arguments)]
pub fn ffn_block(
    h: &[f64],
    w1: &Tensor,
    b1: &Tensor,
    w2: &Tensor,
    b2: &Tensor,
    ln_gain: &Tensor,
    ln_bias: &Tensor,
) -> Vec<f64> {
    let mut hidden = vec_mat(h, w1);
    for (x, b) in hidden.iter_mut().zip(b1.data()) {
        *x = (*x + b).max(0.0);
    }
    let mut out = vec_mat(&hidden, w2);
    for ((x, b), res) in out.iter_mut().zip(b2.data()).zip(h) {
        *x = *x + b + res;
    }
    layer_norm_row(&out, ln_gain.data(), ln_bias.data())
}

pub(crate) fn vec_mat(v: &[f64], m: &Tensor) -> Vec<f64> {
    let (rows, cols) = (m.rows(), m.cols());
    debug_assert_eq!(v.len(), rows);
    let mut out = vec![0.0; cols];
    for (p, &x) in v.iter().enumerate() {
        let row = m.row(p);
        for j in 0..cols {
            out[j] += x * row[j];
        }
    }
    out
}

pub(crate) fn layer_norm_row(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let c = x.len() as f64;
    let mean = x.iter().sum::<f64>() / c;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
    let inv = 1.0 / (var + 1e-5).sqrt();
    x.iter()
        .enumerate()
        .map(|(j, v)| (v - mean) * inv * gain[j] + bias[j])
        .collect()
}
