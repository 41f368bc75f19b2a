//! Adam optimizer with bias correction and decoupled L2 weight decay.

use super::{NumericsError, Result, Tensor};

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// First/second moment buffers plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Moment buffers sized to match `params`, all zero.
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Self {
        AdamState {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over a parameter list and matching gradients.
///
/// The decoupled decay term `lr * decay * w` is subtracted after the
/// moment-based update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState) -> Result<()> {
    assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
    assert_eq!(params.len(), state.first.len(), "state sized for different params");
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(NumericsError::NonFinite("adam_step gradient"));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c = &state.config;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);

    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[k];
        let v = &mut state.second[k];
        let pd = p.data_mut();
        let gd = g.data();
        for j in 0..pd.len() {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gd[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gd[j] * gd[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            pd[j] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            pd[j] -= c.learning_rate * c.weight_decay * pd[j];
        }
    }
    Ok(())
}
