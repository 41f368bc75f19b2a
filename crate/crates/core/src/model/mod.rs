//! The relation-aware self-attention network.
//!
//! A single attention block over a student's windowed history. For each
//! target position the query is the projected exercise embedding, keys and
//! values are interaction embeddings of strictly earlier positions, and the
//! attention weights are fused with relation coefficients built from the
//! exercise-relation matrix and an exponential forgetting kernel.

mod coeffs;
mod forward;
mod params;

pub use coeffs::{
    attention_weights, exercise_rel_coeffs, ffn_block, forget_coeffs, fuse_attention,
    fuse_coeffs, weighted_context,
};
pub use forward::{
    full_model_gradcheck, plain_attention_forward, BatchGraph, Rkt, WindowForward, WindowGraph,
};
pub use params::{ParamNodes, RktParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("exercise id {id} out of range (universe has {universe} exercises)")]
    ExerciseOutOfRange { id: u32, universe: usize },
    #[error("no valid history positions")]
    NoHistory,
    #[error("clock violation: negative time delta {0}")]
    ClockViolation(f64),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("checkpoint is missing parameter {0:?}")]
    MissingParam(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Model hyperparameters and ablation switches.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RktConfig {
    /// Model dimension of the attention space.
    pub d: usize,
    /// Word/SIF embedding dimension feeding the exercise projection.
    pub d_w: usize,
    /// Window length.
    pub l: usize,
    /// Fusion weight: `beta = lambda * alpha + (1 - lambda) * R`.
    pub lambda: f64,
    pub dropout: f64,
    pub use_position: bool,
    pub use_forget: bool,
    pub use_exercise_relation: bool,
    /// Experimental: use the full interaction embedding as the query.
    pub query_uses_interaction: bool,
    /// Disables dropout everywhere when set.
    pub eval_mode: bool,
}

impl Default for RktConfig {
    fn default() -> Self {
        RktConfig {
            d: 64,
            d_w: crate::corpus::DEFAULT_WORD_DIM,
            l: crate::dataio::DEFAULT_WINDOW_LEN,
            lambda: 0.5,
            dropout: 0.1,
            use_position: true,
            use_forget: true,
            use_exercise_relation: true,
            query_uses_interaction: false,
            eval_mode: false,
        }
    }
}

impl RktConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || self.l < 2 {
            return Err(ModelError::BadConfig(format!(
                "d and l must be at least 2 (d={}, l={})",
                self.d, self.l
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ModelError::BadConfig(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::BadConfig(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Query dimension: `d`, or `2d` with `query_uses_interaction`.
    pub fn query_dim(&self) -> usize {
        if self.query_uses_interaction {
            2 * self.d
        } else {
            self.d
        }
    }

    /// True when the fused relation coefficients R participate at all.
    pub fn uses_relation_coeffs(&self) -> bool {
        self.use_forget || self.use_exercise_relation
    }

    /// Effective fusion weight; forced to 1 when R is ablated away.
    pub fn effective_lambda(&self) -> f64 {
        if self.uses_relation_coeffs() {
            self.lambda
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_matches_defaults() {
        let c = RktConfig::default();
        c.validate().unwrap();
        assert_eq!(c.d, 64);
        assert_eq!(c.l, 50);
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.dropout, 0.1);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = RktConfig::default();
        c.lambda = 1.5;
        assert!(c.validate().is_err());
        c = RktConfig::default();
        c.d = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn lambda_forced_to_one_when_relations_ablated() {
        let mut c = RktConfig {
            lambda: 0.5,
            ..RktConfig::default()
        };
        c.use_forget = false;
        c.use_exercise_relation = false;
        assert_eq!(c.effective_lambda(), 1.0);
        c.use_forget = true;
        assert_eq!(c.effective_lambda(), 0.5);
    }

    #[test]
    fn config_json_roundtrip() {
        let c = RktConfig {
            lambda: 0.25,
            use_position: false,
            ..RktConfig::default()
        };
        let json = serde_json::to_string(&c).unwrap();
        let back: RktConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
    }
}
