//! Stacked-LSTM regression network written from scratch: three LSTM layers, each
//! followed by batch normalization and inverted dropout, then a linear dense
//! layer and a scalar output. Training is backpropagation through time with Adam
//! on mean-squared error plus an L2 penalty on the LSTM input and recurrent
//! weights.
//!
//! Sequences are handled time-major internally: a batch of `B` windows of length
//! `W` becomes a `(W·B) × features` matrix whose rows `t·B .. (t+1)·B` hold
//! timestep `t`.

mod adam;
mod cell;
mod gradcheck;
mod loss;
mod model;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use cell::{lstm_cell_forward, sigmoid, LstmLayerParams};
pub use gradcheck::{
    analytic_gradients, compare_gradients, gradient_check, numeric_gradients, relative_error, GradCheckReport,
    RELATIVE_ERROR_FLOOR,
};
pub use loss::{l2_penalty, mse_grad, mse_loss};
pub use model::{
    backward, forward, forward_with, predict, predict_chunked, to_time_major, DropoutMasks, ForwardCache,
    ForwardOptions, LayerCache, LstmModel, Mode, PREDICT_CHUNK,
};
pub use params::{DenseParams, ModelParams, ParamGroup};
pub use train::{train_epochs, train_epochs_with, SampleSet, TrainConfig, TrainRecord};

/// Number of stacked LSTM layers.
pub const LSTM_LAYERS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("cache does not belong to the current model parameters (model generation {model}, cache {cache})")]
    StaleCache { model: u64, cache: u64 },
    #[error("invalid hyperparameter {name} = {value}: {constraint}")]
    Hyper {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("training needs non-empty train and validation sets")]
    EmptyDataset,
}

/// Layer widths of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub n_features: usize,
    pub lstm_hidden: [usize; LSTM_LAYERS],
    pub dense_hidden: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            n_features: crate::data::N_FEATURES,
            lstm_hidden: [64; LSTM_LAYERS],
            dense_hidden: 32,
        }
    }
}

impl ModelShape {
    pub fn layer_inputs(&self, layer: usize) -> usize {
        if layer == 0 {
            self.n_features
        } else {
            self.lstm_hidden[layer - 1]
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.n_features == 0 || self.dense_hidden == 0 || self.lstm_hidden.contains(&0) {
            return Err(NnError::Shape(format!("all widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Regularization and normalization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    /// Dropout rate on each LSTM layer's output, in [0, 1).
    pub dropout: f64,
    /// L2 coefficient on LSTM input and recurrent weights.
    pub l2: f64,
    /// Running-statistics momentum for batch normalization.
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            dropout: 0.4,
            l2: 0.001,
            bn_momentum: 0.99,
            bn_eps: 1e-5,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Hyper {
                name: "dropout",
                value: self.dropout,
                constraint: "must lie in [0, 1)",
            });
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(NnError::Hyper {
                name: "l2",
                value: self.l2,
                constraint: "must be finite and >= 0",
            });
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(NnError::Hyper {
                name: "bn_momentum",
                value: self.bn_momentum,
                constraint: "must lie in [0, 1)",
            });
        }
        if !(self.bn_eps > 0.0 && self.bn_eps.is_finite()) {
            return Err(NnError::Hyper {
                name: "bn_eps",
                value: self.bn_eps,
                constraint: "must be finite and > 0",
            });
        }
        Ok(())
    }
}
