use std::fmt;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LstmLayerParams, ModelShape, NnError, LSTM_LAYERS};
use crate::Scalar;

/// Fully connected layer `y = W·x + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DenseParams<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weights: Array2::zeros((n_out, n_in)),
            bias: Array1::zeros(n_out),
        }
    }
}

/// Every learnable tensor of the network. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelParams<T> {
    pub lstm: Vec<LstmLayerParams<T>>,
    pub bn_scale: Vec<Array1<T>>,
    pub bn_shift: Vec<Array1<T>>,
    /// Linear hidden dense layer.
    pub dense: DenseParams<T>,
    /// Scalar output layer.
    pub output: DenseParams<T>,
}

/// Identifies a learnable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    InputWeights(usize),
    RecurrentWeights(usize),
    LstmBias(usize),
    BnScale(usize),
    BnShift(usize),
    DenseWeights,
    DenseBias,
    OutputWeights,
    OutputBias,
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InputWeights(l) => write!(f, "lstm{l}.w_input"),
            Self::RecurrentWeights(l) => write!(f, "lstm{l}.w_recurrent"),
            Self::LstmBias(l) => write!(f, "lstm{l}.bias"),
            Self::BnScale(l) => write!(f, "bn{l}.scale"),
            Self::BnShift(l) => write!(f, "bn{l}.shift"),
            Self::DenseWeights => f.write_str("dense.weights"),
            Self::DenseBias => f.write_str("dense.bias"),
            Self::OutputWeights => f.write_str("output.weights"),
            Self::OutputBias => f.write_str("output.bias"),
        }
    }
}

fn glorot<T: Scalar, R: Rng>(m: &mut Array2<T>, fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    m.mapv_inplace(|_| T::lit(rng.random_range(-limit..=limit)));
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(shape: &ModelShape) -> Self {
        let lstm = (0..LSTM_LAYERS)
            .map(|l| LstmLayerParams::zeros(shape.layer_inputs(l), shape.lstm_hidden[l]))
            .collect();
        Self {
            lstm,
            bn_scale: shape.lstm_hidden.iter().map(|&h| Array1::zeros(h)).collect(),
            bn_shift: shape.lstm_hidden.iter().map(|&h| Array1::zeros(h)).collect(),
            dense: DenseParams::zeros(shape.lstm_hidden[LSTM_LAYERS - 1], shape.dense_hidden),
            output: DenseParams::zeros(shape.dense_hidden, 1),
        }
    }

    /// Glorot-uniform weights, forget-gate bias 1, other biases 0, unit batch-norm scale.
    pub fn init<R: Rng>(shape: &ModelShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        for (l, layer) in p.lstm.iter_mut().enumerate() {
            let h = shape.lstm_hidden[l];
            let f = shape.layer_inputs(l);
            glorot(&mut layer.w_input, f, 4 * h, rng);
            glorot(&mut layer.w_recurrent, h, 4 * h, rng);
            layer.bias.slice_mut(ndarray::s![h..2 * h]).fill(T::one());
        }
        for s in &mut p.bn_scale {
            s.fill(T::one());
        }
        glorot(&mut p.dense.weights, shape.lstm_hidden[LSTM_LAYERS - 1], shape.dense_hidden, rng);
        glorot(&mut p.output.weights, shape.dense_hidden, 1, rng);
        p
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            n_features: self.lstm[0].n_inputs(),
            lstm_hidden: [self.lstm[0].hidden(), self.lstm[1].hidden(), self.lstm[2].hidden()],
            dense_hidden: self.dense.weights.nrows(),
        }
    }

    /// Checks every tensor against the shape implied by the LSTM layers.
    pub fn check(&self) -> Result<(), NnError> {
        if self.lstm.len() != LSTM_LAYERS || self.bn_scale.len() != LSTM_LAYERS || self.bn_shift.len() != LSTM_LAYERS {
            return Err(NnError::Shape(format!("expected {LSTM_LAYERS} LSTM layers")));
        }
        let reference = Self::zeros(&self.shape());
        for ((g, a), (_, b)) in self.tensors().into_iter().zip(reference.tensors()) {
            if a.len() != b.len() {
                return Err(NnError::Shape(format!("{g}: {} values, expected {}", a.len(), b.len())));
            }
        }
        for l in 1..LSTM_LAYERS {
            if self.lstm[l].n_inputs() != self.lstm[l - 1].hidden() {
                return Err(NnError::Shape(format!("lstm{l} input width does not match lstm{}", l - 1)));
            }
        }
        if self.dense.weights.ncols() != self.lstm[LSTM_LAYERS - 1].hidden() || self.output.weights.nrows() != 1 {
            return Err(NnError::Shape("dense head does not match LSTM output".into()));
        }
        Ok(())
    }

    /// All tensors as flat slices in a fixed order.
    pub fn tensors(&self) -> Vec<(ParamGroup, &[T])> {
        let mut out = Vec::with_capacity(5 * LSTM_LAYERS + 4);
        for (l, layer) in self.lstm.iter().enumerate() {
            out.push((ParamGroup::InputWeights(l), layer.w_input.as_slice().unwrap()));
            out.push((ParamGroup::RecurrentWeights(l), layer.w_recurrent.as_slice().unwrap()));
            out.push((ParamGroup::LstmBias(l), layer.bias.as_slice().unwrap()));
        }
        for l in 0..LSTM_LAYERS {
            out.push((ParamGroup::BnScale(l), self.bn_scale[l].as_slice().unwrap()));
            out.push((ParamGroup::BnShift(l), self.bn_shift[l].as_slice().unwrap()));
        }
        out.push((ParamGroup::DenseWeights, self.dense.weights.as_slice().unwrap()));
        out.push((ParamGroup::DenseBias, self.dense.bias.as_slice().unwrap()));
        out.push((ParamGroup::OutputWeights, self.output.weights.as_slice().unwrap()));
        out.push((ParamGroup::OutputBias, self.output.bias.as_slice().unwrap()));
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut [T])> {
        let mut out = Vec::with_capacity(5 * LSTM_LAYERS + 4);
        for (l, layer) in self.lstm.iter_mut().enumerate() {
            out.push((ParamGroup::InputWeights(l), layer.w_input.as_slice_mut().unwrap()));
            out.push((ParamGroup::RecurrentWeights(l), layer.w_recurrent.as_slice_mut().unwrap()));
            out.push((ParamGroup::LstmBias(l), layer.bias.as_slice_mut().unwrap()));
        }
        for (l, (scale, shift)) in self.bn_scale.iter_mut().zip(self.bn_shift.iter_mut()).enumerate() {
            out.push((ParamGroup::BnScale(l), scale.as_slice_mut().unwrap()));
            out.push((ParamGroup::BnShift(l), shift.as_slice_mut().unwrap()));
        }
        out.push((ParamGroup::DenseWeights, self.dense.weights.as_slice_mut().unwrap()));
        out.push((ParamGroup::DenseBias, self.dense.bias.as_slice_mut().unwrap()));
        out.push((ParamGroup::OutputWeights, self.output.weights.as_slice_mut().unwrap()));
        out.push((ParamGroup::OutputBias, self.output.bias.as_slice_mut().unwrap()));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}
