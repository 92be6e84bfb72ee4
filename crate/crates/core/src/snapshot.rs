//! Model snapshots: a versioned JSON document holding everything needed to
//! reproduce a trained pipeline's predictions bit for bit.
//!
//! Floating-point tensors are stored as strings of concatenated 16-digit
//! lowercase hex IEEE-754 `f64` bit patterns (row-major), so no decimal
//! rounding happens on save or load. Layout:
//!
//! ```text
//! { "format": "netload-snapshot", "version": 1,
//!   "approach": "direct" | "indirect",
//!   "window": 24, "horizon": 1,
//!   "counts": { ... } | null,          // plant counts, indirect only
//!   "feature_stats": { "mean": T, "std": T },
//!   "models": [ { "name": "net_load" | "demand" | "wind" | "solar",
//!                 "label_stats": { "mean": T, "std": T },
//!                 "shape": { ... }, "hyper": { ... },
//!                 "tensors": { "<tensor name>": T, ... } } ] }
//! ```
//!
//! where every `T` is `{ "shape": [dims...], "bits": "<hex>" }`. Tensor names
//! are `lstm{l}.w_input`, `lstm{l}.w_recurrent`, `lstm{l}.bias`, `bn{l}.scale`,
//! `bn{l}.shift`, `bn{l}.running_mean`, `bn{l}.running_var`, `dense.weights`,
//! `dense.bias`, `output.weights` and `output.bias`.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FeatureStats;
use crate::forecast::{Approach, DirectModel, Forecaster, IndirectBundle, TrainedPipeline};
use crate::netload::PlantCounts;
use crate::nn::{Hyper, LstmModel, ModelParams, ModelShape, NnError, LSTM_LAYERS};
use crate::Scalar;

pub const FORMAT: &str = "netload-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a netload snapshot (format {0:?})")]
    Format(String),
    #[error("unsupported snapshot version {0} (this build reads version {VERSION})")]
    Version(u32),
    #[error("tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
    #[error("snapshot content: {0}")]
    Content(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A flat tensor in hex-bit encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HexTensor {
    pub shape: Vec<usize>,
    pub bits: String,
}

impl HexTensor {
    pub fn encode<T: Scalar>(shape: &[usize], values: &[T]) -> Self {
        let mut bits = String::with_capacity(16 * values.len());
        for v in values {
            bits.push_str(&format!("{:016x}", v.as_f64().to_bits()));
        }
        Self {
            shape: shape.to_vec(),
            bits,
        }
    }

    pub fn decode<T: Scalar>(&self, name: &str) -> Result<Vec<T>, SnapshotError> {
        let err = |reason: String| SnapshotError::Tensor {
            name: name.to_string(),
            reason,
        };
        let n: usize = self.shape.iter().product();
        if self.bits.len() != 16 * n || !self.bits.is_ascii() {
            return Err(err(format!("expected {} hex digits, found {}", 16 * n, self.bits.len())));
        }
        (0..n)
            .map(|i| {
                let chunk = &self.bits[16 * i..16 * (i + 1)];
                let b = u64::from_str_radix(chunk, 16).map_err(|e| err(format!("entry {i}: {e}")))?;
                T::from_f64(f64::from_bits(b)).ok_or_else(|| err(format!("entry {i} not representable")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsDoc {
    mean: HexTensor,
    std: HexTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    label_stats: StatsDoc,
    shape: ModelShape,
    hyper: Hyper,
    tensors: BTreeMap<String, HexTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    format: String,
    version: u32,
    approach: Approach,
    window: usize,
    horizon: usize,
    counts: Option<PlantCounts>,
    feature_stats: StatsDoc,
    models: Vec<ModelDoc>,
}

fn stats_doc<T: Scalar>(s: &FeatureStats<T>) -> StatsDoc {
    StatsDoc {
        mean: HexTensor::encode(&[s.mean.len()], &s.mean),
        std: HexTensor::encode(&[s.std.len()], &s.std),
    }
}

fn stats_from<T: Scalar>(d: &StatsDoc, what: &str) -> Result<FeatureStats<T>, SnapshotError> {
    let mean = d.mean.decode(&format!("{what}.mean"))?;
    let std = d.std.decode(&format!("{what}.std"))?;
    if mean.len() != std.len() {
        return Err(SnapshotError::Content(format!("{what}: mean and std lengths differ")));
    }
    Ok(FeatureStats { mean, std })
}

fn tensor_shapes(shape: &ModelShape) -> Vec<Vec<usize>> {
    let p = ModelParams::<f64>::zeros(shape);
    let mut out = Vec::new();
    for l in &p.lstm {
        out.push(l.w_input.shape().to_vec());
        out.push(l.w_recurrent.shape().to_vec());
        out.push(l.bias.shape().to_vec());
    }
    for l in 0..LSTM_LAYERS {
        out.push(p.bn_scale[l].shape().to_vec());
        out.push(p.bn_shift[l].shape().to_vec());
    }
    out.push(p.dense.weights.shape().to_vec());
    out.push(p.dense.bias.shape().to_vec());
    out.push(p.output.weights.shape().to_vec());
    out.push(p.output.bias.shape().to_vec());
    out
}

fn model_doc<T: Scalar>(name: &str, f: &Forecaster<T>) -> ModelDoc {
    let shape = f.model.shape();
    let mut tensors = BTreeMap::new();
    for ((group, values), dims) in f.model.params().tensors().into_iter().zip(tensor_shapes(&shape)) {
        tensors.insert(group.to_string(), HexTensor::encode(&dims, values));
    }
    for l in 0..LSTM_LAYERS {
        let m = &f.model.running_mean()[l];
        let v = &f.model.running_var()[l];
        tensors.insert(format!("bn{l}.running_mean"), HexTensor::encode(&[m.len()], m.as_slice().unwrap()));
        tensors.insert(format!("bn{l}.running_var"), HexTensor::encode(&[v.len()], v.as_slice().unwrap()));
    }
    ModelDoc {
        name: name.to_string(),
        label_stats: stats_doc(&f.label_stats),
        shape,
        hyper: f.model.hyper,
        tensors,
    }
}

fn take<'a>(doc: &'a ModelDoc, name: &str) -> Result<&'a HexTensor, SnapshotError> {
    doc.tensors.get(name).ok_or_else(|| SnapshotError::Tensor {
        name: format!("{}/{name}", doc.name),
        reason: "missing".into(),
    })
}

fn forecaster_from<T: Scalar>(doc: &ModelDoc) -> Result<Forecaster<T>, SnapshotError> {
    doc.shape.validate()?;
    let expected = tensor_shapes(&doc.shape);
    let mut params = ModelParams::<T>::zeros(&doc.shape);
    let n_param_tensors = params.tensors().len();
    if doc.tensors.len() != n_param_tensors + 2 * LSTM_LAYERS {
        return Err(SnapshotError::Content(format!(
            "model {} has {} tensors, expected {}",
            doc.name,
            doc.tensors.len(),
            n_param_tensors + 2 * LSTM_LAYERS
        )));
    }
    for ((group, slot), dims) in params.tensors_mut().into_iter().zip(expected) {
        let name = group.to_string();
        let t = take(doc, &name)?;
        if t.shape != dims {
            return Err(SnapshotError::Tensor {
                name,
                reason: format!("shape {:?}, expected {dims:?}", t.shape),
            });
        }
        slot.copy_from_slice(&t.decode::<T>(&name)?);
    }
    let mut running_mean = Vec::with_capacity(LSTM_LAYERS);
    let mut running_var = Vec::with_capacity(LSTM_LAYERS);
    for l in 0..LSTM_LAYERS {
        let m = format!("bn{l}.running_mean");
        let v = format!("bn{l}.running_var");
        running_mean.push(Array1::from(take(doc, &m)?.decode::<T>(&m)?));
        running_var.push(Array1::from(take(doc, &v)?.decode::<T>(&v)?));
    }
    let model = LstmModel::from_parts(params, running_mean, running_var, doc.hyper)?;
    let label_stats = stats_from(&doc.label_stats, &format!("{}.label_stats", doc.name))?;
    if label_stats.n_columns() != 1 {
        return Err(SnapshotError::Content(format!("{}: label statistics must have one column", doc.name)));
    }
    Ok(Forecaster { model, label_stats })
}

/// Serializes a trained pipeline.
pub fn to_json<T: Scalar>(pipeline: &TrainedPipeline<T>) -> String {
    let doc = match pipeline {
        TrainedPipeline::Direct(d) => SnapshotDoc {
            format: FORMAT.into(),
            version: VERSION,
            approach: Approach::Direct,
            window: d.window,
            horizon: d.horizon,
            counts: None,
            feature_stats: stats_doc(&d.feature_stats),
            models: vec![model_doc("net_load", &d.net_load)],
        },
        TrainedPipeline::Indirect(b) => SnapshotDoc {
            format: FORMAT.into(),
            version: VERSION,
            approach: Approach::Indirect,
            window: b.window,
            horizon: b.horizon,
            counts: Some(b.counts),
            feature_stats: stats_doc(&b.feature_stats),
            models: vec![
                model_doc("demand", &b.demand),
                model_doc("wind", &b.wind),
                model_doc("solar", &b.solar),
            ],
        },
    };
    serde_json::to_string_pretty(&doc).expect("snapshot documents always serialize")
}

/// Parses a snapshot written by [`to_json`].
pub fn from_json<T: Scalar>(text: &str) -> Result<TrainedPipeline<T>, SnapshotError> {
    // check the header first so that foreign JSON gets a clear message
    let head: serde_json::Value = serde_json::from_str(text)?;
    let format = head.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != FORMAT {
        return Err(SnapshotError::Format(format.to_string()));
    }
    if let Some(v) = head.get("version").and_then(|v| v.as_u64()) {
        if v != u64::from(VERSION) {
            return Err(SnapshotError::Version(v as u32));
        }
    }
    let doc: SnapshotDoc = serde_json::from_value(head)?;
    if doc.window == 0 || doc.horizon == 0 {
        return Err(SnapshotError::Content("window and horizon must be at least 1".into()));
    }
    let feature_stats = stats_from(&doc.feature_stats, "feature_stats")?;
    let find = |name: &str| -> Result<Forecaster<T>, SnapshotError> {
        let m = doc
            .models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| SnapshotError::Content(format!("model {name:?} missing")))?;
        let f = forecaster_from(m)?;
        if f.model.shape().n_features != feature_stats.n_columns() {
            return Err(SnapshotError::Content(format!(
                "model {name:?} expects {} features but the feature statistics have {}",
                f.model.shape().n_features,
                feature_stats.n_columns()
            )));
        }
        Ok(f)
    };
    match doc.approach {
        Approach::Direct => Ok(TrainedPipeline::Direct(DirectModel {
            window: doc.window,
            horizon: doc.horizon,
            net_load: find("net_load")?,
            feature_stats,
        })),
        Approach::Indirect => {
            let counts = doc
                .counts
                .ok_or_else(|| SnapshotError::Content("indirect snapshot without plant counts".into()))?;
            Ok(TrainedPipeline::Indirect(IndirectBundle {
                window: doc.window,
                horizon: doc.horizon,
                counts,
                demand: find("demand")?,
                wind: find("wind")?,
                solar: find("solar")?,
                feature_stats,
            }))
        }
    }
}
