use serde::{Deserialize, Serialize};

use super::{ModelParams, ModelShape, NnError};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let checks: [(&'static str, f64, bool, &'static str); 4] = [
            ("lr", self.lr, self.lr > 0.0 && self.lr.is_finite(), "must be finite and > 0"),
            ("beta1", self.beta1, (0.0..1.0).contains(&self.beta1), "must lie in [0, 1)"),
            ("beta2", self.beta2, (0.0..1.0).contains(&self.beta2), "must lie in [0, 1)"),
            ("eps", self.eps, self.eps > 0.0 && self.eps.is_finite(), "must be finite and > 0"),
        ];
        for (name, value, ok, constraint) in checks {
            if !ok {
                return Err(NnError::Hyper { name, value, constraint });
            }
        }
        Ok(())
    }
}

/// Adam moments for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: &ModelShape, config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: ModelParams::zeros(shape),
            v: ModelParams::zeros(shape),
        }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> Result<(), NnError> {
        let sizes = |p: &ModelParams<T>| p.tensors().iter().map(|(_, t)| t.len()).collect::<Vec<_>>();
        let expected = sizes(&self.m);
        if sizes(params) != expected || sizes(grads) != expected {
            return Err(NnError::Shape("parameters, gradients and moments differ in shape".into()));
        }
        self.t += 1;
        let grads = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((_, p), (_, g)), ((_, m), (_, v))) in params.tensors_mut().into_iter().zip(grads).zip(ms.into_iter().zip(vs)) {
            adam_update(p, g, m, v, self.t, &self.config);
        }
        Ok(())
    }
}

/// Adam update of a flat slice at step `t` (1-based).
pub fn adam_update<T: Scalar>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) {
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let one = T::one();
    let c1 = one - T::lit(cfg.beta1.powf(t as f64));
    let c2 = one - T::lit(cfg.beta2.powf(t as f64));
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_is_minus_lr() {
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = ([0.0f64], [0.0], [0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &cfg);
        assert!((p[0] + 0.001).abs() < 1e-10, "{}", p[0]);
        // constant gradient keeps the bias-corrected ratio at 1
        adam_update(&mut p, &[1.0], &mut m, &mut v, 2, &cfg);
        assert!((p[0] + 0.002).abs() < 1e-10);
    }

    #[test]
    fn two_steps_match_scalar_recurrence() {
        let cfg = AdamConfig::default();
        let grads = [0.37, -1.25];
        let mut p = [0.8];
        let (mut m, mut v) = ([0.0], [0.0]);
        for (t, g) in grads.iter().enumerate() {
            adam_update(&mut p, &[*g], &mut m, &mut v, t as u64 + 1, &cfg);
        }

        let (mut x, mut m1, mut v1) = (0.8f64, 0.0f64, 0.0f64);
        for (k, g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m1 = 0.9 * m1 + 0.1 * g;
            v1 = 0.999 * v1 + 0.001 * g * g;
            let mh = m1 / (1.0 - 0.9f64.powi(t));
            let vh = v1 / (1.0 - 0.999f64.powi(t));
            x -= 0.001 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p[0] - x).abs() <= 1e-12);
    }

    #[test]
    fn zero_gradients_leave_params() {
        let shape = ModelShape {
            n_features: 2,
            lstm_hidden: [3, 3, 3],
            dense_hidden: 2,
        };
        let mut params = ModelParams::<f64>::init(&shape, &mut ChaCha8Rng::seed_from_u64(0));
        let before = params.clone();
        let mut state = AdamState::new(&shape, AdamConfig::default());
        state.step(&mut params, &ModelParams::zeros(&shape)).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn shape_mismatch() {
        let a = ModelShape {
            n_features: 2,
            lstm_hidden: [3, 3, 3],
            dense_hidden: 2,
        };
        let b = ModelShape { dense_hidden: 4, ..a };
        let mut state = AdamState::<f64>::new(&a, AdamConfig::default());
        let mut p = ModelParams::zeros(&a);
        assert!(state.step(&mut p, &ModelParams::zeros(&b)).is_err());
        assert_eq!(state.t, 0);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        let bad = AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        };
        assert!(matches!(bad.validate(), Err(NnError::Hyper { name: "beta2", .. })));
    }
}
