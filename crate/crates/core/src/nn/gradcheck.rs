use ndarray::ArrayView3;

use super::{backward, forward_with, l2_penalty, mse_grad, mse_loss, DropoutMasks, ForwardOptions, LstmModel};
use super::{ModelParams, NnError, ParamGroup};
use crate::Scalar;

/// Denominator floor of [`relative_error`], so that two gradients that are both
/// numerically zero do not produce a large ratio.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-7;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor and flat index of the worst entry.
    pub worst: Option<(ParamGroup, usize)>,
    /// Worst relative error per tensor.
    pub per_group: Vec<(ParamGroup, f64)>,
    pub n_checked: usize,
}

fn objective<T: Scalar>(
    model: &LstmModel<T>,
    inputs: ArrayView3<T>,
    targets: &[T],
    masks: &DropoutMasks<T>,
) -> Result<T, NnError> {
    let opts = ForwardOptions {
        batch_stats: true,
        masks: Some(masks),
    };
    let (pred, _) = forward_with(model, inputs, opts)?;
    Ok(mse_loss(&pred, targets)? + l2_penalty(model))
}

/// Backpropagated gradients of `mse + l2` with batch statistics and fixed masks.
pub fn analytic_gradients<T: Scalar>(
    model: &LstmModel<T>,
    inputs: ArrayView3<T>,
    targets: &[T],
    masks: &DropoutMasks<T>,
) -> Result<ModelParams<T>, NnError> {
    let opts = ForwardOptions {
        batch_stats: true,
        masks: Some(masks),
    };
    let (pred, cache) = forward_with(model, inputs, opts)?;
    backward(model, &cache, &mse_grad(&pred, targets)?)
}

/// Central differences `(f(θ+h) − f(θ−h)) / 2h` for every parameter.
pub fn numeric_gradients<T: Scalar>(
    model: &LstmModel<T>,
    inputs: ArrayView3<T>,
    targets: &[T],
    masks: &DropoutMasks<T>,
    step: T,
) -> Result<ModelParams<T>, NnError> {
    let mut probe = model.clone();
    let mut out = ModelParams::zeros(&model.shape());
    let sizes: Vec<usize> = model.params.tensors().iter().map(|(_, t)| t.len()).collect();
    let two_h = step + step;
    for (k, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.params.tensors()[k].1[i];
            probe.params_mut().tensors_mut()[k].1[i] = orig + step;
            let plus = objective(&probe, inputs, targets, masks)?;
            probe.params_mut().tensors_mut()[k].1[i] = orig - step;
            let minus = objective(&probe, inputs, targets, masks)?;
            probe.params_mut().tensors_mut()[k].1[i] = orig;
            out.tensors_mut()[k].1[i] = (plus - minus) / two_h;
        }
    }
    Ok(out)
}

/// Entry-by-entry comparison with [`relative_error`].
pub fn compare_gradients<T: Scalar>(analytic: &ModelParams<T>, numeric: &ModelParams<T>) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        per_group: Vec::new(),
        n_checked: 0,
    };
    for ((group, a), (_, n)) in analytic.tensors().into_iter().zip(numeric.tensors()) {
        let mut worst = 0.0f64;
        for (i, (&x, &y)) in a.iter().zip(n).enumerate() {
            let e = relative_error(x.as_f64(), y.as_f64());
            report.n_checked += 1;
            if e > worst {
                worst = e;
            }
            if e > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(e);
                report.worst = Some((group, i));
            }
        }
        report.per_group.push((group, worst));
    }
    report
}

/// Compares [`analytic_gradients`] against [`numeric_gradients`].
pub fn gradient_check<T: Scalar>(
    model: &LstmModel<T>,
    inputs: ArrayView3<T>,
    targets: &[T],
    masks: &DropoutMasks<T>,
    step: T,
) -> Result<GradCheckReport, NnError> {
    let a = analytic_gradients(model, inputs, targets, masks)?;
    let n = numeric_gradients(model, inputs, targets, masks, step)?;
    Ok(compare_gradients(&a, &n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Hyper, ModelShape};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(shape: ModelShape, b: usize, w: usize, seed: u64) -> (LstmModel<f64>, Array3<f64>, Vec<f64>, DropoutMasks<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = LstmModel::<f64>::new(shape, Hyper::default(), &mut rng);
        {
            let p = m.params_mut();
            for l in 0..3 {
                p.bn_scale[l].mapv_inplace(|_| rng.random_range(0.5..1.5));
                p.bn_shift[l].mapv_inplace(|_| rng.random_range(-0.5..0.5));
                p.lstm[l].bias.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
            }
        }
        let x = Array3::from_shape_simple_fn((b, w, shape.n_features), || rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
        let masks = DropoutMasks::sample(&shape, 0.4, b, w, &mut rng);
        (m, x, y, masks)
    }

    #[test]
    fn tiny_three_layer_model() {
        let shape = ModelShape {
            n_features: 3,
            lstm_hidden: [3, 2, 3],
            dense_hidden: 2,
        };
        let (m, x, y, masks) = setup(shape, 3, 4, 1);
        let r = gradient_check(&m, x.view(), &y, &masks, 1e-5).unwrap();
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
        assert_eq!(r.n_checked, m.params().n_params());
        assert_eq!(r.per_group.len(), 19);
    }

    #[test]
    fn single_unit_single_step() {
        let shape = ModelShape {
            n_features: 2,
            lstm_hidden: [1, 1, 1],
            dense_hidden: 1,
        };
        let (m, x, y, _) = setup(shape, 4, 1, 2);
        let masks = DropoutMasks::ones(&shape, 4, 1);
        let r = gradient_check(&m, x.view(), &y, &masks, 1e-5).unwrap();
        assert!(r.max_rel_error <= 1e-7, "{r:?}");
    }

    #[test]
    fn corrupted_entry_is_detected() {
        let shape = ModelShape {
            n_features: 2,
            lstm_hidden: [2, 2, 2],
            dense_hidden: 2,
        };
        let (m, x, y, masks) = setup(shape, 3, 3, 3);
        let mut a = analytic_gradients(&m, x.view(), &y, &masks).unwrap();
        let n = numeric_gradients(&m, x.view(), &y, &masks, 1e-5).unwrap();
        assert!(compare_gradients(&a, &n).max_rel_error <= 1e-4);
        a.dense.weights[[1, 0]] *= 1.1;
        let r = compare_gradients(&a, &n);
        assert!(r.max_rel_error >= 0.05, "{r:?}");
        assert_eq!(r.worst, Some((ParamGroup::DenseWeights, 2)));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!(relative_error(1e-12, 2e-12) < 1e-4);
    }
}
