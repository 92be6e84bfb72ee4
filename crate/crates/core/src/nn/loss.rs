use super::{LstmModel, NnError};
use crate::Scalar;

/// `(1/B)·Σ(pred − target)²`.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T, NnError> {
    if pred.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if pred.len() != target.len() {
        return Err(NnError::Shape(format!("{} predictions, {} targets", pred.len(), target.len())));
    }
    let sum: T = pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok(sum / T::from_usize_lossy(pred.len()))
}

/// Gradient of [`mse_loss`] with respect to the predictions.
pub fn mse_grad<T: Scalar>(pred: &[T], target: &[T]) -> Result<Vec<T>, NnError> {
    if pred.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if pred.len() != target.len() {
        return Err(NnError::Shape(format!("{} predictions, {} targets", pred.len(), target.len())));
    }
    let k = T::lit(2.0) / T::from_usize_lossy(pred.len());
    Ok(pred.iter().zip(target).map(|(&p, &t)| k * (p - t)).collect())
}

/// `λ·Σ(W² + U²)` over the LSTM input and recurrent weights only.
pub fn l2_penalty<T: Scalar>(model: &LstmModel<T>) -> T {
    let lambda = T::lit(model.hyper.l2);
    let sq: T = model
        .params
        .lstm
        .iter()
        .map(|l| l.w_input.iter().chain(l.w_recurrent.iter()).map(|&w| w * w).sum::<T>())
        .sum();
    lambda * sq
}
