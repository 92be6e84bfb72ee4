use ndarray::{s, Array3, ArrayView2};

use super::DataError;
use crate::Scalar;

/// Sliding-window samples for sequence models.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows<T> {
    /// `samples × window × features`.
    pub inputs: Array3<T>,
    pub labels: Vec<T>,
    /// Row (relative to the input matrix) each label was taken from.
    pub label_rows: Vec<usize>,
}

impl<T> Windows<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Builds samples `features[i .. i+window)` labelled with `labels[i + window + horizon - 1]`.
///
/// Yields `n - window - horizon + 1` samples. Apply per partition so that no
/// window straddles a partition boundary.
pub fn make_windows<T: Scalar>(
    features: ArrayView2<'_, T>,
    labels: &[T],
    window: usize,
    horizon: usize,
) -> Result<Windows<T>, DataError> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(DataError::Shape(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if window == 0 || horizon == 0 || n < window + horizon {
        return Err(DataError::WindowTooLarge { n, window, horizon });
    }
    let count = n - window - horizon + 1;
    let f = features.ncols();
    let mut inputs = Array3::zeros((count, window, f));
    let mut out_labels = Vec::with_capacity(count);
    let mut label_rows = Vec::with_capacity(count);
    for i in 0..count {
        inputs
            .slice_mut(s![i, .., ..])
            .assign(&features.slice(s![i..i + window, ..]));
        let row = i + window + horizon - 1;
        out_labels.push(labels[row]);
        label_rows.push(row);
    }
    Ok(Windows {
        inputs,
        labels: out_labels,
        label_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn five_rows_window_two() {
        let f = Array2::from_shape_fn((5, 5), |(i, j)| (10 * i + j) as f64);
        let labels: Vec<f64> = (0..5).map(|i| i as f64 * 100.0).collect();
        let w = make_windows(f.view(), &labels, 2, 1).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.inputs.slice(s![0, .., ..]), f.slice(s![0..2, ..]));
        assert_eq!(w.labels[0], 200.0);
        assert_eq!(w.label_rows, vec![2, 3, 4]);
    }

    #[test]
    fn training_block_sample_count() {
        let f = Array2::<f64>::zeros((7008, 5));
        let labels = vec![0.0; 7008];
        let w = make_windows(f.view(), &labels, 24, 1).unwrap();
        assert_eq!(w.len(), 6984);
    }

    #[test]
    fn window_not_smaller_than_rows() {
        let f = Array2::<f64>::zeros((4, 5));
        let labels = vec![0.0; 4];
        assert!(make_windows(f.view(), &labels, 4, 1).is_err());
        assert!(make_windows(f.view(), &labels, 5, 1).is_err());
        assert_eq!(make_windows(f.view(), &labels, 3, 1).unwrap().len(), 1);
    }

    #[test]
    fn longer_horizon_shifts_label() {
        let f = Array2::<f64>::zeros((6, 5));
        let labels: Vec<f64> = (0..6).map(f64::from).collect();
        let w = make_windows(f.view(), &labels, 2, 3).unwrap();
        assert_eq!(w.labels, vec![4.0, 5.0]);
    }
}
