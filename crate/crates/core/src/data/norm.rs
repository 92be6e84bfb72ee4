use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::Scalar;

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> FeatureStats<T> {
    /// Statistics of a single series (used for labels).
    pub fn of_series(values: &[T]) -> Self {
        let (mean, std) = welford(values.iter().copied());
        Self {
            mean: vec![mean],
            std: vec![std],
        }
    }

    pub fn n_columns(&self) -> usize {
        self.mean.len()
    }

    /// z-score of `x` in column `col`; zero-variance columns map to 0.
    #[inline]
    pub fn normalize_value(&self, col: usize, x: T) -> T {
        let s = self.std[col];
        if s > T::zero() {
            (x - self.mean[col]) / s
        } else {
            T::zero()
        }
    }

    #[inline]
    pub fn denormalize_value(&self, col: usize, z: T) -> T {
        z * self.std[col] + self.mean[col]
    }
}

fn welford<T: Scalar>(values: impl Iterator<Item = T>) -> (T, T) {
    let mut n = 0usize;
    let mut mean = T::zero();
    let mut m2 = T::zero();
    for x in values {
        n += 1;
        let delta = x - mean;
        mean += delta / T::from_usize_lossy(n);
        m2 += delta * (x - mean);
    }
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let var = (m2 / T::from_usize_lossy(n)).max(T::zero());
    (mean, var.sqrt())
}

/// Column statistics over the rows in `train` only.
pub fn compute_stats<T: Scalar>(
    features: ArrayView2<'_, T>,
    train: Range<usize>,
) -> Result<FeatureStats<T>, DataError> {
    if train.is_empty() || train.end > features.nrows() {
        return Err(DataError::Shape(format!(
            "training range {train:?} invalid for {} rows",
            features.nrows()
        )));
    }
    let block = features.slice(ndarray::s![train, ..]);
    let (mean, std) = block
        .columns()
        .into_iter()
        .map(|col| welford(col.iter().copied()))
        .unzip();
    Ok(FeatureStats { mean, std })
}

/// Column-wise z-score. Columns with zero standard deviation become all zeros.
pub fn normalize<T: Scalar>(features: ArrayView2<'_, T>, stats: &FeatureStats<T>) -> Result<Array2<T>, DataError> {
    check_columns(features.ncols(), stats)?;
    let mut out = features.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| stats.normalize_value(j, x));
    }
    Ok(out)
}

/// Inverse of [`normalize`] for columns with positive standard deviation.
pub fn denormalize<T: Scalar>(z: ArrayView2<'_, T>, stats: &FeatureStats<T>) -> Result<Array2<T>, DataError> {
    check_columns(z.ncols(), stats)?;
    let mut out = z.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| stats.denormalize_value(j, x));
    }
    Ok(out)
}

fn check_columns<T>(ncols: usize, stats: &FeatureStats<T>) -> Result<(), DataError> {
    if ncols != stats.mean.len() || ncols != stats.std.len() {
        return Err(DataError::Shape(format!(
            "matrix has {ncols} columns, stats have {}",
            stats.mean.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_year, SynthParams};
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn constant_column() {
        let m = Array2::from_elem((4, 1), 5.0);
        let s = compute_stats(m.view(), 0..4).unwrap();
        assert_eq!(s.mean, vec![5.0]);
        assert_eq!(s.std, vec![0.0]);
        let z = normalize(m.view(), &s).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_two_three() {
        let m = array![[1.0], [2.0], [3.0]];
        let s = compute_stats(m.view(), 0..3).unwrap();
        assert_relative_eq!(s.mean[0], 2.0, epsilon = 1e-15);
        assert_relative_eq!(s.std[0], (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn one_std_above_mean_is_one() {
        let s = FeatureStats {
            mean: vec![3.0],
            std: vec![2.0],
        };
        assert_eq!(s.normalize_value(0, 5.0), 1.0);
    }

    #[test]
    fn uses_training_rows_only() {
        let m = array![[1.0], [3.0], [100.0]];
        let s = compute_stats(m.view(), 0..2).unwrap();
        assert_eq!(s.mean[0], 2.0);
    }

    #[test]
    fn synthetic_year_matches_two_pass() {
        let ds = generate_synthetic_year::<f64>(0, &SynthParams::default());
        let m = ds.feature_matrix();
        let s = compute_stats(m.view(), 0..7008).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = m.column(j).iter().take(7008).copied().collect();
            let (mean, std) = two_pass(&col);
            assert_relative_eq!(s.mean[j], mean, max_relative = 1e-9);
            assert_relative_eq!(s.std[j], std, max_relative = 1e-9);
        }
        let z = normalize(m.slice(ndarray::s![0..7008, ..]), &s).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = z.column(j).to_vec();
            let (mean, std) = two_pass(&col);
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            assert!((std - 1.0).abs() < 1e-9, "column {j} std {std}");
        }
    }

    proptest! {
        #[test]
        fn normalize_round_trip(rows in proptest::collection::vec(
            proptest::array::uniform3(-1e3f64..1e3), 2..40)) {
            let n = rows.len();
            let m = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
            let s = compute_stats(m.view(), 0..n).unwrap();
            prop_assume!(s.std.iter().all(|&x| x > 1e-6));
            let back = denormalize(normalize(m.view(), &s).unwrap().view(), &s).unwrap();
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
