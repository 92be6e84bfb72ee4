//! Forecast error metrics and absolute-percentage-error distributions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction and actual lengths differ: {pred} vs {actual}")]
    LengthMismatch { pred: usize, actual: usize },
    #[error("cannot score an empty series")]
    Empty,
    #[error("invalid metric option {0}")]
    Option(String),
}

/// Knobs for the percentage-error based outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    pub bin_width_pct: f64,
    /// Upper edge of the last regular bin; larger errors land in an overflow bin.
    pub histogram_max_pct: f64,
    pub tolerance_pct: f64,
    /// Percentage-error denominator floor as a fraction of the actual series range.
    pub floor_fraction: f64,
    /// Also histogram only the first N samples.
    pub histogram_subset: Option<usize>,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            bin_width_pct: 10.0,
            histogram_max_pct: 100.0,
            tolerance_pct: 20.0,
            floor_fraction: 0.01,
            histogram_subset: None,
        }
    }
}

impl MetricsOptions {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.bin_width_pct > 0.0 && self.bin_width_pct.is_finite()) {
            return Err(MetricsError::Option("bin_width_pct must be > 0".into()));
        }
        if !(self.histogram_max_pct >= self.bin_width_pct && self.histogram_max_pct.is_finite()) {
            return Err(MetricsError::Option("histogram_max_pct must be >= bin_width_pct".into()));
        }
        if !(self.tolerance_pct >= 0.0) {
            return Err(MetricsError::Option("tolerance_pct must be >= 0".into()));
        }
        if !(self.floor_fraction >= 0.0) {
            return Err(MetricsError::Option("floor_fraction must be >= 0".into()));
        }
        Ok(())
    }
}

/// One histogram bin `[low_pct, high_pct)`; `high_pct = None` is the overflow bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low_pct: f64,
    pub high_pct: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricsReport<T> {
    pub n: usize,
    pub mae: T,
    pub mse: T,
    pub rmse: T,
    /// `rmse / normalizer`; absent when the actual series is constant.
    pub nrmse: Option<T>,
    /// Range (max − min) of the actual series.
    pub normalizer: T,
    /// Denominator floor used for percentage errors.
    pub pct_floor: T,
    pub histogram: Vec<HistogramBin>,
    pub histogram_subset: Option<Vec<HistogramBin>>,
    pub tolerance_pct: f64,
    pub tolerance_fraction: T,
}

fn check<T>(pred: &[T], actual: &[T]) -> Result<(), MetricsError> {
    if pred.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            actual: actual.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn range<T: Scalar>(xs: &[T]) -> T {
    let (lo, hi) = xs
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// Denominator floor: `floor_fraction` of the actual series range.
pub fn pct_floor<T: Scalar>(actual: &[T], floor_fraction: f64) -> T {
    if actual.is_empty() {
        return T::zero();
    }
    T::lit(floor_fraction) * range(actual)
}

/// `100·|pred − actual| / max(|actual|, floor)` per sample. A zero denominator
/// yields 0 for an exact prediction and +∞ otherwise.
pub fn abs_pct_errors<T: Scalar>(pred: &[T], actual: &[T], floor: T) -> Result<Vec<T>, MetricsError> {
    if pred.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            actual: actual.len(),
        });
    }
    let hundred = T::lit(100.0);
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(&p, &a)| {
            let err = (p - a).abs();
            let denom = a.abs().max(floor);
            if denom > T::zero() {
                hundred * err / denom
            } else if err == T::zero() {
                T::zero()
            } else {
                T::infinity()
            }
        })
        .collect())
}

fn bin_pcts<T: Scalar>(pcts: &[T], bin_width: f64, max_pct: f64) -> Vec<HistogramBin> {
    let n_regular = (max_pct / bin_width).ceil() as usize;
    let mut bins: Vec<HistogramBin> = (0..n_regular)
        .map(|k| HistogramBin {
            low_pct: k as f64 * bin_width,
            high_pct: Some(((k + 1) as f64 * bin_width).min(max_pct)),
            count: 0,
        })
        .collect();
    bins.push(HistogramBin {
        low_pct: max_pct,
        high_pct: None,
        count: 0,
    });
    for &p in pcts {
        let p = p.as_f64();
        let idx = if p >= max_pct || p.is_nan() {
            n_regular
        } else {
            ((p / bin_width).floor() as usize).min(n_regular - 1)
        };
        bins[idx].count += 1;
    }
    bins
}

/// Histogram of absolute percentage errors in `bin_width_pct`-wide bins up to
/// `opts.histogram_max_pct`, plus an overflow bin. Counts sum to the sample count.
pub fn abs_error_histogram<T: Scalar>(
    pred: &[T],
    actual: &[T],
    opts: &MetricsOptions,
) -> Result<Vec<HistogramBin>, MetricsError> {
    opts.validate()?;
    let pcts = abs_pct_errors(pred, actual, pct_floor(actual, opts.floor_fraction))?;
    Ok(bin_pcts(&pcts, opts.bin_width_pct, opts.histogram_max_pct))
}

/// Fraction of samples whose absolute percentage error is at most `tol_pct`.
pub fn tolerance_fraction<T: Scalar>(
    pred: &[T],
    actual: &[T],
    tol_pct: f64,
    floor_fraction: f64,
) -> Result<T, MetricsError> {
    check(pred, actual)?;
    let pcts = abs_pct_errors(pred, actual, pct_floor(actual, floor_fraction))?;
    let tol = T::lit(tol_pct);
    let within = pcts.iter().filter(|&&p| p <= tol).count();
    Ok(T::from_usize_lossy(within) / T::from_usize_lossy(pcts.len()))
}

/// MAE, MSE, RMSE, range-normalized RMSE, the error histogram and the tolerance fraction.
pub fn compute_metrics<T: Scalar>(
    pred: &[T],
    actual: &[T],
    opts: &MetricsOptions,
) -> Result<MetricsReport<T>, MetricsError> {
    check(pred, actual)?;
    opts.validate()?;
    let n = T::from_usize_lossy(pred.len());
    let (abs_sum, sq_sum) = pred.iter().zip(actual).fold((T::zero(), T::zero()), |(a, s), (&p, &y)| {
        let e = p - y;
        (a + e.abs(), s + e * e)
    });
    let mae = abs_sum / n;
    let mse = sq_sum / n;
    let rmse = mse.sqrt();
    let normalizer = range(actual);
    let nrmse = (normalizer > T::zero()).then(|| rmse / normalizer);

    let floor = pct_floor(actual, opts.floor_fraction);
    let pcts = abs_pct_errors(pred, actual, floor)?;
    let histogram = bin_pcts(&pcts, opts.bin_width_pct, opts.histogram_max_pct);
    let histogram_subset = opts.histogram_subset.map(|k| {
        let k = k.min(pcts.len());
        bin_pcts(&pcts[..k], opts.bin_width_pct, opts.histogram_max_pct)
    });
    let tol = T::lit(opts.tolerance_pct);
    let within = pcts.iter().filter(|&&p| p <= tol).count();

    Ok(MetricsReport {
        n: pred.len(),
        mae,
        mse,
        rmse,
        nrmse,
        normalizer,
        pct_floor: floor,
        histogram,
        histogram_subset,
        tolerance_pct: opts.tolerance_pct,
        tolerance_fraction: T::from_usize_lossy(within) / n,
    })
}

/// Histogram as CSV with header `bin_low_pct,bin_high_pct,count`; the overflow bin's upper edge is `inf`.
pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_low_pct,bin_high_pct,count\n");
    for b in bins {
        match b.high_pct {
            Some(h) => writeln!(out, "{},{},{}", b.low_pct, h, b.count).unwrap(),
            None => writeln!(out, "{},inf,{}", b.low_pct, b.count).unwrap(),
        }
    }
    out
}
