use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Fractions of the series assigned to train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

/// Contiguous chronological partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitIndices {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }
}

// floor(r * n) robust to r*n landing a hair below an integer
fn floor_share(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Splits `n` rows into train / validation / test blocks in that order.
///
/// Train takes `floor(train * n)` rows. The rest is shared between validation and
/// test in proportion to their ratios, rounding validation down so any remainder
/// row goes to test.
pub fn split_dataset(n: usize, ratios: SplitRatios) -> Result<SplitIndices, DataError> {
    let r = [ratios.train, ratios.validation, ratios.test];
    if r.iter().any(|x| !x.is_finite() || *x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::SplitRatios(r));
    }
    if n < 10 {
        return Err(DataError::SplitTooSmall { n });
    }
    let n_train = floor_share(ratios.train, n);
    let rest = n.saturating_sub(n_train);
    let n_val = floor_share(ratios.validation / (ratios.validation + ratios.test), rest);
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(DataError::SplitTooSmall { n });
    }
    Ok(SplitIndices {
        train: 0..n_train,
        validation: n_train..n_train + n_val,
        test: n_train + n_val..n,
    })
}
