use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::Scalar;

/// Weights of one LSTM layer. Gate blocks are stacked in the order
/// input `i`, forget `f`, candidate `g`, output `o`, each `H` rows tall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LstmLayerParams<T> {
    /// `4H × F`.
    pub w_input: Array2<T>,
    /// `4H × H`.
    pub w_recurrent: Array2<T>,
    /// `4H`.
    pub bias: Array1<T>,
}

impl<T: Scalar> LstmLayerParams<T> {
    pub fn zeros(n_inputs: usize, hidden: usize) -> Self {
        Self {
            w_input: Array2::zeros((4 * hidden, n_inputs)),
            w_recurrent: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.ncols()
    }

    pub fn n_inputs(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn check(&self) -> Result<(), NnError> {
        let h = self.hidden();
        if self.w_recurrent.nrows() != 4 * h || self.w_input.nrows() != 4 * h || self.bias.len() != 4 * h {
            return Err(NnError::Shape(format!(
                "LSTM layer with H = {h}: w_input {:?}, w_recurrent {:?}, bias {}",
                self.w_input.dim(),
                self.w_recurrent.dim(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// One LSTM step for a single sample:
/// `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')` with sigmoid `i, f, o` and tanh `g`.
pub fn lstm_cell_forward<T: Scalar>(
    x: &[T],
    h: &[T],
    c: &[T],
    params: &LstmLayerParams<T>,
) -> Result<(Vec<T>, Vec<T>), NnError> {
    params.check()?;
    let hid = params.hidden();
    if x.len() != params.n_inputs() || h.len() != hid || c.len() != hid {
        return Err(NnError::Shape(format!(
            "cell expects x {}, h {hid}, c {hid}; got {}, {}, {}",
            params.n_inputs(),
            x.len(),
            h.len(),
            c.len()
        )));
    }
    let pre = |row: usize| -> T {
        let mut z = params.bias[row];
        for (k, &xk) in x.iter().enumerate() {
            z += params.w_input[[row, k]] * xk;
        }
        for (k, &hk) in h.iter().enumerate() {
            z += params.w_recurrent[[row, k]] * hk;
        }
        z
    };
    let mut h_next = Vec::with_capacity(hid);
    let mut c_next = Vec::with_capacity(hid);
    for (j, &cp) in c.iter().enumerate() {
        let i = sigmoid(pre(j));
        let f = sigmoid(pre(hid + j));
        let g = pre(2 * hid + j).tanh();
        let o = sigmoid(pre(3 * hid + j));
        let cj = f * cp + i * g;
        c_next.push(cj);
        h_next.push(o * cj.tanh());
    }
    Ok((h_next, c_next))
}
