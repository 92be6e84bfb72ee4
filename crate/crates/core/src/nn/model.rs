use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::{sigmoid, Hyper, LstmLayerParams, ModelParams, ModelShape, NnError, LSTM_LAYERS};
use crate::Scalar;

/// Samples per chunk in [`predict`].
pub const PREDICT_CHUNK: usize = 256;

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and freshly sampled dropout masks.
    Train,
    /// Running statistics, no dropout.
    Eval,
}

/// Stacked LSTM network plus its batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct LstmModel<T> {
    pub(crate) params: ModelParams<T>,
    pub(crate) running_mean: Vec<Array1<T>>,
    pub(crate) running_var: Vec<Array1<T>>,
    pub hyper: Hyper,
    generation: u64,
}

/// Equality ignores the cache generation: two models are equal when their
/// parameters, running statistics and hyperparameters are.
impl<T: PartialEq> PartialEq for LstmModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.running_mean == other.running_mean
            && self.running_var == other.running_var
            && self.hyper == other.hyper
    }
}

impl<T: Scalar> LstmModel<T> {
    pub fn new<R: Rng>(shape: ModelShape, hyper: Hyper, rng: &mut R) -> Self {
        Self::with_params(ModelParams::init(&shape, rng), hyper)
    }

    pub fn zeros(shape: ModelShape, hyper: Hyper) -> Self {
        Self::with_params(ModelParams::zeros(&shape), hyper)
    }

    fn with_params(params: ModelParams<T>, hyper: Hyper) -> Self {
        let shape = params.shape();
        Self {
            params,
            running_mean: shape.lstm_hidden.iter().map(|&h| Array1::zeros(h)).collect(),
            running_var: shape.lstm_hidden.iter().map(|&h| Array1::ones(h)).collect(),
            hyper,
            generation: next_generation(),
        }
    }

    /// Reassembles a model from stored parts, validating every shape.
    pub fn from_parts(
        params: ModelParams<T>,
        running_mean: Vec<Array1<T>>,
        running_var: Vec<Array1<T>>,
        hyper: Hyper,
    ) -> Result<Self, NnError> {
        params.check()?;
        hyper.validate()?;
        let shape = params.shape();
        if running_mean.len() != LSTM_LAYERS || running_var.len() != LSTM_LAYERS {
            return Err(NnError::Shape("running statistics need one entry per LSTM layer".into()));
        }
        for l in 0..LSTM_LAYERS {
            let h = shape.lstm_hidden[l];
            if running_mean[l].len() != h || running_var[l].len() != h {
                return Err(NnError::Shape(format!("running statistics of layer {l} must have length {h}")));
            }
            if running_var[l].iter().any(|&v| !(v > T::zero())) {
                return Err(NnError::Shape(format!("running variance of layer {l} must be positive")));
            }
        }
        let mut m = Self::with_params(params, hyper);
        m.running_mean = running_mean;
        m.running_var = running_var;
        Ok(m)
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    /// Mutable parameter access. Invalidates existing forward caches.
    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        self.generation = next_generation();
        &mut self.params
    }

    pub fn running_mean(&self) -> &[Array1<T>] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[Array1<T>] {
        &self.running_var
    }

    pub fn shape(&self) -> ModelShape {
        self.params.shape()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Folds the batch statistics of a train-mode pass into the running statistics.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) -> Result<(), NnError> {
        if !cache.batch_stats {
            return Err(NnError::Shape("cache was computed without batch statistics".into()));
        }
        if cache.layers.len() != LSTM_LAYERS {
            return Err(NnError::Shape("cache holds no layer statistics".into()));
        }
        let m = T::lit(self.hyper.bn_momentum);
        let k = T::one() - m;
        for (l, lc) in cache.layers.iter().enumerate() {
            if lc.batch_mean.len() != self.running_mean[l].len() {
                return Err(NnError::Shape(format!("layer {l} statistics have the wrong width")));
            }
            self.running_mean[l].zip_mut_with(&lc.batch_mean, |r, &b| *r = m * *r + k * b);
            self.running_var[l].zip_mut_with(&lc.batch_var, |r, &b| *r = m * *r + k * b);
        }
        Ok(())
    }
}

/// Per-layer inverted-dropout multipliers, each `(W·B) × H` in time-major order,
/// holding `0` or `1/(1−p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    pub layers: Vec<Array2<T>>,
}

impl<T: Scalar> DropoutMasks<T> {
    pub fn sample<R: Rng>(shape: &ModelShape, rate: f64, batch: usize, window: usize, rng: &mut R) -> Self {
        let keep = T::lit(1.0 / (1.0 - rate));
        let layers = shape
            .lstm_hidden
            .iter()
            .map(|&h| {
                Array2::from_shape_simple_fn((batch * window, h), || {
                    if rate > 0.0 && rng.random::<f64>() < rate {
                        T::zero()
                    } else {
                        keep
                    }
                })
            })
            .collect();
        Self { layers }
    }

    pub fn ones(shape: &ModelShape, batch: usize, window: usize) -> Self {
        Self {
            layers: shape.lstm_hidden.iter().map(|&h| Array2::ones((batch * window, h))).collect(),
        }
    }
}

/// How a forward pass normalizes and regularizes.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions<'a, T> {
    /// Batch-norm with statistics of the current batch instead of the running ones.
    pub batch_stats: bool,
    /// Dropout multipliers; `None` disables dropout.
    pub masks: Option<&'a DropoutMasks<T>>,
}

impl<T> ForwardOptions<'_, T> {
    pub fn eval() -> Self {
        Self {
            batch_stats: false,
            masks: None,
        }
    }
}

/// Intermediate values of one LSTM layer, all time-major with `W·B` rows.
#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    pub input: Array2<T>,
    /// Activated gates `i, f, g, o`.
    pub gates: Array2<T>,
    pub cell: Array2<T>,
    pub tanh_cell: Array2<T>,
    /// Raw LSTM output, also the recurrent state.
    pub hidden: Array2<T>,
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
    pub batch_mean: Array1<T>,
    pub batch_var: Array1<T>,
    /// Batch-norm output before dropout.
    pub bn_out: Array2<T>,
    pub mask: Option<Array2<T>>,
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub generation: u64,
    pub batch: usize,
    pub window: usize,
    pub batch_stats: bool,
    pub layers: Vec<LayerCache<T>>,
    /// Last-timestep output of the final LSTM layer, `B × H`.
    pub last: Array2<T>,
    /// Dense hidden activations, `B × D`.
    pub dense: Array2<T>,
    pub predictions: Vec<T>,
}

/// Reorders `B × W × F` windows into a `(W·B) × F` matrix with row `t·B + b`
/// holding sample `b` at timestep `t`.
pub fn to_time_major<T: Scalar>(inputs: ArrayView3<T>) -> Array2<T> {
    let (b, w, f) = inputs.dim();
    let mut out = Array2::zeros((w * b, f));
    for t in 0..w {
        out.slice_mut(s![t * b..(t + 1) * b, ..]).assign(&inputs.slice(s![.., t, ..]));
    }
    out
}

/// Gathers the samples `idx` of `inputs` straight into time-major layout.
pub(crate) fn gather_time_major<T: Scalar>(inputs: ArrayView3<T>, idx: &[usize]) -> Array2<T> {
    let (_, w, f) = inputs.dim();
    let b = idx.len();
    let mut out = Array2::zeros((w * b, f));
    for (k, &i) in idx.iter().enumerate() {
        for t in 0..w {
            out.row_mut(t * b + k).assign(&inputs.slice(s![i, t, ..]));
        }
    }
    out
}

/// `a · b` into a fresh row-major array.
fn matmul<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>) -> Array2<T> {
    let mut c = Array2::zeros((a.nrows(), b.ncols()));
    general_mat_mul(T::one(), &a, &b, T::zero(), &mut c);
    c
}

/// `tanh` through a single `exp`, several times cheaper than the libm routine.
/// Absolute error stays at rounding level; relative error grows only for |x| near 0.
#[inline]
fn tanh_via_exp<T: Scalar>(x: T) -> T {
    let one = T::one();
    one - (one + one) / ((x + x).exp() + one)
}

struct LstmOut<T> {
    gates: Array2<T>,
    cell: Array2<T>,
    tanh_cell: Array2<T>,
    hidden: Array2<T>,
}

fn lstm_layer_forward<T: Scalar>(p: &LstmLayerParams<T>, x: &Array2<T>, batch: usize, window: usize) -> LstmOut<T> {
    let h = p.hidden();
    let n = batch * window;
    let mut z = matmul(x.view(), p.w_input.t());
    z += &p.bias;
    let mut cell = Array2::<T>::zeros((n, h));
    let mut tanh_cell = Array2::<T>::zeros((n, h));
    let mut hidden = Array2::<T>::zeros((n, h));
    for t in 0..window {
        if t > 0 {
            let prev = hidden.slice(s![(t - 1) * batch..t * batch, ..]);
            let mut zt = z.slice_mut(s![t * batch..(t + 1) * batch, ..]);
            general_mat_mul(T::one(), &prev, &p.w_recurrent.t(), T::one(), &mut zt);
        }
        let zs = z.as_slice_mut().expect("standard layout");
        let cs = cell.as_slice_mut().expect("standard layout");
        let ts = tanh_cell.as_slice_mut().expect("standard layout");
        let hs = hidden.as_slice_mut().expect("standard layout");
        for r in t * batch..(t + 1) * batch {
            let zr = &mut zs[r * 4 * h..(r + 1) * 4 * h];
            let (c_prev, c_now) = cs.split_at_mut(r * h);
            let c_now = &mut c_now[..h];
            let c_prev = (t > 0).then(|| &c_prev[(r - batch) * h..(r - batch + 1) * h]);
            let tr = &mut ts[r * h..(r + 1) * h];
            let hr = &mut hs[r * h..(r + 1) * h];
            for j in 0..h {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[h + j]);
                let g = tanh_via_exp(zr[2 * h + j]);
                let o = sigmoid(zr[3 * h + j]);
                let c = match c_prev {
                    Some(cp) => f * cp[j] + i * g,
                    None => i * g,
                };
                let tc = tanh_via_exp(c);
                zr[j] = i;
                zr[h + j] = f;
                zr[2 * h + j] = g;
                zr[3 * h + j] = o;
                c_now[j] = c;
                tr[j] = tc;
                hr[j] = o * tc;
            }
        }
    }
    LstmOut {
        gates: z,
        cell,
        tanh_cell,
        hidden,
    }
}

fn check_inputs<T: Scalar>(model: &LstmModel<T>, inputs: &ArrayView3<T>) -> Result<(), NnError> {
    let (b, w, f) = inputs.dim();
    if b == 0 {
        return Err(NnError::EmptyBatch);
    }
    if w == 0 {
        return Err(NnError::Shape("window length must be at least 1".into()));
    }
    let nf = model.params.lstm[0].n_inputs();
    if f != nf {
        return Err(NnError::Shape(format!("inputs have {f} features, model expects {nf}")));
    }
    Ok(())
}

fn forward_time_major<T: Scalar>(
    model: &LstmModel<T>,
    x: Array2<T>,
    batch: usize,
    window: usize,
    opts: ForwardOptions<'_, T>,
    keep: bool,
) -> Result<ForwardCache<T>, NnError> {
    let shape = model.shape();
    if let Some(m) = opts.masks {
        let ok = m.layers.len() == LSTM_LAYERS
            && m.layers.iter().zip(shape.lstm_hidden).all(|(a, h)| a.dim() == (batch * window, h));
        if !ok {
            return Err(NnError::Shape("dropout masks do not match batch, window or layer widths".into()));
        }
    }
    let n = batch * window;
    let nt = T::from_usize_lossy(n);
    let eps = T::lit(model.hyper.bn_eps);
    let mut layers = Vec::with_capacity(if keep { LSTM_LAYERS } else { 0 });
    let mut input = x;
    for l in 0..LSTM_LAYERS {
        let out = lstm_layer_forward(&model.params.lstm[l], &input, batch, window);
        let h = out.hidden.ncols();
        let (batch_mean, batch_var) = if opts.batch_stats {
            let mean = out.hidden.sum_axis(Axis(0)) / nt;
            let mut var = vec![T::zero(); h];
            for row in out.hidden.as_slice().expect("standard layout").chunks_exact(h) {
                for j in 0..h {
                    let d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
            (mean, Array1::from(var) / nt)
        } else {
            (Array1::zeros(0), Array1::zeros(0))
        };
        let (mean, var) = if opts.batch_stats {
            (&batch_mean, &batch_var)
        } else {
            (&model.running_mean[l], &model.running_var[l])
        };
        let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
        let scale = &model.params.bn_scale[l];
        let shift = &model.params.bn_shift[l];
        let mut xhat = Array2::<T>::zeros((n, h));
        let mut bn_out = Array2::<T>::zeros((n, h));
        let mut next = Array2::<T>::zeros((n, h));
        {
            let hs = out.hidden.as_slice().expect("standard layout");
            let xs = xhat.as_slice_mut().expect("standard layout");
            let ys = bn_out.as_slice_mut().expect("standard layout");
            let ns = next.as_slice_mut().expect("standard layout");
            let ms = opts.masks.map(|m| m.layers[l].as_slice().expect("standard layout"));
            let (mean, inv_std, scale, shift) = (
                mean.as_slice().unwrap(),
                inv_std.as_slice().unwrap(),
                scale.as_slice().unwrap(),
                shift.as_slice().unwrap(),
            );
            for r in 0..n {
                let row = r * h..(r + 1) * h;
                let (hr, xr, yr, nr) = (&hs[row.clone()], &mut xs[row.clone()], &mut ys[row.clone()], &mut ns[row.clone()]);
                for j in 0..h {
                    let xh = (hr[j] - mean[j]) * inv_std[j];
                    let y = scale[j] * xh + shift[j];
                    xr[j] = xh;
                    yr[j] = y;
                    nr[j] = y;
                }
                if let Some(m) = ms {
                    for (v, &mk) in nr.iter_mut().zip(&m[row]) {
                        *v *= mk;
                    }
                }
            }
        }
        let mask = opts.masks.map(|m| m.layers[l].clone());
        if keep {
            layers.push(LayerCache {
                input,
                gates: out.gates,
                cell: out.cell,
                tanh_cell: out.tanh_cell,
                hidden: out.hidden,
                xhat,
                inv_std,
                batch_mean,
                batch_var,
                bn_out,
                mask,
            });
        }
        input = next;
    }
    let last = input.slice(s![n - batch.., ..]).to_owned();
    let mut dense = matmul(last.view(), model.params.dense.weights.t());
    dense += &model.params.dense.bias;
    let mut out = matmul(dense.view(), model.params.output.weights.t());
    out += &model.params.output.bias;
    Ok(ForwardCache {
        generation: model.generation,
        batch,
        window,
        batch_stats: opts.batch_stats,
        layers,
        last,
        dense,
        predictions: out.column(0).to_vec(),
    })
}

/// Forward pass over a `B × W × F` batch. Train mode draws dropout masks from `rng`.
pub fn forward<T: Scalar, R: Rng>(
    model: &LstmModel<T>,
    inputs: ArrayView3<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<T>, ForwardCache<T>), NnError> {
    match mode {
        Mode::Eval => forward_with(model, inputs, ForwardOptions::eval()),
        Mode::Train => {
            let (b, w, _) = inputs.dim();
            let masks = DropoutMasks::sample(&model.shape(), model.hyper.dropout, b, w, rng);
            forward_with(
                model,
                inputs,
                ForwardOptions {
                    batch_stats: true,
                    masks: Some(&masks),
                },
            )
        }
    }
}

/// Forward pass with explicit normalization mode and dropout masks.
pub fn forward_with<T: Scalar>(
    model: &LstmModel<T>,
    inputs: ArrayView3<T>,
    opts: ForwardOptions<'_, T>,
) -> Result<(Vec<T>, ForwardCache<T>), NnError> {
    check_inputs(model, &inputs)?;
    let (b, w, _) = inputs.dim();
    let cache = forward_time_major(model, to_time_major(inputs), b, w, opts, true)?;
    Ok((cache.predictions.clone(), cache))
}

/// Train-mode forward on pre-gathered time-major rows.
pub(crate) fn forward_train_time_major<T: Scalar>(
    model: &LstmModel<T>,
    x: Array2<T>,
    batch: usize,
    window: usize,
    masks: &DropoutMasks<T>,
) -> Result<ForwardCache<T>, NnError> {
    forward_time_major(
        model,
        x,
        batch,
        window,
        ForwardOptions {
            batch_stats: true,
            masks: Some(masks),
        },
        true,
    )
}

/// Eval-mode predictions, computed in chunks of [`PREDICT_CHUNK`] samples.
pub fn predict<T: Scalar>(model: &LstmModel<T>, inputs: ArrayView3<T>) -> Result<Vec<T>, NnError> {
    predict_chunked(model, inputs, PREDICT_CHUNK)
}

pub fn predict_chunked<T: Scalar>(model: &LstmModel<T>, inputs: ArrayView3<T>, chunk: usize) -> Result<Vec<T>, NnError> {
    check_inputs(model, &inputs)?;
    let chunk = chunk.max(1);
    let (b, w, _) = inputs.dim();
    let mut out = Vec::with_capacity(b);
    for start in (0..b).step_by(chunk) {
        let end = (start + chunk).min(b);
        let part = inputs.slice(s![start..end, .., ..]);
        let cache = forward_time_major(model, to_time_major(part), end - start, w, ForwardOptions::eval(), false)?;
        out.extend(cache.predictions);
    }
    Ok(out)
}

fn lstm_layer_backward<T: Scalar>(
    p: &LstmLayerParams<T>,
    lc: &LayerCache<T>,
    dh_ext: &Array2<T>,
    batch: usize,
    window: usize,
    need_dx: bool,
) -> (LstmLayerParams<T>, Option<Array2<T>>) {
    let h = p.hidden();
    let n = batch * window;
    let mut dz = Array2::<T>::zeros((n, 4 * h));
    let mut dh_next = Array2::<T>::zeros((batch, h));
    let mut dc_next = Array2::<T>::zeros((batch, h));
    let one = T::one();
    for t in (0..window).rev() {
        let dzs = dz.as_slice_mut().expect("standard layout");
        let gs = lc.gates.as_slice().expect("standard layout");
        let tcs = lc.tanh_cell.as_slice().expect("standard layout");
        let cs = lc.cell.as_slice().expect("standard layout");
        let dhe = dh_ext.as_slice().expect("standard layout");
        let dhn = dh_next.as_slice().expect("standard layout");
        let dcn = dc_next.as_slice_mut().expect("standard layout");
        for bi in 0..batch {
            let r = t * batch + bi;
            let gr = &gs[r * 4 * h..(r + 1) * 4 * h];
            let dzr = &mut dzs[r * 4 * h..(r + 1) * 4 * h];
            for j in 0..h {
                let (i, f, g, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                let tc = tcs[r * h + j];
                let c_prev = if t > 0 { cs[(r - batch) * h + j] } else { T::zero() };
                let dh = dhe[r * h + j] + dhn[bi * h + j];
                let dc = dcn[bi * h + j] + dh * o * (one - tc * tc);
                dzr[j] = dc * g * i * (one - i);
                dzr[h + j] = dc * c_prev * f * (one - f);
                dzr[2 * h + j] = dc * i * (one - g * g);
                dzr[3 * h + j] = dh * tc * o * (one - o);
                dcn[bi * h + j] = dc * f;
            }
        }
        if t > 0 {
            let dzt = dz.slice(s![t * batch..(t + 1) * batch, ..]);
            general_mat_mul(one, &dzt, &p.w_recurrent, T::zero(), &mut dh_next);
        }
    }
    let grads = LstmLayerParams {
        w_input: matmul(dz.t(), lc.input.view()),
        w_recurrent: if window > 1 {
            matmul(dz.slice(s![batch.., ..]).t(), lc.hidden.slice(s![..n - batch, ..]))
        } else {
            Array2::zeros((4 * h, h))
        },
        bias: dz.sum_axis(Axis(0)),
    };
    let dx = need_dx.then(|| matmul(dz.view(), p.w_input.view()));
    (grads, dx)
}

/// Gradients of `mse + l2_penalty` for every parameter, given `∂loss/∂prediction`.
pub fn backward<T: Scalar>(
    model: &LstmModel<T>,
    cache: &ForwardCache<T>,
    dpred: &[T],
) -> Result<ModelParams<T>, NnError> {
    if cache.generation != model.generation {
        return Err(NnError::StaleCache {
            model: model.generation,
            cache: cache.generation,
        });
    }
    if cache.layers.len() != LSTM_LAYERS {
        return Err(NnError::Shape("cache was produced without intermediate values".into()));
    }
    let (batch, window) = (cache.batch, cache.window);
    if dpred.len() != batch {
        return Err(NnError::Shape(format!("{} output gradients for a batch of {batch}", dpred.len())));
    }
    let p = &model.params;
    let mut grads = ModelParams::zeros(&model.shape());

    // head
    let dp = Array1::from(dpred.to_vec());
    let wo = p.output.weights.row(0);
    grads.output.weights.row_mut(0).assign(&cache.dense.t().dot(&dp));
    grads.output.bias[0] = dp.sum();
    let dd = Array2::from_shape_fn((batch, wo.len()), |(b, k)| dp[b] * wo[k]);
    grads.dense.weights = matmul(dd.t(), cache.last.view());
    grads.dense.bias = dd.sum_axis(Axis(0));
    let dlast = matmul(dd.view(), p.dense.weights.view());

    let n = batch * window;
    let mut da = Array2::<T>::zeros((n, dlast.ncols()));
    da.slice_mut(s![n - batch.., ..]).assign(&dlast);

    let nt = T::from_usize_lossy(n);
    for l in (0..LSTM_LAYERS).rev() {
        let lc = &cache.layers[l];
        let mut dy = da;
        if let Some(m) = &lc.mask {
            dy *= m;
        }
        let dshift = dy.sum_axis(Axis(0));
        let dscale = (&dy * &lc.xhat).sum_axis(Axis(0));
        let scale = &p.bn_scale[l];
        let h = scale.len();
        let mut dh = dy;
        {
            let ds = dh.as_slice_mut().expect("standard layout");
            let xs = lc.xhat.as_slice().expect("standard layout");
            let coef: Vec<T> = (0..h).map(|j| scale[j] * lc.inv_std[j]).collect();
            if cache.batch_stats {
                let coef: Vec<T> = coef.iter().map(|&c| c / nt).collect();
                for (dr, xr) in ds.chunks_exact_mut(h).zip(xs.chunks_exact(h)) {
                    for j in 0..h {
                        dr[j] = coef[j] * (nt * dr[j] - dshift[j] - xr[j] * dscale[j]);
                    }
                }
            } else {
                for dr in ds.chunks_exact_mut(h) {
                    for j in 0..h {
                        dr[j] *= coef[j];
                    }
                }
            }
        }
        grads.bn_scale[l] = dscale;
        grads.bn_shift[l] = dshift;
        let (g, dx) = lstm_layer_backward(&p.lstm[l], lc, &dh, batch, window, l > 0);
        grads.lstm[l] = g;
        da = dx.unwrap_or_else(|| Array2::zeros((0, 0)));
    }

    let two_lambda = T::lit(2.0 * model.hyper.l2);
    for (g, w) in grads.lstm.iter_mut().zip(&p.lstm) {
        g.w_input.scaled_add(two_lambda, &w.w_input);
        g.w_recurrent.scaled_add(two_lambda, &w.w_recurrent);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{lstm_cell_forward, mse_grad};
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_shape() -> ModelShape {
        ModelShape {
            n_features: 3,
            lstm_hidden: [4, 3, 2],
            dense_hidden: 3,
        }
    }

    fn random_inputs(b: usize, w: usize, f: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_simple_fn((b, w, f), || rng.random_range(-2.0..2.0))
    }

    fn randomize_bn(m: &mut LstmModel<f64>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = m.params_mut();
        for l in 0..LSTM_LAYERS {
            p.bn_scale[l].mapv_inplace(|_| rng.random_range(0.5..1.5));
            p.bn_shift[l].mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        p.dense.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        p.output.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }

    #[test]
    fn tanh_via_exp_accuracy() {
        for i in -4000..=4000 {
            let x = i as f64 * 0.01;
            assert!((tanh_via_exp(x) - x.tanh()).abs() <= 4e-16, "{x}");
        }
        assert_eq!(tanh_via_exp(800.0f64), 1.0);
        assert_eq!(tanh_via_exp(-800.0f64), -1.0);
    }

    #[test]
    fn time_major_layout() {
        let x = random_inputs(3, 4, 2, 0);
        let tm = to_time_major(x.view());
        for b in 0..3 {
            for t in 0..4 {
                for f in 0..2 {
                    assert_eq!(tm[[t * 3 + b, f]], x[[b, t, f]]);
                }
            }
        }
        assert_eq!(gather_time_major(x.view(), &[0, 1, 2]), tm);
        let g = gather_time_major(x.view(), &[2, 0]);
        assert_eq!(g[[5, 1]], x[[0, 2, 1]]);
    }

    #[test]
    fn eval_is_deterministic() {
        let m = LstmModel::<f64>::new(tiny_shape(), Hyper::default(), &mut ChaCha8Rng::seed_from_u64(1));
        let x = random_inputs(5, 6, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, _) = forward(&m, x.view(), Mode::Eval, &mut rng).unwrap();
        let (b, _) = forward(&m, x.view(), Mode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(predict(&m, x.view()).unwrap(), a);
    }

    #[test]
    fn no_dropout_running_stats_equals_eval() {
        let hyper = Hyper {
            dropout: 0.0,
            ..Hyper::default()
        };
        let mut m = LstmModel::<f64>::new(tiny_shape(), hyper, &mut ChaCha8Rng::seed_from_u64(3));
        m.running_mean[1].fill(0.2);
        m.running_var[2].fill(0.5);
        let x = random_inputs(4, 5, 3, 4);
        let masks = DropoutMasks::sample(&m.shape(), 0.0, 4, 5, &mut ChaCha8Rng::seed_from_u64(9));
        assert!(masks.layers.iter().all(|a| a.iter().all(|&v| v == 1.0)));
        let (train, _) = forward_with(
            &m,
            x.view(),
            ForwardOptions {
                batch_stats: false,
                masks: Some(&masks),
            },
        )
        .unwrap();
        let (eval, _) = forward_with(&m, x.view(), ForwardOptions::eval()).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn single_step_scalar_oracle() {
        let shape = ModelShape {
            n_features: 2,
            lstm_hidden: [2, 2, 2],
            dense_hidden: 2,
        };
        let mut m = LstmModel::<f64>::new(shape, Hyper::default(), &mut ChaCha8Rng::seed_from_u64(5));
        randomize_bn(&mut m, 6);
        let x = [0.4, -1.3];
        let inputs = Array3::from_shape_vec((1, 1, 2), x.to_vec()).unwrap();
        let (pred, _) = forward(&m, inputs.view(), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();

        // hand evaluation: each layer is one cell step from zero state, then
        // batch norm with the initial running stats (mean 0, variance 1)
        let p = m.params();
        let mut a = x.to_vec();
        for l in 0..3 {
            let (h, _) = lstm_cell_forward(&a, &[0.0; 2], &[0.0; 2], &p.lstm[l]).unwrap();
            let denom = (1.0f64 + 1e-5).sqrt();
            a = (0..2).map(|j| p.bn_scale[l][j] * h[j] / denom + p.bn_shift[l][j]).collect();
        }
        let d: Vec<f64> = (0..2)
            .map(|k| p.dense.bias[k] + p.dense.weights[[k, 0]] * a[0] + p.dense.weights[[k, 1]] * a[1])
            .collect();
        let y = p.output.bias[0] + p.output.weights[[0, 0]] * d[0] + p.output.weights[[0, 1]] * d[1];
        assert!((pred[0] - y).abs() <= 1e-12, "{} vs {y}", pred[0]);
    }

    #[test]
    fn batch_norm_train_statistics() {
        let hyper = Hyper {
            bn_eps: 1e-10,
            ..Hyper::default()
        };
        let mut m = LstmModel::<f64>::new(tiny_shape(), hyper, &mut ChaCha8Rng::seed_from_u64(7));
        randomize_bn(&mut m, 8);
        let x = random_inputs(8, 5, 3, 9);
        let (_, cache) = forward(&m, x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (l, lc) in cache.layers.iter().enumerate() {
            let n = lc.bn_out.nrows() as f64;
            for j in 0..lc.bn_out.ncols() {
                let col = lc.bn_out.column(j);
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let scale = m.params().bn_scale[l][j];
                assert!((mean - m.params().bn_shift[l][j]).abs() <= 1e-6);
                assert!((var - scale * scale).abs() <= 1e-4, "layer {l} unit {j}: {var} vs {}", scale * scale);
            }
        }
    }

    #[test]
    fn dropout_preserves_expectation() {
        let shape = ModelShape {
            n_features: 1,
            lstm_hidden: [50, 1, 1],
            dense_hidden: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let activations: Vec<f64> = (0..50).map(|j| 0.5 + j as f64 * 0.03).collect();
        let mut sums = vec![0.0; 50];
        let draws = 20_000;
        for _ in 0..draws {
            let m = DropoutMasks::<f64>::sample(&shape, 0.4, 1, 1, &mut rng);
            for j in 0..50 {
                sums[j] += activations[j] * m.layers[0][[0, j]];
            }
        }
        for j in 0..50 {
            let mean = sums[j] / draws as f64;
            assert!((mean - activations[j]).abs() <= 0.02 * activations[j], "unit {j}: {mean}");
        }
    }

    #[test]
    fn running_stats_update() {
        let mut m = LstmModel::<f64>::new(tiny_shape(), Hyper::default(), &mut ChaCha8Rng::seed_from_u64(1));
        let x = random_inputs(6, 4, 3, 2);
        let (_, cache) = forward(&m, x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        m.update_running_stats(&cache).unwrap();
        for l in 0..LSTM_LAYERS {
            for j in 0..m.running_mean[l].len() {
                let mean = 0.01 * cache.layers[l].batch_mean[j];
                let var = 0.99 + 0.01 * cache.layers[l].batch_var[j];
                assert!((m.running_mean[l][j] - mean).abs() < 1e-15);
                assert!((m.running_var[l][j] - var).abs() < 1e-15);
                assert!(m.running_var[l][j] > 0.0);
            }
        }
        let (_, eval_cache) = forward(&m, x.view(), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(m.update_running_stats(&eval_cache).is_err());
    }

    #[test]
    fn zero_loss_gradient_leaves_l2_term() {
        let m = LstmModel::<f64>::new(tiny_shape(), Hyper::default(), &mut ChaCha8Rng::seed_from_u64(4));
        let x = random_inputs(3, 4, 3, 5);
        let (_, cache) = forward(&m, x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let g = backward(&m, &cache, &[0.0; 3]).unwrap();
        for (gl, wl) in g.lstm.iter().zip(&m.params().lstm) {
            assert_eq!(gl.w_input, &wl.w_input * 0.002);
            assert_eq!(gl.w_recurrent, &wl.w_recurrent * 0.002);
            assert!(gl.bias.iter().all(|&v| v == 0.0));
        }
        for (_, t) in g.tensors().into_iter().skip(3 * LSTM_LAYERS) {
            assert!(t.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn duplicated_batch_same_gradients() {
        let m = LstmModel::<f64>::new(tiny_shape(), Hyper::default(), &mut ChaCha8Rng::seed_from_u64(13));
        let (b, w) = (3, 4);
        let x = random_inputs(b, w, 3, 14);
        let y = [0.3, -0.2, 1.1];
        let masks = DropoutMasks::<f64>::ones(&m.shape(), b, w);
        let opts = ForwardOptions {
            batch_stats: true,
            masks: Some(&masks),
        };
        let (p1, c1) = forward_with(&m, x.view(), opts).unwrap();
        let g1 = backward(&m, &c1, &mse_grad(&p1, &y).unwrap()).unwrap();

        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2: Vec<f64> = y.iter().chain(y.iter()).copied().collect();
        let masks2 = DropoutMasks::<f64>::ones(&m.shape(), 2 * b, w);
        let (p2, c2) = forward_with(
            &m,
            x2.view(),
            ForwardOptions {
                batch_stats: true,
                masks: Some(&masks2),
            },
        )
        .unwrap();
        let g2 = backward(&m, &c2, &mse_grad(&p2, &y2).unwrap()).unwrap();
        for ((group, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{group}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let mut m = LstmModel::<f64>::new(tiny_shape(), Hyper::default(), &mut ChaCha8Rng::seed_from_u64(4));
        let x = random_inputs(2, 3, 3, 5);
        let (_, cache) = forward(&m, x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        m.params_mut().output.bias[0] = 1.0;
        assert!(matches!(backward(&m, &cache, &[0.0; 2]), Err(NnError::StaleCache { .. })));
        let pred_only = predict(&m, x.view()).unwrap();
        assert_eq!(pred_only.len(), 2);
    }

    #[test]
    fn shape_errors() {
        let m = LstmModel::<f64>::zeros(tiny_shape(), Hyper::default());
        let bad = Array3::<f64>::zeros((2, 3, 4));
        assert!(predict(&m, bad.view()).is_err());
        let empty = Array3::<f64>::zeros((0, 3, 3));
        assert_eq!(predict(&m, empty.view()), Err(NnError::EmptyBatch));
        let x = random_inputs(2, 3, 3, 1);
        let masks = DropoutMasks::<f64>::ones(&m.shape(), 3, 3);
        let opts = ForwardOptions {
            batch_stats: true,
            masks: Some(&masks),
        };
        assert!(forward_with(&m, x.view(), opts).is_err());
    }

    #[test]
    fn chunking_is_bit_identical() {
        let m = LstmModel::<f64>::new(tiny_shape(), Hyper::default(), &mut ChaCha8Rng::seed_from_u64(21));
        let x = random_inputs(37, 5, 3, 22);
        let whole = predict_chunked(&m, x.view(), 1000).unwrap();
        for chunk in [1, 7, 16] {
            assert_eq!(predict_chunked(&m, x.view(), chunk).unwrap(), whole);
        }
    }
}
