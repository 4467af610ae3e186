//! Dense, 1-D convolution and 1-D transposed convolution layers.
//!
//! Sequence tensors are stored as `(batch * n, channels)` matrices, one row per
//! position; dense tensors as `(batch, features)`. Both layouts share the same
//! memory order so a flatten is just a reshape.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Dense,
    /// Stride 1, zero "same" padding. Weight `(inputs * kernel, outputs)`,
    /// row `i * kernel + k` multiplies input channel `i` at offset `k - kernel / 2`.
    Conv,
    /// Adjoint of [`LayerKind::Conv`]. Weight `(inputs, outputs * kernel)`,
    /// column `o * kernel + k` feeds output channel `o` at offset `k - kernel / 2`.
    ConvTranspose,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    kind: LayerKind,
    inputs: usize,
    outputs: usize,
    kernel: usize,
    relu: bool,
    weight: Array2<f64>,
    bias: Array1<f64>,
    #[serde(skip)]
    grad_w: Option<Array2<f64>>,
    #[serde(skip)]
    grad_b: Option<Array1<f64>>,
    #[serde(skip)]
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    /// Input (dense, transposed conv) or its im2col expansion (conv).
    input: Array2<f64>,
    output: Array2<f64>,
    batch: usize,
}

/// Equality of architecture and parameters; gradients and caches are ignored.
impl PartialEq for Layer {
    fn eq(&self, o: &Self) -> bool {
        self.kind == o.kind
            && self.inputs == o.inputs
            && self.outputs == o.outputs
            && self.kernel == o.kernel
            && self.relu == o.relu
            && self.weight == o.weight
            && self.bias == o.bias
    }
}

/// `out[b*n + t, c*kernel + k] = x[b*n + t + k - pad, c]`, zero outside the sequence.
pub(crate) fn gather(x: &Array2<f64>, n: usize, kernel: usize) -> Array2<f64> {
    let (rows, ch) = x.dim();
    let pad = kernel / 2;
    let mut out = Array2::zeros((rows, ch * kernel));
    for r in 0..rows {
        let (b, t) = (r / n, r % n);
        for k in 0..kernel {
            let src = t + k;
            if src < pad || src - pad >= n {
                continue;
            }
            let xr = x.row(b * n + src - pad);
            let mut o = out.row_mut(r);
            for c in 0..ch {
                o[c * kernel + k] = xr[c];
            }
        }
    }
    out
}

/// Adjoint of [`gather`].
pub(crate) fn scatter(z: &Array2<f64>, n: usize, kernel: usize) -> Array2<f64> {
    let (rows, wide) = z.dim();
    let ch = wide / kernel;
    let pad = kernel / 2;
    let mut out = Array2::zeros((rows, ch));
    for r in 0..rows {
        let (b, t) = (r / n, r % n);
        let zr = z.row(r);
        for k in 0..kernel {
            let dst = t + k;
            if dst < pad || dst - pad >= n {
                continue;
            }
            let mut o = out.row_mut(b * n + dst - pad);
            for c in 0..ch {
                o[c] += zr[c * kernel + k];
            }
        }
    }
    out
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

impl Layer {
    pub fn new<R: Rng + ?Sized>(
        kind: LayerKind,
        inputs: usize,
        outputs: usize,
        kernel: usize,
        relu: bool,
        rng: &mut R,
    ) -> Self {
        let kernel = if kind == LayerKind::Dense { 1 } else { kernel };
        let (rows, cols, fan_in) = match kind {
            LayerKind::Dense => (inputs, outputs, inputs),
            LayerKind::Conv => (inputs * kernel, outputs, inputs * kernel),
            LayerKind::ConvTranspose => (inputs, outputs * kernel, inputs * kernel),
        };
        let gain = if relu { 2.0 } else { 1.0 };
        let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite std");
        let weight = Array2::from_shape_fn((rows, cols), |_| normal.sample(rng));
        Self {
            kind,
            inputs,
            outputs,
            kernel,
            relu,
            weight,
            bias: Array1::zeros(outputs),
            grad_w: None,
            grad_b: None,
            cache: None,
        }
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn relu(&self) -> bool {
        self.relu
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Array2<f64> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Array1<f64> {
        &mut self.bias
    }

    pub fn set_relu(&mut self, relu: bool) {
        self.relu = relu;
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn shaped(&self, x: Array2<f64>, batch: usize) -> Array2<f64> {
        let total = x.len();
        let x = x.as_standard_layout().into_owned();
        let shape = match self.kind {
            LayerKind::Dense => (batch, total / batch),
            _ => (total / self.inputs, self.inputs),
        };
        x.into_shape(shape).expect("contiguous tensor")
    }

    fn run(&self, x: Array2<f64>, batch: usize) -> (Array2<f64>, Array2<f64>) {
        let x = self.shaped(x, batch);
        let n = x.nrows() / batch;
        let (input, mut y) = match self.kind {
            LayerKind::Dense => {
                let y = x.dot(&self.weight);
                (x, y)
            }
            LayerKind::Conv => {
                let cols = gather(&x, n, self.kernel);
                let y = cols.dot(&self.weight);
                (cols, y)
            }
            LayerKind::ConvTranspose => {
                let y = scatter(&x.dot(&self.weight), n, self.kernel);
                (x, y)
            }
        };
        y += &self.bias;
        if self.relu {
            relu_inplace(&mut y);
        }
        (input, y)
    }

    pub fn forward(&self, x: Array2<f64>, batch: usize) -> Array2<f64> {
        self.run(x, batch).1
    }

    pub fn forward_train(&mut self, x: Array2<f64>, batch: usize) -> Array2<f64> {
        let (input, output) = self.run(x, batch);
        self.cache = Some(Cache {
            input,
            output: output.clone(),
            batch,
        });
        output
    }

    /// Stores parameter gradients and returns the input gradient (`None`
    /// when `need_input` is false).
    pub fn backward(&mut self, dy: Array2<f64>, need_input: bool) -> Option<Array2<f64>> {
        let cache = self.cache.take().expect("backward without forward_train");
        let mut dy = dy
            .as_standard_layout()
            .into_owned()
            .into_shape(cache.output.dim())
            .expect("gradient shape");
        if self.relu {
            ndarray::Zip::from(&mut dy)
                .and(&cache.output)
                .for_each(|d, &o| {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                });
        }
        self.grad_b = Some(dy.sum_axis(Axis(0)));
        let n = cache.input.nrows() / cache.batch;
        match self.kind {
            LayerKind::Dense => {
                self.grad_w = Some(cache.input.t().dot(&dy));
                need_input.then(|| dy.dot(&self.weight.t()))
            }
            LayerKind::Conv => {
                self.grad_w = Some(cache.input.t().dot(&dy));
                need_input.then(|| scatter(&dy.dot(&self.weight.t()), n, self.kernel))
            }
            LayerKind::ConvTranspose => {
                let dz = gather(&dy, n, self.kernel);
                self.grad_w = Some(cache.input.t().dot(&dz));
                need_input.then(|| dz.dot(&self.weight.t()))
            }
        }
    }

    /// (parameter, gradient) slices: weights first, then biases.
    pub(crate) fn params_and_grads(&mut self) -> [(&mut [f64], &[f64]); 2] {
        let gw = self.grad_w.as_ref().expect("gradient not computed");
        let gb = self.grad_b.as_ref().expect("gradient not computed");
        [
            (
                self.weight.as_slice_mut().expect("standard layout"),
                gw.as_slice().expect("standard layout"),
            ),
            (
                self.bias.as_slice_mut().expect("standard layout"),
                gb.as_slice().expect("standard layout"),
            ),
        ]
    }

    pub(crate) fn param(&self, i: usize) -> f64 {
        let nw = self.weight.len();
        if i < nw {
            self.weight.as_slice().unwrap()[i]
        } else {
            self.bias[i - nw]
        }
    }

    pub(crate) fn set_param(&mut self, i: usize, v: f64) {
        let nw = self.weight.len();
        if i < nw {
            self.weight.as_slice_mut().unwrap()[i] = v;
        } else {
            self.bias[i - nw] = v;
        }
    }

    pub(crate) fn grad(&self, i: usize) -> f64 {
        let nw = self.weight.len();
        if i < nw {
            self.grad_w
                .as_ref()
                .map_or(0.0, |g| g.as_slice().unwrap()[i])
        } else {
            self.grad_b.as_ref().map_or(0.0, |g| g[i - nw])
        }
    }

    pub(crate) fn shape_ok(&self) -> bool {
        let (r, c) = match self.kind {
            LayerKind::Dense => (self.inputs, self.outputs),
            LayerKind::Conv => (self.inputs * self.kernel, self.outputs),
            LayerKind::ConvTranspose => (self.inputs, self.outputs * self.kernel),
        };
        self.weight.dim() == (r, c)
            && self.bias.len() == self.outputs
            && self.weight.is_standard_layout()
    }
}

/// A chain of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub(crate) layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn forward(&self, mut x: Array2<f64>, batch: usize) -> Array2<f64> {
        for l in &self.layers {
            x = l.forward(x, batch);
        }
        x
    }

    pub fn forward_train(&mut self, mut x: Array2<f64>, batch: usize) -> Array2<f64> {
        for l in &mut self.layers {
            x = l.forward_train(x, batch);
        }
        x
    }

    pub fn backward(&mut self, mut dy: Array2<f64>, need_input: bool) -> Option<Array2<f64>> {
        for i in (0..self.layers.len()).rev() {
            dy = self.layers[i].backward(dy, need_input || i > 0)?;
        }
        Some(dy)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.param_count() {
                return (li, i);
            }
            i -= l.param_count();
        }
        panic!("parameter index out of range")
    }

    pub fn param(&self, i: usize) -> f64 {
        let (l, j) = self.locate(i);
        self.layers[l].param(j)
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (l, j) = self.locate(i);
        self.layers[l].set_param(j, v)
    }

    pub fn grad(&self, i: usize) -> f64 {
        let (l, j) = self.locate(i);
        self.layers[l].grad(j)
    }
}
