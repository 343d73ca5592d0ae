//! Minimal dense-MLP substrate shared by the deep detectors.
//!
//! Reverse-mode gradients are hand-derived for the dense layer family; there
//! is no general autodiff graph. Each detector composes `forward`/`backward`
//! with its own loss gradient and trains through [`train`](crate::nn::train).

mod adam;
mod train;

pub use adam::AdamState;
pub use train::{train_objective, train_with_sampler, Objective, TrainConfig, GRADIENT_CLIP_NORM};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OdError, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative evaluated from the cached pre- and post-activation values.
    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => post * (1.0 - post),
            Activation::Tanh => 1.0 - post * post,
            Activation::Linear => 1.0,
        }
    }
}

/// One dense layer: `post = act(x * W^T + b)` with `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl Layer {
    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Per-layer cached activations from a forward pass, sufficient for backward.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.post.last().expect("cache holds at least one layer")
    }
}

/// Gradients for every parameter of an [`Mlp`], shaped like the parameters.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Option<Vec<f64>>>,
}

impl MlpGrads {
    fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            weights: mlp
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            biases: mlp
                .layers
                .iter()
                .map(|l| l.bias.as_ref().map(|b| vec![0.0; b.len()]))
                .collect(),
        }
    }

    /// Flatten into per-tensor buffers, layer by layer (weight, then bias).
    pub fn into_tensors(self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (w, b) in self.weights.into_iter().zip(self.biases) {
            out.push(w.into_vec());
            if let Some(b) = b {
                out.push(b);
            }
        }
        out
    }
}

/// A multilayer perceptron over `f64` with per-layer activations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Build with Glorot-uniform weights (`±sqrt(6/(fan_in+fan_out))`) and zero
    /// biases, drawn from the provided seeded generator.
    ///
    /// `dims` chains layer sizes (`dims[0]` is the input dimension), so
    /// `activations` must have `dims.len() - 1` entries.
    pub fn new(
        dims: &[usize],
        activations: &[Activation],
        with_bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(OdError::InvalidParam(
                "an MLP needs at least one layer (two dims)".into(),
            ));
        }
        if activations.len() != dims.len() - 1 {
            return Err(OdError::InvalidParam(format!(
                "expected {} activations for {} dims, got {}",
                dims.len() - 1,
                dims.len(),
                activations.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(OdError::InvalidParam("layer dims must be >= 1".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for v in weight.as_mut_slice() {
                *v = (2.0 * rng.random::<f64>() - 1.0) * limit;
            }
            layers.push(Layer {
                weight,
                bias: with_bias.then(|| vec![0.0; fan_out]),
                activation: act,
            });
        }
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(OdError::InvalidParam("an MLP needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(OdError::InvalidParam(format!(
                    "layer dims do not chain: {} -> {}",
                    w[0].output_dim(),
                    w[1].input_dim()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    /// Forward pass; the cache holds every pre/post activation for backward.
    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if batch.cols() != self.input_dim() {
            return Err(OdError::DimensionMismatch {
                expected: self.input_dim(),
                actual: batch.cols(),
            });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &self.layers {
            let mut z = current.matmul_nt(&layer.weight);
            if let Some(ref b) = layer.bias {
                for r in 0..z.rows() {
                    for (v, &bias) in z.row_mut(r).iter_mut().zip(b) {
                        *v += bias;
                    }
                }
            }
            let mut a = z.clone();
            for v in a.as_mut_slice() {
                *v = layer.activation.apply(*v);
            }
            pre.push(z);
            post.push(a.clone());
            current = a;
        }
        Ok((
            current,
            ForwardCache {
                input: batch.clone(),
                pre,
                post,
            },
        ))
    }

    /// Reverse pass. `out_grad` is dLoss/dOutput for the cached forward batch;
    /// returns parameter gradients and dLoss/dInput.
    pub fn backward(&self, cache: &ForwardCache, out_grad: &Matrix) -> Result<(MlpGrads, Matrix)> {
        let last = cache.post.len() - 1;
        if cache.post.len() != self.layers.len()
            || out_grad.rows() != cache.post[last].rows()
            || out_grad.cols() != cache.post[last].cols()
        {
            return Err(OdError::InvalidParam(
                "backward cache/gradient shape mismatch".into(),
            ));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut d_post = out_grad.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            // d_pre = d_post ⊙ act'(pre)
            let mut d_pre = d_post;
            {
                let pre = &cache.pre[l];
                let post = &cache.post[l];
                let dp = d_pre.as_mut_slice();
                for (i, v) in dp.iter_mut().enumerate() {
                    *v *= layer
                        .activation
                        .derivative(pre.as_slice()[i], post.as_slice()[i]);
                }
            }
            let layer_input = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            grads.weights[l] = d_pre.matmul_tn(layer_input);
            if let Some(ref mut db) = grads.biases[l] {
                for r in 0..d_pre.rows() {
                    for (g, &v) in db.iter_mut().zip(d_pre.row(r)) {
                        *g += v;
                    }
                }
            }
            d_post = d_pre.matmul(&layer.weight);
        }
        Ok((grads, d_post))
    }

    /// Lengths of the flat parameter tensors, layer by layer (weight, bias).
    pub fn param_lens(&self) -> Vec<usize> {
        let mut lens = Vec::new();
        for layer in &self.layers {
            lens.push(layer.weight.as_slice().len());
            if let Some(ref b) = layer.bias {
                lens.push(b.len());
            }
        }
        lens
    }

    /// Mutable views over the flat parameter tensors, matching `param_lens`.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.weight.as_mut_slice());
            if let Some(ref mut b) = layer.bias {
                out.push(b.as_mut_slice());
            }
        }
        out
    }
}
