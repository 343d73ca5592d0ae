//! Deep detectors: each is a loss specification over the nn substrate plus a
//! scoring rule. All of them consume standardized inputs (the shared scaler
//! is applied by `FittedDetector` before calls reach these models).

mod ae;
mod ae1svm;
mod deepsvdd;
mod devnet;
mod lunar;
mod vae;

pub use ae::AeModel;
pub use ae1svm::Ae1svmModel;
pub use deepsvdd::DeepSvddModel;
pub use devnet::DevnetModel;
pub use lunar::LunarModel;
pub use vae::VaeModel;

use crate::detector::Hyperparams;
use crate::error::Result;
use crate::nn::{Activation, TrainConfig};

/// Training keys shared by every deep detector: `epochs` (default 30),
/// `batch_size` (default 64), `lr` (default 1e-3), `hidden` (default [64, 32]).
#[derive(Clone, Debug)]
pub(crate) struct DeepConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

impl DeepConfig {
    pub fn from_hp(hp: &mut Hyperparams) -> Result<DeepConfig> {
        Ok(DeepConfig {
            epochs: hp.take_usize("epochs", 30)?,
            batch_size: hp.take_usize("batch_size", 64)?,
            lr: hp.take_f64("lr", 1e-3)?,
            hidden: hp.take_usize_list("hidden", &[64, 32])?,
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            // decorrelate the minibatch stream from weight initialization,
            // which consumes the raw seed
            seed: seed ^ 0x9E37_79B9_7F4A_7C15,
        }
    }

    /// Layer sizes `input → hidden… → output` with relu hidden layers and a
    /// configurable output activation.
    pub fn stack(&self, input: usize, output: usize, out_act: Activation) -> (Vec<usize>, Vec<Activation>) {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(&self.hidden);
        dims.push(output);
        let mut acts = vec![Activation::Relu; self.hidden.len()];
        acts.push(out_act);
        (dims, acts)
    }
}

/// Default bottleneck width: a quarter of the input dimension, at least 2.
pub(crate) fn default_latent(d: usize) -> usize {
    d.div_ceil(4).max(2)
}

/// Mean squared error per row between a matrix and its reconstruction.
pub(crate) fn row_mse(x: &crate::matrix::Matrix, xhat: &crate::matrix::Matrix) -> Vec<f64> {
    let d = x.cols() as f64;
    x.iter_rows()
        .zip(xhat.iter_rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&u, &v)| (u - v) * (u - v))
                .sum::<f64>()
                / d
        })
        .collect()
}
