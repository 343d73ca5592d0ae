use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::AdamState;
use crate::error::{OdError, Result};

/// Global gradient-norm ceiling applied before every optimizer step.
pub const GRADIENT_CLIP_NORM: f64 = 5.0;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(OdError::InvalidParam("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(OdError::InvalidParam("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(OdError::InvalidParam(format!(
                "learning rate must be finite and positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// A minibatch-trainable model: exposes its flat parameter tensors and
/// computes `(mean batch loss, gradients)` for a set of row indices.
///
/// `batch_grads` receives the run RNG so stochastic objectives (latent noise,
/// negative samples) stay reproducible for a fixed seed.
pub trait Objective {
    fn num_rows(&self) -> usize;
    fn param_lens(&self) -> Vec<usize>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    fn batch_grads(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Vec<f64>>)>;
}

/// Train with shuffled contiguous minibatches; returns the per-epoch mean loss
/// trace. Non-finite losses or gradients abort with an error rather than
/// silently producing a garbage model.
pub fn train_objective<O: Objective + ?Sized>(obj: &mut O, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let n = obj.num_rows();
    let batch = cfg.batch_size;
    train_with_sampler(obj, cfg, &mut move |rng, _epoch| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        order.chunks(batch).map(|c| c.to_vec()).collect()
    })
}

/// As [`train_objective`] but with a caller-supplied batch plan per epoch, for
/// objectives that need non-uniform sampling (e.g. label-balanced batches).
pub fn train_with_sampler<O: Objective + ?Sized>(
    obj: &mut O,
    cfg: &TrainConfig,
    sampler: &mut dyn FnMut(&mut ChaCha8Rng, usize) -> Vec<Vec<usize>>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if obj.num_rows() == 0 {
        return Err(OdError::InvalidParam("cannot train on zero rows".into()));
    }
    let lens = obj.param_lens();
    let mut adam = AdamState::new(cfg.lr, &lens)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = sampler(&mut rng, epoch);
        if batches.is_empty() || batches.iter().any(|b| b.is_empty()) {
            return Err(OdError::InvalidParam(
                "batch sampler produced an empty batch".into(),
            ));
        }
        let mut loss_sum = 0.0;
        let mut row_count = 0usize;
        for (b, rows) in batches.iter().enumerate() {
            let (loss, mut grads) = obj.batch_grads(rows, &mut rng)?;
            if !loss.is_finite() {
                return Err(OdError::TrainingDiverged(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {b}"
                )));
            }
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(OdError::TrainingDiverged(format!(
                    "non-finite gradient at epoch {epoch}, batch {b}"
                )));
            }
            clip_global_norm(&mut grads, GRADIENT_CLIP_NORM);
            adam.step(&mut obj.params_mut(), &grads)?;
            loss_sum += loss * rows.len() as f64;
            row_count += rows.len();
        }
        trace.push(loss_sum / row_count as f64);
    }
    Ok(trace)
}

/// Scale all tensors by `max_norm / norm` when the joint L2 norm exceeds it.
fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            *g *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar least squares: fit w to minimize mean (w*x_i - y_i)^2 with y = 2x.
    struct LineFit {
        w: Vec<f64>,
        xs: Vec<f64>,
    }

    impl Objective for LineFit {
        fn num_rows(&self) -> usize {
            self.xs.len()
        }
        fn param_lens(&self) -> Vec<usize> {
            vec![1]
        }
        fn params_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.w]
        }
        fn batch_grads(&self, rows: &[usize], _rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Vec<f64>>)> {
            let mut loss = 0.0;
            let mut grad = 0.0;
            for &i in rows {
                let (x, y) = (self.xs[i], 2.0 * self.xs[i]);
                let r = self.w[0] * x - y;
                loss += r * r;
                grad += 2.0 * r * x;
            }
            let n = rows.len() as f64;
            Ok((loss / n, vec![vec![grad / n]]))
        }
    }

    struct ExplodingLoss;

    impl Objective for ExplodingLoss {
        fn num_rows(&self) -> usize {
            4
        }
        fn param_lens(&self) -> Vec<usize> {
            vec![0]
        }
        fn params_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut []]
        }
        fn batch_grads(&self, _rows: &[usize], _rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Vec<f64>>)> {
            Ok((f64::NAN, vec![vec![]]))
        }
    }

    #[test]
    fn converges_on_line_fit() {
        let mut obj = LineFit {
            w: vec![0.0],
            xs: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        };
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 2,
            lr: 0.05,
            seed: 0,
        };
        let trace = train_objective(&mut obj, &cfg).unwrap();
        assert_eq!(trace.len(), 300);
        assert!((obj.w[0] - 2.0).abs() < 1e-3, "got {}", obj.w[0]);
        assert!(trace.last().unwrap() < &1e-5);
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 2,
            lr: 0.05,
            seed: 9,
        };
        let run = || {
            let mut obj = LineFit {
                w: vec![0.3],
                xs: vec![1.0, -2.0, 3.0, 0.5],
            };
            let t = train_objective(&mut obj, &cfg).unwrap();
            (t, obj.w[0])
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_loss_aborts() {
        let mut obj = ExplodingLoss;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            lr: 0.01,
            seed: 0,
        };
        match train_objective(&mut obj, &cfg) {
            Err(OdError::TrainingDiverged(_)) => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn clip_rescales_to_ceiling() {
        let mut grads = vec![vec![3.0, 4.0], vec![0.0, 12.0]];
        // norm = sqrt(9 + 16 + 144) = 13; scale = 5/13
        clip_global_norm(&mut grads, 5.0);
        let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads[0][0] - 3.0 * 5.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn clip_keeps_small_gradients() {
        let mut grads = vec![vec![0.3, -0.4]];
        clip_global_norm(&mut grads, 5.0);
        assert_eq!(grads, vec![vec![0.3, -0.4]]);
    }

    #[test]
    fn rejects_zero_epochs() {
        let mut obj = LineFit {
            w: vec![0.0],
            xs: vec![1.0],
        };
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 1,
            lr: 0.1,
            seed: 0,
        };
        assert!(train_objective(&mut obj, &cfg).is_err());
    }
}
