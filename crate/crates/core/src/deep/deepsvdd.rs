use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DeepConfig;
use crate::detector::Hyperparams;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::nn::{train_objective, Activation, Mlp, Objective};
use crate::sq_dist;

/// One-class hypersphere detector: a bias-free embedding network trained to
/// pull data toward a frozen center; score = squared distance to the center.
///
/// Bias-free layers and the center floor keep the trivial "map everything to
/// the center" collapse out of reach.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeepSvddModel {
    net: Mlp,
    center: Vec<f64>,
    initial_mean_score: f64,
}

impl DeepSvddModel {
    /// Keys: common training keys plus `latent` (default 8).
    pub fn fit(prepared: &Matrix, hp: &mut Hyperparams, seed: u64) -> Result<DeepSvddModel> {
        let d = prepared.cols();
        let cfg = DeepConfig::from_hp(hp)?;
        let latent = hp.take_usize("latent", 8)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![d];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(latent);
        let mut acts = vec![Activation::Tanh; cfg.hidden.len()];
        acts.push(Activation::Linear);
        let net = Mlp::new(&dims, &acts, false, &mut rng)?;

        // freeze the center at the mean initial embedding, pushing any
        // near-zero coordinate out to ±0.1
        let (phi0, _) = net.forward(prepared)?;
        let n = phi0.rows() as f64;
        let mut center = vec![0.0; latent];
        for row in phi0.iter_rows() {
            for (c, &v) in center.iter_mut().zip(row) {
                *c += v;
            }
        }
        for c in &mut center {
            *c /= n;
            if c.abs() < 0.1 {
                *c = if *c < 0.0 { -0.1 } else { 0.1 };
            }
        }
        let initial_mean_score = phi0
            .iter_rows()
            .map(|row| sq_dist(row, &center))
            .sum::<f64>()
            / n;

        let mut obj = SvddObjective {
            net,
            center: center.clone(),
            data: prepared.clone(),
        };
        train_objective(&mut obj, &cfg.train_config(seed))?;
        Ok(DeepSvddModel {
            net: obj.net,
            center,
            initial_mean_score,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Mean training score at initialization, before any gradient step.
    pub fn initial_mean_score(&self) -> f64 {
        self.initial_mean_score
    }

    pub fn score_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        let (phi, _) = self.net.forward(m)?;
        Ok(phi.iter_rows().map(|row| sq_dist(row, &self.center)).collect())
    }
}

struct SvddObjective {
    net: Mlp,
    center: Vec<f64>,
    data: Matrix,
}

impl Objective for SvddObjective {
    fn num_rows(&self) -> usize {
        self.data.rows()
    }

    fn param_lens(&self) -> Vec<usize> {
        self.net.param_lens()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }

    fn batch_grads(&self, rows: &[usize], _rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Vec<f64>>)> {
        let x = self.data.select_rows(rows);
        let (phi, cache) = self.net.forward(&x)?;
        let b = x.rows() as f64;
        let mut loss = 0.0;
        let mut d_phi = Matrix::zeros(phi.rows(), phi.cols());
        for r in 0..phi.rows() {
            for (j, (&v, &c)) in phi.row(r).iter().zip(&self.center).enumerate() {
                let diff = v - c;
                loss += diff * diff / b;
                d_phi.set(r, j, 2.0 * diff / b);
            }
        }
        let (grads, _) = self.net.backward(&cache, &d_phi)?;
        Ok((loss, grads.into_tensors()))
    }
}
