use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{default_latent, row_mse, DeepConfig};
use crate::detector::Hyperparams;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::nn::{train_objective, Activation, Mlp, Objective};

/// Autoencoder detector: score = mean squared reconstruction error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AeModel {
    encoder: Mlp,
    decoder: Mlp,
}

impl AeModel {
    /// Keys: common training keys plus `latent` (default max(2, ⌈d/4⌉)).
    pub fn fit(prepared: &Matrix, hp: &mut Hyperparams, seed: u64) -> Result<AeModel> {
        let d = prepared.cols();
        let cfg = DeepConfig::from_hp(hp)?;
        let latent = hp.take_usize("latent", default_latent(d))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (enc_dims, enc_acts) = cfg.stack(d, latent, Activation::Linear);
        let encoder = Mlp::new(&enc_dims, &enc_acts, true, &mut rng)?;
        let mut dec_hidden = cfg.hidden.clone();
        dec_hidden.reverse();
        let dec_cfg = DeepConfig {
            hidden: dec_hidden,
            ..cfg.clone()
        };
        let (dec_dims, dec_acts) = dec_cfg.stack(latent, d, Activation::Linear);
        let decoder = Mlp::new(&dec_dims, &dec_acts, true, &mut rng)?;
        let mut obj = ReconObjective {
            encoder,
            decoder,
            data: prepared.clone(),
        };
        train_objective(&mut obj, &cfg.train_config(seed))?;
        Ok(AeModel {
            encoder: obj.encoder,
            decoder: obj.decoder,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn score_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        let (z, _) = self.encoder.forward(m)?;
        let (xhat, _) = self.decoder.forward(&z)?;
        Ok(row_mse(m, &xhat))
    }
}

struct ReconObjective {
    encoder: Mlp,
    decoder: Mlp,
    data: Matrix,
}

impl Objective for ReconObjective {
    fn num_rows(&self) -> usize {
        self.data.rows()
    }

    fn param_lens(&self) -> Vec<usize> {
        let mut lens = self.encoder.param_lens();
        lens.extend(self.decoder.param_lens());
        lens
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut params = self.encoder.params_mut();
        params.extend(self.decoder.params_mut());
        params
    }

    fn batch_grads(&self, rows: &[usize], _rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Vec<f64>>)> {
        let x = self.data.select_rows(rows);
        let (z, enc_cache) = self.encoder.forward(&x)?;
        let (xhat, dec_cache) = self.decoder.forward(&z)?;
        let scale = 1.0 / (x.rows() * x.cols()) as f64;
        let mut loss = 0.0;
        let mut d_xhat = Matrix::zeros(xhat.rows(), xhat.cols());
        for (i, (&a, &b)) in xhat.as_slice().iter().zip(x.as_slice()).enumerate() {
            let r = a - b;
            loss += r * r * scale;
            d_xhat.as_mut_slice()[i] = 2.0 * r * scale;
        }
        let (dec_grads, d_z) = self.decoder.backward(&dec_cache, &d_xhat)?;
        let (enc_grads, _) = self.encoder.backward(&enc_cache, &d_z)?;
        let mut grads = enc_grads.into_tensors();
        grads.extend(dec_grads.into_tensors());
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::HpValue;

    fn fit_quick(m: &Matrix, seed: u64) -> AeModel {
        let mut hp = Hyperparams::new();
        hp.set("epochs", HpValue::Int(60))
            .set("hidden", HpValue::IntList(vec![8]))
            .set("lr", HpValue::Float(0.01));
        AeModel::fit(m, &mut hp, seed).unwrap()
    }

    #[test]
    fn repeated_point_reconstructs_far_query_poorly() {
        let m = Matrix::from_rows(&vec![vec![0.1, -0.2, 0.3]; 50]).unwrap();
        let model = fit_quick(&m, 0);
        let train_scores = model.score_rows(&m).unwrap();
        let q = Matrix::from_rows(&[vec![6.0, 6.0, -6.0]]).unwrap();
        let far = model.score_rows(&q).unwrap()[0];
        assert!(
            far > 10.0 * train_scores[0].max(1e-9),
            "far {far} vs train {}",
            train_scores[0]
        );
    }

    #[test]
    fn identical_rows_share_scores() {
        let m = Matrix::from_rows(&vec![vec![0.5, 1.5]; 20]).unwrap();
        let model = fit_quick(&m, 1);
        let scores = model.score_rows(&m).unwrap();
        for s in &scores {
            assert_eq!(*s, scores[0]);
        }
    }

    #[test]
    fn scores_are_row_order_equivariant() {
        let m = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, -1.0],
            vec![0.5, 0.5],
            vec![-2.0, 2.0],
        ])
        .unwrap();
        let model = fit_quick(&m, 2);
        let forward = model.score_rows(&m).unwrap();
        let reversed_rows: Vec<Vec<f64>> = (0..4).rev().map(|i| m.row(i).to_vec()).collect();
        let rev = Matrix::from_rows(&reversed_rows).unwrap();
        let mut backward = model.score_rows(&rev).unwrap();
        backward.reverse();
        for (a, b) in forward.iter().zip(&backward) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_reproduces_scores() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![-1.0, 0.5]]).unwrap();
        let a = fit_quick(&m, 9).score_rows(&m).unwrap();
        let b = fit_quick(&m, 9).score_rows(&m).unwrap();
        assert_eq!(a, b);
    }
}
