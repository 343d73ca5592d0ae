use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{default_latent, row_mse, DeepConfig};
use crate::detector::Hyperparams;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::nn::{train_objective, Activation, Mlp, Objective};

/// Variational autoencoder detector. Training uses the reparameterized ELBO
/// (reconstruction MSE + β·KL against a unit Gaussian); scoring reconstructs
/// from the mean latent so scores are deterministic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VaeModel {
    /// Emits `(μ, log σ²)` stacked as a 2×latent-wide output.
    encoder: Mlp,
    decoder: Mlp,
    latent: usize,
}

impl VaeModel {
    /// Keys: common training keys plus `latent` and `beta` (default 1.0).
    pub fn fit(prepared: &Matrix, hp: &mut Hyperparams, seed: u64) -> Result<VaeModel> {
        let d = prepared.cols();
        let cfg = DeepConfig::from_hp(hp)?;
        let latent = hp.take_usize("latent", default_latent(d))?;
        let beta = hp.take_f64("beta", 1.0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (enc_dims, enc_acts) = cfg.stack(d, 2 * latent, Activation::Linear);
        let encoder = Mlp::new(&enc_dims, &enc_acts, true, &mut rng)?;
        let mut dec_hidden = cfg.hidden.clone();
        dec_hidden.reverse();
        let dec_cfg = DeepConfig {
            hidden: dec_hidden,
            ..cfg.clone()
        };
        let (dec_dims, dec_acts) = dec_cfg.stack(latent, d, Activation::Linear);
        let decoder = Mlp::new(&dec_dims, &dec_acts, true, &mut rng)?;
        let mut obj = ElboObjective {
            encoder,
            decoder,
            data: prepared.clone(),
            latent,
            beta,
        };
        train_objective(&mut obj, &cfg.train_config(seed))?;
        Ok(VaeModel {
            encoder: obj.encoder,
            decoder: obj.decoder,
            latent,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn score_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        let (h, _) = self.encoder.forward(m)?;
        let mut mu = Matrix::zeros(h.rows(), self.latent);
        for r in 0..h.rows() {
            mu.row_mut(r).copy_from_slice(&h.row(r)[..self.latent]);
        }
        let (xhat, _) = self.decoder.forward(&mu)?;
        Ok(row_mse(m, &xhat))
    }
}

/// Closed-form KL(q(z|x) ‖ N(0, I)) for a diagonal Gaussian posterior,
/// summed over latent dimensions.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
        .sum()
}

struct ElboObjective {
    encoder: Mlp,
    decoder: Mlp,
    data: Matrix,
    latent: usize,
    beta: f64,
}

impl Objective for ElboObjective {
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

    fn batch_grads(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Vec<f64>>)> {
        let x = self.data.select_rows(rows);
        let (b, d, l) = (x.rows(), x.cols(), self.latent);
        let (h, enc_cache) = self.encoder.forward(&x)?;

        let mut z = Matrix::zeros(b, l);
        let mut eps = Matrix::zeros(b, l);
        let mut kl_sum = 0.0;
        for r in 0..b {
            let (mu, logvar) = h.row(r).split_at(l);
            kl_sum += gaussian_kl(mu, logvar);
            for j in 0..l {
                let e: f64 = StandardNormal.sample(rng);
                eps.set(r, j, e);
                z.set(r, j, mu[j] + (0.5 * logvar[j]).exp() * e);
            }
        }
        let (xhat, dec_cache) = self.decoder.forward(&z)?;

        let recon_scale = 1.0 / (b * d) as f64;
        let mut recon = 0.0;
        let mut d_xhat = Matrix::zeros(b, d);
        for (i, (&a, &t)) in xhat.as_slice().iter().zip(x.as_slice()).enumerate() {
            let r = a - t;
            recon += r * r * recon_scale;
            d_xhat.as_mut_slice()[i] = 2.0 * r * recon_scale;
        }
        let loss = recon + self.beta * kl_sum / b as f64;

        let (dec_grads, d_z) = self.decoder.backward(&dec_cache, &d_xhat)?;
        // route the z-gradient through the reparameterization and add the KL
        // terms: dKL/dμ = μ, dKL/d(logσ²) = (σ² − 1)/2
        let kl_scale = self.beta / b as f64;
        let mut d_h = Matrix::zeros(b, 2 * l);
        for r in 0..b {
            let (mu, logvar) = h.row(r).split_at(l);
            for j in 0..l {
                let dz = d_z.get(r, j);
                let sigma = (0.5 * logvar[j]).exp();
                d_h.set(r, j, dz + kl_scale * mu[j]);
                d_h.set(
                    r,
                    l + j,
                    dz * eps.get(r, j) * sigma * 0.5 + kl_scale * (logvar[j].exp() - 1.0) * 0.5,
                );
            }
        }
        let (enc_grads, _) = self.encoder.backward(&enc_cache, &d_h)?;
        let mut grads = enc_grads.into_tensors();
        grads.extend(dec_grads.into_tensors());
        Ok((loss, grads))
    }
}
