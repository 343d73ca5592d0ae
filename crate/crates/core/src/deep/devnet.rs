use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DeepConfig;
use crate::detector::Hyperparams;
use crate::error::{OdError, Result};
use crate::matrix::Matrix;
use crate::nn::{train_with_sampler, Activation, Mlp, Objective};

/// Deviation margin: labeled anomalies are pushed at least this many
/// reference-deviations above the normal prior.
const MARGIN: f64 = 5.0;
/// Size of the seeded standard-normal sample defining the reference prior.
const PRIOR_DRAWS: usize = 5000;

/// Semi-supervised deviation network: a scalar scorer trained so normal
/// points sit inside a Gaussian reference prior and labeled anomalies deviate
/// from it by at least the margin. Score = raw network output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DevnetModel {
    net: Mlp,
    mu_r: f64,
    sigma_r: f64,
}

impl DevnetModel {
    /// Keys: the common training keys. Requires at least one labeled anomaly
    /// and one labeled normal.
    pub fn fit(
        prepared: &Matrix,
        labels: Option<&[u8]>,
        hp: &mut Hyperparams,
        seed: u64,
    ) -> Result<DevnetModel> {
        let labels = labels.ok_or_else(|| {
            OdError::LabelsRequired("devnet needs binary labels with at least one anomaly".into())
        })?;
        let anomalies: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let normals: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        if anomalies.is_empty() {
            return Err(OdError::LabelsRequired(
                "devnet needs at least one labeled anomaly".into(),
            ));
        }
        if normals.is_empty() {
            return Err(OdError::InvalidParam(
                "devnet needs at least one normal (label 0) sample".into(),
            ));
        }
        let cfg = DeepConfig::from_hp(hp)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let draws: Vec<f64> = (0..PRIOR_DRAWS)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mu_r = draws.iter().sum::<f64>() / draws.len() as f64;
        let sigma_r = (draws.iter().map(|v| (v - mu_r) * (v - mu_r)).sum::<f64>()
            / draws.len() as f64)
            .sqrt();

        let (dims, acts) = cfg.stack(prepared.cols(), 1, Activation::Linear);
        let net = Mlp::new(&dims, &acts, true, &mut rng)?;
        let mut obj = DeviationObjective {
            net,
            data: prepared.clone(),
            labels: labels.to_vec(),
            mu_r,
            sigma_r,
        };
        // label-balanced batches: half fresh normals, half anomalies
        // resampled with replacement
        let half = (cfg.batch_size / 2).max(1);
        let normals_per_epoch = normals.clone();
        let anomaly_pool = anomalies.clone();
        train_with_sampler(&mut obj, &cfg.train_config(seed), &mut |rng, _epoch| {
            let mut order = normals_per_epoch.clone();
            order.shuffle(rng);
            order
                .chunks(half)
                .map(|chunk| {
                    let mut batch = chunk.to_vec();
                    for _ in 0..chunk.len() {
                        batch.push(anomaly_pool[rng.random_range(0..anomaly_pool.len())]);
                    }
                    batch
                })
                .collect()
        })?;
        Ok(DevnetModel {
            net: obj.net,
            mu_r,
            sigma_r,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn score_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        let (phi, _) = self.net.forward(m)?;
        Ok(phi.column(0))
    }
}

/// Per-sample deviation loss: `(1−y)·|dev| + y·max(0, margin − dev)` with
/// `dev = (φ(x) − μ_R)/σ_R`.
fn deviation_loss(dev: f64, y: u8) -> f64 {
    if y == 1 {
        (MARGIN - dev).max(0.0)
    } else {
        dev.abs()
    }
}

struct DeviationObjective {
    net: Mlp,
    data: Matrix,
    labels: Vec<u8>,
    mu_r: f64,
    sigma_r: f64,
}

impl Objective for DeviationObjective {
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
        let b = rows.len() as f64;
        let mut loss = 0.0;
        let mut d_phi = Matrix::zeros(phi.rows(), 1);
        for (r, &row_idx) in rows.iter().enumerate() {
            let y = self.labels[row_idx];
            let dev = (phi.get(r, 0) - self.mu_r) / self.sigma_r;
            loss += deviation_loss(dev, y) / b;
            let dl_ddev = if y == 1 {
                if dev < MARGIN {
                    -1.0
                } else {
                    0.0
                }
            } else if dev > 0.0 {
                1.0
            } else if dev < 0.0 {
                -1.0
            } else {
                0.0
            };
            d_phi.set(r, 0, dl_ddev / (self.sigma_r * b));
        }
        let (grads, _) = self.net.backward(&cache, &d_phi)?;
        Ok((loss, grads.into_tensors()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::HpValue;

    #[test]
    fn loss_hand_values() {
        assert_eq!(deviation_loss(6.0, 1), 0.0);
        assert_eq!(deviation_loss(3.0, 1), 2.0);
        assert_eq!(deviation_loss(-2.0, 0), 2.0);
        assert_eq!(deviation_loss(2.0, 0), 2.0);
    }

    #[test]
    fn missing_or_empty_labels_rejected() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let err = DevnetModel::fit(&m, None, &mut Hyperparams::new(), 0).unwrap_err();
        assert!(matches!(err, OdError::LabelsRequired(_)));
        let err = DevnetModel::fit(&m, Some(&[0, 0]), &mut Hyperparams::new(), 0).unwrap_err();
        assert!(matches!(err, OdError::LabelsRequired(_)));
    }

    #[test]
    fn reference_prior_is_near_standard_normal() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let mut hp = Hyperparams::new();
        hp.set("epochs", HpValue::Int(1));
        let model = DevnetModel::fit(&m, Some(&[0, 0, 1]), &mut hp, 0).unwrap();
        assert!(model.mu_r.abs() < 0.05, "mu_r {}", model.mu_r);
        assert!((model.sigma_r - 1.0).abs() < 0.05, "sigma_r {}", model.sigma_r);
    }

    #[test]
    fn labeled_anomalies_get_pushed_above_normals() {
        // two tight groups in 2-D; rows 90.. are labeled anomalies
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..90 {
            let t = i as f64 / 90.0;
            rows.push(vec![t.sin() * 0.1, t.cos() * 0.1]);
            labels.push(0u8);
        }
        for i in 0..10 {
            let t = i as f64;
            rows.push(vec![3.0 + 0.01 * t, -3.0 - 0.01 * t]);
            labels.push(1u8);
        }
        let m = Matrix::from_rows(&rows).unwrap();
        let mut hp = Hyperparams::new();
        hp.set("epochs", HpValue::Int(40))
            .set("hidden", HpValue::IntList(vec![16]))
            .set("lr", HpValue::Float(0.01));
        let model = DevnetModel::fit(&m, Some(&labels), &mut hp, 0).unwrap();
        let scores = model.score_rows(&m).unwrap();
        let normal_max = scores[..90].iter().cloned().fold(f64::MIN, f64::max);
        let anomaly_min = scores[90..].iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            anomaly_min > normal_max,
            "anomaly min {anomaly_min} vs normal max {normal_max}"
        );
    }

    #[test]
    fn same_seed_same_scores() {
        let m = Matrix::from_rows(&[vec![0.0], vec![0.1], vec![5.0], vec![0.2]]).unwrap();
        let labels = [0u8, 0, 1, 0];
        let run = |seed| {
            let mut hp = Hyperparams::new();
            hp.set("epochs", HpValue::Int(10));
            DevnetModel::fit(&m, Some(&labels), &mut hp, seed)
                .unwrap()
                .score_rows(&m)
                .unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }
}
