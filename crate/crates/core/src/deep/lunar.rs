use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DeepConfig;
use crate::classical::sorted_neighbors;
use crate::detector::Hyperparams;
use crate::error::{OdError, Result};
use crate::matrix::Matrix;
use crate::nn::{train_objective, Activation, Mlp, Objective};

/// Distance-profile scorer: each point is represented by its sorted vector of
/// distances to the k nearest training points, and a small network learns to
/// separate real profiles (target 0) from artificial negatives (target 1).
///
/// This keeps the cited method's core signal — local distance structure
/// scored by a trained network with negative sampling — without the full
/// graph machinery.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LunarModel {
    train: Matrix,
    k: usize,
    scorer: Mlp,
}

impl LunarModel {
    /// Keys: common training keys plus `k` (default 10, auto-clamped only
    /// when left at its default), `negative_ratio` (default 1.0, > 0) and
    /// `epsilon` (perturbation scale as a multiple of feature std, default 0.1).
    pub fn fit(prepared: &Matrix, hp: &mut Hyperparams, seed: u64) -> Result<LunarModel> {
        let n = prepared.rows();
        if n < 2 {
            return Err(OdError::InvalidParam(format!(
                "lunar needs at least 2 samples, got {n}"
            )));
        }
        let cfg = DeepConfig::from_hp(hp)?;
        let k = match hp.take_opt_usize("k")? {
            None => 10.min(n - 1),
            Some(k) if k >= 1 && k < n => k,
            Some(k) => {
                return Err(OdError::InvalidHyperparam {
                    key: "k".into(),
                    message: format!("k must satisfy 1 <= k <= n-1 (k={k}, n={n})"),
                });
            }
        };
        let ratio = hp.take_f64("negative_ratio", 1.0)?;
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(OdError::InvalidHyperparam {
                key: "negative_ratio".into(),
                message: format!("negative_ratio must be positive, got {ratio}"),
            });
        }
        let epsilon = hp.take_f64("epsilon", 0.1)?;
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(OdError::InvalidHyperparam {
                key: "epsilon".into(),
                message: format!("epsilon must be positive, got {epsilon}"),
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = prepared.cols();
        let (lo, hi, std) = feature_stats(prepared);

        // artificial negatives: half uniform in the bounding box, half
        // Gaussian perturbations of training points
        let m = (ratio * n as f64).ceil() as usize;
        let n_pert = m / 2;
        let n_unif = m - n_pert;
        let mut negatives = Vec::with_capacity(m);
        for _ in 0..n_unif {
            let row: Vec<f64> = (0..d)
                .map(|j| lo[j] + rng.random::<f64>() * (hi[j] - lo[j]))
                .collect();
            negatives.push(row);
        }
        for _ in 0..n_pert {
            let base = rng.random_range(0..n);
            let row: Vec<f64> = prepared
                .row(base)
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    v + epsilon * std[j] * noise
                })
                .collect();
            negatives.push(row);
        }

        let mut feats = Vec::with_capacity(n + m);
        let mut targets = Vec::with_capacity(n + m);
        for i in 0..n {
            feats.push(k_dist_vector(prepared, prepared.row(i), k));
            targets.push(0.0);
        }
        for neg in &negatives {
            feats.push(k_dist_vector(prepared, neg, k));
            targets.push(1.0);
        }
        let feats = Matrix::from_rows(&feats)?;

        let (dims, acts) = cfg.stack(k, 1, Activation::Sigmoid);
        let scorer = Mlp::new(&dims, &acts, true, &mut rng)?;
        let mut obj = MseObjective {
            net: scorer,
            feats,
            targets,
        };
        train_objective(&mut obj, &cfg.train_config(seed))?;
        Ok(LunarModel {
            train: prepared.clone(),
            k,
            scorer: obj.net,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.train.cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn score_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        let feats: Vec<Vec<f64>> = m
            .iter_rows()
            .map(|row| k_dist_vector(&self.train, row, self.k))
            .collect();
        let feats = Matrix::from_rows(&feats)?;
        let (out, _) = self.scorer.forward(&feats)?;
        Ok(out.column(0))
    }
}

/// Sorted (ascending) distances to the k nearest training points, with the
/// usual single-zero self-exclusion.
fn k_dist_vector(train: &Matrix, point: &[f64], k: usize) -> Vec<f64> {
    sorted_neighbors(train, point)
        .into_iter()
        .take(k)
        .map(|(dist, _)| dist)
        .collect()
}

/// Per-feature (min, max, population std) over training rows.
fn feature_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, d) = (m.rows(), m.cols());
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut mean = vec![0.0; d];
    for row in m.iter_rows() {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
            mean[j] += row[j];
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in m.iter_rows() {
        for j in 0..d {
            let c = row[j] - mean[j];
            var[j] += c * c;
        }
    }
    let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
    (lo, hi, std)
}

struct MseObjective {
    net: Mlp,
    feats: Matrix,
    targets: Vec<f64>,
}

impl Objective for MseObjective {
    fn num_rows(&self) -> usize {
        self.feats.rows()
    }

    fn param_lens(&self) -> Vec<usize> {
        self.net.param_lens()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }

    fn batch_grads(&self, rows: &[usize], _rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Vec<f64>>)> {
        let x = self.feats.select_rows(rows);
        let (out, cache) = self.net.forward(&x)?;
        let b = rows.len() as f64;
        let mut loss = 0.0;
        let mut d_out = Matrix::zeros(out.rows(), 1);
        for (r, &row_idx) in rows.iter().enumerate() {
            let diff = out.get(r, 0) - self.targets[row_idx];
            loss += diff * diff / b;
            d_out.set(r, 0, 2.0 * diff / b);
        }
        let (grads, _) = self.net.backward(&cache, &d_out)?;
        Ok((loss, grads.into_tensors()))
    }
}
