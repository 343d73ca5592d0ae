use serde::{Deserialize, Serialize};

use super::sorted_neighbors;
use crate::detector::Hyperparams;
use crate::error::{OdError, Result};
use crate::matrix::Matrix;

/// k-nearest-neighbor distance scorer: score = Euclidean distance to the k-th
/// nearest training point (the canonical k-th distance, not the mean of k).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnnModel {
    train: Matrix,
    k: usize,
}

impl KnnModel {
    /// Keys: `k` (default 5, clamped to n−1).
    pub fn fit(prepared: &Matrix, hp: &mut Hyperparams) -> Result<KnnModel> {
        let n = prepared.rows();
        if n < 2 {
            return Err(OdError::InvalidParam(format!(
                "knn needs at least 2 samples, got {n}"
            )));
        }
        let k = hp.take_usize("k", 5)?;
        if k == 0 {
            return Err(OdError::InvalidHyperparam {
                key: "k".into(),
                message: "k must be >= 1".into(),
            });
        }
        Ok(KnnModel {
            train: prepared.clone(),
            k: k.min(n - 1),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.train.cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn score_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(m.rows());
        for row in m.iter_rows() {
            let neighbors = sorted_neighbors(&self.train, row);
            out.push(neighbors[self.k - 1].0);
        }
        Ok(out)
    }
}
