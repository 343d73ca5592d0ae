use serde::{Deserialize, Serialize};

use super::sorted_neighbors;
use crate::detector::Hyperparams;
use crate::error::{OdError, Result};
use crate::matrix::Matrix;

/// Local outlier factor with reachability distances and tie-inclusive
/// neighborhoods: every point within the k-distance belongs to the
/// neighborhood, so |N| can exceed k.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LofModel {
    train: Matrix,
    k: usize,
    /// k-distance of each training point (self excluded).
    k_dist: Vec<f64>,
    /// Local reachability density of each training point.
    lrd: Vec<f64>,
}

impl LofModel {
    /// Keys: `k` (default 20, clamped to n−1).
    pub fn fit(prepared: &Matrix, hp: &mut Hyperparams) -> Result<LofModel> {
        let n = prepared.rows();
        if n < 2 {
            return Err(OdError::InvalidParam(format!(
                "lof needs at least 2 samples, got {n}"
            )));
        }
        let k = hp.take_usize("k", 20)?;
        if k == 0 {
            return Err(OdError::InvalidHyperparam {
                key: "k".into(),
                message: "k must be >= 1".into(),
            });
        }
        let k = k.min(n - 1);

        let neighbors: Vec<Vec<(f64, usize)>> = (0..n)
            .map(|i| sorted_neighbors(prepared, prepared.row(i)))
            .collect();
        let k_dist: Vec<f64> = neighbors.iter().map(|nb| nb[k - 1].0).collect();
        let lrd: Vec<f64> = (0..n)
            .map(|i| {
                let hood = neighborhood(&neighbors[i], k_dist[i]);
                local_reachability(hood, &k_dist)
            })
            .collect();
        Ok(LofModel {
            train: prepared.clone(),
            k,
            k_dist,
            lrd,
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
            let nb = sorted_neighbors(&self.train, row);
            let kd = nb[self.k - 1].0;
            let hood = neighborhood(&nb, kd);
            let lrd_q = local_reachability(hood, &self.k_dist);
            let mean_neighbor_lrd =
                hood.iter().map(|&(_, o)| self.lrd[o]).sum::<f64>() / hood.len() as f64;
            out.push(mean_neighbor_lrd / lrd_q);
        }
        Ok(out)
    }
}

/// Tie-inclusive prefix: every neighbor at distance ≤ the k-distance.
fn neighborhood(sorted: &[(f64, usize)], k_dist: f64) -> &[(f64, usize)] {
    let end = sorted.partition_point(|&(d, _)| d <= k_dist);
    &sorted[..end]
}

/// |N| / Σ reach-dist, with the divisor floored so fully duplicated data
/// (all distances zero) yields matching, cancelling densities.
fn local_reachability(hood: &[(f64, usize)], train_k_dist: &[f64]) -> f64 {
    let sum: f64 = hood
        .iter()
        .map(|&(d, o)| d.max(train_k_dist[o]))
        .sum();
    hood.len() as f64 / sum.max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_with_outlier(k: usize) -> LofModel {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![10.0]])
            .unwrap();
        let mut hp = Hyperparams::new();
        hp.set("k", crate::detector::HpValue::Int(k as i64));
        LofModel::fit(&m, &mut hp).unwrap()
    }

    #[test]
    fn hand_values_on_line_instance() {
        // Worked by hand from the definition: inliers all score exactly 1,
        // the point at 10 scores (2/3)/(2/15) = 5.
        let model = line_with_outlier(2);
        let scores = model.score_rows(&model.train.clone()).unwrap();
        for s in &scores[..4] {
            assert!((s - 1.0).abs() < 1e-12, "inlier scored {s}");
        }
        assert!((scores[4] - 5.0).abs() < 1e-12, "outlier scored {}", scores[4]);
        assert!(scores[4] > 1.5);
    }

    #[test]
    fn grid_interior_point_scores_near_one() {
        let rows: Vec<Vec<f64>> = (0..21).map(|i| vec![i as f64]).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let mut hp = Hyperparams::new();
        hp.set("k", crate::detector::HpValue::Int(3));
        let model = LofModel::fit(&m, &mut hp).unwrap();
        let q = Matrix::from_rows(&[vec![10.0]]).unwrap();
        let s = model.score_rows(&q).unwrap()[0];
        assert!((s - 1.0).abs() < 0.05, "interior LOF {s}");
    }

    #[test]
    fn identical_points_all_score_one() {
        let m = Matrix::from_rows(&vec![vec![3.0, 3.0]; 6]).unwrap();
        let mut hp = Hyperparams::new();
        hp.set("k", crate::detector::HpValue::Int(2));
        let model = LofModel::fit(&m, &mut hp).unwrap();
        let scores = model.score_rows(&m).unwrap();
        for s in scores {
            assert!((s - 1.0).abs() < 1e-9, "got {s}");
        }
    }

    #[test]
    fn scoring_training_data_matches_fit_side_values() {
        let model = line_with_outlier(2);
        let a = model.score_rows(&model.train.clone()).unwrap();
        let b = model.score_rows(&model.train.clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn neighborhood_includes_ties() {
        let sorted = vec![(1.0, 0), (1.0, 1), (1.0, 2), (2.0, 3)];
        assert_eq!(neighborhood(&sorted, 1.0).len(), 3);
    }
}
