//! Classical detectors: k-nearest-neighbor distance, local outlier factor,
//! and isolation forest. All neighbor search is brute force — fine at desk
//! scale, documented as the perf boundary.

mod iforest;
mod knn;
mod lof;

pub use iforest::IforestModel;
pub use knn::KnnModel;
pub use lof::LofModel;

use crate::matrix::Matrix;

/// Distances from `point` to every training row, sorted by (distance,
/// index) ascending, with at most one exact-zero entry dropped.
///
/// Dropping one zero makes scoring self-consistent: scoring the training data
/// reproduces the self-excluded training scores, while genuine duplicates
/// still see each other at distance zero.
pub(crate) fn sorted_neighbors(train: &Matrix, point: &[f64]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = (0..train.rows())
        .map(|i| (train.row_sq_dist(i, point).sqrt(), i))
        .collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
    if let Some(pos) = out.iter().position(|&(d, _)| d == 0.0) {
        out.remove(pos);
    }
    out
}
