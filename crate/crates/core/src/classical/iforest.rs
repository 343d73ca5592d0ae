use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::Hyperparams;
use crate::error::{OdError, Result};
use crate::matrix::Matrix;

const EULER_GAMMA: f64 = 0.5772156649015329;

/// Expected unsuccessful-search path length in a BST of m points; the
/// normalizer c(·) and the credit assigned to capacity-limited leaves.
fn avg_path_length(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = m as f64;
            2.0 * ((m - 1.0).ln() + EULER_GAMMA) - 2.0 * (m - 1.0) / m
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

/// One isolation tree; nodes are stored flat with the root at index 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn path_length(&self, point: &[f64]) -> f64 {
        let mut idx = 0;
        let mut depth = 0.0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { size } => return depth + avg_path_length(*size),
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    idx = if point[*feature] < *value { *left } else { *right };
                    depth += 1.0;
                }
            }
        }
    }
}

/// Isolation forest: anomalies isolate in few random axis-aligned splits, so
/// short average path lengths map to scores near 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IforestModel {
    trees: Vec<Tree>,
    psi: usize,
    dim: usize,
}

impl IforestModel {
    /// Keys: `n_trees` (default 100), `subsample` (default min(256, n)).
    pub fn fit(prepared: &Matrix, hp: &mut Hyperparams, seed: u64) -> Result<IforestModel> {
        let n = prepared.rows();
        let n_trees = hp.take_usize("n_trees", 100)?;
        if n_trees == 0 {
            return Err(OdError::InvalidHyperparam {
                key: "n_trees".into(),
                message: "need at least one tree".into(),
            });
        }
        let psi = hp.take_usize("subsample", n.min(256))?.clamp(1, n);
        let max_depth = if psi <= 1 {
            0
        } else {
            (usize::BITS - (psi - 1).leading_zeros()) as usize
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..n_trees)
            .map(|_| {
                let sample = rand::seq::index::sample(&mut rng, n, psi).into_vec();
                let mut nodes = Vec::new();
                build_node(prepared, &sample, 0, max_depth, &mut rng, &mut nodes);
                Tree { nodes }
            })
            .collect();
        Ok(IforestModel {
            trees,
            psi,
            dim: prepared.cols(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn score_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        let norm = avg_path_length(self.psi).max(1e-12);
        Ok(m.iter_rows()
            .map(|row| {
                let mean_path = self
                    .trees
                    .iter()
                    .map(|t| t.path_length(row))
                    .sum::<f64>()
                    / self.trees.len() as f64;
                 2f64.powf(-mean_path / norm)
            })
            .collect())
    }
}

fn build_node(
    m: &Matrix,
    rows: &[usize],
    depth: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    if rows.len() <= 1 || depth >= max_depth {
        nodes.push(Node::Leaf { size: rows.len() });
        return nodes.len() - 1;
    }
    // pick a feature with spread; constant features are resampled up to d
    // times, after which the node goes external
    let d = m.cols();
    let mut split = None;
    for _ in 0..d {
        let f = rng.random_range(0..d);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows {
            let v = m.get(r, f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            split = Some((f, lo, hi));
            break;
        }
    }
    let Some((feature, lo, hi)) = split else {
        nodes.push(Node::Leaf { size: rows.len() });
        return nodes.len() - 1;
    };
    let mut value = lo + rng.random::<f64>() * (hi - lo);
    if value <= lo {
        // measure-zero draw at the boundary; keep both children non-empty
        value = lo + (hi - lo) / 2.0;
    }
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| m.get(r, feature) < value);
    let placeholder = nodes.len();
    nodes.push(Node::Leaf { size: 0 });
    let left = build_node(m, &left_rows, depth + 1, max_depth, rng, nodes);
    let right = build_node(m, &right_rows, depth + 1, max_depth, rng, nodes);
    nodes[placeholder] = Node::Split {
        feature,
        value,
        left,
        right,
    };
    placeholder
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::HpValue;

    fn line_with_outlier() -> Matrix {
        let mut rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        rows.push(vec![10.0]);
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn isolated_point_scores_highest() {
        let m = line_with_outlier();
        for seed in [0, 1, 7] {
            let mut hp = Hyperparams::new();
            hp.set("n_trees", HpValue::Int(200));
            let model = IforestModel::fit(&m, &mut hp, seed).unwrap();
            let scores = model.score_rows(&m).unwrap();
            let argmax = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 10, "seed {seed} scores {scores:?}");
        }
    }

    #[test]
    fn scores_lie_in_unit_interval() {
        let m = line_with_outlier();
        let model = IforestModel::fit(&m, &mut Hyperparams::new(), 3).unwrap();
        for s in model.score_rows(&m).unwrap() {
            assert!(s > 0.0 && s < 1.0, "score {s} out of (0,1)");
        }
    }

    #[test]
    fn subsample_one_gives_flat_scores() {
        let m = line_with_outlier();
        let mut hp = Hyperparams::new();
        hp.set("subsample", HpValue::Int(1));
        let model = IforestModel::fit(&m, &mut hp, 0).unwrap();
        let scores = model.score_rows(&m).unwrap();
        for s in &scores {
            assert_eq!(*s, scores[0]);
        }
    }

    #[test]
    fn duplicate_rows_get_identical_scores() {
        let m = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![1.0, 2.0],
            vec![0.0, 0.0],
            vec![5.0, 5.0],
        ])
        .unwrap();
        let model = IforestModel::fit(&m, &mut Hyperparams::new(), 11).unwrap();
        let scores = model.score_rows(&m).unwrap();
        assert_eq!(scores[0], scores[1]);
    }

    #[test]
    fn same_seed_same_forest_scores() {
        let m = line_with_outlier();
        let a = IforestModel::fit(&m, &mut Hyperparams::new(), 5).unwrap();
        let b = IforestModel::fit(&m, &mut Hyperparams::new(), 5).unwrap();
        assert_eq!(a.score_rows(&m).unwrap(), b.score_rows(&m).unwrap());
    }

    #[test]
    fn tree_depth_respects_cap() {
        let m = line_with_outlier();
        let mut hp = Hyperparams::new();
        hp.set("subsample", HpValue::Int(8));
        let model = IforestModel::fit(&m, &mut hp, 2).unwrap();
        // cap = ceil(log2 8) = 3 splits on any root-to-leaf walk
        for tree in &model.trees {
            let max_depth = deepest(tree, 0, 0);
            assert!(max_depth <= 3, "tree depth {max_depth}");
        }
    }

    fn deepest(tree: &Tree, idx: usize, depth: usize) -> usize {
        match &tree.nodes[idx] {
            Node::Leaf { .. } => depth,
            Node::Split { left, right, .. } => {
                deepest(tree, *left, depth + 1).max(deepest(tree, *right, depth + 1))
            }
        }
    }

    #[test]
    fn normalizer_hand_values() {
        assert_eq!(avg_path_length(0), 0.0);
        assert_eq!(avg_path_length(1), 0.0);
        assert_eq!(avg_path_length(2), 1.0);
        // c(256) = 2(ln 255 + γ) − 510/256, evaluated independently
        assert!((avg_path_length(256) - 10.24477092011992).abs() < 1e-9);
    }
}
