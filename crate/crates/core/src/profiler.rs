//! Dataset profiling: the statistical attribute set that drives tag mapping
//! and model selection.

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::detector::standardize;
use crate::matrix::{sq_dist, Matrix};

/// Guard threshold shared with the standardization rule: a spread below this
/// is treated as zero and its divisor replaced by 1.0.
const STD_FLOOR: f64 = 1e-12;

/// Statistical summary of a dataset. All fields are finite; fractions lie in
/// their stated ranges. Serializes to a flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    /// Number of samples.
    pub n: usize,
    /// Number of features.
    pub d: usize,
    /// Fraction of anomalous rows, when labels were supplied.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub anomaly_ratio: Option<f64>,
    /// Mean per-feature population skewness.
    pub skew_mean: f64,
    /// Maximum per-feature population skewness.
    pub skew_max: f64,
    /// Mean per-feature population excess kurtosis (normal ⇒ 0).
    pub kurt_mean: f64,
    /// Maximum per-feature population excess kurtosis.
    pub kurt_max: f64,
    /// Fraction of total variance outside the top ⌈√d⌉ principal components
    /// of the standardized data, in [0, 1].
    pub noise_level: f64,
    /// Fraction of exact-zero entries, in [0, 1].
    pub sparsity: f64,
    /// Mean |pairwise Pearson correlation| over feature pairs (0 when d = 1).
    pub corr_mean: f64,
    /// log10(max feature std / min nonzero feature std); 0 when degenerate.
    pub scale_spread: f64,
    /// Between-cluster variance share of 2-means on standardized data, [0, 1].
    pub bimodality: f64,
}

/// Computes the full profile. Deterministic: population moments throughout,
/// PCA via eigen-decomposition of the standardized covariance, and 2-means
/// with fixed seed 0, 10 iterations, farthest-point init.
pub fn profile(data: &DataMatrix, labels: Option<&[u8]>) -> DatasetProfile {
    let (n, d) = (data.n(), data.d());
    let nf = n as f64;
    let anomaly_ratio = labels.map(|l| {
        let pos = l.iter().filter(|&&y| y == 1).count();
        if l.is_empty() { 0.0 } else { pos as f64 / l.len() as f64 }
    });

    // per-feature moments (population)
    let mut skews = Vec::with_capacity(d);
    let mut kurts = Vec::with_capacity(d);
    let mut stds = Vec::with_capacity(d);
    for c in 0..d {
        let col = data.column(c);
        let mean = col.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in &col {
            let dev = v - mean;
            let d2 = dev * dev;
            m2 += d2;
            m3 += d2 * dev;
            m4 += d2 * d2;
        }
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        let std = m2.sqrt();
        stds.push(std);
        // degenerate columns follow the standardize rule: divisor becomes 1
        let div = if std < STD_FLOOR { 1.0 } else { std };
        skews.push(m3 / (div * div * div));
        kurts.push(m4 / (div * div * div * div) - 3.0);
    }
    let agg = |vals: &[f64]| -> (f64, f64) {
        if vals.is_empty() {
            return (0.0, 0.0);
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (mean, max)
    };
    let (skew_mean, skew_max) = agg(&skews);
    let (kurt_mean, kurt_max) = agg(&kurts);

    let sparsity = data
        .as_slice()
        .iter()
        .filter(|&&v| v == 0.0)
        .count() as f64
        / (n * d) as f64;

    let scale_spread = {
        let max = stds.iter().cloned().fold(0.0_f64, f64::max);
        let min_nz = stds
            .iter()
            .cloned()
            .filter(|&s| s >= STD_FLOOR)
            .fold(f64::INFINITY, f64::min);
        if max < STD_FLOOR || !min_nz.is_finite() {
            0.0
        } else {
            (max / min_nz).log10()
        }
    };

    let corr_mean = mean_abs_correlation(data, &stds);

    // standardized copy feeds both the PCA noise share and 2-means
    let standardized = standardize(data)
        .expect("validated data standardizes")
        .0;
    let noise_level = trailing_variance_share(&standardized);
    let bimodality = two_means_between_share(&standardized);

    DatasetProfile {
        n,
        d,
        anomaly_ratio,
        skew_mean,
        skew_max,
        kurt_mean,
        kurt_max,
        noise_level,
        sparsity,
        corr_mean,
        scale_spread,
        bimodality,
    }
}

/// Stable one-paragraph rendering of a profile, used verbatim in prompts.
/// Field order is fixed; `anomaly_ratio` is omitted when absent.
pub fn profile_summary_text(p: &DatasetProfile) -> String {
    let mut s = format!("Dataset profile: n={}, d={}", p.n, p.d);
    if let Some(r) = p.anomaly_ratio {
        s.push_str(&format!(", anomaly_ratio={r:.4}"));
    }
    s.push_str(&format!(
        ", skew_mean={:.4}, skew_max={:.4}, kurt_mean={:.4}, kurt_max={:.4}, \
         noise_level={:.4}, sparsity={:.4}, corr_mean={:.4}, scale_spread={:.4}, \
         bimodality={:.4}.",
        p.skew_mean,
        p.skew_max,
        p.kurt_mean,
        p.kurt_max,
        p.noise_level,
        p.sparsity,
        p.corr_mean,
        p.scale_spread,
        p.bimodality
    ));
    s
}

fn mean_abs_correlation(data: &DataMatrix, stds: &[f64]) -> f64 {
    let (n, d) = (data.n(), data.d());
    if d < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let means: Vec<f64> = (0..d)
        .map(|c| data.column(c).iter().sum::<f64>() / nf)
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..d {
        for j in (i + 1)..d {
            let mut cov = 0.0;
            for r in 0..n {
                cov += (data.get(r, i) - means[i]) * (data.get(r, j) - means[j]);
            }
            cov /= nf;
            let di = if stds[i] < STD_FLOOR { 1.0 } else { stds[i] };
            let dj = if stds[j] < STD_FLOOR { 1.0 } else { stds[j] };
            total += (cov / (di * dj)).abs();
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Share of total variance outside the top ⌈√d⌉ eigenvalues of the covariance.
fn trailing_variance_share(standardized: &Matrix) -> f64 {
    let d = standardized.cols();
    let cov = covariance(standardized);
    let mut eig = jacobi_eigenvalues(cov);
    eig.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let total: f64 = eig.iter().map(|&v| v.max(0.0)).sum();
    if total < STD_FLOOR {
        return 0.0;
    }
    let keep = (d as f64).sqrt().ceil() as usize;
    let trailing: f64 = eig.iter().skip(keep).map(|&v| v.max(0.0)).sum();
    (trailing / total).clamp(0.0, 1.0)
}

fn covariance(m: &Matrix) -> Vec<Vec<f64>> {
    let (n, d) = (m.rows(), m.cols());
    let nf = n as f64;
    let means: Vec<f64> = (0..d).map(|c| m.column(c).iter().sum::<f64>() / nf).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for row in m.iter_rows() {
        for i in 0..d {
            let di = row[i] - means[i];
            for j in i..d {
                cov[i][j] += di * (row[j] - means[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= nf;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Returns the
/// (unsorted) eigenvalues once off-diagonal mass is negligible.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let d = a.len();
    if d == 0 {
        return Vec::new();
    }
    let scale: f64 = a
        .iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
        .max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= 1e-12 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                // classic 2×2 symmetric Schur rotation
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| a[i][i]).collect()
}

/// Between-cluster variance share of a 2-means run (10 Lloyd iterations,
/// farthest-point init) on already-standardized data. The init picks the
/// point farthest from the grand mean, then the point farthest from it —
/// fully deterministic and invariant to duplicating every row.
fn two_means_between_share(m: &Matrix) -> f64 {
    let (n, d) = (m.rows(), m.cols());
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..d).map(|c| m.column(c).iter().sum::<f64>() / nf).collect();
    let total: f64 = m.iter_rows().map(|row| sq_dist(row, &mean)).sum();
    if total < STD_FLOOR {
        return 0.0;
    }

    let farthest_from = |target: &[f64]| {
        (0..n)
            .max_by(|&a, &b| {
                let da = sq_dist(m.row(a), target);
                let db = sq_dist(m.row(b), target);
                da.partial_cmp(&db).expect("finite distances")
            })
            .expect("n >= 2")
    };
    let first = farthest_from(&mean);
    let second = farthest_from(m.row(first));
    let mut centers = [m.row(first).to_vec(), m.row(second).to_vec()];
    let mut assign = vec![0usize; n];
    for _ in 0..10 {
        for (r, row) in m.iter_rows().enumerate() {
            let d0 = sq_dist(row, &centers[0]);
            let d1 = sq_dist(row, &centers[1]);
            assign[r] = usize::from(d1 < d0);
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&r| assign[r] == c).collect();
            if members.is_empty() {
                continue; // empty cluster keeps its previous center
            }
            for v in center.iter_mut() {
                *v = 0.0;
            }
            for &r in &members {
                for (v, x) in center.iter_mut().zip(m.row(r)) {
                    *v += x;
                }
            }
            for v in center.iter_mut() {
                *v /= members.len() as f64;
            }
        }
    }
    let mut between = 0.0;
    for c in 0..2 {
        let count = assign.iter().filter(|&&a| a == c).count() as f64;
        between += count * sq_dist(&centers[c], &mean);
    }
    (between / total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dm(rows: &[Vec<f64>]) -> DataMatrix {
        DataMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn dimensions_and_ratio_are_reported() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1];
        let p = profile(&dm(&rows), Some(&labels));
        assert_eq!(p.n, 10);
        assert_eq!(p.d, 2);
        assert_eq!(p.anomaly_ratio, Some(0.2));
        assert_eq!(profile(&dm(&rows), None).anomaly_ratio, None);
    }

    #[test]
    fn moment_oracle_one_to_five() {
        // feature (1,2,3,4,5): skewness exactly 0, excess kurtosis 6.8/4 - 3
        let rows: Vec<Vec<f64>> = (1..=5).map(|i| vec![i as f64]).collect();
        let p = profile(&dm(&rows), None);
        assert!(p.skew_mean.abs() < 1e-12, "skew {}", p.skew_mean);
        assert!((p.kurt_mean - (-1.3)).abs() < 1e-12, "kurt {}", p.kurt_mean);
        assert_eq!(p.corr_mean, 0.0, "single column has no pairs");
    }

    #[test]
    fn rank_one_data_has_zero_noise_level() {
        // 4-D points exactly on a line: one principal component carries all
        // variance, so nothing lies outside the top ⌈√4⌉ = 2 components
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 / 7.0;
                vec![t, 2.0 * t - 1.0, -0.5 * t, 3.0 * t + 2.0]
            })
            .collect();
        let p = profile(&dm(&rows), None);
        assert!(p.noise_level.abs() < 1e-9, "noise {}", p.noise_level);
    }

    #[test]
    fn isotropic_noise_has_high_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..9).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        // 9 isotropic dims, keep ⌈√9⌉ = 3 → roughly 6/9 of variance trails
        let p = profile(&dm(&rows), None);
        assert!(p.noise_level > 0.5, "noise {}", p.noise_level);
        assert!(p.noise_level < 0.75, "noise {}", p.noise_level);
    }

    #[test]
    fn sparsity_counts_exact_zeros() {
        let rows = vec![vec![0.0, 1.0, 0.0], vec![2.0, 0.0, 3.0]];
        let p = profile(&dm(&rows), None);
        assert!((p.sparsity - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfectly_correlated_columns_score_one() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, -3.0 * i as f64]).collect();
        let p = profile(&dm(&rows), None);
        assert!((p.corr_mean - 1.0).abs() < 1e-12, "corr {}", p.corr_mean);
    }

    #[test]
    fn independent_columns_have_small_corr_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..10000)
            .map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let p = profile(&dm(&rows), None);
        assert!(p.corr_mean < 0.1, "corr {}", p.corr_mean);
    }

    #[test]
    fn scale_spread_is_log10_ratio() {
        // stds: column0 ~ s, column1 ~ 100 s → spread = 2
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![i as f64, 100.0 * i as f64])
            .collect();
        let p = profile(&dm(&rows), None);
        assert!((p.scale_spread - 2.0).abs() < 1e-12, "spread {}", p.scale_spread);
    }

    #[test]
    fn two_well_separated_modes_have_high_bimodality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let shift = if i % 2 == 0 { 4.0 } else { -4.0 };
                (0..3)
                    .map(|_| {
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        shift + 0.3 * eps
                    })
                    .collect()
            })
            .collect();
        let p = profile(&dm(&rows), None);
        assert!(p.bimodality > 0.9, "bimodality {}", p.bimodality);
    }

    #[test]
    fn single_blob_has_moderate_bimodality() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let p = profile(&dm(&rows), None);
        // a split through one gaussian explains well under half the variance
        assert!(p.bimodality < 0.5, "bimodality {}", p.bimodality);
    }

    #[test]
    fn scale_invariance_of_shape_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<Vec<f64>> = (0..150)
            .map(|_| {
                (0..6)
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        v.powi(3)
                    })
                    .collect()
            })
            .collect();
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v * 37.5).collect())
            .collect();
        let a = profile(&dm(&rows), None);
        let b = profile(&dm(&scaled), None);
        for (x, y) in [
            (a.skew_mean, b.skew_mean),
            (a.kurt_mean, b.kurt_mean),
            (a.corr_mean, b.corr_mean),
            (a.noise_level, b.noise_level),
            (a.bimodality, b.bimodality),
            (a.scale_spread, b.scale_spread),
        ] {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn duplicating_rows_changes_only_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let mut doubled = rows.clone();
        doubled.extend(rows.iter().cloned());
        let a = profile(&dm(&rows), None);
        let b = profile(&dm(&doubled), None);
        assert_eq!(b.n, 2 * a.n);
        for (x, y) in [
            (a.skew_mean, b.skew_mean),
            (a.skew_max, b.skew_max),
            (a.kurt_mean, b.kurt_mean),
            (a.kurt_max, b.kurt_max),
            (a.noise_level, b.noise_level),
            (a.sparsity, b.sparsity),
            (a.corr_mean, b.corr_mean),
            (a.scale_spread, b.scale_spread),
            (a.bimodality, b.bimodality),
        ] {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn summary_text_fixed_order_and_optional_ratio() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let labels = vec![0, 0, 0, 0, 0, 1, 0, 0, 0, 0];
        let with = profile(&dm(&rows), Some(&labels));
        let without = profile(&dm(&rows), None);
        let t1 = profile_summary_text(&with);
        let t2 = profile_summary_text(&without);
        let n_pos = t1.find("n=").unwrap();
        let d_pos = t1.find("d=").unwrap();
        let skew_pos = t1.find("skew_mean=").unwrap();
        assert!(n_pos < d_pos && d_pos < skew_pos, "field order broke: {t1}");
        assert!(t1.contains("anomaly_ratio=0.1000"));
        assert!(!t2.contains("anomaly_ratio"));
        assert_eq!(t2, profile_summary_text(&without), "must be deterministic");
    }

    #[test]
    fn constant_columns_stay_finite() {
        let rows = vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 3.0]];
        let p = profile(&dm(&rows), None);
        assert!(p.skew_mean.is_finite() && p.kurt_mean.is_finite());
        assert!(p.corr_mean.is_finite() && p.scale_spread.is_finite());
        assert!(p.noise_level.is_finite() && p.bimodality.is_finite());
    }

    #[test]
    fn profile_serializes_flat_and_round_trips() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, 1.0 - i as f64]).collect();
        let p = profile(&dm(&rows), None);
        let json = serde_json::to_string(&p).unwrap();
        assert!(!json.contains("anomaly_ratio"), "absent field must be omitted");
        let back: DatasetProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn jacobi_matches_hand_eigenvalues() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1
        let mut eig = jacobi_eigenvalues(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((eig[0] - 3.0).abs() < 1e-12);
        assert!((eig[1] - 1.0).abs() < 1e-12);
    }
}
