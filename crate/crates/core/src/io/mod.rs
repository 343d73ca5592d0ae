//! Dataset IO: CSV loading/saving with precise diagnostics, model
//! persistence, and the synthetic dataset generators used by the benchmark
//! and the test suite.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, LabeledDataset};
use crate::detector::FittedDetector;
use crate::error::{OdError, Result};
use crate::matrix::Matrix;

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Loads a rectangular numeric CSV. The first line is a header; a column
/// named exactly `label` (any position) is split out as {0,1} labels. Row
/// order is preserved; parse errors name the 1-based data row and column.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

fn parse_csv(text: &str) -> Result<LabeledDataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines
        .next()
        .ok_or_else(|| OdError::CsvFormat("empty file".into()))?;
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();
    let width = header.len();
    let label_col = header.iter().position(|&h| h == "label");

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for (i, line) in lines.enumerate() {
        let row_no = i + 1; // 1-based data row
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(OdError::CsvFormat(format!(
                "row {row_no} has {} cells, header has {width}",
                cells.len()
            )));
        }
        let mut features = Vec::with_capacity(width - usize::from(label_col.is_some()));
        for (c, cell) in cells.iter().enumerate() {
            if Some(c) == label_col {
                match *cell {
                    "0" => labels.push(0),
                    "1" => labels.push(1),
                    other => {
                        return Err(OdError::CsvCell {
                            row: row_no,
                            col: c + 1,
                            message: format!("label must be 0 or 1, got \"{other}\""),
                        })
                    }
                }
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| OdError::CsvCell {
                row: row_no,
                col: c + 1,
                message: format!("not a number: \"{cell}\""),
            })?;
            if !v.is_finite() {
                return Err(OdError::CsvCell {
                    row: row_no,
                    col: c + 1,
                    message: format!("non-finite value: \"{cell}\""),
                });
            }
            features.push(v);
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(OdError::CsvFormat("no data rows".into()));
    }
    let matrix = Matrix::from_rows(&rows)
        .map_err(|e| OdError::CsvFormat(e.to_string()))?;
    let data = DataMatrix::new(matrix).map_err(|e| OdError::CsvFormat(e.to_string()))?;
    match label_col {
        Some(_) => LabeledDataset::new(data, Some(labels))
            .map_err(|e| OdError::CsvFormat(e.to_string())),
        None => Ok(LabeledDataset::unlabeled(data)),
    }
}

/// Writes a dataset as CSV with header `f1..fd` (plus `label` when present).
/// Floats render in shortest round-trip decimal form, so save → load is
/// value-exact.
pub fn save_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let d = dataset.data.d();
    let mut out = String::new();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format!("f{}", j + 1));
    }
    if dataset.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in dataset.data.iter_rows().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:?}"));
        }
        if let Some(labels) = &dataset.labels {
            out.push_str(&format!(",{}", labels[i]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFileEnvelope {
    schema_version: u32,
    model: FittedDetector,
}

/// Persists a fitted detector as schema-versioned JSON with decimal floats.
pub fn save_model(model: &FittedDetector, path: &Path) -> Result<()> {
    let envelope = ModelFileEnvelope {
        schema_version: 1,
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&envelope)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Loads a model file, rejecting unknown schema versions before attempting
/// to decode the payload.
pub fn load_model(path: &Path) -> Result<FittedDetector> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| OdError::ModelFile(format!("not valid JSON: {e}")))?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| OdError::ModelFile("missing schema_version".into()))?;
    if version != 1 {
        return Err(OdError::ModelFile(format!(
            "unsupported schema_version {version}, expected 1"
        )));
    }
    let envelope: ModelFileEnvelope = serde_json::from_value(value)
        .map_err(|e| OdError::ModelFile(format!("malformed model payload: {e}")))?;
    Ok(envelope.model)
}

// ---------------------------------------------------------------------------
// Synthetic datasets
// ---------------------------------------------------------------------------

/// The six generator families. Each produces n=500 rows with 25 planted
/// anomalies (5%), deterministically per seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Blob,
    HighdimSparse,
    Skewed,
    Correlated,
    Multimodal,
    LabeledSemi,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 6] = [
        SyntheticKind::Blob,
        SyntheticKind::HighdimSparse,
        SyntheticKind::Skewed,
        SyntheticKind::Correlated,
        SyntheticKind::Multimodal,
        SyntheticKind::LabeledSemi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SyntheticKind::Blob => "blob",
            SyntheticKind::HighdimSparse => "highdim_sparse",
            SyntheticKind::Skewed => "skewed",
            SyntheticKind::Correlated => "correlated",
            SyntheticKind::Multimodal => "multimodal",
            SyntheticKind::LabeledSemi => "labeled_semi",
        }
    }

    /// Datasets of this kind declare labels available at selection time.
    pub fn semi_supervised(&self) -> bool {
        matches!(self, SyntheticKind::LabeledSemi)
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = OdError;

    fn from_str(s: &str) -> Result<SyntheticKind> {
        SyntheticKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| {
                OdError::InvalidParam(format!(
                    "unknown synthetic kind \"{s}\"; one of: {}",
                    SyntheticKind::ALL.map(|k| k.as_str()).join(", ")
                ))
            })
    }
}

/// A generated dataset with its planted-anomaly bookkeeping.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub dataset: LabeledDataset,
    /// Row indices of the planted anomalies after shuffling; matches the
    /// positions of 1s in the labels exactly.
    pub anomaly_indices: Vec<usize>,
}

const SYNTH_N: usize = 500;
const SYNTH_ANOMALIES: usize = 25;

pub(crate) fn fnv1a64(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic generator: same (kind, seed) → identical dataset.
pub fn make_synthetic(kind: SyntheticKind, seed: u64) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(kind.as_str()));
    let n_normal = SYNTH_N - SYNTH_ANOMALIES;
    let (normals, anomalies) = match kind {
        // labeled_semi shares the blob geometry; only its selection-time
        // label exposure differs
        SyntheticKind::Blob | SyntheticKind::LabeledSemi => blob_rows(n_normal, &mut rng),
        SyntheticKind::HighdimSparse => sparse_rows(n_normal, &mut rng),
        SyntheticKind::Skewed => skewed_rows(n_normal, &mut rng),
        SyntheticKind::Correlated => correlated_rows(n_normal, &mut rng),
        SyntheticKind::Multimodal => multimodal_rows(n_normal, &mut rng),
    };

    let mut rows: Vec<(Vec<f64>, u8)> = normals
        .into_iter()
        .map(|r| (r, 0u8))
        .chain(anomalies.into_iter().map(|r| (r, 1u8)))
        .collect();
    rows.shuffle(&mut rng);

    let labels: Vec<u8> = rows.iter().map(|(_, y)| *y).collect();
    let anomaly_indices: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == 1)
        .map(|(i, _)| i)
        .collect();
    let features: Vec<Vec<f64>> = rows.into_iter().map(|(r, _)| r).collect();
    let data = DataMatrix::new(Matrix::from_rows(&features).expect("rectangular"))
        .expect("finite synthetic data");
    let dataset = LabeledDataset::new(data, Some(labels)).expect("consistent labels");
    SyntheticDataset { dataset, anomaly_indices }
}

fn normal_row(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// 8-D standard gaussian bulk; anomalies drawn uniformly in [−6,6]⁸ and
/// rejection-sampled to lie at radius ≥ 4 from the origin.
fn blob_rows(n_normal: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = 8;
    let normals = (0..n_normal).map(|_| normal_row(d, rng)).collect();
    let mut anomalies = Vec::with_capacity(SYNTH_ANOMALIES);
    while anomalies.len() < SYNTH_ANOMALIES {
        let row: Vec<f64> = (0..d).map(|_| rng.random_range(-6.0..6.0)).collect();
        if row.iter().map(|v| v * v).sum::<f64>().sqrt() >= 4.0 {
            anomalies.push(row);
        }
    }
    (normals, anomalies)
}

/// 100-D with ~70% exact zeros; anomalies are denser (60% nonzero) and
/// larger-scaled.
fn sparse_rows(n_normal: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = 100;
    let draw = |nonzero_p: f64, scale: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|_| {
                if rng.random::<f64>() < nonzero_p {
                    let v: f64 = StandardNormal.sample(rng);
                    scale * v
                } else {
                    0.0
                }
            })
            .collect()
    };
    let normals = (0..n_normal).map(|_| draw(0.3, 1.0, rng)).collect();
    let anomalies = (0..SYNTH_ANOMALIES).map(|_| draw(0.6, 2.0, rng)).collect();
    (normals, anomalies)
}

/// 15-D lognormal features; anomalies shift the log-mean by 2.5.
fn skewed_rows(n_normal: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = 15;
    let draw = |shift: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                (shift + z).exp()
            })
            .collect()
    };
    let normals = (0..n_normal).map(|_| draw(0.0, rng)).collect();
    let anomalies = (0..SYNTH_ANOMALIES).map(|_| draw(2.5, rng)).collect();
    (normals, anomalies)
}

/// 20-D single-latent-factor data (pairwise correlation 0.58); anomalies are
/// independent noise with the same marginals, violating the factor structure.
fn correlated_rows(n_normal: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = 20;
    let a = 0.58f64.sqrt();
    let b = (1.0 - 0.58f64).sqrt();
    let normals = (0..n_normal)
        .map(|_| {
            let f: f64 = StandardNormal.sample(rng);
            (0..d)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(rng);
                    a * f + b * e
                })
                .collect()
        })
        .collect();
    let anomalies = (0..SYNTH_ANOMALIES).map(|_| normal_row(d, rng)).collect();
    (normals, anomalies)
}

/// 6-D mixture of two unit gaussians at ±3·𝟙; anomalies sit between the
/// modes, tightly around the origin.
fn multimodal_rows(n_normal: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = 6;
    let normals = (0..n_normal)
        .map(|i| {
            let center = if i % 2 == 0 { 3.0 } else { -3.0 };
            (0..d)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(rng);
                    center + e
                })
                .collect()
        })
        .collect();
    let anomalies = (0..SYNTH_ANOMALIES)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(rng);
                    0.5 * e
                })
                .collect()
        })
        .collect();
    (normals, anomalies)
}

/// Keeps only the `budget` lowest-index positive labels, zeroing the rest —
/// the semi-supervised view detectors and the selector get at fit time.
pub fn censor_labels(labels: &[u8], budget: usize) -> Vec<u8> {
    let mut kept = 0usize;
    labels
        .iter()
        .map(|&y| {
            if y == 1 && kept < budget {
                kept += 1;
                1
            } else {
                0
            }
        })
        .collect()
}
