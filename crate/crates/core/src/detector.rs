//! The universal detector contract: one fit/score/threshold surface over all
//! nine detectors, plus the shared standardization and contamination rules.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classical::{IforestModel, KnnModel, LofModel};
use crate::data::{DataMatrix, ScoreVector};
use crate::deep::{Ae1svmModel, AeModel, DeepSvddModel, DevnetModel, LunarModel, VaeModel};
use crate::error::{OdError, Result};
use crate::matrix::Matrix;

/// The closed detector pool.
///
/// Variants are declared in lexicographic order of their lowercase names so
/// the derived `Ord` matches string order (tie-breaks and serialized maps rely
/// on this).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorId {
    Ae,
    Ae1svm,
    Deepsvdd,
    Devnet,
    Iforest,
    Knn,
    Lof,
    Lunar,
    Vae,
}

impl DetectorId {
    pub const ALL: [DetectorId; 9] = [
        DetectorId::Ae,
        DetectorId::Ae1svm,
        DetectorId::Deepsvdd,
        DetectorId::Devnet,
        DetectorId::Iforest,
        DetectorId::Knn,
        DetectorId::Lof,
        DetectorId::Lunar,
        DetectorId::Vae,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::Ae => "ae",
            DetectorId::Ae1svm => "ae1svm",
            DetectorId::Deepsvdd => "deepsvdd",
            DetectorId::Devnet => "devnet",
            DetectorId::Iforest => "iforest",
            DetectorId::Knn => "knn",
            DetectorId::Lof => "lof",
            DetectorId::Lunar => "lunar",
            DetectorId::Vae => "vae",
        }
    }

    /// True for detectors trained on the nn substrate (these always
    /// standardize their inputs).
    pub fn is_deep(self) -> bool {
        !matches!(self, DetectorId::Knn | DetectorId::Lof | DetectorId::Iforest)
    }

    /// Hyperparameter keys accepted by `fit` for this detector.
    pub fn known_hyperparams(self) -> &'static [&'static str] {
        match self {
            DetectorId::Knn | DetectorId::Lof => &["k", "standardize"],
            DetectorId::Iforest => &["n_trees", "subsample", "standardize"],
            DetectorId::Ae | DetectorId::Deepsvdd => {
                &["epochs", "batch_size", "lr", "hidden", "latent"]
            }
            DetectorId::Vae => &["epochs", "batch_size", "lr", "hidden", "latent", "beta"],
            DetectorId::Ae1svm => {
                &["epochs", "batch_size", "lr", "hidden", "latent", "nu", "alpha"]
            }
            DetectorId::Devnet => &["epochs", "batch_size", "lr", "hidden"],
            DetectorId::Lunar => {
                &["epochs", "batch_size", "lr", "hidden", "k", "negative_ratio", "epsilon"]
            }
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorId {
    type Err = OdError;

    fn from_str(s: &str) -> Result<Self> {
        DetectorId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                OdError::InvalidParam(format!(
                    "unknown detector `{s}`; valid ids: {}",
                    DetectorId::ALL.map(|i| i.as_str()).join(", ")
                ))
            })
    }
}

/// A single hyperparameter value: integer, real, or integer list (layer widths).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HpValue {
    Int(i64),
    Float(f64),
    IntList(Vec<usize>),
}

impl HpValue {
    /// Parse a CLI-style value: integer, then real, then comma-separated
    /// integer list.
    pub fn parse(text: &str) -> Result<HpValue> {
        if let Ok(v) = text.parse::<i64>() {
            return Ok(HpValue::Int(v));
        }
        if let Ok(v) = text.parse::<f64>() {
            if v.is_finite() {
                return Ok(HpValue::Float(v));
            }
        }
        if text.contains(',') {
            let items: std::result::Result<Vec<usize>, _> =
                text.split(',').map(|p| p.trim().parse::<usize>()).collect();
            if let Ok(list) = items {
                return Ok(HpValue::IntList(list));
            }
        }
        Err(OdError::InvalidParam(format!(
            "cannot parse hyperparameter value `{text}` (expected int, float, or int list)"
        )))
    }
}

/// Flat key→value hyperparameter map. Typed `take_*` accessors remove entries
/// so detector fit code can consume exactly the keys it understands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperparams(BTreeMap<String, HpValue>);

impl Hyperparams {
    pub fn new() -> Self {
        Hyperparams(BTreeMap::new())
    }

    pub fn set(&mut self, key: &str, value: HpValue) -> &mut Self {
        self.0.insert(key.to_string(), value);
        self
    }

    /// Parse one `key=value` assignment (CLI `--hp` form).
    pub fn set_from_str(&mut self, assignment: &str) -> Result<&mut Self> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            OdError::InvalidParam(format!("expected key=value, got `{assignment}`"))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(OdError::InvalidParam(format!(
                "empty hyperparameter key in `{assignment}`"
            )));
        }
        self.set(key, HpValue::parse(value.trim())?);
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(|k| k.as_str())
    }

    pub fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(HpValue::Int(v)) if v >= 0 => Ok(v as usize),
            Some(other) => Err(OdError::InvalidHyperparam {
                key: key.to_string(),
                message: format!("expected a non-negative integer, got {other:?}"),
            }),
        }
    }

    /// As `take_usize` but with no default: `None` when the key is absent.
    pub fn take_opt_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(HpValue::Int(v)) if v >= 0 => Ok(Some(v as usize)),
            Some(other) => Err(OdError::InvalidHyperparam {
                key: key.to_string(),
                message: format!("expected a non-negative integer, got {other:?}"),
            }),
        }
    }

    pub fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(HpValue::Float(v)) if v.is_finite() => Ok(v),
            Some(HpValue::Int(v)) => Ok(v as f64),
            Some(other) => Err(OdError::InvalidHyperparam {
                key: key.to_string(),
                message: format!("expected a finite number, got {other:?}"),
            }),
        }
    }

    pub fn take_usize_list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.0.remove(key) {
            None => Ok(default.to_vec()),
            Some(HpValue::IntList(v)) => Ok(v),
            Some(HpValue::Int(v)) if v >= 0 => Ok(vec![v as usize]),
            Some(other) => Err(OdError::InvalidHyperparam {
                key: key.to_string(),
                message: format!("expected an integer list, got {other:?}"),
            }),
        }
    }

    pub fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(HpValue::Int(0)) => Ok(false),
            Some(HpValue::Int(1)) => Ok(true),
            Some(other) => Err(OdError::InvalidHyperparam {
                key: key.to_string(),
                message: format!("expected 0 or 1, got {other:?}"),
            }),
        }
    }
}

/// Per-feature centering/scaling parameters captured at fit time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Population (biased) moments; near-constant columns (std < 1e-12) keep
    /// divisor 1 so they are centered but not blown up.
    pub fn fit(m: &Matrix) -> Scaler {
        let (n, d) = (m.rows(), m.cols());
        let mut mean = vec![0.0; d];
        for row in m.iter_rows() {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= n as f64;
        }
        let mut var = vec![0.0; d];
        for row in m.iter_rows() {
            for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                let c = v - mu;
                *acc += c * c;
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.dim() {
            return Err(OdError::DimensionMismatch {
                expected: self.dim(),
                actual: m.cols(),
            });
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for ((v, &mu), &sd) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.dim() {
            return Err(OdError::DimensionMismatch {
                expected: self.dim(),
                actual: m.cols(),
            });
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for ((v, &mu), &sd) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * sd + mu;
            }
        }
        Ok(out)
    }
}

/// Center and scale each column to mean 0 / population std 1 (degenerate
/// columns centered only), returning the scaler for reuse at scoring time.
pub fn standardize(data: &DataMatrix) -> Result<(DataMatrix, Scaler)> {
    let scaler = Scaler::fit(data.matrix());
    let transformed = scaler.transform(data.matrix())?;
    Ok((DataMatrix::new(transformed)?, scaler))
}

/// Convert scores to binary flags under an assumed anomaly fraction.
///
/// Flags exactly `ceil(c * n)` samples — the highest scores, ties broken by
/// lower index — and returns the smallest flagged score as the threshold.
pub fn threshold_from_contamination(
    scores: &ScoreVector,
    contamination: f64,
) -> Result<(f64, Vec<u8>)> {
    validate_contamination(contamination)?;
    let n = scores.len();
    if n == 0 {
        return Err(OdError::InvalidParam(
            "cannot derive a threshold from empty scores".into(),
        ));
    }
    let count = (contamination * n as f64).ceil() as usize;
    let count = count.clamp(1, n);
    let values = scores.values();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut flags = vec![0u8; n];
    for &i in &order[..count] {
        flags[i] = 1;
    }
    let threshold = values[order[count - 1]];
    Ok((threshold, flags))
}

pub fn validate_contamination(contamination: f64) -> Result<()> {
    if !(contamination.is_finite() && contamination > 0.0 && contamination <= 0.5) {
        return Err(OdError::InvalidParam(format!(
            "contamination must lie in (0, 0.5], got {contamination}"
        )));
    }
    Ok(())
}

/// Trained per-detector parameters, opaque to callers.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorState {
    Knn(KnnModel),
    Lof(LofModel),
    Iforest(IforestModel),
    Ae(AeModel),
    Vae(VaeModel),
    Deepsvdd(DeepSvddModel),
    Ae1svm(Ae1svmModel),
    Devnet(DevnetModel),
    Lunar(LunarModel),
}

impl DetectorState {
    fn input_dim(&self) -> usize {
        match self {
            DetectorState::Knn(m) => m.input_dim(),
            DetectorState::Lof(m) => m.input_dim(),
            DetectorState::Iforest(m) => m.input_dim(),
            DetectorState::Ae(m) => m.input_dim(),
            DetectorState::Vae(m) => m.input_dim(),
            DetectorState::Deepsvdd(m) => m.input_dim(),
            DetectorState::Ae1svm(m) => m.input_dim(),
            DetectorState::Devnet(m) => m.input_dim(),
            DetectorState::Lunar(m) => m.input_dim(),
        }
    }

    /// Score rows of an already-prepared (scaler-applied) matrix.
    fn score_rows(&self, m: &Matrix) -> Result<Vec<f64>> {
        match self {
            DetectorState::Knn(model) => model.score_rows(m),
            DetectorState::Lof(model) => model.score_rows(m),
            DetectorState::Iforest(model) => model.score_rows(m),
            DetectorState::Ae(model) => model.score_rows(m),
            DetectorState::Vae(model) => model.score_rows(m),
            DetectorState::Deepsvdd(model) => model.score_rows(m),
            DetectorState::Ae1svm(model) => model.score_rows(m),
            DetectorState::Devnet(model) => model.score_rows(m),
            DetectorState::Lunar(model) => model.score_rows(m),
        }
    }
}

/// An immutable trained detector: state, training scores, and the
/// contamination-derived threshold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FittedDetector {
    id: DetectorId,
    state: DetectorState,
    train_scores: ScoreVector,
    contamination: f64,
    threshold: f64,
    scaler: Option<Scaler>,
    seed: u64,
    hyperparams: Hyperparams,
}

impl FittedDetector {
    /// Fit a detector on unlabeled data. `devnet` requires labels and fails
    /// here; use [`FittedDetector::fit_labeled`] for it.
    pub fn fit(
        id: DetectorId,
        data: &DataMatrix,
        contamination: f64,
        hyperparams: &Hyperparams,
        seed: u64,
    ) -> Result<FittedDetector> {
        FittedDetector::fit_labeled(id, data, None, contamination, hyperparams, seed)
    }

    /// Fit with optional binary labels. Labels are consumed only by detectors
    /// that use supervision (`devnet`); others ignore them.
    pub fn fit_labeled(
        id: DetectorId,
        data: &DataMatrix,
        labels: Option<&[u8]>,
        contamination: f64,
        hyperparams: &Hyperparams,
        seed: u64,
    ) -> Result<FittedDetector> {
        validate_contamination(contamination)?;
        if let Some(l) = labels {
            if l.len() != data.n() {
                return Err(OdError::InvalidData(format!(
                    "label vector length {} does not match sample count {}",
                    l.len(),
                    data.n()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(OdError::InvalidData("labels must be 0 or 1".into()));
            }
        }
        let known = id.known_hyperparams();
        if let Some(bad) = hyperparams.keys().find(|k| !known.contains(k)) {
            return Err(OdError::UnknownHyperparam {
                detector: id.as_str().to_string(),
                key: bad.to_string(),
            });
        }
        let mut hp = hyperparams.clone();
        let scaler = if id.is_deep() {
            Some(Scaler::fit(data.matrix()))
        } else if hp.take_bool("standardize", false)? {
            Some(Scaler::fit(data.matrix()))
        } else {
            None
        };
        let prepared = match &scaler {
            Some(s) => s.transform(data.matrix())?,
            None => data.matrix().clone(),
        };
        let state = match id {
            DetectorId::Knn => DetectorState::Knn(KnnModel::fit(&prepared, &mut hp)?),
            DetectorId::Lof => DetectorState::Lof(LofModel::fit(&prepared, &mut hp)?),
            DetectorId::Iforest => {
                DetectorState::Iforest(IforestModel::fit(&prepared, &mut hp, seed)?)
            }
            DetectorId::Ae => DetectorState::Ae(AeModel::fit(&prepared, &mut hp, seed)?),
            DetectorId::Vae => DetectorState::Vae(VaeModel::fit(&prepared, &mut hp, seed)?),
            DetectorId::Deepsvdd => {
                DetectorState::Deepsvdd(DeepSvddModel::fit(&prepared, &mut hp, seed)?)
            }
            DetectorId::Ae1svm => {
                DetectorState::Ae1svm(Ae1svmModel::fit(&prepared, &mut hp, seed)?)
            }
            DetectorId::Devnet => {
                DetectorState::Devnet(DevnetModel::fit(&prepared, labels, &mut hp, seed)?)
            }
            DetectorId::Lunar => DetectorState::Lunar(LunarModel::fit(&prepared, &mut hp, seed)?),
        };
        let train_scores = ScoreVector::new(state.score_rows(&prepared)?)?;
        let (threshold, _) = threshold_from_contamination(&train_scores, contamination)?;
        Ok(FittedDetector {
            id,
            state,
            train_scores,
            contamination,
            threshold,
            scaler,
            seed,
            hyperparams: hyperparams.clone(),
        })
    }

    pub fn id(&self) -> DetectorId {
        self.id
    }

    pub fn train_scores(&self) -> &ScoreVector {
        &self.train_scores
    }

    pub fn contamination(&self) -> f64 {
        self.contamination
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    /// The fitted per-detector state.
    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    /// Feature count the detector was trained on.
    pub fn input_dim(&self) -> usize {
        self.state.input_dim()
    }

    /// Anomaly scores for new data; higher = more anomalous.
    pub fn decision_function(&self, data: &DataMatrix) -> Result<ScoreVector> {
        if data.d() != self.input_dim() {
            return Err(OdError::DimensionMismatch {
                expected: self.input_dim(),
                actual: data.d(),
            });
        }
        let prepared = match &self.scaler {
            Some(s) => s.transform(data.matrix())?,
            None => data.matrix().clone(),
        };
        ScoreVector::new(self.state.score_rows(&prepared)?)
    }

    /// Binary anomaly labels: 1 exactly where score > threshold.
    pub fn predict_labels(&self, data: &DataMatrix) -> Result<Vec<u8>> {
        let scores = self.decision_function(data)?;
        Ok(scores
            .values()
            .iter()
            .map(|&s| u8::from(s > self.threshold))
            .collect())
    }
}
