//! Validated data containers: the universal detector inputs and outputs.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{OdError, Result};
use crate::matrix::Matrix;

/// An `n x d` matrix of finite feature values. The universal detector input.
///
/// Validation happens once at construction; everything downstream can assume
/// `n >= 1`, `d >= 1`, and every entry finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct DataMatrix {
    inner: Matrix,
}

impl DataMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(OdError::InvalidData(format!(
                "data matrix must be at least 1x1, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if let Some(pos) = matrix.as_slice().iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / matrix.cols(), pos % matrix.cols());
            return Err(OdError::InvalidData(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        Ok(DataMatrix { inner: matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        DataMatrix::new(Matrix::from_rows(rows)?)
    }

    /// Sample count.
    pub fn n(&self) -> usize {
        self.inner.rows()
    }

    /// Feature count.
    pub fn d(&self) -> usize {
        self.inner.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }
}

impl Deref for DataMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.inner
    }
}

impl TryFrom<Matrix> for DataMatrix {
    type Error = OdError;

    fn try_from(m: Matrix) -> Result<Self> {
        DataMatrix::new(m)
    }
}

impl From<DataMatrix> for Matrix {
    fn from(d: DataMatrix) -> Matrix {
        d.inner
    }
}

/// A dataset with optional binary anomaly labels (0 = normal, 1 = anomaly).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub data: DataMatrix,
    pub labels: Option<Vec<u8>>,
}

impl LabeledDataset {
    pub fn new(data: DataMatrix, labels: Option<Vec<u8>>) -> Result<Self> {
        if let Some(ref l) = labels {
            if l.len() != data.n() {
                return Err(OdError::InvalidData(format!(
                    "label vector length {} does not match sample count {}",
                    l.len(),
                    data.n()
                )));
            }
            if let Some(bad) = l.iter().find(|&&v| v > 1) {
                return Err(OdError::InvalidData(format!(
                    "labels must be 0 or 1, found {bad}"
                )));
            }
        }
        Ok(LabeledDataset { data, labels })
    }

    pub fn unlabeled(data: DataMatrix) -> Self {
        LabeledDataset { data, labels: None }
    }

    /// Number of positive (anomaly) labels, when labels are present.
    pub fn anomaly_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|&&v| v == 1).count())
    }
}

/// Per-sample anomaly scores; higher means more anomalous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector {
    values: Vec<f64>,
}

impl ScoreVector {
    /// Wrap raw scores, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(OdError::InvalidData(format!(
                "non-finite score at index {pos}"
            )));
        }
        Ok(ScoreVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan() {
        let m = Matrix::from_vec(2, 2, vec![1.0, f64::NAN, 0.0, 0.0]).unwrap();
        let err = DataMatrix::new(m).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    #[test]
    fn rejects_empty() {
        let m = Matrix::zeros(0, 3);
        assert!(DataMatrix::new(m).is_err());
    }

    #[test]
    fn labels_length_checked() {
        let data = DataMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(LabeledDataset::new(data.clone(), Some(vec![0])).is_err());
        assert!(LabeledDataset::new(data.clone(), Some(vec![0, 2])).is_err());
        let ok = LabeledDataset::new(data, Some(vec![0, 1])).unwrap();
        assert_eq!(ok.anomaly_count(), Some(1));
    }

    #[test]
    fn score_vector_rejects_inf() {
        assert!(ScoreVector::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(ScoreVector::new(vec![1.0, 2.0]).is_ok());
    }
}
