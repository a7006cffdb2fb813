//! Contextual refinement with a validation confusion matrix.
//!
//! `R[i][j]` is the fraction of validation samples of true class `i` whose
//! argmax prediction is `j`. A score row `f` is refined to `R · f`, so a
//! class borrows evidence from the classes it is commonly mistaken for.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{argmax, Matrix};
use crate::scores::{ScoreError, ScoreMatrix};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("{scores} score rows but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("class {class} ({name}) has no validation samples")]
    AbsentClass { class: usize, name: String },
    #[error("confusion matrix is {r}x{r} but scores have {cols} classes")]
    ClassCount { r: usize, cols: usize },
    #[error("confusion matrix is not square and row-stochastic: {0}")]
    NotStochastic(String),
    #[error("smoothing must be in [0, 1], got {0}")]
    Smoothing(f64),
    #[error(transparent)]
    Scores(#[from] ScoreError),
}

/// Row-stochastic `C × C` class-relationship matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    matrix: Matrix,
    source: String,
}

impl ConfusionMatrix {
    pub fn identity(classes: usize, source: impl Into<String>) -> Self {
        Self {
            matrix: Matrix::identity(classes),
            source: source.into(),
        }
    }

    /// Wraps a stored matrix, checking it is square with nonnegative rows
    /// summing to one within `1e-9`.
    pub fn from_matrix(matrix: Matrix, source: impl Into<String>) -> Result<Self, ContextError> {
        if matrix.rows() != matrix.cols() {
            return Err(ContextError::NotStochastic(format!(
                "shape {:?}",
                matrix.shape()
            )));
        }
        for (i, row) in matrix.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(ContextError::NotStochastic(format!(
                    "row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self {
            matrix,
            source: source.into(),
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn class_count(&self) -> usize {
        self.matrix.rows()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// `(1 − ε) R + ε I`; rows stay stochastic.
    pub fn smoothed(&self, epsilon: f64) -> Result<Self, ContextError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(ContextError::Smoothing(epsilon));
        }
        if epsilon == 0.0 {
            return Ok(self.clone());
        }
        let c = self.class_count();
        let mut m = self.matrix.scale(1.0 - epsilon);
        for i in 0..c {
            m[(i, i)] += epsilon;
        }
        Ok(Self {
            matrix: m,
            source: self.source.clone(),
        })
    }
}

pub fn build_confusion_matrix(
    predictions: &ScoreMatrix,
    labels: &[usize],
    source: impl Into<String>,
) -> Result<ConfusionMatrix, ContextError> {
    let c = predictions.num_classes();
    if predictions.num_samples() != labels.len() {
        return Err(ContextError::LengthMismatch {
            scores: predictions.num_samples(),
            labels: labels.len(),
        });
    }
    let mut counts = Matrix::zeros(c, c);
    let mut totals = vec![0usize; c];
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(ContextError::LabelOutOfRange { label, classes: c });
        }
        counts[(label, argmax(predictions.row(i)))] += 1.0;
        totals[label] += 1;
    }
    for (k, &n) in totals.iter().enumerate() {
        if n == 0 {
            return Err(ContextError::AbsentClass {
                class: k,
                name: predictions.classes()[k].clone(),
            });
        }
        let row = counts.row_mut(k);
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(ConfusionMatrix {
        matrix: counts,
        source: source.into(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    /// Use `Rᵀ · f` instead of `R · f`.
    pub transpose: bool,
    /// Rescale each refined row to sum to one.
    pub renormalize: bool,
}

pub fn refine_scores(
    r: &ConfusionMatrix,
    scores: &ScoreMatrix,
    options: RefineOptions,
) -> Result<ScoreMatrix, ContextError> {
    let c = r.class_count();
    if scores.num_classes() != c {
        return Err(ContextError::ClassCount {
            r: c,
            cols: scores.num_classes(),
        });
    }
    let op = if options.transpose {
        r.matrix.transpose()
    } else {
        r.matrix.clone()
    };
    let mut out = Matrix::zeros(scores.num_samples(), c);
    for i in 0..scores.num_samples() {
        let row = out.row_mut(i);
        op.matvec_acc(scores.row(i), row);
        if options.renormalize {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
    Ok(scores.with_values(out, scores.kind())?)
}
