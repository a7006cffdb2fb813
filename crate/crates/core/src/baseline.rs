//! Order-agnostic reference classifier: multinomial logistic regression on
//! temporally mean-pooled features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{argmax, softmax_in_place, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index} has {found} features, expected {expected}")]
    Dims {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 500,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSoftmax {
    /// `C × d`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl PooledSoftmax {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b.clone();
        self.w.matvec_acc(x, &mut z);
        softmax_in_place(&mut z);
        z
    }

    pub fn accuracy(&self, data: &[(Vec<f64>, usize)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .iter()
            .filter(|(x, y)| argmax(&self.predict(x)) == *y)
            .count();
        hits as f64 / data.len() as f64
    }
}

/// Full-batch gradient descent on mean cross-entropy plus weight decay.
pub fn train_pooled_softmax(
    cfg: &BaselineConfig,
    data: &[(Vec<f64>, usize)],
    num_classes: usize,
) -> Result<PooledSoftmax, BaselineError> {
    let d = data.first().ok_or(BaselineError::EmptyDataset)?.0.len();
    for (index, (x, y)) in data.iter().enumerate() {
        if x.len() != d {
            return Err(BaselineError::Dims {
                index,
                expected: d,
                found: x.len(),
            });
        }
        if *y >= num_classes {
            return Err(BaselineError::LabelOutOfRange {
                label: *y,
                classes: num_classes,
            });
        }
    }
    let mut model = PooledSoftmax {
        w: Matrix::zeros(num_classes, d),
        b: vec![0.0; num_classes],
    };
    let scale = 1.0 / data.len() as f64;
    for epoch in 0..cfg.epochs {
        let mut gw = model.w.scale(2.0 * cfg.weight_decay);
        let mut gb = vec![0.0; num_classes];
        let mut loss = 0.0;
        for (x, y) in data {
            let mut p = model.predict(x);
            loss -= p[*y].ln() * scale;
            p[*y] -= 1.0;
            p.iter_mut().for_each(|v| *v *= scale);
            gw.add_outer(&p, x);
            gb.iter_mut().zip(&p).for_each(|(g, v)| *g += v);
        }
        if !loss.is_finite() {
            return Err(BaselineError::Divergence { epoch });
        }
        model.w.axpy(-cfg.learning_rate, &gw).expect("same shape");
        model
            .b
            .iter_mut()
            .zip(&gb)
            .for_each(|(b, g)| *b -= cfg.learning_rate * g);
    }
    Ok(model)
}
