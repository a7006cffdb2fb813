//! Weighted averaging of per-model probability scores.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scores::{ScoreError, ScoreKind, ScoreMatrix};

#[derive(Debug, Error)]
pub enum ScoreFusionError {
    #[error("no score sources given")]
    NoSources,
    #[error("{sources} sources but {weights} weights")]
    WeightCount { sources: usize, weights: usize },
    #[error("weights must be finite, nonnegative, and not all zero")]
    InvalidWeights,
    #[error("source {source_index} has {found} samples, expected {expected}")]
    SampleCount {
        source_index: usize,
        expected: usize,
        found: usize,
    },
    #[error("source {source_index} diverges at row {row}: id {found:?}, expected {expected:?}")]
    IdMismatch {
        source_index: usize,
        row: usize,
        expected: String,
        found: String,
    },
    #[error("source {source_index} has a different class manifest")]
    ClassMismatch { source_index: usize },
    #[error("source {source_index} holds logits; only probability scores can be averaged")]
    Logits { source_index: usize },
    #[error(transparent)]
    Scores(#[from] ScoreError),
}

/// Nonnegative weights normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights(Vec<f64>);

impl FusionWeights {
    pub fn equal(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn new(raw: &[f64]) -> Result<Self, ScoreFusionError> {
        if raw.is_empty() {
            return Err(ScoreFusionError::NoSources);
        }
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ScoreFusionError::InvalidWeights);
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(ScoreFusionError::InvalidWeights);
        }
        Ok(Self(raw.iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn fuse_scores(
    sources: &[&ScoreMatrix],
    weights: &FusionWeights,
) -> Result<ScoreMatrix, ScoreFusionError> {
    let first = *sources.first().ok_or(ScoreFusionError::NoSources)?;
    if sources.len() != weights.len() {
        return Err(ScoreFusionError::WeightCount {
            sources: sources.len(),
            weights: weights.len(),
        });
    }
    for (si, s) in sources.iter().enumerate() {
        if s.kind() == ScoreKind::Logit {
            return Err(ScoreFusionError::Logits { source_index: si });
        }
        if s.classes() != first.classes() {
            return Err(ScoreFusionError::ClassMismatch { source_index: si });
        }
        if s.num_samples() != first.num_samples() {
            return Err(ScoreFusionError::SampleCount {
                source_index: si,
                expected: first.num_samples(),
                found: s.num_samples(),
            });
        }
        if let Some(row) = (0..first.num_samples()).find(|&r| s.ids()[r] != first.ids()[r]) {
            return Err(ScoreFusionError::IdMismatch {
                source_index: si,
                row,
                expected: first.ids()[row].clone(),
                found: s.ids()[row].clone(),
            });
        }
    }
    let mut out = Matrix::zeros(first.num_samples(), first.num_classes());
    for (s, &w) in sources.iter().zip(weights.as_slice()) {
        out.axpy(w, s.values()).expect("shapes checked");
    }
    Ok(first.with_values(out, ScoreKind::Probability)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RngStream;
    use proptest::prelude::*;

    fn table(ids: &[&str], rows: &[Vec<f64>]) -> ScoreMatrix {
        ScoreMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            (0..rows[0].len()).map(|k| format!("c{k}")).collect(),
            Matrix::from_rows(rows).unwrap(),
            ScoreKind::Probability,
        )
        .unwrap()
    }

    #[test]
    fn equal_weights_average() {
        let a = table(&["x", "y"], &[vec![0.2, 0.8], vec![0.6, 0.4]]);
        let b = table(&["x", "y"], &[vec![0.4, 0.6], vec![1.0, 0.0]]);
        let f = fuse_scores(&[&a, &b], &FusionWeights::equal(2)).unwrap();
        let expected = [0.3, 0.7, 0.8, 0.2];
        for (v, e) in f.values().as_slice().iter().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_weights_select_source() {
        let a = table(&["x"], &[vec![0.25, 0.75]]);
        let b = table(&["x"], &[vec![0.9, 0.1]]);
        let f = fuse_scores(&[&a, &b], &FusionWeights::new(&[1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(f, a);
    }

    #[test]
    fn single_source_is_identity() {
        let a = table(&["x", "y"], &[vec![0.1, 0.9], vec![0.55, 0.45]]);
        assert_eq!(fuse_scores(&[&a], &FusionWeights::equal(1)).unwrap(), a);
    }

    #[test]
    fn id_mismatch_names_first_divergent_id() {
        let a = table(&["x", "y", "z"], &[vec![1.0], vec![1.0], vec![1.0]]);
        let b = table(&["x", "q", "r"], &[vec![1.0], vec![1.0], vec![1.0]]);
        let err = fuse_scores(&[&a, &b], &FusionWeights::equal(2)).unwrap_err();
        assert!(err.to_string().contains("\"q\""), "{err}");
    }

    #[test]
    fn logits_rejected() {
        let a = table(&["x"], &[vec![0.5, 0.5]]);
        let l = a.with_values(a.values().clone(), ScoreKind::Logit).unwrap();
        assert!(matches!(
            fuse_scores(&[&a, &l], &FusionWeights::equal(2)),
            Err(ScoreFusionError::Logits { source_index: 1 })
        ));
    }

    #[test]
    fn weights_validated() {
        assert!(FusionWeights::new(&[0.0, 0.0]).is_err());
        assert!(FusionWeights::new(&[-1.0, 2.0]).is_err());
        let w = FusionWeights::new(&[1.0, 3.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        let a = table(&["x"], &[vec![1.0]]);
        assert!(matches!(
            fuse_scores(&[&a], &w),
            Err(ScoreFusionError::WeightCount { .. })
        ));
    }

    proptest! {
        #[test]
        fn identical_sources_any_weights(seed in any::<u64>(), w1 in 0.01f64..5.0, w2 in 0.01f64..5.0) {
            let mut rng = RngStream::new(seed);
            let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.next_f64()).collect()).collect();
            let a = table(&["a", "b", "c", "d"], &rows);
            let f = fuse_scores(&[&a, &a], &FusionWeights::new(&[w1, w2]).unwrap()).unwrap();
            for (x, y) in f.values().as_slice().iter().zip(a.values().as_slice()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }

        #[test]
        fn argmax_invariant_under_common_rescaling(seed in any::<u64>(), k in 0.01f64..100.0) {
            let mut rng = RngStream::new(seed);
            let mk = |rng: &mut RngStream| -> Vec<Vec<f64>> {
                (0..5).map(|_| (0..4).map(|_| rng.next_f64()).collect()).collect()
            };
            let a = table(&["a", "b", "c", "d", "e"], &mk(&mut rng));
            let b = table(&["a", "b", "c", "d", "e"], &mk(&mut rng));
            let w = FusionWeights::new(&[rng.next_f64() + 0.1, rng.next_f64() + 0.1]).unwrap();
            let base = fuse_scores(&[&a, &b], &w).unwrap().predictions();
            let sa = a.with_values(a.values().scale(k), ScoreKind::Probability).unwrap();
            let sb = b.with_values(b.values().scale(k), ScoreKind::Probability).unwrap();
            prop_assert_eq!(fuse_scores(&[&sa, &sb], &w).unwrap().predictions(), base);
        }
    }
}
