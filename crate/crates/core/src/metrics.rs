//! Classification accuracy and non-interpolated average precision.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::argmax;
use crate::scores::ScoreMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{scores} score rows but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("no class has a positive sample; mean AP is undefined")]
    NoPositives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: f64,
    /// `None` for classes with no samples.
    pub per_class: Vec<Option<f64>>,
    /// Unweighted mean over classes that have samples.
    pub mean_class: f64,
}

fn check_labels(scores: &ScoreMatrix, labels: &[usize]) -> Result<(), MetricsError> {
    if scores.num_samples() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.num_samples(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let c = scores.num_classes();
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(MetricsError::LabelOutOfRange { label, classes: c });
    }
    Ok(())
}

pub fn accuracy(scores: &ScoreMatrix, labels: &[usize]) -> Result<AccuracyReport, MetricsError> {
    check_labels(scores, labels)?;
    let c = scores.num_classes();
    let mut hits = vec![0usize; c];
    let mut counts = vec![0usize; c];
    for (i, &label) in labels.iter().enumerate() {
        counts[label] += 1;
        if argmax(scores.row(i)) == label {
            hits[label] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(AccuracyReport {
        overall: hits.iter().sum::<usize>() as f64 / labels.len() as f64,
        mean_class: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
    })
}

/// Non-interpolated AP of one ranking. Samples are sorted by descending
/// score with ties kept in original order. Zero positives gives `0`.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != relevant.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: relevant.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps the original index order among equal scores.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevant[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(if hits == 0 { 0.0 } else { sum / hits as f64 })
}

/// AP per class for multi-label ground truth. Returns `(ap, positives)`.
pub fn per_class_ap(
    scores: &ScoreMatrix,
    label_sets: &[Vec<usize>],
) -> Result<(Vec<f64>, Vec<usize>), MetricsError> {
    if scores.num_samples() != label_sets.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.num_samples(),
            labels: label_sets.len(),
        });
    }
    let c = scores.num_classes();
    let mut relevant = vec![vec![false; label_sets.len()]; c];
    for (i, set) in label_sets.iter().enumerate() {
        for &l in set {
            if l >= c {
                return Err(MetricsError::LabelOutOfRange {
                    label: l,
                    classes: c,
                });
            }
            relevant[l][i] = true;
        }
    }
    let mut aps = Vec::with_capacity(c);
    let mut positives = Vec::with_capacity(c);
    for (k, rel) in relevant.iter().enumerate() {
        let column: Vec<f64> = (0..scores.num_samples())
            .map(|i| scores.row(i)[k])
            .collect();
        aps.push(average_precision(&column, rel)?);
        positives.push(rel.iter().filter(|&&r| r).count());
    }
    Ok((aps, positives))
}

/// Mean AP over classes with at least one positive.
pub fn mean_ap(scores: &ScoreMatrix, label_sets: &[Vec<usize>]) -> Result<f64, MetricsError> {
    let (aps, positives) = per_class_ap(scores, label_sets)?;
    mean_over_positive(&aps, &positives)
}

fn mean_over_positive(aps: &[f64], positives: &[usize]) -> Result<f64, MetricsError> {
    let kept: Vec<f64> = aps
        .iter()
        .zip(positives)
        .filter(|(_, &p)| p > 0)
        .map(|(&a, _)| a)
        .collect();
    if kept.is_empty() {
        return Err(MetricsError::NoPositives);
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub mean_class_accuracy: f64,
    pub per_class_ap: Vec<f64>,
    pub class_positives: Vec<usize>,
    pub mean_ap: f64,
    pub sample_count: usize,
    pub class_count: usize,
}

impl EvalReport {
    /// Full report for single-label data.
    pub fn evaluate(scores: &ScoreMatrix, labels: &[usize]) -> Result<Self, MetricsError> {
        let acc = accuracy(scores, labels)?;
        let sets: Vec<Vec<usize>> = labels.iter().map(|&l| vec![l]).collect();
        let (aps, positives) = per_class_ap(scores, &sets)?;
        Ok(Self {
            overall_accuracy: acc.overall,
            per_class_accuracy: acc.per_class,
            mean_class_accuracy: acc.mean_class,
            mean_ap: mean_over_positive(&aps, &positives)?,
            per_class_ap: aps,
            class_positives: positives,
            sample_count: labels.len(),
            class_count: scores.num_classes(),
        })
    }

    /// Human-readable summary with one line per class.
    pub fn render(&self, classes: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples             {}", self.sample_count);
        let _ = writeln!(s, "classes             {}", self.class_count);
        let _ = writeln!(s, "overall accuracy    {:.6}", self.overall_accuracy);
        let _ = writeln!(s, "mean class accuracy {:.6}", self.mean_class_accuracy);
        let _ = writeln!(s, "mean AP             {:.6}", self.mean_ap);
        let _ = writeln!(
            s,
            "{:<24} {:>10} {:>10} {:>6}",
            "class", "accuracy", "AP", "n"
        );
        for k in 0..self.class_count {
            let name = classes.get(k).map_or("?", |c| c.as_str());
            let acc = self.per_class_accuracy[k].map_or("-".to_string(), |a| format!("{a:.6}"));
            let _ = writeln!(
                s,
                "{:<24} {:>10} {:>10.6} {:>6}",
                name, acc, self.per_class_ap[k], self.class_positives[k]
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, RngStream};
    use crate::scores::ScoreKind;
    use proptest::prelude::*;

    fn table(rows: &[Vec<f64>]) -> ScoreMatrix {
        ScoreMatrix::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            (0..rows[0].len()).map(|k| format!("c{k}")).collect(),
            Matrix::from_rows(rows).unwrap(),
            ScoreKind::Probability,
        )
        .unwrap()
    }

    #[test]
    fn worked_ap_example() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ap_edge_cases() {
        assert_eq!(
            average_precision(&[0.9, 0.5, 0.1], &[true, true, false]).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision(&[0.3, 0.2], &[false, false]).unwrap(),
            0.0
        );
        assert!(matches!(
            average_precision(&[0.3], &[true, false]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        // Tie: the earlier index ranks first.
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn uniform_scores_pick_class_zero() {
        let s = table(&[
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        ]);
        let acc = accuracy(&s, &[0, 0, 1, 1]).unwrap();
        assert_eq!(acc.overall, 0.5);
        assert_eq!(acc.per_class, vec![Some(1.0), Some(0.0)]);
    }

    #[test]
    fn perfect_predictions() {
        let s = table(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
        let r = EvalReport::evaluate(&s, &[0, 1]).unwrap();
        assert_eq!(r.overall_accuracy, 1.0);
        assert_eq!(r.mean_class_accuracy, 1.0);
        assert_eq!(r.mean_ap, 1.0);
    }

    #[test]
    fn absent_class_excluded() {
        let s = table(&[vec![0.9, 0.1, 0.0], vec![0.2, 0.8, 0.0]]);
        let acc = accuracy(&s, &[0, 0]).unwrap();
        assert_eq!(acc.per_class, vec![Some(0.5), None, None]);
        assert_eq!(acc.mean_class, 0.5);
        let r = EvalReport::evaluate(&s, &[0, 0]).unwrap();
        assert_eq!(r.class_positives, vec![2, 0, 0]);
        assert_eq!(r.per_class_ap[1], 0.0);
    }

    #[test]
    fn mean_ap_needs_positives() {
        let s = table(&[vec![0.9, 0.1]]);
        assert_eq!(mean_ap(&s, &[vec![]]), Err(MetricsError::NoPositives));
        let single = table(&[vec![0.9], vec![0.1], vec![0.5]]);
        let sets = vec![vec![0], vec![], vec![0]];
        let ap = average_precision(&[0.9, 0.1, 0.5], &[true, false, true]).unwrap();
        assert_eq!(mean_ap(&single, &sets).unwrap(), ap);
    }

    fn random_scores(rng: &mut RngStream, n: usize, c: usize) -> Vec<f64> {
        (0..n * c).map(|_| rng.next_f64()).collect()
    }

    proptest! {
        #[test]
        fn ap_invariant_under_monotone_transform(seed in any::<u64>(), n in 2usize..30) {
            let mut rng = RngStream::new(seed);
            let s = random_scores(&mut rng, n, 1);
            let rel: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(average_precision(&s, &rel).unwrap(), average_precision(&t, &rel).unwrap());
        }

        #[test]
        fn ap_invariant_under_permutation(seed in any::<u64>(), n in 2usize..30) {
            let mut rng = RngStream::new(seed);
            let s = random_scores(&mut rng, n, 1);
            let rel: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut perm);
            let ps: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
            let pr: Vec<bool> = perm.iter().map(|&i| rel[i]).collect();
            let a = average_precision(&s, &rel).unwrap();
            let b = average_precision(&ps, &pr).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn overall_is_frequency_weighted_class_mean(seed in any::<u64>(), n in 1usize..60, c in 1usize..6) {
            let mut rng = RngStream::new(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| random_scores(&mut rng, 1, c)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let acc = accuracy(&table(&rows), &labels).unwrap();
            let weighted: f64 = (0..c)
                .map(|k| {
                    let nk = labels.iter().filter(|&&l| l == k).count() as f64;
                    acc.per_class[k].unwrap_or(0.0) * nk
                })
                .sum::<f64>()
                / n as f64;
            prop_assert!((weighted - acc.overall).abs() < 1e-12);
        }
    }
}
