//! Grid search over the fusion-layer sparsity weights `λ2 × λ3`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{score_records, ModelKind};
use crate::config::ExperimentConfig;
use crate::error::{at, RunError};
use crate::experiment::{
    labels, prepare_dataset, train_fusion_checkpoint, write_text, SplitRecords, TrainingSummary,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda2: f64,
    pub lambda3: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    pub zero_rows: usize,
    pub fusion_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Index of the highest validation accuracy; the first wins ties.
    pub best: usize,
}

impl SweepReport {
    pub fn best_point(&self) -> &SweepPoint {
        &self.points[self.best]
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>12} {:>12} {:>10} {:>10} {:>10}",
            "lambda2", "lambda3", "val acc", "test acc", "zero rows"
        );
        for (i, p) in self.points.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>12} {:>12} {:>10.6} {:>10.6} {:>6}/{:<3}{}",
                p.lambda2,
                p.lambda3,
                p.validation_accuracy,
                p.test_accuracy,
                p.zero_rows,
                p.fusion_dim,
                if i == self.best { " *" } else { "" }
            );
        }
        s
    }
}

/// Trains one fusion net per grid point and scores it on validation and test.
pub fn sweep(
    cfg: &ExperimentConfig,
    lambda2: &[f64],
    lambda3: &[f64],
    quiet: bool,
) -> Result<SweepReport, RunError> {
    if lambda2.is_empty() || lambda3.is_empty() {
        return Err(RunError::config("sweep", "grid is empty"));
    }
    cfg.validate()?;
    let ds = prepare_dataset(cfg)?;
    let split = SplitRecords::new(&ds)?;
    if split.validation.is_empty() || split.test.is_empty() || split.train.is_empty() {
        return Err(RunError::data(
            "sweep",
            "sweep needs nonempty train, validation and test splits",
        ));
    }
    let classes = &ds.manifest.classes;
    let (vl, tl) = (labels(&split.validation), labels(&split.test));
    let mut points = Vec::with_capacity(lambda2.len() * lambda3.len());
    for &l2 in lambda2 {
        for &l3 in lambda3 {
            let mut reg = cfg.fusion.reg.clone();
            reg.lambda2 = l2;
            reg.lambda3 = l3;
            reg.validate().map_err(at("sweep"))?;
            let (ck, summary) =
                train_fusion_checkpoint(&cfg.fusion.net, &reg, &split.train, classes)?;
            let model = ck.model()?;
            let acc = |records, labels: &[usize]| -> Result<f64, RunError> {
                let s = score_records(&model, ModelKind::Fusion, records, classes)?;
                Ok(vidfuse::metrics::accuracy(&s, labels)
                    .map_err(at("sweep"))?
                    .overall)
            };
            let (zero_rows, fusion_dim) = match summary {
                TrainingSummary::Fusion {
                    zero_rows,
                    fusion_dim,
                    ..
                } => (zero_rows, fusion_dim),
                TrainingSummary::Lstm { .. } => unreachable!("fusion training"),
            };
            let p = SweepPoint {
                lambda2: l2,
                lambda3: l3,
                validation_accuracy: acc(&split.validation, &vl)?,
                test_accuracy: acc(&split.test, &tl)?,
                zero_rows,
                fusion_dim,
            };
            if !quiet {
                eprintln!(
                    "lambda2 {l2} lambda3 {l3}: val {:.4} test {:.4} zero rows {zero_rows}",
                    p.validation_accuracy, p.test_accuracy
                );
            }
            points.push(p);
        }
    }
    let best = points.iter().enumerate().fold(0, |b, (i, p)| {
        if p.validation_accuracy > points[b].validation_accuracy {
            i
        } else {
            b
        }
    });
    Ok(SweepReport { points, best })
}

pub fn write_sweep(report: &SweepReport, out: &Path) -> Result<(), RunError> {
    fs::create_dir_all(out).map_err(|e| RunError::io("output", out, e))?;
    let mut json = serde_json::to_string_pretty(report).expect("sweep serializes");
    json.push('\n');
    write_text(&out.join("sweep.json"), &json, "output")?;
    write_text(&out.join("sweep.txt"), &report.render(), "output")
}
