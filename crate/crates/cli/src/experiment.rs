//! The end-to-end pipeline and its on-disk artifacts.
//!
//! Output directory layout:
//!
//! ```text
//! INCOMPLETE                    present until the run finishes
//! config.toml                   resolved config
//! manifest.json                 dataset manifest with the split used
//! checkpoints/<model>.json
//! scores/<model>.{validation,test}.tsv
//! scores/fused.{validation,test}.tsv
//! scores/refined.test.tsv       when refinement is on
//! confusion.json                when refinement is on
//! report.json, report.txt
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vidfuse::context::{build_confusion_matrix, refine_scores, ConfusionMatrix, RefineOptions};
use vidfuse::data::{
    dataset_fingerprint, load_dataset, read_packed, split_dataset, synth_generate, Dataset,
    SplitFractions, SplitName, VideoRecord,
};
use vidfuse::fusion::{train_fusion, FusionNetConfig, RegConfig, VideoLevelFeatures};
use vidfuse::lstm::train_lstm;
use vidfuse::metrics::EvalReport;
use vidfuse::scorefusion::{fuse_scores, FusionWeights};
use vidfuse::{Matrix, ScoreMatrix};

use crate::checkpoint::{score_records, Checkpoint, Model, ModelKind};
use crate::config::{ExperimentConfig, RefineConfig};
use crate::error::{at, RunError};

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Loads a dataset directory or a packed file.
pub fn load_any(path: &Path) -> Result<Dataset, RunError> {
    if path.is_dir() {
        load_dataset(path).map_err(at("load"))
    } else {
        read_packed(path).map_err(at("load"))
    }
}

/// Assigns a stratified split when the dataset has none.
pub fn ensure_split(
    mut ds: Dataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<Dataset, RunError> {
    if ds.manifest.splits.is_none() {
        ds.manifest = split_dataset(&ds, fractions, seed).map_err(at("split"))?;
    }
    Ok(ds)
}

pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<Dataset, RunError> {
    let ds = match &cfg.data.path {
        Some(p) => load_any(p)?,
        None => synth_generate(&cfg.data.synth).map_err(at("synth"))?,
    };
    ensure_split(ds, cfg.data.split, cfg.seed)
}

pub struct SplitRecords<'a> {
    pub train: Vec<&'a VideoRecord>,
    pub validation: Vec<&'a VideoRecord>,
    pub test: Vec<&'a VideoRecord>,
}

impl<'a> SplitRecords<'a> {
    pub fn new(ds: &'a Dataset) -> Result<Self, RunError> {
        Ok(Self {
            train: ds.split(SplitName::Train).map_err(at("split"))?,
            validation: ds.split(SplitName::Validation).map_err(at("split"))?,
            test: ds.split(SplitName::Test).map_err(at("split"))?,
        })
    }
}

pub fn labels(records: &[&VideoRecord]) -> Vec<usize> {
    records.iter().map(|r| r.label).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TrainingSummary {
    Lstm {
        iterations: usize,
        /// Mean mini-batch loss over the last 50 iterations.
        final_loss: Option<f64>,
    },
    Fusion {
        epochs: usize,
        final_loss: Option<f64>,
        zero_rows: usize,
        fusion_dim: usize,
    },
}

pub fn train_fusion_checkpoint(
    net: &FusionNetConfig,
    reg: &RegConfig,
    train: &[&VideoRecord],
    classes: &[String],
) -> Result<(Checkpoint, TrainingSummary), RunError> {
    let data: Vec<(VideoLevelFeatures, usize)> =
        train.iter().map(|r| (r.video_level(), r.label)).collect();
    let t = train_fusion(net, reg, &data, classes.len()).map_err(at("train fusion"))?;
    let dims = data[0].0.dims();
    let summary = TrainingSummary::Fusion {
        epochs: t.history.len(),
        final_loss: t.history.last().map(|h| h.smooth_loss),
        zero_rows: t.params.zero_row_count(),
        fusion_dim: t.params.fusion_dim(),
    };
    Ok((
        Checkpoint::from_fusion(&t.params, net, reg, dims, classes),
        summary,
    ))
}

pub fn train_checkpoint(
    kind: ModelKind,
    cfg: &ExperimentConfig,
    train: &[&VideoRecord],
    classes: &[String],
) -> Result<(Checkpoint, TrainingSummary), RunError> {
    if train.is_empty() {
        return Err(RunError::data(
            format!("train {}", kind.name()),
            "training split is empty",
        ));
    }
    if kind == ModelKind::Fusion {
        return train_fusion_checkpoint(&cfg.fusion.net, &cfg.fusion.reg, train, classes);
    }
    let stage = format!("train {}", kind.name());
    let data: Vec<(Matrix, usize)> = train
        .iter()
        .map(|r| (kind.sequence(r).clone(), r.label))
        .collect();
    let t = train_lstm(&cfg.lstm, &data, classes.len()).map_err(at(&stage))?;
    let tail = &t.loss_trace[t.loss_trace.len().saturating_sub(50)..];
    let summary = TrainingSummary::Lstm {
        iterations: t.loss_trace.len(),
        final_loss: (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64),
    };
    Ok((
        Checkpoint::from_lstm(kind, &t.stack, &cfg.lstm, classes),
        summary,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    /// Of the canonical manifest plus records text.
    pub sha256: String,
    pub classes: Vec<String>,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelKind,
    pub training: TrainingSummary,
    pub validation_accuracy: Option<f64>,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSummary {
    pub transpose: bool,
    pub renormalize: bool,
    pub smoothing: f64,
    /// Fused validation accuracy, the diagonal mass behind `R`.
    pub validation_accuracy: f64,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: DatasetSummary,
    pub models: Vec<ModelReport>,
    pub weights: Vec<f64>,
    pub fused: EvalReport,
    pub refinement: Option<RefinementSummary>,
    /// Refined when refinement is on, else fused.
    #[serde(rename = "final")]
    pub final_report: EvalReport,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render(&self) -> String {
        let d = &self.dataset;
        let mut s = String::new();
        let _ = writeln!(s, "dataset sha256 {}", d.sha256);
        let _ = writeln!(
            s,
            "split train {} validation {} test {}",
            d.train, d.validation, d.test
        );
        for m in &self.models {
            let _ = writeln!(s, "\n== {} ==", m.model.name());
            match &m.training {
                TrainingSummary::Lstm {
                    iterations,
                    final_loss,
                } => {
                    let _ = writeln!(
                        s,
                        "iterations {iterations}, final loss {}",
                        fmt_opt(*final_loss)
                    );
                }
                TrainingSummary::Fusion {
                    epochs,
                    final_loss,
                    zero_rows,
                    fusion_dim,
                } => {
                    let _ = writeln!(
                        s,
                        "epochs {epochs}, final loss {}, zero rows {zero_rows}/{fusion_dim}",
                        fmt_opt(*final_loss)
                    );
                }
            }
            let _ = writeln!(s, "validation accuracy {}", fmt_opt(m.validation_accuracy));
            s.push_str(&m.test.render(&d.classes));
        }
        let w: Vec<String> = self.weights.iter().map(|w| format!("{w:.4}")).collect();
        let _ = writeln!(s, "\n== fused (weights {}) ==", w.join(", "));
        s.push_str(&self.fused.render(&d.classes));
        if let Some(r) = &self.refinement {
            let _ = writeln!(
                s,
                "\n== refined (transpose {}, renormalize {}, smoothing {}) ==",
                r.transpose, r.renormalize, r.smoothing
            );
            s.push_str(&r.test.render(&d.classes));
        }
        s
    }
}

pub fn dataset_sha256(ds: &Dataset) -> String {
    Sha256::digest(dataset_fingerprint(ds).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.6}"))
}

pub fn confusion_to_json(r: &ConfusionMatrix, classes: &[String]) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        source: &'a str,
        classes: &'a [String],
        matrix: Vec<&'a [f64]>,
    }
    let out = Out {
        source: r.source(),
        classes,
        matrix: r.matrix().row_iter().collect(),
    };
    let mut s = serde_json::to_string_pretty(&out).expect("confusion serializes");
    s.push('\n');
    s
}

pub fn confusion_from_json(text: &str) -> Result<(ConfusionMatrix, Vec<String>), RunError> {
    #[derive(Deserialize)]
    struct In {
        source: String,
        classes: Vec<String>,
        matrix: Vec<Vec<f64>>,
    }
    let v: In = serde_json::from_str(text).map_err(|e| RunError::data("confusion", e))?;
    let m = Matrix::from_rows(&v.matrix).map_err(at("confusion"))?;
    if m.rows() != v.classes.len() {
        return Err(RunError::data(
            "confusion",
            "matrix size does not match class list",
        ));
    }
    Ok((
        ConfusionMatrix::from_matrix(m, v.source).map_err(at("confusion"))?,
        v.classes,
    ))
}

/// Confusion matrix of fused validation scores, smoothed per config, then
/// applied to the test scores.
pub fn refine_with_validation(
    refine: &RefineConfig,
    validation: &ScoreMatrix,
    validation_labels: &[usize],
    test: &ScoreMatrix,
) -> Result<(ConfusionMatrix, ScoreMatrix), RunError> {
    if validation.num_samples() == 0 {
        return Err(RunError::data("refine", "validation split is empty"));
    }
    let r = build_confusion_matrix(validation, validation_labels, "validation")
        .map_err(at("confusion"))?
        .smoothed(refine.smoothing)
        .map_err(at("confusion"))?;
    let opts = RefineOptions {
        transpose: refine.transpose,
        renormalize: refine.renormalize,
    };
    let refined = refine_scores(&r, test, opts).map_err(at("refine"))?;
    Ok((r, refined))
}

pub fn write_text(path: &Path, text: &str, stage: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError::io(stage, path, e))
}

fn write_scores(path: &Path, s: &ScoreMatrix) -> Result<(), RunError> {
    if s.num_samples() == 0 {
        return Ok(());
    }
    s.write(path).map_err(at("write scores"))
}

fn empty_scores(classes: &[String]) -> Result<ScoreMatrix, RunError> {
    ScoreMatrix::new(
        Vec::new(),
        classes.to_vec(),
        Matrix::zeros(0, classes.len()),
        vidfuse::ScoreKind::Probability,
    )
    .map_err(at("score"))
}

fn score_split(
    model: &Model,
    kind: ModelKind,
    records: &[&VideoRecord],
    classes: &[String],
) -> Result<ScoreMatrix, RunError> {
    if records.is_empty() {
        return empty_scores(classes);
    }
    score_records(model, kind, records, classes)
}

fn overall_accuracy(scores: &ScoreMatrix, labels: &[usize]) -> Result<Option<f64>, RunError> {
    if labels.is_empty() {
        return Ok(None);
    }
    Ok(Some(
        vidfuse::metrics::accuracy(scores, labels)
            .map_err(at("evaluate"))?
            .overall,
    ))
}

/// Runs every stage and writes the artifacts into `out`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    quiet: bool,
) -> Result<ExperimentReport, RunError> {
    cfg.validate()?;
    let log = |msg: &str| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    for dir in [
        out.to_path_buf(),
        out.join("checkpoints"),
        out.join("scores"),
    ] {
        fs::create_dir_all(&dir).map_err(|e| RunError::io("output", &dir, e))?;
    }
    let marker = out.join(INCOMPLETE_MARKER);
    write_text(&marker, "run did not finish\n", "output")?;
    write_text(&out.join("config.toml"), &cfg.to_toml(), "output")?;

    let ds = prepare_dataset(cfg)?;
    write_text(&out.join("manifest.json"), &ds.manifest.to_json(), "output")?;
    let split = SplitRecords::new(&ds)?;
    if split.test.is_empty() {
        return Err(RunError::data("split", "test split is empty"));
    }
    let classes = ds.manifest.classes.clone();
    let (val_labels, test_labels) = (labels(&split.validation), labels(&split.test));
    log(&format!(
        "dataset: {} train, {} validation, {} test",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    ));

    let kinds = cfg.models.kinds();
    let mut models = Vec::with_capacity(kinds.len());
    let mut val_scores = Vec::with_capacity(kinds.len());
    let mut test_scores = Vec::with_capacity(kinds.len());
    for &kind in &kinds {
        log(&format!("training {}", kind.name()));
        let (ck, training) = train_checkpoint(kind, cfg, &split.train, &classes)?;
        ck.save(
            &out.join("checkpoints")
                .join(format!("{}.json", kind.name())),
        )?;
        let model = ck.model()?;
        let v = score_split(&model, kind, &split.validation, &classes)?;
        let t = score_split(&model, kind, &split.test, &classes)?;
        write_scores(
            &out.join("scores")
                .join(format!("{}.validation.tsv", kind.name())),
            &v,
        )?;
        write_scores(
            &out.join("scores").join(format!("{}.test.tsv", kind.name())),
            &t,
        )?;
        models.push(ModelReport {
            model: kind,
            training,
            validation_accuracy: overall_accuracy(&v, &val_labels)?,
            test: EvalReport::evaluate(&t, &test_labels).map_err(at("evaluate"))?,
        });
        val_scores.push(v);
        test_scores.push(t);
    }

    let weights = match &cfg.score_fusion.weights {
        Some(w) => FusionWeights::new(w).map_err(at("fuse"))?,
        None => FusionWeights::equal(kinds.len()),
    };
    let fused_val = if split.validation.is_empty() {
        empty_scores(&classes)?
    } else {
        fuse_scores(&val_scores.iter().collect::<Vec<_>>(), &weights).map_err(at("fuse"))?
    };
    let fused_test =
        fuse_scores(&test_scores.iter().collect::<Vec<_>>(), &weights).map_err(at("fuse"))?;
    write_scores(&out.join("scores/fused.validation.tsv"), &fused_val)?;
    write_scores(&out.join("scores/fused.test.tsv"), &fused_test)?;
    let fused = EvalReport::evaluate(&fused_test, &test_labels).map_err(at("evaluate"))?;

    let refinement = if cfg.refine.enabled {
        log("refining");
        let (r, refined) =
            refine_with_validation(&cfg.refine, &fused_val, &val_labels, &fused_test)?;
        write_text(
            &out.join("confusion.json"),
            &confusion_to_json(&r, &classes),
            "output",
        )?;
        write_scores(&out.join("scores/refined.test.tsv"), &refined)?;
        Some(RefinementSummary {
            transpose: cfg.refine.transpose,
            renormalize: cfg.refine.renormalize,
            smoothing: cfg.refine.smoothing,
            validation_accuracy: overall_accuracy(&fused_val, &val_labels)?.unwrap_or(0.0),
            test: EvalReport::evaluate(&refined, &test_labels).map_err(at("evaluate"))?,
        })
    } else {
        None
    };

    let report = ExperimentReport {
        dataset: DatasetSummary {
            sha256: dataset_sha256(&ds),
            classes,
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
        },
        models,
        weights: weights.as_slice().to_vec(),
        final_report: refinement
            .as_ref()
            .map_or_else(|| fused.clone(), |r| r.test.clone()),
        fused,
        refinement,
    };
    write_text(&out.join("report.json"), &report.to_json(), "output")?;
    write_text(&out.join("report.txt"), &report.render(), "output")?;
    fs::remove_file(&marker).map_err(|e| RunError::io("output", &marker, e))?;
    Ok(report)
}
