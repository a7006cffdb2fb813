//! Command-line interface. Each stage reads and writes the documented file
//! formats, so the pipeline can also be scripted step by step.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vidfuse::context::RefineOptions;
use vidfuse::data::{write_dataset, write_packed, Dataset, SplitName};
use vidfuse::metrics::EvalReport;
use vidfuse::scorefusion::{fuse_scores, FusionWeights};
use vidfuse::ScoreMatrix;

use crate::checkpoint::{score_records, Checkpoint, ModelKind};
use crate::config::ExperimentConfig;
use crate::error::{at, RunError};
use crate::experiment::{
    confusion_from_json, confusion_to_json, ensure_split, load_any, prepare_dataset,
    run_experiment, train_checkpoint, write_text, SplitRecords,
};
use crate::gradcheck::{gradcheck, CheckTarget, GradcheckOptions};
use crate::sweep::{sweep, write_sweep};

#[derive(Debug, Parser)]
#[command(
    name = "vidfuse",
    version,
    about = "Hybrid video classification on precomputed features"
)]
pub struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the split, generator and model seeds.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory; defaults to the config's `output`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Validation => SplitName::Validation,
            SplitArg::Test => SplitName::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory or packed file; defaults to the config's data.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset of `[data.synth]`.
    Synth {
        /// Write a single packed binary file instead of a directory.
        #[arg(long)]
        packed: bool,
    },
    /// Assign a stratified train/validation/test split.
    Split {
        #[command(flatten)]
        data: DataArg,
    },
    /// Train one model on the training split.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_enum)]
        model: ModelKind,
    },
    /// Score a split with a checkpoint.
    Score {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Weighted average of score files.
    Fuse {
        #[arg(required = true, value_name = "SCORES")]
        scores: Vec<PathBuf>,
        /// Comma-separated weights; equal when omitted.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long, default_value = "fused")]
        name: String,
    },
    /// Confusion matrix of a score file against dataset labels.
    Confusion {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        smoothing: f64,
    },
    /// Apply a confusion matrix to a score file.
    Refine {
        #[arg(long, value_name = "FILE")]
        confusion: PathBuf,
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
        #[arg(long)]
        transpose: bool,
        #[arg(long)]
        renormalize: bool,
        #[arg(long, default_value = "refined")]
        name: String,
    },
    /// Accuracy and mean AP of a score file.
    Eval {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
    },
    /// The whole pipeline.
    Run,
    /// Finite-difference checks on random tiny models.
    Gradcheck {
        #[arg(long, value_enum, default_value = "all")]
        target: CheckTarget,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1e-2)]
        lambda1: f64,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Grid search over the fusion sparsity weights.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1e-3, 1e-2, 1e-1])]
        lambda2: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1e-4, 1e-3, 1e-2])]
        lambda3: Vec<f64>,
    },
}

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
    quiet: bool,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn mkdir(&self, sub: &str) -> Result<PathBuf, RunError> {
        let dir = self.out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| RunError::io("output", &dir, e))?;
        Ok(dir)
    }

    fn dataset(&self, data: &DataArg) -> Result<Dataset, RunError> {
        match &data.data {
            Some(p) => ensure_split(load_any(p)?, self.cfg.data.split, self.cfg.seed),
            None => prepare_dataset(&self.cfg),
        }
    }
}

fn read_scores(path: &Path) -> Result<ScoreMatrix, RunError> {
    ScoreMatrix::read(path).map_err(at("read scores"))
}

/// Labels of the scored samples, looked up by id.
fn labels_for(ds: &Dataset, scores: &ScoreMatrix) -> Result<Vec<usize>, RunError> {
    if scores.classes() != ds.manifest.classes.as_slice() {
        return Err(RunError::data(
            "labels",
            "score classes do not match the dataset",
        ));
    }
    let by_id: HashMap<&str, usize> = ds
        .records
        .iter()
        .map(|r| (r.id.as_str(), r.label))
        .collect();
    scores
        .ids()
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                RunError::data("labels", format!("sample {id} is not in the dataset"))
            })
        })
        .collect()
}

fn execute(ctx: &Context, command: &Command) -> Result<(), RunError> {
    match command {
        Command::Synth { packed } => {
            ctx.cfg.data.synth.validate().map_err(at("synth"))?;
            let ds = vidfuse::data::synth_generate(&ctx.cfg.data.synth).map_err(at("synth"))?;
            if *packed {
                std::fs::create_dir_all(&ctx.out)
                    .map_err(|e| RunError::io("output", &ctx.out, e))?;
                let path = ctx.out.join("dataset.vfds");
                write_packed(&ds, &path).map_err(at("synth"))?;
                ctx.say(format!(
                    "wrote {} records to {}",
                    ds.records.len(),
                    path.display()
                ));
            } else {
                write_dataset(&ds, &ctx.out).map_err(at("synth"))?;
                ctx.say(format!(
                    "wrote {} records to {}",
                    ds.records.len(),
                    ctx.out.display()
                ));
            }
        }
        Command::Split { data } => {
            let ds = ctx.dataset(data)?;
            write_dataset(&ds, &ctx.out).map_err(at("split"))?;
            let s = SplitRecords::new(&ds)?;
            ctx.say(format!(
                "train {} validation {} test {}",
                s.train.len(),
                s.validation.len(),
                s.test.len()
            ));
        }
        Command::Train { data, model } => {
            ctx.cfg.validate()?;
            let ds = ctx.dataset(data)?;
            let s = SplitRecords::new(&ds)?;
            let (ck, summary) = train_checkpoint(*model, &ctx.cfg, &s.train, &ds.manifest.classes)?;
            let path = ctx
                .mkdir("checkpoints")?
                .join(format!("{}.json", model.name()));
            ck.save(&path)?;
            ctx.say(format!("{summary:?}"));
            ctx.say(format!("wrote {}", path.display()));
        }
        Command::Score {
            data,
            checkpoint,
            split,
        } => {
            let ck = Checkpoint::load(checkpoint)?;
            let ds = ctx.dataset(data)?;
            if ck.classes != ds.manifest.classes {
                return Err(RunError::data(
                    "score",
                    "checkpoint classes do not match the dataset",
                ));
            }
            let name: SplitName = (*split).into();
            let records = ds.split(name).map_err(at("score"))?;
            if records.is_empty() {
                return Err(RunError::data(
                    "score",
                    format!("{} split is empty", name.name()),
                ));
            }
            let scores = score_records(&ck.model()?, ck.kind, &records, &ck.classes)?;
            let path = ctx
                .mkdir("scores")?
                .join(format!("{}.{}.tsv", ck.kind.name(), name.name()));
            scores.write(&path).map_err(at("score"))?;
            ctx.say(format!("wrote {}", path.display()));
        }
        Command::Fuse {
            scores,
            weights,
            name,
        } => {
            let sources = scores
                .iter()
                .map(|p| read_scores(p))
                .collect::<Result<Vec<_>, _>>()?;
            let w = match weights {
                Some(w) => FusionWeights::new(w).map_err(|e| RunError::config("fuse", e))?,
                None => FusionWeights::equal(sources.len()),
            };
            let fused = fuse_scores(&sources.iter().collect::<Vec<_>>(), &w).map_err(at("fuse"))?;
            let path = ctx.mkdir("")?.join(format!("{name}.tsv"));
            fused.write(&path).map_err(at("fuse"))?;
            ctx.say(format!("wrote {}", path.display()));
        }
        Command::Confusion {
            data,
            scores,
            smoothing,
        } => {
            let s = read_scores(scores)?;
            let labels = labels_for(&ctx.dataset(data)?, &s)?;
            let r =
                vidfuse::context::build_confusion_matrix(&s, &labels, scores.display().to_string())
                    .map_err(at("confusion"))?
                    .smoothed(*smoothing)
                    .map_err(at("confusion"))?;
            let path = ctx.mkdir("")?.join("confusion.json");
            write_text(&path, &confusion_to_json(&r, s.classes()), "confusion")?;
            ctx.say(format!("wrote {}", path.display()));
        }
        Command::Refine {
            confusion,
            scores,
            transpose,
            renormalize,
            name,
        } => {
            let text = std::fs::read_to_string(confusion)
                .map_err(|e| RunError::io("refine", confusion, e))?;
            let (r, classes) = confusion_from_json(&text)?;
            let s = read_scores(scores)?;
            if classes != s.classes() {
                return Err(RunError::data(
                    "refine",
                    "confusion classes do not match the scores",
                ));
            }
            let opts = RefineOptions {
                transpose: *transpose,
                renormalize: *renormalize,
            };
            let refined = vidfuse::context::refine_scores(&r, &s, opts).map_err(at("refine"))?;
            let path = ctx.mkdir("")?.join(format!("{name}.tsv"));
            refined.write(&path).map_err(at("refine"))?;
            ctx.say(format!("wrote {}", path.display()));
        }
        Command::Eval { data, scores } => {
            let s = read_scores(scores)?;
            let labels = labels_for(&ctx.dataset(data)?, &s)?;
            let report = EvalReport::evaluate(&s, &labels).map_err(at("eval"))?;
            let dir = ctx.mkdir("")?;
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            write_text(&dir.join("eval.json"), &json, "eval")?;
            let text = report.render(s.classes());
            write_text(&dir.join("eval.txt"), &text, "eval")?;
            ctx.say(text);
        }
        Command::Run => {
            let report = run_experiment(&ctx.cfg, &ctx.out, ctx.quiet)?;
            ctx.say(report.render());
        }
        Command::Gradcheck {
            target,
            instances,
            lambda1,
            corrupt,
        } => {
            let report = gradcheck(&GradcheckOptions {
                target: *target,
                seed: ctx.cfg.seed,
                instances: *instances,
                lambda1: *lambda1,
                corrupt: *corrupt,
            });
            ctx.say(report.render());
            if !report.passed() {
                return Err(RunError::new(
                    "gradcheck",
                    crate::error::ErrorKind::Numerical,
                    format!(
                        "max relative error {:.3e} exceeds {:.0e}",
                        report.max_relative_error(),
                        report.tolerance
                    ),
                ));
            }
        }
        Command::Sweep { lambda2, lambda3 } => {
            let report = sweep(&ctx.cfg, lambda2, lambda3, ctx.quiet)?;
            write_sweep(&report, &ctx.out)?;
            ctx.say(report.render());
        }
    }
    Ok(())
}

pub fn build_context(cli: &Cli) -> Result<(ExperimentConfig, PathBuf), RunError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    let out = cfg.output.clone();
    Ok((cfg, out))
}

/// Runs a parsed command line.
pub fn dispatch(cli: &Cli) -> Result<(), RunError> {
    let (cfg, out) = build_context(cli)?;
    let ctx = Context {
        cfg,
        out,
        quiet: cli.quiet,
    };
    execute(&ctx, &cli.command)
}
