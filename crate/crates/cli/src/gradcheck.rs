//! Finite-difference checks of the LSTM and fusion-net gradients on random
//! tiny instances.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use vidfuse::fusion::{
    Activation, FusionLayout, FusionNetConfig, FusionNetParams, LossKind, Modality,
    VideoLevelFeatures,
};
use vidfuse::gradcheck::{check_parameters, TensorCheck, DEFAULT_STEP, DEFAULT_TOLERANCE};
use vidfuse::linalg::init_weights;
use vidfuse::lstm::LstmStack;
use vidfuse::{Matrix, Parameters, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckTarget {
    Lstm,
    Fusion,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub target: CheckTarget,
    pub seed: u64,
    /// Random instances per model family.
    pub instances: usize,
    /// Weight penalty used by the fusion instances.
    pub lambda1: f64,
    /// Perturbs the first analytic gradient entry; a negative control.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            target: CheckTarget::All,
            seed: 0,
            instances: 20,
            lambda1: 1e-2,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheck {
    pub model: String,
    pub description: String,
    pub tensors: Vec<TensorCheck>,
}

impl InstanceCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_relative_error)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub instances: Vec<InstanceCheck>,
}

impl GradcheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.instances
            .iter()
            .map(|i| i.max_relative_error())
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.instances
            .iter()
            .all(|i| i.tensors.iter().all(|t| t.passes(self.tolerance)))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for inst in &self.instances {
            let _ = writeln!(s, "{} {}", inst.model, inst.description);
            for t in &inst.tensors {
                let _ = writeln!(
                    s,
                    "  {:<16} {:>5} entries  max rel err {:.3e}  {}",
                    t.name,
                    t.entries,
                    t.max_relative_error,
                    if t.passes(self.tolerance) {
                        "ok"
                    } else {
                        "FAIL"
                    }
                );
            }
        }
        let _ = writeln!(
            s,
            "{} instances, max relative error {:.3e}, tolerance {:.0e}: {}",
            self.instances.len(),
            self.max_relative_error(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }
}

fn between(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn corrupt<P: Parameters>(g: &mut P) {
    if let Some(t) = g.tensors_mut().into_iter().find(|t| !t.is_empty()) {
        let v = &mut t.as_mut_slice()[0];
        *v += 0.1 * (v.abs() + 1.0);
    }
}

fn lstm_instance(rng: &mut RngStream, corrupted: bool) -> InstanceCheck {
    let d = between(rng, 1, 8);
    let layers = between(rng, 1, 2);
    let hidden: Vec<usize> = (0..layers).map(|_| between(rng, 1, 8)).collect();
    let c = between(rng, 2, 4);
    let mut stack = LstmStack::random(d, &hidden, c, 0.5, 1.0, rng);
    // Nonzero biases so every bias gradient is exercised.
    stack.head_b = init_weights(c, 1, 0.5, rng);
    let seqs: Vec<(Matrix, usize)> = (0..2)
        .map(|_| (init_weights(between(rng, 1, 6), d, 1.0, rng), rng.below(c)))
        .collect();
    let batch: Vec<(&Matrix, usize)> = seqs.iter().map(|(m, y)| (m, *y)).collect();
    let (_, mut g) = stack.gradients(&batch).expect("valid instance");
    if corrupted {
        corrupt(&mut g);
    }
    let lens: Vec<usize> = seqs.iter().map(|(m, _)| m.rows()).collect();
    InstanceCheck {
        model: "lstm".into(),
        description: format!("input {d}, hidden {hidden:?}, classes {c}, lengths {lens:?}"),
        tensors: check_parameters(
            &stack,
            &g,
            |p| p.loss(&batch).expect("valid instance"),
            DEFAULT_STEP,
        ),
    }
}

fn fusion_instance(rng: &mut RngStream, lambda1: f64, corrupted: bool) -> InstanceCheck {
    let dims = [between(rng, 1, 8), between(rng, 1, 8), between(rng, 1, 8)];
    let layout = match rng.below(3) {
        0 => FusionLayout::PerModality,
        1 => FusionLayout::EarlyConcat,
        _ => FusionLayout::Single(Modality::ALL[rng.below(3)]),
    };
    let activation = if rng.below(2) == 0 {
        Activation::Relu
    } else {
        Activation::Sigmoid
    };
    let loss = if rng.below(2) == 0 {
        LossKind::Squared
    } else {
        LossKind::CrossEntropy
    };
    let cfg = FusionNetConfig {
        branch_dim: between(rng, 1, 6),
        fusion_dim: between(rng, 1, 6),
        activation,
        layout,
    };
    let c = between(rng, 2, 4);
    let mut p = FusionNetParams::random(dims, c, &cfg, rng);
    for b in &mut p.branches {
        b.b = init_weights(b.b.rows(), 1, 0.5, rng);
    }
    p.fusion_b = init_weights(p.fusion_b.rows(), 1, 0.5, rng);
    p.head_b = init_weights(c, 1, 0.5, rng);
    let feats: Vec<VideoLevelFeatures> = (0..3)
        .map(|_| VideoLevelFeatures {
            spatial: init_weights(1, dims[0], 1.0, rng).into_vec(),
            motion: init_weights(1, dims[1], 1.0, rng).into_vec(),
            audio: init_weights(1, dims[2], 1.0, rng).into_vec(),
        })
        .collect();
    let batch: Vec<(&VideoLevelFeatures, usize)> =
        feats.iter().map(|f| (f, rng.below(c))).collect();
    let (_, mut g) = p
        .smooth_loss_and_gradients(&batch, lambda1, loss)
        .expect("valid instance");
    if corrupted {
        corrupt(&mut g);
    }
    InstanceCheck {
        model: "fusion".into(),
        description: format!(
            "dims {dims:?}, {layout:?}, {activation:?}, {loss:?}, widths {}/{}, classes {c}, lambda1 {lambda1}",
            cfg.branch_dim, cfg.fusion_dim
        ),
        tensors: check_parameters(
            &p,
            &g,
            |q| q.smooth_loss(&batch, lambda1, loss).expect("valid instance"),
            DEFAULT_STEP,
        ),
    }
}

pub fn gradcheck(opts: &GradcheckOptions) -> GradcheckReport {
    let root = RngStream::new(opts.seed);
    let mut instances = Vec::new();
    if matches!(opts.target, CheckTarget::Lstm | CheckTarget::All) {
        let mut rng = root.fork(1);
        for i in 0..opts.instances {
            instances.push(lstm_instance(&mut rng, opts.corrupt && i == 0));
        }
    }
    if matches!(opts.target, CheckTarget::Fusion | CheckTarget::All) {
        let mut rng = root.fork(2);
        for i in 0..opts.instances {
            instances.push(fusion_instance(
                &mut rng,
                opts.lambda1,
                opts.corrupt && i == 0,
            ));
        }
    }
    GradcheckReport {
        tolerance: DEFAULT_TOLERANCE,
        instances,
    }
}
