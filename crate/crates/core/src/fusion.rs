//! Regularized feature fusion network.
//!
//! Each modality's video-level descriptor goes through its own hidden
//! layer. The branch outputs are concatenated (spatial, motion, audio) and
//! fed to the fusion layer `W^E` (`P × D`), whose output feeds a softmax
//! classifier. Training minimizes
//!
//! ```text
//! L + λ1 Φ(W) + λ2 ‖W^E‖_{2,1} + λ3 ‖W^E‖_{1,1}
//! ```
//!
//! where `L` is the mean squared error between softmax outputs and one-hot
//! labels and `Φ` sums the squared Frobenius norms of all weight matrices.
//! Every layer takes a plain gradient step on the smooth part; `W^E` then
//! goes through the closed-form proximal operator of the two norms with
//! thresholds `η λ2` and `η λ3`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    argmax, init_weights, l2_norm, sigmoid, softmax_in_place, Matrix, RngStream, ShapeError,
};
use crate::params::Parameters;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("sample {index}: {modality} features have length {found}, expected {expected}")]
    Dims {
        index: usize,
        modality: Modality,
        expected: usize,
        found: usize,
    },
    #[error("non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Spatial,
    Motion,
    Audio,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Spatial, Modality::Motion, Modality::Audio];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Spatial => "spatial",
            Modality::Motion => "motion",
            Modality::Audio => "audio",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Video-level spatial, motion and audio descriptors of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoLevelFeatures {
    pub spatial: Vec<f64>,
    pub motion: Vec<f64>,
    pub audio: Vec<f64>,
}

impl VideoLevelFeatures {
    pub fn get(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Spatial => &self.spatial,
            Modality::Motion => &self.motion,
            Modality::Audio => &self.audio,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.spatial.len(), self.motion.len(), self.audio.len()]
    }
}

/// Temporal mean of a `T × d` frame sequence.
pub fn video_level_pool(seq: &Matrix) -> Result<Vec<f64>, FusionError> {
    if seq.rows() == 0 {
        return Err(FusionError::EmptySequence);
    }
    Ok(seq.column_means())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given pre-activation `a` and output `y`.
    fn derivative(self, a: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `‖p − y‖²` on softmax outputs.
    #[default]
    Squared,
    CrossEntropy,
}

impl LossKind {
    pub fn evaluate(self, probs: &[f64], label: usize) -> f64 {
        match self {
            LossKind::Squared => probs
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    let d = p - if k == label { 1.0 } else { 0.0 };
                    d * d
                })
                .sum(),
            LossKind::CrossEntropy => -probs[label].ln(),
        }
    }

    /// Gradient w.r.t. the logits.
    fn logit_gradient(self, probs: &[f64], label: usize) -> Vec<f64> {
        match self {
            LossKind::Squared => {
                let g: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| 2.0 * (p - if k == label { 1.0 } else { 0.0 }))
                    .collect();
                let inner: f64 = probs.iter().zip(&g).map(|(p, g)| p * g).sum();
                probs.iter().zip(&g).map(|(p, g)| p * (g - inner)).collect()
            }
            LossKind::CrossEntropy => {
                let mut d = probs.to_vec();
                d[label] -= 1.0;
                d
            }
        }
    }
}

/// Which modalities feed which branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionLayout {
    /// One branch per modality (the regularized fusion network).
    #[default]
    PerModality,
    /// One branch on the concatenated raw features (early fusion).
    EarlyConcat,
    /// A single-modality network, the building block of late fusion.
    Single(Modality),
}

impl FusionLayout {
    pub fn branch_groups(self) -> Vec<Vec<Modality>> {
        match self {
            FusionLayout::PerModality => Modality::ALL.iter().map(|&m| vec![m]).collect(),
            FusionLayout::EarlyConcat => vec![Modality::ALL.to_vec()],
            FusionLayout::Single(m) => vec![vec![m]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionNetConfig {
    /// Units of each branch layer.
    pub branch_dim: usize,
    /// Rows `P` of the fusion layer.
    pub fusion_dim: usize,
    pub activation: Activation,
    pub layout: FusionLayout,
}

impl Default for FusionNetConfig {
    fn default() -> Self {
        Self {
            branch_dim: 200,
            fusion_dim: 200,
            activation: Activation::Relu,
            layout: FusionLayout::PerModality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub modalities: Vec<Modality>,
    /// `branch_dim × input dim`.
    pub w: Matrix,
    pub b: Matrix,
}

impl Branch {
    fn input(&self, f: &VideoLevelFeatures) -> Vec<f64> {
        if let [m] = self.modalities[..] {
            return f.get(m).to_vec();
        }
        self.modalities
            .iter()
            .flat_map(|&m| f.get(m).iter().copied())
            .collect()
    }

    fn input_dim_for(&self, dims: [usize; 3]) -> usize {
        self.modalities.iter().map(|m| dims[m.index()]).sum()
    }
}

/// Parameters of the fusion network. The fusion layer is layer
/// [`FusionNetParams::REGULARIZED_LAYER`]; its column blocks follow
/// `branches` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionNetParams {
    pub branches: Vec<Branch>,
    /// `P × D` with `D` the summed branch widths.
    pub fusion_w: Matrix,
    pub fusion_b: Matrix,
    /// `C × P`.
    pub head_w: Matrix,
    pub head_b: Matrix,
    pub activation: Activation,
}

struct Trace {
    branch_inputs: Vec<Vec<f64>>,
    branch_pre: Vec<Vec<f64>>,
    concat: Vec<f64>,
    fusion_pre: Vec<f64>,
    fusion_out: Vec<f64>,
    probs: Vec<f64>,
}

impl FusionNetParams {
    /// Layers are numbered branch = 1, fusion = 2, classifier = 3.
    pub const REGULARIZED_LAYER: usize = 2;

    pub fn zeros(dims: [usize; 3], num_classes: usize, cfg: &FusionNetConfig) -> Self {
        let branches: Vec<Branch> = cfg
            .layout
            .branch_groups()
            .into_iter()
            .map(|modalities| {
                let d: usize = modalities.iter().map(|m| dims[m.index()]).sum();
                Branch {
                    modalities,
                    w: Matrix::zeros(cfg.branch_dim, d),
                    b: Matrix::zeros(cfg.branch_dim, 1),
                }
            })
            .collect();
        let total = branches.len() * cfg.branch_dim;
        Self {
            branches,
            fusion_w: Matrix::zeros(cfg.fusion_dim, total),
            fusion_b: Matrix::zeros(cfg.fusion_dim, 1),
            head_w: Matrix::zeros(num_classes, cfg.fusion_dim),
            head_b: Matrix::zeros(num_classes, 1),
            activation: cfg.activation,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(
        dims: [usize; 3],
        num_classes: usize,
        cfg: &FusionNetConfig,
        rng: &mut RngStream,
    ) -> Self {
        let mut p = Self::zeros(dims, num_classes, cfg);
        let glorot = |m: &Matrix, rng: &mut RngStream| {
            let scale = (6.0 / (m.rows() + m.cols()).max(1) as f64).sqrt();
            init_weights(m.rows(), m.cols(), scale, rng)
        };
        for b in &mut p.branches {
            b.w = glorot(&b.w, rng);
        }
        p.fusion_w = glorot(&p.fusion_w, rng);
        p.head_w = glorot(&p.head_w, rng);
        p
    }

    pub fn num_classes(&self) -> usize {
        self.head_w.rows()
    }

    pub fn fusion_dim(&self) -> usize {
        self.fusion_w.rows()
    }

    /// Column range of `W^E` owned by each branch.
    pub fn block_layout(&self) -> Vec<(Vec<Modality>, Range<usize>)> {
        let mut start = 0;
        self.branches
            .iter()
            .map(|b| {
                let end = start + b.w.rows();
                let r = (b.modalities.clone(), start..end);
                start = end;
                r
            })
            .collect()
    }

    /// Checks sample dims against the branch weights.
    pub fn check_input(&self, f: &VideoLevelFeatures, index: usize) -> Result<(), FusionError> {
        let dims = f.dims();
        for b in &self.branches {
            if b.input_dim_for(dims) != b.w.cols() {
                let m = b
                    .modalities
                    .iter()
                    .copied()
                    .find(|m| dims[m.index()] != self.expected_dim(*m).unwrap_or(dims[m.index()]))
                    .unwrap_or(b.modalities[0]);
                return Err(FusionError::Dims {
                    index,
                    modality: m,
                    expected: self.expected_dim(m).unwrap_or(0),
                    found: dims[m.index()],
                });
            }
        }
        Ok(())
    }

    fn expected_dim(&self, m: Modality) -> Option<usize> {
        self.branches
            .iter()
            .find(|b| b.modalities == [m])
            .map(|b| b.w.cols())
    }

    fn forward_cached(&self, f: &VideoLevelFeatures) -> Trace {
        let act = self.activation;
        let mut branch_inputs = Vec::with_capacity(self.branches.len());
        let mut branch_pre = Vec::with_capacity(self.branches.len());
        let mut concat = Vec::with_capacity(self.fusion_w.cols());
        for b in &self.branches {
            let x = b.input(f);
            let mut a = b.b.as_slice().to_vec();
            b.w.matvec_acc(&x, &mut a);
            concat.extend(a.iter().map(|&v| act.apply(v)));
            branch_inputs.push(x);
            branch_pre.push(a);
        }
        let mut fusion_pre = self.fusion_b.as_slice().to_vec();
        self.fusion_w.matvec_acc(&concat, &mut fusion_pre);
        let fusion_out: Vec<f64> = fusion_pre.iter().map(|&v| act.apply(v)).collect();
        let mut probs = self.head_b.as_slice().to_vec();
        self.head_w.matvec_acc(&fusion_out, &mut probs);
        softmax_in_place(&mut probs);
        Trace {
            branch_inputs,
            branch_pre,
            concat,
            fusion_pre,
            fusion_out,
            probs,
        }
    }

    /// Class probabilities for one sample.
    pub fn forward(&self, f: &VideoLevelFeatures) -> Result<Vec<f64>, FusionError> {
        self.check_input(f, 0)?;
        Ok(self.forward_cached(f).probs)
    }

    /// Sum of squared Frobenius norms of every weight matrix (biases excluded).
    pub fn weight_penalty(&self) -> f64 {
        self.weight_matrices().iter().map(|m| m.sum_squares()).sum()
    }

    fn weight_matrices(&self) -> Vec<&Matrix> {
        let mut v: Vec<&Matrix> = self.branches.iter().map(|b| &b.w).collect();
        v.push(&self.fusion_w);
        v.push(&self.head_w);
        v
    }

    fn check_batch(&self, batch: &[(&VideoLevelFeatures, usize)]) -> Result<(), FusionError> {
        if batch.is_empty() {
            return Err(FusionError::EmptyBatch);
        }
        for (i, &(f, label)) in batch.iter().enumerate() {
            self.check_input(f, i)?;
            if label >= self.num_classes() {
                return Err(FusionError::LabelOutOfRange {
                    label,
                    classes: self.num_classes(),
                });
            }
        }
        Ok(())
    }

    /// Smooth part `p = L + λ1 Φ` of the objective.
    pub fn smooth_loss(
        &self,
        batch: &[(&VideoLevelFeatures, usize)],
        lambda1: f64,
        loss: LossKind,
    ) -> Result<f64, FusionError> {
        self.check_batch(batch)?;
        let data: f64 = batch
            .iter()
            .map(|&(f, y)| loss.evaluate(&self.forward_cached(f).probs, y))
            .sum::<f64>()
            / batch.len() as f64;
        Ok(data + lambda1 * self.weight_penalty())
    }

    /// `p` and its exact gradient with respect to every parameter.
    pub fn smooth_loss_and_gradients(
        &self,
        batch: &[(&VideoLevelFeatures, usize)],
        lambda1: f64,
        loss: LossKind,
    ) -> Result<(f64, FusionNetParams), FusionError> {
        self.check_batch(batch)?;
        let act = self.activation;
        let scale = 1.0 / batch.len() as f64;
        let mut g = self.zeros_like();
        let mut data_loss = 0.0;
        for &(f, y) in batch {
            let t = self.forward_cached(f);
            data_loss += loss.evaluate(&t.probs, y);
            let mut dz = loss.logit_gradient(&t.probs, y);
            dz.iter_mut().for_each(|v| *v *= scale);
            g.head_w.add_outer(&dz, &t.fusion_out);
            add_to(&mut g.head_b, &dz);
            let mut de = vec![0.0; self.fusion_dim()];
            self.head_w.matvec_t_acc(&dz, &mut de);
            let da_e: Vec<f64> = de
                .iter()
                .zip(t.fusion_pre.iter().zip(&t.fusion_out))
                .map(|(d, (&a, &o))| d * act.derivative(a, o))
                .collect();
            g.fusion_w.add_outer(&da_e, &t.concat);
            add_to(&mut g.fusion_b, &da_e);
            let mut du = vec![0.0; self.fusion_w.cols()];
            self.fusion_w.matvec_t_acc(&da_e, &mut du);
            let mut offset = 0;
            for (k, b) in self.branches.iter().enumerate() {
                let h = b.w.rows();
                let da: Vec<f64> = (0..h)
                    .map(|u| {
                        let a = t.branch_pre[k][u];
                        du[offset + u] * act.derivative(a, t.concat[offset + u])
                    })
                    .collect();
                g.branches[k].w.add_outer(&da, &t.branch_inputs[k]);
                add_to(&mut g.branches[k].b, &da);
                offset += h;
            }
        }
        if lambda1 != 0.0 {
            for (gb, b) in g.branches.iter_mut().zip(&self.branches) {
                gb.w.axpy(2.0 * lambda1, &b.w)?;
            }
            g.fusion_w.axpy(2.0 * lambda1, &self.fusion_w)?;
            g.head_w.axpy(2.0 * lambda1, &self.head_w)?;
        }
        Ok((data_loss * scale + lambda1 * self.weight_penalty(), g))
    }

    pub fn zero_row_count(&self) -> usize {
        zero_row_count(&self.fusion_w)
    }
}

fn add_to(m: &mut Matrix, v: &[f64]) {
    for (a, b) in m.as_mut_slice().iter_mut().zip(v) {
        *a += b;
    }
}

impl Parameters for FusionNetParams {
    fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::with_capacity(2 * self.branches.len() + 4);
        for (k, b) in self.branches.iter().enumerate() {
            out.push((format!("branch{k}.w"), &b.w));
            out.push((format!("branch{k}.b"), &b.b));
        }
        out.push(("fusion.w".into(), &self.fusion_w));
        out.push(("fusion.b".into(), &self.fusion_b));
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::with_capacity(2 * self.branches.len() + 4);
        for b in &mut self.branches {
            out.push(&mut b.w);
            out.push(&mut b.b);
        }
        out.push(&mut self.fusion_w);
        out.push(&mut self.fusion_b);
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }
}

/// Sum of row ℓ2 norms.
pub fn l21_norm(w: &Matrix) -> f64 {
    w.row_iter().map(l2_norm).sum()
}

/// Sum of absolute entries.
pub fn l11_norm(w: &Matrix) -> f64 {
    w.as_slice().iter().map(|v| v.abs()).sum()
}

pub fn zero_row_count(w: &Matrix) -> usize {
    w.row_iter().filter(|r| r.iter().all(|&v| v == 0.0)).count()
}

/// `½‖V − W‖²_F + t2 ‖W‖_{2,1} + t3 ‖W‖_{1,1}`.
pub fn prox_objective(v: &Matrix, w: &Matrix, t2: f64, t3: f64) -> f64 {
    let fit: f64 = v
        .as_slice()
        .iter()
        .zip(w.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * fit + t2 * l21_norm(w) + t3 * l11_norm(w)
}

/// Proximal operator of `t2 ‖·‖_{2,1} + t3 ‖·‖_{1,1}`.
///
/// Each row is soft-thresholded by `t3`, then shrunk toward zero by
/// `max(0, 1 − t2 / ‖row‖₂)`. Rows whose thresholded norm is at most `t2`
/// become exactly zero. With `t2 = t3 = 0` the input is returned unchanged.
pub fn prox_l21_l11(v: &Matrix, t2: f64, t3: f64) -> Matrix {
    let mut w = v.clone();
    for r in 0..w.rows() {
        let row = w.row_mut(r);
        if t3 > 0.0 {
            for x in row.iter_mut() {
                *x = x.signum() * (x.abs() - t3).max(0.0);
            }
        }
        if t2 > 0.0 {
            let norm = l2_norm(row);
            if norm <= t2 {
                row.fill(0.0);
            } else {
                let k = 1.0 - t2 / norm;
                row.iter_mut().for_each(|x| *x *= k);
            }
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// `0` means full batch.
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            lambda1: 3e-5,
            lambda2: 0.0,
            lambda3: 0.0,
            learning_rate: 0.7,
            epochs: 200,
            batch_size: 0,
            momentum: 0.0,
            seed: 0,
            loss: LossKind::Squared,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FusionError::Config(format!(
                    "{name} must be a finite value >= 0"
                )));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FusionError::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(FusionError::Config("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean smooth loss `p` over the epoch's batches, before their updates.
    pub smooth_loss: f64,
    /// `W^E` zero rows after the epoch.
    pub zero_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedFusion {
    pub params: FusionNetParams,
    pub history: Vec<EpochStats>,
}

/// Proximal gradient training of the fusion network.
pub fn train_fusion(
    net: &FusionNetConfig,
    reg: &RegConfig,
    data: &[(VideoLevelFeatures, usize)],
    num_classes: usize,
) -> Result<TrainedFusion, FusionError> {
    reg.validate()?;
    if net.branch_dim == 0 || net.fusion_dim == 0 {
        return Err(FusionError::Config("layer widths must be positive".into()));
    }
    let first = data.first().ok_or(FusionError::EmptyDataset)?;
    let dims = first.0.dims();
    let mut rng = RngStream::new(reg.seed);
    let mut params = FusionNetParams::random(dims, num_classes, net, &mut rng);
    let batch_all: Vec<(&VideoLevelFeatures, usize)> = data.iter().map(|(f, y)| (f, *y)).collect();
    params.check_batch(&batch_all)?;
    let mut shuffle_rng = rng.fork(0x5eed);
    let batch_size = if reg.batch_size == 0 {
        data.len()
    } else {
        reg.batch_size.min(data.len())
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = (reg.momentum > 0.0).then(|| params.zeros_like());
    let (t2, t3) = (
        reg.learning_rate * reg.lambda2,
        reg.learning_rate * reg.lambda3,
    );
    let mut history = Vec::with_capacity(reg.epochs);
    for epoch in 1..=reg.epochs {
        if batch_size < data.len() {
            shuffle_rng.shuffle(&mut order);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&VideoLevelFeatures, usize)> = if batch_size == data.len() {
                batch_all.clone()
            } else {
                chunk.iter().map(|&i| batch_all[i]).collect()
            };
            let (loss, grads) = params.smooth_loss_and_gradients(&batch, reg.lambda1, reg.loss)?;
            if !loss.is_finite() {
                return Err(FusionError::Divergence { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            match velocity.as_mut() {
                Some(v) => {
                    v.scale_all(reg.momentum);
                    v.axpy_all(-reg.learning_rate, &grads);
                    params.axpy_all(1.0, v);
                }
                None => params.axpy_all(-reg.learning_rate, &grads),
            }
            if t2 > 0.0 || t3 > 0.0 {
                params.fusion_w = prox_l21_l11(&params.fusion_w, t2, t3);
            }
        }
        if !params.all_finite() {
            return Err(FusionError::Divergence { epoch });
        }
        history.push(EpochStats {
            epoch,
            smooth_loss: epoch_loss / batches as f64,
            zero_rows: params.zero_row_count(),
        });
    }
    Ok(TrainedFusion { params, history })
}

pub fn fusion_accuracy(
    params: &FusionNetParams,
    data: &[(VideoLevelFeatures, usize)],
) -> Result<f64, FusionError> {
    if data.is_empty() {
        return Err(FusionError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (f, y) in data {
        if argmax(&params.forward(f)?) == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
