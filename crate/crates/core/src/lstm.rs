//! Stacked peephole LSTM sequence classifier trained with full BPTT.
//!
//! Per time step and layer:
//!
//! ```text
//! i_t = σ(W_xi x_t + W_hi h_{t-1} + w_ci ⊙ c_{t-1} + b_i)
//! f_t = σ(W_xf x_t + W_hf h_{t-1} + w_cf ⊙ c_{t-1} + b_f)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//! o_t = σ(W_xo x_t + W_ho h_{t-1} + w_co ⊙ c_t + b_o)
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! A softmax head on the top layer's `h_t` gives per-step class
//! probabilities; the video score is the last step's row. Training
//! minimizes per-step cross-entropy averaged over steps, then over the
//! batch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    argmax, init_weights, sigmoid, softmax_in_place, Matrix, RngStream, ShapeError,
};
use crate::params::{clip_global_norm, Parameters};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LstmError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("sequence has no time steps")]
    EmptySequence,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("sample {index} has feature dim {found}, expected {expected}")]
    InconsistentDims {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite training loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("invalid training config: {0}")]
    Config(String),
}

/// Weights of one LSTM layer. Peephole weights and biases are `hidden × 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub w_xi: Matrix,
    pub w_xf: Matrix,
    pub w_xc: Matrix,
    pub w_xo: Matrix,
    pub w_hi: Matrix,
    pub w_hf: Matrix,
    pub w_hc: Matrix,
    pub w_ho: Matrix,
    pub w_ci: Matrix,
    pub w_cf: Matrix,
    pub w_co: Matrix,
    pub b_i: Matrix,
    pub b_f: Matrix,
    pub b_c: Matrix,
    pub b_o: Matrix,
}

const LAYER_TENSOR_NAMES: [&str; 15] = [
    "w_xi", "w_xf", "w_xc", "w_xo", "w_hi", "w_hf", "w_hc", "w_ho", "w_ci", "w_cf", "w_co", "b_i",
    "b_f", "b_c", "b_o",
];

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let x = || Matrix::zeros(hidden_dim, input_dim);
        let h = || Matrix::zeros(hidden_dim, hidden_dim);
        let v = || Matrix::zeros(hidden_dim, 1);
        Self {
            w_xi: x(),
            w_xf: x(),
            w_xc: x(),
            w_xo: x(),
            w_hi: h(),
            w_hf: h(),
            w_hc: h(),
            w_ho: h(),
            w_ci: v(),
            w_cf: v(),
            w_co: v(),
            b_i: v(),
            b_f: v(),
            b_c: v(),
            b_o: v(),
        }
    }

    /// Uniform `±scale` weights, forget bias set to `forget_bias`, other
    /// biases zero.
    pub fn random(
        input_dim: usize,
        hidden_dim: usize,
        scale: f64,
        forget_bias: f64,
        rng: &mut RngStream,
    ) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for t in [
            &mut p.w_xi,
            &mut p.w_xf,
            &mut p.w_xc,
            &mut p.w_xo,
            &mut p.w_hi,
            &mut p.w_hf,
            &mut p.w_hc,
            &mut p.w_ho,
            &mut p.w_ci,
            &mut p.w_cf,
            &mut p.w_co,
        ] {
            *t = init_weights(t.rows(), t.cols(), scale, rng);
        }
        p.b_f.fill(forget_bias);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xi.rows()
    }

    fn tensors(&self) -> [&Matrix; 15] {
        [
            &self.w_xi, &self.w_xf, &self.w_xc, &self.w_xo, &self.w_hi, &self.w_hf, &self.w_hc,
            &self.w_ho, &self.w_ci, &self.w_cf, &self.w_co, &self.b_i, &self.b_f, &self.b_c,
            &self.b_o,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 15] {
        [
            &mut self.w_xi,
            &mut self.w_xf,
            &mut self.w_xc,
            &mut self.w_xo,
            &mut self.w_hi,
            &mut self.w_hf,
            &mut self.w_hc,
            &mut self.w_ho,
            &mut self.w_ci,
            &mut self.w_cf,
            &mut self.w_co,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    fn check_shapes(&self) -> Result<(), ShapeError> {
        let (h, d) = (self.hidden_dim(), self.input_dim());
        let expect = |m: &Matrix, shape: (usize, usize), op: &'static str| {
            if m.shape() == shape {
                Ok(())
            } else {
                Err(ShapeError::Mismatch {
                    op,
                    left: shape,
                    right: m.shape(),
                })
            }
        };
        for m in [&self.w_xf, &self.w_xc, &self.w_xo] {
            expect(m, (h, d), "lstm input weights")?;
        }
        for m in [&self.w_hi, &self.w_hf, &self.w_hc, &self.w_ho] {
            expect(m, (h, h), "lstm recurrent weights")?;
        }
        for m in [
            &self.w_ci, &self.w_cf, &self.w_co, &self.b_i, &self.b_f, &self.b_c, &self.b_o,
        ] {
            expect(m, (h, 1), "lstm peephole/bias")?;
        }
        Ok(())
    }
}

/// Recurrent state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Everything the backward pass needs from one cell evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub cache: GateCache,
}

pub fn lstm_cell_forward(
    params: &LstmLayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<CellOutput, LstmError> {
    let hd = params.hidden_dim();
    if x.len() != params.input_dim() {
        return Err(ShapeError::Mismatch {
            op: "lstm_cell_forward input",
            left: params.w_xi.shape(),
            right: (x.len(), 1),
        }
        .into());
    }
    if h_prev.len() != hd || c_prev.len() != hd {
        return Err(ShapeError::Mismatch {
            op: "lstm_cell_forward state",
            left: (hd, 1),
            right: (h_prev.len().max(c_prev.len()), 1),
        }
        .into());
    }
    let pre = |wx: &Matrix, wh: &Matrix, b: &Matrix| {
        let mut a = b.as_slice().to_vec();
        wx.matvec_acc(x, &mut a);
        wh.matvec_acc(h_prev, &mut a);
        a
    };
    let mut a_i = pre(&params.w_xi, &params.w_hi, &params.b_i);
    let mut a_f = pre(&params.w_xf, &params.w_hf, &params.b_f);
    let a_g = pre(&params.w_xc, &params.w_hc, &params.b_c);
    let mut a_o = pre(&params.w_xo, &params.w_ho, &params.b_o);
    for k in 0..hd {
        a_i[k] += params.w_ci.as_slice()[k] * c_prev[k];
        a_f[k] += params.w_cf.as_slice()[k] * c_prev[k];
    }
    let input_gate: Vec<f64> = a_i.iter().map(|&v| sigmoid(v)).collect();
    let forget_gate: Vec<f64> = a_f.iter().map(|&v| sigmoid(v)).collect();
    let candidate: Vec<f64> = a_g.iter().map(|v| v.tanh()).collect();
    let c: Vec<f64> = (0..hd)
        .map(|k| forget_gate[k] * c_prev[k] + input_gate[k] * candidate[k])
        .collect();
    for k in 0..hd {
        a_o[k] += params.w_co.as_slice()[k] * c[k];
    }
    let output_gate: Vec<f64> = a_o.iter().map(|&v| sigmoid(v)).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hd).map(|k| output_gate[k] * tanh_c[k]).collect();
    Ok(CellOutput {
        h,
        c: c.clone(),
        cache: GateCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            input_gate,
            forget_gate,
            output_gate,
            candidate,
            c,
            tanh_c,
        },
    })
}

/// Stacked LSTM layers followed by a softmax classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmStack {
    pub layers: Vec<LstmLayerParams>,
    /// `num_classes × top hidden dim`.
    pub head_w: Matrix,
    /// `num_classes × 1`.
    pub head_b: Matrix,
}

impl LstmStack {
    pub fn zeros(input_dim: usize, hidden_dims: &[usize], num_classes: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden_dims.len());
        let mut d = input_dim;
        for &h in hidden_dims {
            layers.push(LstmLayerParams::zeros(d, h));
            d = h;
        }
        Self {
            layers,
            head_w: Matrix::zeros(num_classes, d),
            head_b: Matrix::zeros(num_classes, 1),
        }
    }

    pub fn random(
        input_dim: usize,
        hidden_dims: &[usize],
        num_classes: usize,
        scale: f64,
        forget_bias: f64,
        rng: &mut RngStream,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden_dims.len());
        let mut d = input_dim;
        for &h in hidden_dims {
            layers.push(LstmLayerParams::random(d, h, scale, forget_bias, rng));
            d = h;
        }
        Self {
            layers,
            head_w: init_weights(num_classes, d, scale, rng),
            head_b: Matrix::zeros(num_classes, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map_or(self.head_w.cols(), |l| l.input_dim())
    }

    pub fn num_classes(&self) -> usize {
        self.head_w.rows()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_dim()).collect()
    }

    /// Checks every layer's shapes and the layer-to-layer chaining.
    pub fn validate(&self) -> Result<(), ShapeError> {
        let mut d = self.input_dim();
        for l in &self.layers {
            if l.input_dim() != d {
                return Err(ShapeError::Mismatch {
                    op: "lstm layer chaining",
                    left: (d, 1),
                    right: (l.input_dim(), 1),
                });
            }
            l.check_shapes()?;
            d = l.hidden_dim();
        }
        if self.head_w.cols() != d || self.head_b.shape() != (self.num_classes(), 1) {
            return Err(ShapeError::Mismatch {
                op: "lstm head",
                left: (self.num_classes(), d),
                right: self.head_w.shape(),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, seq: &Matrix) -> Result<ForwardTrace, LstmError> {
        if seq.rows() == 0 {
            return Err(LstmError::EmptySequence);
        }
        if seq.cols() != self.input_dim() {
            return Err(ShapeError::Mismatch {
                op: "lstm_sequence_forward",
                left: (seq.rows(), self.input_dim()),
                right: seq.shape(),
            }
            .into());
        }
        let t_len = seq.rows();
        let mut caches: Vec<Vec<GateCache>> = Vec::with_capacity(self.layers.len());
        let mut inputs: Vec<Vec<f64>> = seq.row_iter().map(|r| r.to_vec()).collect();
        for layer in &self.layers {
            let mut state = LstmState::zeros(layer.hidden_dim());
            let mut layer_caches = Vec::with_capacity(t_len);
            let mut outputs = Vec::with_capacity(t_len);
            for x in &inputs {
                let out = lstm_cell_forward(layer, x, &state.h, &state.c)?;
                state = LstmState {
                    h: out.h.clone(),
                    c: out.c,
                };
                outputs.push(out.h);
                layer_caches.push(out.cache);
            }
            caches.push(layer_caches);
            inputs = outputs;
        }
        let c = self.num_classes();
        let mut probs = Matrix::zeros(t_len, c);
        for (t, h) in inputs.iter().enumerate() {
            let row = probs.row_mut(t);
            row.copy_from_slice(self.head_b.as_slice());
            self.head_w.matvec_acc(h, row);
            softmax_in_place(row);
        }
        Ok(ForwardTrace {
            caches,
            top_hidden: inputs,
            probs,
        })
    }

    /// Per-step class probabilities, `T × C`.
    pub fn sequence_forward(&self, seq: &Matrix) -> Result<Matrix, LstmError> {
        Ok(self.forward_cached(seq)?.probs)
    }

    /// Video-level score: the probabilities at the last time step.
    pub fn predict_video(&self, seq: &Matrix) -> Result<Vec<f64>, LstmError> {
        let probs = self.sequence_forward(seq)?;
        Ok(probs.row(probs.rows() - 1).to_vec())
    }

    /// Training loss for a batch: mean over samples of the mean per-step
    /// cross-entropy.
    pub fn loss(&self, batch: &[(&Matrix, usize)]) -> Result<f64, LstmError> {
        if batch.is_empty() {
            return Err(LstmError::EmptyBatch);
        }
        let mut total = 0.0;
        for &(seq, label) in batch {
            self.check_label(label)?;
            let probs = self.sequence_forward(seq)?;
            let t_len = probs.rows() as f64;
            total += probs.row_iter().map(|p| -p[label].ln()).sum::<f64>() / t_len;
        }
        Ok(total / batch.len() as f64)
    }

    fn check_label(&self, label: usize) -> Result<(), LstmError> {
        if label >= self.num_classes() {
            return Err(LstmError::LabelOutOfRange {
                label,
                classes: self.num_classes(),
            });
        }
        Ok(())
    }

    /// Loss and exact gradients of [`LstmStack::loss`] by backpropagation
    /// through time over the full sequence.
    pub fn gradients(&self, batch: &[(&Matrix, usize)]) -> Result<(f64, LstmStack), LstmError> {
        if batch.is_empty() {
            return Err(LstmError::EmptyBatch);
        }
        let mut grads = self.zeros_like();
        let mut total = 0.0;
        let batch_scale = 1.0 / batch.len() as f64;
        for &(seq, label) in batch {
            self.check_label(label)?;
            let trace = self.forward_cached(seq)?;
            let t_len = trace.probs.rows();
            let step_scale = batch_scale / t_len as f64;
            let top = self
                .layers
                .last()
                .map_or(self.input_dim(), |l| l.hidden_dim());
            let mut d_inputs: Vec<Vec<f64>> = vec![vec![0.0; top]; t_len];
            for t in 0..t_len {
                let p = trace.probs.row(t);
                total += -p[label].ln() * step_scale;
                let mut dz = p.to_vec();
                dz[label] -= 1.0;
                dz.iter_mut().for_each(|v| *v *= step_scale);
                grads.head_w.add_outer(&dz, &trace.top_hidden[t]);
                for (g, d) in grads.head_b.as_mut_slice().iter_mut().zip(&dz) {
                    *g += d;
                }
                self.head_w.matvec_t_acc(&dz, &mut d_inputs[t]);
            }
            for (li, layer) in self.layers.iter().enumerate().rev() {
                d_inputs =
                    layer_backward(layer, &trace.caches[li], &d_inputs, &mut grads.layers[li]);
            }
        }
        Ok((total, grads))
    }
}

struct ForwardTrace {
    caches: Vec<Vec<GateCache>>,
    top_hidden: Vec<Vec<f64>>,
    probs: Matrix,
}

/// BPTT through one layer. `d_h_ext[t]` is the loss gradient reaching
/// `h_t` from above; returns the gradient w.r.t. each input `x_t`.
fn layer_backward(
    p: &LstmLayerParams,
    caches: &[GateCache],
    d_h_ext: &[Vec<f64>],
    g: &mut LstmLayerParams,
) -> Vec<Vec<f64>> {
    let hd = p.hidden_dim();
    let mut d_x = vec![vec![0.0; p.input_dim()]; caches.len()];
    let mut d_h_next = vec![0.0; hd];
    let mut d_c_next = vec![0.0; hd];
    let w_ci = p.w_ci.as_slice();
    let w_cf = p.w_cf.as_slice();
    let w_co = p.w_co.as_slice();
    let mut da_i = vec![0.0; hd];
    let mut da_f = vec![0.0; hd];
    let mut da_g = vec![0.0; hd];
    let mut da_o = vec![0.0; hd];
    for t in (0..caches.len()).rev() {
        let k = &caches[t];
        for u in 0..hd {
            let dh = d_h_ext[t][u] + d_h_next[u];
            let (i, f, o, gc, tc) = (
                k.input_gate[u],
                k.forget_gate[u],
                k.output_gate[u],
                k.candidate[u],
                k.tanh_c[u],
            );
            da_o[u] = dh * tc * o * (1.0 - o);
            let dc = dh * o * (1.0 - tc * tc) + da_o[u] * w_co[u] + d_c_next[u];
            da_i[u] = dc * gc * i * (1.0 - i);
            da_g[u] = dc * i * (1.0 - gc * gc);
            da_f[u] = dc * k.c_prev[u] * f * (1.0 - f);
            d_c_next[u] = dc * f + da_i[u] * w_ci[u] + da_f[u] * w_cf[u];

            g.w_ci.as_mut_slice()[u] += da_i[u] * k.c_prev[u];
            g.w_cf.as_mut_slice()[u] += da_f[u] * k.c_prev[u];
            g.w_co.as_mut_slice()[u] += da_o[u] * k.c[u];
            g.b_i.as_mut_slice()[u] += da_i[u];
            g.b_f.as_mut_slice()[u] += da_f[u];
            g.b_c.as_mut_slice()[u] += da_g[u];
            g.b_o.as_mut_slice()[u] += da_o[u];
        }
        g.w_xi.add_outer(&da_i, &k.x);
        g.w_xf.add_outer(&da_f, &k.x);
        g.w_xc.add_outer(&da_g, &k.x);
        g.w_xo.add_outer(&da_o, &k.x);
        g.w_hi.add_outer(&da_i, &k.h_prev);
        g.w_hf.add_outer(&da_f, &k.h_prev);
        g.w_hc.add_outer(&da_g, &k.h_prev);
        g.w_ho.add_outer(&da_o, &k.h_prev);

        let dx = &mut d_x[t];
        p.w_xi.matvec_t_acc(&da_i, dx);
        p.w_xf.matvec_t_acc(&da_f, dx);
        p.w_xc.matvec_t_acc(&da_g, dx);
        p.w_xo.matvec_t_acc(&da_o, dx);
        d_h_next.fill(0.0);
        p.w_hi.matvec_t_acc(&da_i, &mut d_h_next);
        p.w_hf.matvec_t_acc(&da_f, &mut d_h_next);
        p.w_hc.matvec_t_acc(&da_g, &mut d_h_next);
        p.w_ho.matvec_t_acc(&da_o, &mut d_h_next);
    }
    d_x
}

impl Parameters for LstmStack {
    fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::with_capacity(self.layers.len() * 15 + 2);
        for (li, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_TENSOR_NAMES.iter().zip(layer.tensors()) {
                out.push((format!("layer{li}.{name}"), t));
            }
        }
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::with_capacity(self.layers.len() * 15 + 2);
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmTrainConfig {
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Global-norm clip threshold; `0` disables clipping.
    pub gradient_clip_threshold: f64,
    pub init_scale: f64,
    pub forget_bias: f64,
}

impl Default for LstmTrainConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![1024, 512],
            learning_rate: 1e-4,
            momentum: 0.9,
            batch_size: 10,
            max_iterations: 150_000,
            seed: 0,
            gradient_clip_threshold: 5.0,
            init_scale: 0.08,
            forget_bias: 1.0,
        }
    }
}

impl LstmTrainConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        if !(self.learning_rate > 0.0) {
            return Err(LstmError::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LstmError::Config("momentum must be in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(LstmError::Config("batch_size must be positive".into()));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(LstmError::Config("hidden dims must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLstm {
    pub stack: LstmStack,
    /// Mini-batch loss before each update.
    pub loss_trace: Vec<f64>,
}

/// Momentum SGD over shuffled mini-batches. Each epoch reshuffles the
/// sample order from the config seed; the run is deterministic.
pub fn train_lstm(
    config: &LstmTrainConfig,
    data: &[(Matrix, usize)],
    num_classes: usize,
) -> Result<TrainedLstm, LstmError> {
    config.validate()?;
    let first = data.first().ok_or(LstmError::EmptyDataset)?;
    let input_dim = first.0.cols();
    for (index, (seq, label)) in data.iter().enumerate() {
        if seq.cols() != input_dim {
            return Err(LstmError::InconsistentDims {
                index,
                expected: input_dim,
                found: seq.cols(),
            });
        }
        if seq.rows() == 0 {
            return Err(LstmError::EmptySequence);
        }
        if *label >= num_classes {
            return Err(LstmError::LabelOutOfRange {
                label: *label,
                classes: num_classes,
            });
        }
    }
    let mut rng = RngStream::new(config.seed);
    let mut stack = LstmStack::random(
        input_dim,
        &config.hidden_dims,
        num_classes,
        config.init_scale,
        config.forget_bias,
        &mut rng,
    );
    let mut velocity = stack.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut loss_trace = Vec::with_capacity(config.max_iterations);
    let batch_size = config.batch_size.min(data.len());
    for iteration in 0..config.max_iterations {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            let (seq, label) = &data[order[cursor]];
            batch.push((seq, *label));
            cursor += 1;
        }
        let (loss, mut grads) = stack.gradients(&batch)?;
        if !loss.is_finite() {
            return Err(LstmError::NonFiniteLoss { iteration });
        }
        loss_trace.push(loss);
        clip_global_norm(&mut grads, config.gradient_clip_threshold);
        velocity.scale_all(config.momentum);
        velocity.axpy_all(-config.learning_rate, &grads);
        stack.axpy_all(1.0, &velocity);
    }
    Ok(TrainedLstm { stack, loss_trace })
}

/// Fraction of sequences whose last-step argmax equals the label.
pub fn sequence_accuracy(stack: &LstmStack, data: &[(Matrix, usize)]) -> Result<f64, LstmError> {
    if data.is_empty() {
        return Err(LstmError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (seq, label) in data {
        if argmax(&stack.predict_video(seq)?) == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
