//! Model checkpoints: JSON with every parameter tensor and its shape.
//!
//! ```text
//! {"format":"vidfuse-checkpoint","version":1,"kind":"lstm-spatial",
//!  "manifest_hash":"..","classes":[..],
//!  "model":{"type":"lstm","train":{..},"input_dim":d} | {"type":"fusion","net":{..},"reg":{..},"dims":[ds,dm,da]},
//!  "tensors":[{"name":"layer0.w_xi","rows":r,"cols":c,"data":[..]},..]}
//! ```
//!
//! Floats are written as shortest round-trip decimals, so save then load
//! is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vidfuse::data::VideoRecord;
use vidfuse::fusion::{FusionNetConfig, FusionNetParams, RegConfig};
use vidfuse::lstm::{LstmStack, LstmTrainConfig};
use vidfuse::scores::class_manifest_hash;
use vidfuse::{Matrix, Parameters, ScoreKind, ScoreMatrix};

use crate::error::{at, RunError};

pub const CHECKPOINT_FORMAT: &str = "vidfuse-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LstmSpatial,
    LstmMotion,
    Fusion,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LstmSpatial => "lstm-spatial",
            ModelKind::LstmMotion => "lstm-motion",
            ModelKind::Fusion => "fusion",
        }
    }

    pub fn is_lstm(self) -> bool {
        self != ModelKind::Fusion
    }

    /// The sequence an LSTM model consumes.
    pub fn sequence(self, r: &VideoRecord) -> &Matrix {
        match self {
            ModelKind::LstmMotion => &r.motion,
            _ => &r.spatial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelConfig {
    Lstm {
        train: LstmTrainConfig,
        input_dim: usize,
    },
    Fusion {
        net: FusionNetConfig,
        reg: RegConfig,
        dims: [usize; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub manifest_hash: String,
    pub classes: Vec<String>,
    pub model: ModelConfig,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Lstm(LstmStack),
    Fusion(FusionNetParams),
}

fn records<P: Parameters>(p: &P) -> Vec<TensorRecord> {
    p.named_tensors()
        .into_iter()
        .map(|(name, m)| TensorRecord {
            name,
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        })
        .collect()
}

fn fill<P: Parameters>(mut target: P, tensors: &[TensorRecord]) -> Result<P, RunError> {
    let names: Vec<(String, (usize, usize))> = target
        .named_tensors()
        .into_iter()
        .map(|(n, m)| (n, m.shape()))
        .collect();
    if names.len() != tensors.len() {
        return Err(RunError::data(
            "checkpoint",
            format!("expected {} tensors, found {}", names.len(), tensors.len()),
        ));
    }
    for (((name, shape), slot), t) in names.iter().zip(target.tensors_mut()).zip(tensors) {
        if &t.name != name || (t.rows, t.cols) != *shape || t.data.len() != t.rows * t.cols {
            return Err(RunError::data(
                "checkpoint",
                format!(
                    "tensor {} {}x{} does not match expected {name} {shape:?}",
                    t.name, t.rows, t.cols
                ),
            ));
        }
        *slot = Matrix::from_vec(t.rows, t.cols, t.data.clone()).map_err(at("checkpoint"))?;
    }
    Ok(target)
}

impl Checkpoint {
    pub fn from_lstm(
        kind: ModelKind,
        stack: &LstmStack,
        train: &LstmTrainConfig,
        classes: &[String],
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind,
            manifest_hash: class_manifest_hash(classes),
            classes: classes.to_vec(),
            model: ModelConfig::Lstm {
                train: train.clone(),
                input_dim: stack.input_dim(),
            },
            tensors: records(stack),
        }
    }

    pub fn from_fusion(
        params: &FusionNetParams,
        net: &FusionNetConfig,
        reg: &RegConfig,
        dims: [usize; 3],
        classes: &[String],
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: ModelKind::Fusion,
            manifest_hash: class_manifest_hash(classes),
            classes: classes.to_vec(),
            model: ModelConfig::Fusion {
                net: net.clone(),
                reg: reg.clone(),
                dims,
            },
            tensors: records(params),
        }
    }

    /// Rebuilds the parameters, checking every tensor name and shape.
    pub fn model(&self) -> Result<Model, RunError> {
        let c = self.classes.len();
        match &self.model {
            ModelConfig::Lstm { train, input_dim } => Ok(Model::Lstm(fill(
                LstmStack::zeros(*input_dim, &train.hidden_dims, c),
                &self.tensors,
            )?)),
            ModelConfig::Fusion { net, dims, .. } => Ok(Model::Fusion(fill(
                FusionNetParams::zeros(*dims, c, net),
                &self.tensors,
            )?)),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let h: Header = serde_json::from_str(text).map_err(|e| RunError::data("checkpoint", e))?;
        if h.format != CHECKPOINT_FORMAT {
            return Err(RunError::data(
                "checkpoint",
                format!("unknown format {:?}", h.format),
            ));
        }
        if h.version != CHECKPOINT_VERSION {
            return Err(RunError::data(
                "checkpoint",
                format!(
                    "checkpoint version {} is not supported (this build reads version {CHECKPOINT_VERSION})",
                    h.version
                ),
            ));
        }
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| RunError::data("checkpoint", e))?;
        if class_manifest_hash(&ck.classes) != ck.manifest_hash {
            return Err(RunError::data(
                "checkpoint",
                "manifest hash does not match classes",
            ));
        }
        ck.model()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        std::fs::write(path, self.to_json()).map_err(|e| RunError::io("checkpoint", path, e))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| RunError::io("checkpoint", path, e))?;
        Self::from_json(&text)
    }
}

/// Class probabilities of `model` for each record, in record order.
pub fn score_records(
    model: &Model,
    kind: ModelKind,
    records: &[&VideoRecord],
    classes: &[String],
) -> Result<ScoreMatrix, RunError> {
    let stage = format!("score {}", kind.name());
    let mut values = Matrix::zeros(records.len(), classes.len());
    for (i, r) in records.iter().enumerate() {
        let p = match model {
            Model::Lstm(s) => s.predict_video(kind.sequence(r)).map_err(at(&stage))?,
            Model::Fusion(f) => f.forward(&r.video_level()).map_err(at(&stage))?,
        };
        if p.len() != classes.len() {
            return Err(RunError::data(
                &stage,
                "model class count does not match dataset",
            ));
        }
        values.row_mut(i).copy_from_slice(&p);
    }
    ScoreMatrix::new(
        records.iter().map(|r| r.id.clone()).collect(),
        classes.to_vec(),
        values,
        ScoreKind::Probability,
    )
    .map_err(at(&stage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vidfuse::RngStream;

    fn classes() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn lstm_round_trip_bit_exact() {
        let stack = LstmStack::random(3, &[4, 2], 2, 0.3, 1.0, &mut RngStream::new(1));
        let cfg = LstmTrainConfig {
            hidden_dims: vec![4, 2],
            ..Default::default()
        };
        let ck = Checkpoint::from_lstm(ModelKind::LstmSpatial, &stack, &cfg, &classes());
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model().unwrap(), Model::Lstm(stack));
    }

    #[test]
    fn fusion_round_trip_bit_exact() {
        let net = FusionNetConfig {
            branch_dim: 3,
            fusion_dim: 2,
            ..Default::default()
        };
        let p = FusionNetParams::random([2, 3, 1], 2, &net, &mut RngStream::new(2));
        let ck = Checkpoint::from_fusion(&p, &net, &RegConfig::default(), [2, 3, 1], &classes());
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back.model().unwrap(), Model::Fusion(p));
    }

    #[test]
    fn version_mismatch_refused() {
        let stack = LstmStack::zeros(1, &[1], 2);
        let ck = Checkpoint::from_lstm(
            ModelKind::LstmMotion,
            &stack,
            &LstmTrainConfig {
                hidden_dims: vec![1],
                ..Default::default()
            },
            &classes(),
        );
        let text = ck.to_json().replace("\"version\":1", "\"version\":7");
        let err = Checkpoint::from_json(&text).unwrap_err();
        assert!(err.message.contains("version 7"), "{err}");
    }

    #[test]
    fn shape_mismatch_refused() {
        let stack = LstmStack::zeros(1, &[1], 2);
        let mut ck = Checkpoint::from_lstm(
            ModelKind::LstmSpatial,
            &stack,
            &LstmTrainConfig {
                hidden_dims: vec![1],
                ..Default::default()
            },
            &classes(),
        );
        ck.tensors[0].rows = 2;
        assert!(Checkpoint::from_json(&ck.to_json()).is_err());
    }
}
