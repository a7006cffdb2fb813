//! Experiment configuration, read from TOML.
//!
//! Every key is optional. Sections:
//!
//! ```toml
//! seed = 0                 # split seed; --seed also overrides every model seed
//! output = "out"
//! models = "all"           # lstm-spatial | lstm-motion | fusion | all
//!
//! [data]
//! path = "dataset/"        # omit to generate [data.synth]
//! [data.split]             # used when the dataset carries no split
//! train = 0.7
//! validation = 0.1
//! test = 0.2
//! [data.synth]             # synthetic generator settings
//!
//! [lstm]                   # LSTM training
//! [fusion.net]             # fusion network shape
//! [fusion.reg]             # fusion training and regularization
//! [score_fusion]
//! weights = [1.0, 1.0]     # per selected model, in pipeline order
//! [refine]
//! enabled = true
//! transpose = false
//! renormalize = false
//! smoothing = 0.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vidfuse::data::{SplitFractions, SynthConfig};
use vidfuse::fusion::{FusionNetConfig, RegConfig};
use vidfuse::lstm::LstmTrainConfig;

use crate::checkpoint::ModelKind;
use crate::error::{at, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSelection {
    LstmSpatial,
    LstmMotion,
    Fusion,
    #[default]
    All,
}

impl ModelSelection {
    /// Selected models in pipeline order.
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelSelection::LstmSpatial => vec![ModelKind::LstmSpatial],
            ModelSelection::LstmMotion => vec![ModelKind::LstmMotion],
            ModelSelection::Fusion => vec![ModelKind::Fusion],
            ModelSelection::All => vec![
                ModelKind::LstmSpatial,
                ModelKind::LstmMotion,
                ModelKind::Fusion,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub split: SplitFractions,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub net: FusionNetConfig,
    pub reg: RegConfig,
}

/// Fusion widths sized for the small synthetic datasets.
impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            net: FusionNetConfig {
                branch_dim: 32,
                fusion_dim: 32,
                ..FusionNetConfig::default()
            },
            reg: RegConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreFusionConfig {
    /// `None` means equal weights.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub enabled: bool,
    pub transpose: bool,
    pub renormalize: bool,
    pub smoothing: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            transpose: false,
            renormalize: false,
            smoothing: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub models: ModelSelection,
    pub data: DataConfig,
    pub lstm: LstmTrainConfig,
    pub fusion: FusionConfig,
    pub score_fusion: ScoreFusionConfig,
    pub refine: RefineConfig,
}

/// LSTM settings sized for the small synthetic datasets.
pub fn desk_lstm() -> LstmTrainConfig {
    LstmTrainConfig {
        hidden_dims: vec![32],
        learning_rate: 0.01,
        max_iterations: 2000,
        ..LstmTrainConfig::default()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("out"),
            models: ModelSelection::All,
            data: DataConfig::default(),
            lstm: desk_lstm(),
            fusion: FusionConfig::default(),
            score_fusion: ScoreFusionConfig::default(),
            refine: RefineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::config("config", e))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::config("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative dataset paths are resolved against the config file.
        if let (Some(p), Some(dir)) = (cfg.data.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `--seed`: the split, generator and every model use it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.data.synth.seed = seed;
        self.lstm.seed = seed;
        self.fusion.reg.seed = seed;
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if let Some(p) = &self.data.path {
            if !p.exists() {
                return Err(RunError::config(
                    "config",
                    format!("data path {} does not exist", p.display()),
                ));
            }
        } else {
            self.data.synth.validate().map_err(at("config"))?;
        }
        let kinds = self.models.kinds();
        if kinds.iter().any(|k| k.is_lstm()) {
            self.lstm.validate().map_err(at("config"))?;
        }
        if kinds.contains(&ModelKind::Fusion) {
            self.fusion.reg.validate().map_err(at("config"))?;
        }
        if let Some(w) = &self.score_fusion.weights {
            if w.len() != kinds.len() {
                return Err(RunError::config(
                    "config",
                    format!("{} fusion weights for {} models", w.len(), kinds.len()),
                ));
            }
            vidfuse::scorefusion::FusionWeights::new(w)
                .map_err(|e| RunError::config("config", e))?;
        }
        if !(0.0..=1.0).contains(&self.refine.smoothing) {
            return Err(RunError::config(
                "config",
                "refine.smoothing must be in [0, 1]",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::default();
        c.data.synth.confusable_pairs = vec![(0, 1)];
        c.score_fusion.weights = Some(vec![1.0, 2.0, 1.0]);
        c.fusion.net.layout =
            vidfuse::fusion::FusionLayout::Single(vidfuse::fusion::Modality::Audio);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3").is_err());
        assert!(ExperimentConfig::from_toml("[refine]\nenable = true").is_err());
    }

    #[test]
    fn validation_errors() {
        let mut c = ExperimentConfig::default();
        c.score_fusion.weights = Some(vec![1.0]);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.data.path = Some("/nonexistent/dataset".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let mut c = ExperimentConfig::default();
        c.set_seed(9);
        assert_eq!(
            (c.seed, c.data.synth.seed, c.lstm.seed, c.fusion.reg.seed),
            (9, 9, 9, 9)
        );
    }
}
