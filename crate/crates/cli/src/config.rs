//! Run configuration: one JSON file, every field optional, flags applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slm_core::ablation::GridModel;
use slm_core::corpus::parse_fraction;
use slm_core::{Backbone, CorpusFormat, ModelConfig, ScorerKind, SplitSpec, Strategy, TrainingConfig};

use crate::Invalid;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds encoding, initialization, batching, splitting and shuffling.
    pub seed: u64,
    pub encode: EncodeSection,
    pub model: ModelSection,
    pub training: TrainingConfig,
    pub split: SplitSection,
    pub order: OrderSection,
    pub ablate: AblateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    pub dim: usize,
    pub format: Option<CorpusFormat>,
}

impl Default for EncodeSection {
    fn default() -> Self {
        EncodeSection { dim: 64, format: None }
    }
}

/// Unset sizes take the model defaults for the embedding width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: Backbone,
    pub d: Option<usize>,
    pub h: Option<usize>,
    pub heads: Option<usize>,
    pub depth_steps: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            backbone: Backbone::UniversalTransformer,
            d: None,
            h: None,
            heads: None,
            depth_steps: None,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, d: usize, seed: u64) -> Result<ModelConfig, Invalid> {
        if let Some(want) = self.d {
            if want != d {
                return Err(Invalid(format!(
                    "model.d is {want} but the embeddings have dimension {d}"
                )));
            }
        }
        let mut cfg = ModelConfig::new(d, self.backbone, seed);
        if let Some(h) = self.h {
            cfg.h = h;
        }
        if let Some(heads) = self.heads {
            cfg.heads = heads;
        }
        if let Some(t) = self.depth_steps {
            cfg.depth_steps = t;
        }
        cfg.validate().map_err(|e| Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// Fractions as decimals, `a/b` or percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: String,
    pub validation: String,
    pub test: String,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train: "4/5".into(),
            validation: "1/10".into(),
            test: "1/10".into(),
        }
    }
}

impl SplitSection {
    pub fn spec(&self, seed: u64) -> slm_core::Result<SplitSpec> {
        SplitSpec::new(
            parse_fraction(&self.train)?,
            parse_fraction(&self.validation)?,
            parse_fraction(&self.test)?,
            seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderSection {
    pub strategy: Strategy,
    pub scorer: ScorerKind,
    /// Highest n-gram order of the overlap scorer.
    pub max_n: usize,
}

impl Default for OrderSection {
    fn default() -> Self {
        OrderSection {
            strategy: Strategy::BruteForce,
            scorer: ScorerKind::LmCosine,
            max_n: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderFile {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub encoders: Vec<EncoderFile>,
    pub models: Vec<GridModel>,
    /// Attention and feed-forward width as a multiple of `d`.
    pub hidden_multiplier: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            encoders: Vec::new(),
            models: vec![GridModel::UniversalTransformer, GridModel::Bilstm],
            hidden_multiplier: 4,
        }
    }
}

pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| slm_core::Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Invalid(format!("config {}: {e}", path.display())).into())
}
