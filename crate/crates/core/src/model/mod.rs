//! The sentence-level language model: given the embeddings of a story's
//! sentences, predict for each sentence the embedding of the sentence that
//! follows it.
//!
//! Two backbones share one parameter container: a universal transformer (a
//! single attention + transition block applied recurrently in depth, followed
//! by a decoder block and an output projection) and a bidirectional LSTM.

mod bilstm;
mod checkpoint;
mod layers;
mod loss;
mod matrix;
mod train;
mod ut;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::normalized;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use loss::{loss, story_gradients, story_objective};
pub use matrix::Matrix;
pub use train::{train, train_from, EpochLoss, LrSchedule, TrainingConfig, TrainingOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    UniversalTransformer,
    Bilstm,
}

impl Backbone {
    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::UniversalTransformer => "universal-transformer",
            Backbone::Bilstm => "bilstm",
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "universal-transformer" | "ut" => Ok(Backbone::UniversalTransformer),
            "bilstm" => Ok(Backbone::Bilstm),
            other => Err(Error::Config(format!("unknown backbone {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Attention and transition width.
    pub h: usize,
    pub heads: usize,
    /// Number of recurrent refinement steps of the shared encoder block.
    pub depth_steps: usize,
    pub backbone: Backbone,
    pub seed: u64,
}

impl ModelConfig {
    /// `h = 4d`, 8 heads (fewer when `4d` is not divisible by 8), 4 steps.
    pub fn new(d: usize, backbone: Backbone, seed: u64) -> Self {
        let h = 4 * d;
        let heads = [8, 4, 2, 1].into_iter().find(|&k| h.is_multiple_of(k)).unwrap_or(1);
        ModelConfig {
            d,
            h,
            heads,
            depth_steps: 4,
            backbone,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.h == 0 {
            return Err(Error::Config("d and h must be positive".into()));
        }
        if self.heads == 0 || !self.h.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.h, self.heads
            )));
        }
        if self.depth_steps == 0 {
            return Err(Error::Config("depth_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Name, kind and shape of every parameter tensor, in storage order.
    pub fn layout(&self) -> Vec<TensorSpec> {
        let (d, h) = (self.d, self.h);
        let spec = |name: String, kind, rows, cols| TensorSpec {
            name,
            kind,
            rows,
            cols,
        };
        let mut out = Vec::new();
        match self.backbone {
            Backbone::UniversalTransformer => {
                use TensorKind::*;
                for prefix in ["encoder", "decoder"] {
                    let shapes = [
                        (Weight, d, h),
                        (Weight, d, h),
                        (Weight, d, h),
                        (Weight, h, d),
                        (Bias, 1, d),
                        (Gain, 1, d),
                        (Bias, 1, d),
                        (Weight, d, h),
                        (Bias, 1, h),
                        (Weight, h, d),
                        (Bias, 1, d),
                        (Gain, 1, d),
                        (Bias, 1, d),
                    ];
                    for (name, (kind, r, c)) in layers::block::NAMES.iter().zip(shapes) {
                        out.push(spec(format!("{prefix}.{name}"), kind, r, c));
                    }
                }
                out.push(spec("output.w".into(), Weight, d, d));
                out.push(spec("output.b".into(), Bias, 1, d));
            }
            Backbone::Bilstm => {
                let k = bilstm::hidden_size(self);
                for dir in ["forward", "backward"] {
                    out.push(spec(format!("{dir}.wx"), TensorKind::Weight, d, 4 * k));
                    out.push(spec(format!("{dir}.wh"), TensorKind::Weight, k, 4 * k));
                    out.push(spec(format!("{dir}.b"), TensorKind::Bias, 1, 4 * k));
                }
                out.push(spec("output.w".into(), TensorKind::Weight, 2 * k, d));
                out.push(spec("output.b".into(), TensorKind::Bias, 1, d));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    /// Matrix with fan-in `rows`; initialized uniformly, L2-regularized.
    Weight,
    /// Additive offset; initialized to zero.
    Bias,
    /// Layer-norm gain; initialized to one.
    Gain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub kind: TensorKind,
    pub rows: usize,
    pub cols: usize,
}

/// Model configuration plus one matrix per entry of [`ModelConfig::layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    specs: Vec<TensorSpec>,
    values: Vec<Matrix<F>>,
}

impl<F: Scalar> ModelParams<F> {
    pub fn from_parts(config: ModelConfig, values: Vec<Matrix<F>>) -> Result<Self> {
        config.validate()?;
        let specs = config.layout();
        if specs.len() != values.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, got {}",
                specs.len(),
                values.len()
            )));
        }
        for (s, v) in specs.iter().zip(&values) {
            if v.shape() != (s.rows, s.cols) {
                return Err(Error::Config(format!(
                    "tensor {} has shape {:?}, expected ({}, {})",
                    s.name,
                    v.shape(),
                    s.rows,
                    s.cols
                )));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("tensor {} is not finite", s.name)));
            }
        }
        Ok(ModelParams {
            config,
            specs,
            values,
        })
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[Matrix<F>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix<F>] {
        &mut self.values
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix<F>> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| &self.values[i])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix<F>> {
        let i = self.specs.iter().position(|s| s.name == name)?;
        Some(&mut self.values[i])
    }

    /// Zero matrices shaped like every tensor.
    pub fn zeros_like(&self) -> Vec<Matrix<F>> {
        self.values
            .iter()
            .map(|v| Matrix::zeros(v.rows(), v.cols()))
            .collect()
    }

    /// Sum of squares over `Weight` tensors (the regularized set).
    pub fn weight_sq_norm(&self) -> F {
        self.specs
            .iter()
            .zip(&self.values)
            .filter(|(s, _)| s.kind == TensorKind::Weight)
            .map(|(_, v)| v.sum_squares())
            .sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }
}

/// Deterministic initialization: `Weight` entries uniform in
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero, gains one.
pub fn init_params<F: Scalar>(config: &ModelConfig) -> Result<ModelParams<F>> {
    config.validate()?;
    let mut rng = SeededRng::new(config.seed);
    let values = config
        .layout()
        .iter()
        .map(|s| match s.kind {
            TensorKind::Weight => {
                let bound = 1.0 / (s.rows as f64).sqrt();
                let data = (0..s.rows * s.cols)
                    .map(|_| F::of(rng.uniform(-bound, bound)))
                    .collect();
                Matrix::from_vec(s.rows, s.cols, data)
            }
            TensorKind::Bias => Matrix::zeros(s.rows, s.cols),
            TensorKind::Gain => Matrix::filled(s.rows, s.cols, F::one()),
        })
        .collect();
    ModelParams::from_parts(config.clone(), values)
}

/// One predicted successor embedding per input sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<F> {
    pub candidates: Vec<Vec<F>>,
}

impl<F: Scalar> CandidateSet<F> {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

pub(crate) fn input_matrix<F: Scalar>(config: &ModelConfig, inputs: &[Vec<F>]) -> Result<Matrix<F>> {
    if inputs.is_empty() {
        return Err(Error::Empty("model input".into()));
    }
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != config.d {
            return Err(Error::DimensionMismatch {
                record: i,
                expected: config.d,
                found: x.len(),
            });
        }
    }
    Ok(Matrix::from_rows(inputs))
}

fn require_backbone<F>(params: &ModelParams<F>, backbone: Backbone) -> Result<()> {
    if params.config.backbone != backbone {
        return Err(Error::Config(format!(
            "parameters are for the {} backbone, not {}",
            params.config.backbone, backbone
        )));
    }
    Ok(())
}

pub fn ut_forward<F: Scalar>(params: &ModelParams<F>, inputs: &[Vec<F>]) -> Result<CandidateSet<F>> {
    require_backbone(params, Backbone::UniversalTransformer)?;
    let x = input_matrix(&params.config, inputs)?;
    Ok(CandidateSet {
        candidates: ut::forward(params, &x).0.to_rows(),
    })
}

pub fn bilstm_forward<F: Scalar>(
    params: &ModelParams<F>,
    inputs: &[Vec<F>],
) -> Result<CandidateSet<F>> {
    require_backbone(params, Backbone::Bilstm)?;
    let x = input_matrix(&params.config, inputs)?;
    Ok(CandidateSet {
        candidates: bilstm::forward(params, &x).0.to_rows(),
    })
}

/// Forward pass of whichever backbone `params` holds, on raw inputs.
pub fn forward<F: Scalar>(params: &ModelParams<F>, inputs: &[Vec<F>]) -> Result<CandidateSet<F>> {
    match params.config.backbone {
        Backbone::UniversalTransformer => ut_forward(params, inputs),
        Backbone::Bilstm => bilstm_forward(params, inputs),
    }
}

/// Candidates for every sentence of a (possibly shuffled) story. Embeddings are
/// L2-normalized before the forward pass, as during training.
pub fn candidate_next<F: Scalar>(
    params: &ModelParams<F>,
    embeddings: &[Vec<F>],
) -> Result<CandidateSet<F>> {
    let inputs = embeddings
        .iter()
        .map(|e| normalized(e))
        .collect::<Result<Vec<_>>>()?;
    forward(params, &inputs)
}
