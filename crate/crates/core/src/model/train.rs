//! Mini-batch gradient descent with L2 regularization and a decaying rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{add_regularization_grad, data_loss_and_grad};
use super::matrix::Matrix;
use super::ModelParams;
use crate::embedding::{normalized, EmbeddedStory};
use crate::error::{Error, Result};
use crate::rng::{keyed_hash, SeededRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// `α / (1 + decay · (epoch - 1))`
    InverseTime { decay: f64 },
    /// `α · gamma^(epoch - 1)`
    Exponential { gamma: f64 },
}

impl LrSchedule {
    /// Rate for a 1-based epoch.
    pub fn rate(&self, initial: f64, epoch: usize) -> f64 {
        let k = epoch.saturating_sub(1) as f64;
        match *self {
            LrSchedule::Constant => initial,
            LrSchedule::InverseTime { decay } => initial / (1.0 + decay * k),
            LrSchedule::Exponential { gamma } => initial * gamma.powf(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Initial learning rate α.
    pub learning_rate: f64,
    /// L2 coefficient λ on weight matrices.
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Seed of the per-epoch batch order.
    pub seed: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.5,
            l2: 1e-5,
            epochs: 100,
            batch_size: 16,
            schedule: LrSchedule::InverseTime { decay: 0.01 },
            seed: 0,
            max_grad_norm: Some(1.0),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("regularization must be non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if let Some(c) = self.max_grad_norm {
            if c.is_nan() || c <= 0.0 || c.is_infinite() {
                return Err(Error::Config("max_grad_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 1-based, continuing across resumed runs.
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome<F> {
    pub params: ModelParams<F>,
    pub trace: Vec<EpochLoss>,
}

pub fn train<F: Scalar>(
    params: ModelParams<F>,
    corpus: &[EmbeddedStory<F>],
    tcfg: &TrainingConfig,
) -> Result<TrainingOutcome<F>> {
    train_from(params, corpus, tcfg, 0)
}

/// Continues training after `epochs_done` completed epochs; the returned trace
/// is numbered from `epochs_done + 1`.
pub fn train_from<F: Scalar>(
    mut params: ModelParams<F>,
    corpus: &[EmbeddedStory<F>],
    tcfg: &TrainingConfig,
    epochs_done: usize,
) -> Result<TrainingOutcome<F>> {
    tcfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus has no stories".into()));
    }
    let stories = corpus
        .iter()
        .map(|s| {
            if s.gold_perm.is_some() {
                return Err(Error::Config(format!(
                    "story {:?} is shuffled; training needs gold order",
                    s.story_id
                )));
            }
            if s.len() < 2 {
                return Err(Error::Empty(format!(
                    "story {:?} has fewer than two sentences",
                    s.story_id
                )));
            }
            s.embeddings.iter().map(|e| normalized(e)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let lambda = F::of(tcfg.l2);
    let mut trace = Vec::with_capacity(tcfg.epochs);
    for epoch in epochs_done + 1..=epochs_done + tcfg.epochs {
        let lr = tcfg.schedule.rate(tcfg.learning_rate, epoch);
        let mut order: Vec<usize> = (0..stories.len()).collect();
        SeededRng::new(keyed_hash(tcfg.seed, &(epoch as u64).to_le_bytes())).shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let batches: Vec<&[usize]> = order.chunks(tcfg.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| data_loss_and_grad(&params, &stories[i]))
                .collect::<Result<Vec<_>>>()?;
            let scale = F::one() / F::of(batch.len() as f64);
            let mut grads = params.zeros_like();
            let mut data = F::zero();
            for (l, g) in &results {
                data = data + *l;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    acc.add_assign(gi);
                }
            }
            grads.iter_mut().for_each(|g| *g = g.scale(scale));
            let batch_loss = (data * scale + lambda * params.weight_sq_norm()).to_f64_lossless();
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                });
            }
            add_regularization_grad(&params, lambda, &mut grads);
            if let Some(max) = tcfg.max_grad_norm {
                clip(&mut grads, F::of(max));
            }
            let step = F::of(lr);
            for (w, g) in params.values_mut().iter_mut().zip(&grads) {
                for (wv, &gv) in w.data_mut().iter_mut().zip(g.data()) {
                    *wv = *wv - step * gv;
                }
            }
            if params.values().iter().any(|w| !w.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                });
            }
            epoch_loss += batch_loss;
        }
        trace.push(EpochLoss {
            epoch,
            mean_loss: epoch_loss / batches.len() as f64,
            learning_rate: lr,
        });
    }
    Ok(TrainingOutcome { params, trace })
}

fn clip<F: Scalar>(grads: &mut [Matrix<F>], max: F) {
    let norm = grads.iter().map(Matrix::sum_squares).sum::<F>().sqrt();
    if norm > max {
        let k = max / norm;
        grads.iter_mut().for_each(|g| *g = g.scale(k));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Backbone, ModelConfig};

    fn story(id: &str, rows: Vec<Vec<f64>>) -> EmbeddedStory<f64> {
        EmbeddedStory {
            story_id: id.into(),
            encoder: "test".into(),
            sentences: (0..rows.len()).map(|i| format!("s{i}")).collect(),
            embeddings: rows,
            gold_perm: None,
        }
    }

    #[test]
    fn schedules() {
        assert_eq!(LrSchedule::Constant.rate(0.5, 10), 0.5);
        assert_eq!(LrSchedule::InverseTime { decay: 1.0 }.rate(0.5, 2), 0.25);
        assert_eq!(LrSchedule::Exponential { gamma: 0.5 }.rate(1.0, 3), 0.25);
        assert_eq!(LrSchedule::InverseTime { decay: 1.0 }.rate(0.5, 1), 0.5);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let p: ModelParams<f64> =
            init_params(&ModelConfig::new(4, Backbone::UniversalTransformer, 0)).unwrap();
        let tcfg = TrainingConfig { epochs: 1, ..Default::default() };
        assert!(matches!(train(p, &[], &tcfg), Err(Error::Empty(_))));
    }

    #[test]
    fn short_and_shuffled_stories_rejected() {
        let p: ModelParams<f64> =
            init_params(&ModelConfig::new(2, Backbone::Bilstm, 0)).unwrap();
        let tcfg = TrainingConfig { epochs: 1, ..Default::default() };
        let one = story("a", vec![vec![1.0, 0.0]]);
        assert!(train(p.clone(), &[one], &tcfg).is_err());
        let mut shuffled = story("b", vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        shuffled.gold_perm = Some(crate::Permutation::identity(2));
        assert!(train(p, &[shuffled], &tcfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let p: ModelParams<f64> =
            init_params(&ModelConfig::new(2, Backbone::Bilstm, 0)).unwrap();
        let tcfg = TrainingConfig {
            epochs: 3,
            learning_rate: 1e308,
            max_grad_norm: None,
            ..Default::default()
        };
        let s = story("a", vec![vec![1.0, 0.2], vec![0.1, 1.0], vec![-1.0, 0.3]]);
        assert!(matches!(train(p, &[s], &tcfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn invalid_config() {
        assert!(TrainingConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { l2: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
