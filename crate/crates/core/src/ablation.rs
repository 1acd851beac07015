//! Evaluation grid over encoders, story models and search strategies.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_corpus, SplitSpec};
use crate::embedding::EmbeddedStory;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{init_params, train, Backbone, ModelConfig, TrainingConfig};
use crate::pipeline::{order_story_both, Scorer, StoryOrder};
use crate::scalar::Scalar;
use crate::search::Strategy;

/// Source of successor scores for one grid column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridModel {
    UniversalTransformer,
    Bilstm,
    CbowCosine,
    NgramOverlap,
    Oracle,
}

impl GridModel {
    pub fn backbone(self) -> Option<Backbone> {
        match self {
            GridModel::UniversalTransformer => Some(Backbone::UniversalTransformer),
            GridModel::Bilstm => Some(Backbone::Bilstm),
            _ => None,
        }
    }
}

impl fmt::Display for GridModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridModel::UniversalTransformer => "universal-transformer",
            GridModel::Bilstm => "bilstm",
            GridModel::CbowCosine => "cbow-cosine",
            GridModel::NgramOverlap => "ngram-overlap",
            GridModel::Oracle => "oracle",
        })
    }
}

impl FromStr for GridModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "universal-transformer" | "ut" => Ok(GridModel::UniversalTransformer),
            "bilstm" => Ok(GridModel::Bilstm),
            "cbow-cosine" => Ok(GridModel::CbowCosine),
            "ngram-overlap" => Ok(GridModel::NgramOverlap),
            "oracle" => Ok(GridModel::Oracle),
            other => Err(Error::Config(format!("unknown grid model {other:?}"))),
        }
    }
}

/// Settings shared by every cell.
#[derive(Debug, Clone)]
pub struct GridSettings {
    /// Template for trained models; `d` is taken from each encoder's files and
    /// `h` becomes `hidden_multiplier · d`.
    pub model: ModelConfig,
    pub hidden_multiplier: usize,
    pub training: TrainingConfig,
    pub split: SplitSpec,
    /// Seed of the per-story evaluation shuffles.
    pub order_seed: u64,
}

/// One output row: an (encoder, model, strategy) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub encoder: String,
    pub model: String,
    pub strategy: String,
    pub stories: usize,
    pub tau: f64,
    pub pmr: f64,
    pub pairwise_ratio: f64,
    pub mean_total_score: f64,
    /// Stories where brute force scored below nearest neighbor (always 0).
    pub dominance_violations: usize,
    pub final_train_loss: Option<f64>,
    pub error: Option<String>,
}

impl GridRow {
    pub fn failed(encoder: &str, model: GridModel, strategy: Strategy, err: &Error) -> Self {
        GridRow {
            encoder: encoder.to_string(),
            model: model.to_string(),
            strategy: strategy.to_string(),
            stories: 0,
            tau: f64::NAN,
            pmr: f64::NAN,
            pairwise_ratio: f64::NAN,
            mean_total_score: f64::NAN,
            dominance_violations: 0,
            final_train_loss: None,
            error: Some(err.to_string()),
        }
    }
}

/// Predictions for both strategies over an evaluation set.
pub struct CellOutput {
    pub brute_force: Vec<StoryOrder>,
    pub nearest_neighbor: Vec<StoryOrder>,
    pub final_train_loss: Option<f64>,
}

/// Trains (when the model is learned) on `train_set` and orders `eval_set`
/// with both strategies.
pub fn run_cell<F: Scalar>(
    model: GridModel,
    train_set: &[EmbeddedStory<F>],
    eval_set: &[EmbeddedStory<F>],
    settings: &GridSettings,
) -> Result<CellOutput> {
    if eval_set.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let mut final_train_loss = None;
    let trained = match model.backbone() {
        Some(backbone) => {
            let d = eval_set[0].dim();
            let cfg = ModelConfig {
                d,
                h: settings.hidden_multiplier * d,
                backbone,
                ..settings.model.clone()
            };
            let outcome = train(init_params::<F>(&cfg)?, train_set, &settings.training)?;
            final_train_loss = outcome.trace.last().map(|e| e.mean_loss);
            Some(outcome.params)
        }
        None => None,
    };
    let scorer = match (model, &trained) {
        (_, Some(p)) => Scorer::Model(p),
        (GridModel::CbowCosine, _) => Scorer::EmbeddingCosine,
        (GridModel::NgramOverlap, _) => Scorer::NgramOverlap { max_n: 4 },
        _ => Scorer::Oracle,
    };
    let pairs = eval_set
        .par_iter()
        .map(|s| order_story_both(s, scorer, settings.order_seed))
        .collect::<Result<Vec<_>>>()?;
    let (brute_force, nearest_neighbor) = pairs.into_iter().unzip();
    Ok(CellOutput {
        brute_force,
        nearest_neighbor,
        final_train_loss,
    })
}

fn report(orders: &[StoryOrder]) -> Result<EvalReport> {
    let preds = orders
        .iter()
        .map(StoryOrder::prediction)
        .collect::<Result<Vec<_>>>()?;
    evaluate(&preds)
}

fn rows_for(encoder: &str, model: GridModel, out: &CellOutput) -> Result<Vec<GridRow>> {
    let violations = out
        .brute_force
        .iter()
        .zip(&out.nearest_neighbor)
        .filter(|(bf, nn)| bf.total_score < nn.total_score)
        .count();
    [(Strategy::BruteForce, &out.brute_force), (Strategy::NearestNeighbor, &out.nearest_neighbor)]
        .into_iter()
        .map(|(strategy, orders)| {
            let r = report(orders)?;
            Ok(GridRow {
                encoder: encoder.to_string(),
                model: model.to_string(),
                strategy: strategy.to_string(),
                stories: r.story_count,
                tau: r.mean_tau,
                pmr: r.pmr,
                pairwise_ratio: r.mean_pairwise_ratio,
                mean_total_score: orders.iter().map(|o| o.total_score).sum::<f64>()
                    / orders.len() as f64,
                dominance_violations: violations,
                final_train_loss: out.final_train_loss,
                error: None,
            })
        })
        .collect()
}

/// Runs every (encoder × model × strategy) cell. Each encoder's corpus is
/// split once; models train on the train part and are scored on the test
/// part. A failing cell yields error rows and the grid continues.
pub fn run_grid<F: Scalar>(
    encoders: &[(String, Vec<EmbeddedStory<F>>)],
    models: &[GridModel],
    settings: &GridSettings,
) -> Vec<GridRow> {
    let mut rows = Vec::new();
    for (name, corpus) in encoders {
        let split = split_corpus(corpus, &settings.split);
        for &model in models {
            let cell = match &split {
                Ok(s) => run_cell(model, &s.train, &s.test, settings)
                    .and_then(|out| rows_for(name, model, &out)),
                Err(e) => Err(Error::Empty(format!("cannot split corpus {name:?}: {e}"))),
            };
            match cell {
                Ok(r) => rows.extend(r),
                Err(e) => {
                    for strategy in [Strategy::BruteForce, Strategy::NearestNeighbor] {
                        rows.push(GridRow::failed(name, model, strategy, &e));
                    }
                }
            }
        }
    }
    rows
}

pub const GRID_CSV_HEADER: &str =
    "encoder,model,strategy,stories,tau,pmr,pairwise_ratio,mean_total_score,dominance_violations,final_train_loss,error";

impl GridRow {
    pub fn csv_line(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        let err = self
            .error
            .as_deref()
            .map(|e| format!("\"{}\"", e.replace('"', "\"\"")))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            self.encoder,
            self.model,
            self.strategy,
            self.stories,
            self.tau,
            self.pmr,
            self.pairwise_ratio,
            self.mean_total_score,
            self.dominance_violations,
            opt(self.final_train_loss),
            err
        )
    }
}
