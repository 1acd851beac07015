//! Sentence ordering with a sentence-level language model.
//!
//! Sentences are embedded (pre-computed files or the built-in bag-of-words toy
//! encoder), a story model predicts each sentence's successor embedding,
//! candidate/sentence pairs are scored by cosine similarity, and the order that
//! maximizes the summed scores of consecutive pairs is recovered by exhaustive
//! or greedy search. Orders are evaluated with Kendall's tau and the
//! perfect-match ratio.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the scalar for common use.

pub mod ablation;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod model;
pub mod permutation;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod scoring;
pub mod search;
pub mod synthetic;

pub use corpus::{load_corpus, shuffle_story, split_corpus, CorpusFormat, ShuffledStory, SplitSpec, Story};
pub use embedding::{embed_story, load_embeddings, normalize, toy_cbow_embed, EmbeddedStory, SentenceEmbedding};
pub use error::{Error, Result};
pub use metrics::{evaluate, exact_match, kendall_tau, pairwise_ratio, EvalReport, Prediction, StoryScore};
pub use model::{
    bilstm_forward, candidate_next, forward, init_params, train, train_from, ut_forward, Backbone,
    CandidateSet, Checkpoint, EpochLoss, LrSchedule, ModelConfig, ModelParams, TrainingConfig,
    TrainingOutcome,
};
pub use permutation::Permutation;
pub use pipeline::{order_story, order_story_both, Scorer, ScorerKind, StoryOrder};
pub use scalar::Scalar;
pub use synthetic::{random_embedded_corpus, template_stories};
pub use scoring::{cosine, ngram_overlap_scores, pair_scores, PairScoreMatrix};
pub use search::{brute_force_order, nn_order, total_score, OrderingResult, Strategy, BRUTE_FORCE_CAP};

/// Crate version recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type EmbeddedStory64 = EmbeddedStory<f64>;
pub type EmbeddedStory32 = EmbeddedStory<f32>;
pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type CandidateSet64 = CandidateSet<f64>;
pub type PairScoreMatrix64 = PairScoreMatrix<f64>;
pub type PairScoreMatrix32 = PairScoreMatrix<f32>;
pub type OrderingResult64 = OrderingResult<f64>;
pub type Checkpoint64 = model::Checkpoint<f64>;
