//! Successor scores between sentence pairs.

use std::collections::HashMap;

use serde_json::{json, Value};

use crate::embedding::tokenize;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut uu, mut vv) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in u.iter().zip(v) {
        dot = dot + a * b;
        uu = uu + a * a;
        vv = vv + b * b;
    }
    if uu.is_zero() || vv.is_zero() {
        return Err(Error::ZeroNorm("cosine".into()));
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).max(-F::one()).min(F::one()))
}

/// `n × n` matrix whose entry `[i][j]` scores sentence `j` as the successor of
/// sentence `i`. The diagonal holds `-∞` and is never a valid score.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScoreMatrix<F> {
    n: usize,
    scores: Vec<F>,
}

impl<F: Scalar> PairScoreMatrix<F> {
    /// Builds from rows; diagonal entries are replaced by the sentinel and
    /// off-diagonal entries must be finite.
    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let n = rows.len();
        let mut scores = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if i == j {
                    scores.push(F::neg_infinity());
                } else if x.is_finite() {
                    scores.push(x);
                } else {
                    return Err(Error::Config(format!("score [{i}][{j}] is not finite")));
                }
            }
        }
        Ok(PairScoreMatrix { n, scores })
    }

    pub(crate) fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Result<F>) -> Result<Self> {
        let mut scores = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                scores.push(if i == j { F::neg_infinity() } else { f(i, j)? });
            }
        }
        Ok(PairScoreMatrix { n, scores })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.scores[i * self.n + j]
    }

    /// Same matrix with every off-diagonal entry multiplied by `factor`.
    pub fn scaled(&self, factor: F) -> Self {
        let scores = self
            .scores
            .iter()
            .map(|&x| if x.is_finite() { x * factor } else { x })
            .collect();
        PairScoreMatrix { n: self.n, scores }
    }

    /// Row-major JSON dump with `null` on the diagonal.
    pub fn to_json(&self) -> Value {
        let rows: Vec<Vec<Value>> = (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| {
                        if i == j {
                            Value::Null
                        } else {
                            json!(self.get(i, j).to_f64_lossless())
                        }
                    })
                    .collect()
            })
            .collect();
        json!({ "n": self.n, "scores": rows })
    }
}

/// `[i][j] = cosine(candidates[i], embeddings[j])`.
pub fn pair_scores<F: Scalar>(
    candidates: &[Vec<F>],
    embeddings: &[Vec<F>],
) -> Result<PairScoreMatrix<F>> {
    if candidates.len() != embeddings.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: embeddings.len(),
        });
    }
    PairScoreMatrix::from_fn(candidates.len(), |i, j| cosine(&candidates[i], &embeddings[j]))
}

/// Order-insensitive baseline: `[i][j] = cosine(embeddings[i], embeddings[j])`.
pub fn embedding_scores<F: Scalar>(embeddings: &[Vec<F>]) -> Result<PairScoreMatrix<F>> {
    pair_scores(embeddings, embeddings)
}

fn ngram_counts(tokens: &[String], k: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= k {
        for w in tokens.windows(k) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU of `hypothesis` against one `reference`, with add-one
/// smoothing on every n-gram precision and the standard brevity penalty.
pub fn smoothed_bleu(reference: &[String], hypothesis: &[String], max_n: usize) -> f64 {
    let mut log_sum = 0.0;
    for k in 1..=max_n {
        let hyp = ngram_counts(hypothesis, k);
        let reference = ngram_counts(reference, k);
        let total: usize = hyp.values().sum();
        let matched: usize = hyp
            .iter()
            .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
            .sum();
        log_sum += ((matched as f64 + 1.0) / (total as f64 + 1.0)).ln();
    }
    let (c, r) = (hypothesis.len() as f64, reference.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * (log_sum / max_n as f64).exp()
}

/// `[i][j]` = smoothed BLEU of sentence `j` against reference sentence `i`.
pub fn ngram_overlap_scores<F: Scalar>(
    sentences: &[String],
    max_n: usize,
) -> Result<PairScoreMatrix<F>> {
    if sentences.len() < 2 {
        return Err(Error::Empty("n-gram scoring needs at least two sentences".into()));
    }
    if max_n == 0 {
        return Err(Error::Config("max_n must be positive".into()));
    }
    let tokens: Vec<Vec<String>> = sentences
        .iter()
        .map(|s| {
            let t = tokenize(s);
            if t.is_empty() {
                Err(Error::NoTokens(s.clone()))
            } else {
                Ok(t)
            }
        })
        .collect::<Result<_>>()?;
    PairScoreMatrix::from_fn(sentences.len(), |i, j| {
        Ok(F::of(smoothed_bleu(&tokens[i], &tokens[j], max_n)))
    })
}
