//! Sentence embeddings: the JSONL interchange format, validation, and a
//! deterministic bag-of-words toy encoder.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use crate::corpus::{is_meta_line, ShuffledStory, Story};
use crate::error::{Error, Result};
use crate::permutation::Permutation;
use crate::rng::{keyed_hash, SeededRng};
use crate::scalar::Scalar;

/// Encoder tag written by [`toy_cbow_embed`]-based exports.
pub const TOY_CBOW_TAG: &str = "toy-cbow-v1";
/// Token hashing used by the toy encoder.
pub const TOY_CBOW_HASH: &str = "fnv1a64(seed_le || utf8(token)) -> chacha8 uniform[-1,1) -> unit";

/// A finite, nonzero embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding<F>(Vec<F>);

impl<F: Scalar> SentenceEmbedding<F> {
    pub fn new(vector: Vec<F>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::Empty("embedding with dimension 0".into()));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                record: 0,
                index: 0,
            });
        }
        if vector.iter().all(|x| x.is_zero()) {
            return Err(Error::ZeroNorm("embedding".into()));
        }
        Ok(SentenceEmbedding(vector))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<F> {
        self.0
    }

    pub fn norm(&self) -> F {
        l2_norm(&self.0)
    }
}

pub(crate) fn l2_norm<F: Scalar>(v: &[F]) -> F {
    v.iter().map(|&x| x * x).sum::<F>().sqrt()
}

/// Rescales to unit L2 norm.
pub fn normalize<F: Scalar>(e: &SentenceEmbedding<F>) -> Result<SentenceEmbedding<F>> {
    Ok(SentenceEmbedding(normalized(e.as_slice())?))
}

pub(crate) fn normalized<F: Scalar>(v: &[F]) -> Result<Vec<F>> {
    let norm = l2_norm(v);
    if norm.is_zero() || !norm.is_finite() {
        return Err(Error::ZeroNorm("cannot normalize".into()));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// A story together with one embedding per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedStory<F> {
    pub story_id: String,
    pub encoder: String,
    pub sentences: Vec<String>,
    pub embeddings: Vec<Vec<F>>,
    /// Shuffled index → gold position, when the sentences are not in gold order.
    pub gold_perm: Option<Permutation>,
}

impl<F: Scalar> EmbeddedStory<F> {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.first().map_or(0, Vec::len)
    }

    /// Copy with every embedding rescaled to unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let embeddings = self
            .embeddings
            .iter()
            .map(|e| normalized(e))
            .collect::<Result<_>>()?;
        Ok(EmbeddedStory {
            embeddings,
            ..self.clone()
        })
    }

    /// Reorders a gold-ordered story the same way `shuffled` was shuffled.
    pub fn shuffled_like(&self, shuffled: &ShuffledStory) -> Result<Self> {
        if self.gold_perm.is_some() {
            return Err(Error::Config(format!(
                "story {:?} is already shuffled",
                self.story_id
            )));
        }
        let p = &shuffled.gold_perm;
        Ok(EmbeddedStory {
            story_id: self.story_id.clone(),
            encoder: self.encoder.clone(),
            sentences: p.gather(&self.sentences)?,
            embeddings: p.gather(&self.embeddings)?,
            gold_perm: Some(p.clone()),
        })
    }

    pub fn story(&self) -> Result<Story> {
        Story::new(self.story_id.clone(), self.sentences.clone())
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Deterministic unit vector for one token.
pub fn token_vector(token: &str, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(keyed_hash(seed, token.as_bytes()));
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Mean of the token vectors of `sentence`; identical for any two sentences
/// with the same token multiset.
pub fn toy_cbow_embed<F: Scalar>(
    sentence: &str,
    d: usize,
    seed: u64,
) -> Result<SentenceEmbedding<F>> {
    if d == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut tokens = tokenize(sentence);
    if tokens.is_empty() {
        return Err(Error::NoTokens(sentence.to_string()));
    }
    // fixed summation order: the result depends only on the token multiset
    tokens.sort_unstable();
    let mut mean = vec![0.0f64; d];
    for t in &tokens {
        for (m, x) in mean.iter_mut().zip(token_vector(t, d, seed)) {
            *m += x;
        }
    }
    let count = tokens.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    if mean.iter().all(|&m| m == 0.0) {
        let fallback = token_vector(sentence, d, keyed_hash(seed, b"zero-mean"));
        mean = fallback.into_iter().map(|x| x * 1e-6).collect();
    }
    SentenceEmbedding::new(mean.into_iter().map(F::of).collect())
}

/// Toy-encodes every sentence of a gold-ordered story.
pub fn embed_story<F: Scalar>(story: &Story, d: usize, seed: u64) -> Result<EmbeddedStory<F>> {
    let embeddings = story
        .sentences
        .iter()
        .map(|s| toy_cbow_embed::<F>(s, d, seed).map(SentenceEmbedding::into_vec))
        .collect::<Result<_>>()?;
    Ok(EmbeddedStory {
        story_id: story.story_id.clone(),
        encoder: TOY_CBOW_TAG.to_string(),
        sentences: story.sentences.clone(),
        embeddings,
        gold_perm: None,
    })
}

#[derive(Deserialize)]
struct Record {
    story_id: String,
    #[serde(default)]
    encoder: String,
    dim: usize,
    sentences: Vec<String>,
    embeddings: Vec<Vec<f64>>,
    #[serde(default)]
    gold_perm: Option<Vec<usize>>,
}

pub fn load_embeddings<F: Scalar>(path: impl AsRef<Path>) -> Result<Vec<EmbeddedStory<F>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file))
}

/// Parses and validates embedding JSONL. Record indices in errors are 0-based
/// over data records (header lines excluded).
pub fn read_embeddings<F: Scalar, R: BufRead>(reader: R) -> Result<Vec<EmbeddedStory<F>>> {
    let mut out = Vec::new();
    let mut dim: Option<usize> = None;
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() || is_meta_line(&line) {
            continue;
        }
        let record = out.len();
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let expected = *dim.get_or_insert(rec.dim);
        if rec.dim != expected || rec.dim == 0 {
            return Err(Error::DimensionMismatch {
                record,
                expected,
                found: rec.dim,
            });
        }
        if rec.embeddings.len() != rec.sentences.len() || rec.sentences.is_empty() {
            return Err(Error::CountMismatch {
                record,
                sentences: rec.sentences.len(),
                embeddings: rec.embeddings.len(),
            });
        }
        let mut embeddings = Vec::with_capacity(rec.embeddings.len());
        for (index, e) in rec.embeddings.into_iter().enumerate() {
            if e.len() != expected {
                return Err(Error::DimensionMismatch {
                    record,
                    expected,
                    found: e.len(),
                });
            }
            let v: Vec<F> = e.into_iter().map(F::of).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { record, index });
            }
            if v.iter().all(|x| x.is_zero()) {
                return Err(Error::ZeroNorm(format!("record {record}, embedding {index}")));
            }
            embeddings.push(v);
        }
        let story = Story::new(rec.story_id, rec.sentences)?;
        if !ids.insert(story.story_id.clone()) {
            return Err(Error::DuplicateStoryId(story.story_id));
        }
        let gold_perm = rec
            .gold_perm
            .map(|p| {
                if p.len() != story.len() {
                    return Err(Error::InvalidPermutation(format!(
                        "record {record}: gold_perm length {} for {} sentences",
                        p.len(),
                        story.len()
                    )));
                }
                Permutation::new(p)
            })
            .transpose()?;
        out.push(EmbeddedStory {
            story_id: story.story_id,
            encoder: rec.encoder,
            sentences: story.sentences,
            embeddings,
            gold_perm,
        });
    }
    Ok(out)
}

/// Writes embedding JSONL, optionally preceded by a `{"_meta": ...}` line.
/// Floats are written with 17 significant digits.
pub fn write_embeddings<F: Scalar, W: Write>(
    stories: &[EmbeddedStory<F>],
    meta: Option<&Value>,
    writer: W,
) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let io = |e| Error::io("<embeddings>", e);
    if let Some(meta) = meta {
        writeln!(w, "{}", serde_json::json!({ "_meta": meta })).map_err(io)?;
    }
    for s in stories {
        let mut line = String::new();
        line.push_str("{\"story_id\":");
        line.push_str(&Value::from(s.story_id.as_str()).to_string());
        line.push_str(",\"encoder\":");
        line.push_str(&Value::from(s.encoder.as_str()).to_string());
        line.push_str(&format!(",\"dim\":{},\"sentences\":", s.dim()));
        line.push_str(&serde_json::to_string(&s.sentences).expect("strings serialize"));
        line.push_str(",\"embeddings\":[");
        for (i, e) in s.embeddings.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push('[');
            for (j, x) in e.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{:.16e}", x.to_f64_lossless()));
            }
            line.push(']');
        }
        line.push(']');
        if let Some(p) = &s.gold_perm {
            line.push_str(",\"gold_perm\":");
            line.push_str(&serde_json::to_string(p).expect("permutation serializes"));
        }
        line.push('}');
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}
