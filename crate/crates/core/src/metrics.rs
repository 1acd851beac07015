//! Ordering quality: Kendall's tau, perfect-match ratio and the pairwise ratio.
//!
//! Pair statistics are computed exactly as rationals and converted to `f64` at
//! the end, so `pairwise_ratio == (tau + 1) / 2` holds exactly.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permutation::Permutation;

fn check_lengths(pred: &Permutation, gold: &Permutation) -> Result<usize> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("permutation".into()));
    }
    Ok(pred.len())
}

/// Counts inversions by merge sort.
fn merge_count(v: &mut [usize], buf: &mut Vec<usize>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf.push(v[i]);
            i += 1;
        } else {
            buf.push(v[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..]);
    v.copy_from_slice(buf);
    inv
}

/// Number of item pairs whose relative order in `pred` differs from `gold`.
/// Both are sequences of item ids.
pub fn inversions(pred: &Permutation, gold: &Permutation) -> Result<u64> {
    check_lengths(pred, gold)?;
    let rank = gold.inverse();
    let mut seq: Vec<usize> = pred.as_slice().iter().map(|&item| rank[item]).collect();
    let mut buf = Vec::with_capacity(seq.len());
    Ok(merge_count(&mut seq, &mut buf))
}

fn pair_count(n: usize) -> u64 {
    (n as u64) * (n as u64 - 1) / 2
}

/// `1 - 2·inv / (N(N-1)/2)` as an exact fraction; 1 for `N = 1`.
pub fn kendall_tau_exact(pred: &Permutation, gold: &Permutation) -> Result<Ratio<i64>> {
    let n = check_lengths(pred, gold)?;
    if n == 1 {
        return Ok(Ratio::from_integer(1));
    }
    let inv = inversions(pred, gold)? as i64;
    Ok(Ratio::from_integer(1) - Ratio::new(2 * inv, pair_count(n) as i64))
}

pub fn kendall_tau(pred: &Permutation, gold: &Permutation) -> Result<f64> {
    Ok(ratio_to_f64(kendall_tau_exact(pred, gold)?))
}

/// Fraction of item pairs ordered as in `gold`; 1 for `N = 1`.
pub fn pairwise_ratio_exact(pred: &Permutation, gold: &Permutation) -> Result<Ratio<i64>> {
    let n = check_lengths(pred, gold)?;
    if n == 1 {
        return Ok(Ratio::from_integer(1));
    }
    let total = pair_count(n) as i64;
    Ok(Ratio::new(total - inversions(pred, gold)? as i64, total))
}

pub fn pairwise_ratio(pred: &Permutation, gold: &Permutation) -> Result<f64> {
    Ok(ratio_to_f64(pairwise_ratio_exact(pred, gold)?))
}

pub fn exact_match(pred: &Permutation, gold: &Permutation) -> Result<bool> {
    check_lengths(pred, gold)?;
    Ok(pred == gold)
}

fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryScore {
    pub story_id: String,
    pub tau: f64,
    pub exact_match: bool,
    pub pairwise_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub story_count: usize,
    pub mean_tau: f64,
    /// Fraction of stories predicted exactly.
    pub pmr: f64,
    /// Mean fraction of correctly ordered pairs.
    pub mean_pairwise_ratio: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stories: Vec<StoryScore>,
}

/// One prediction to score.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub story_id: String,
    pub predicted: Permutation,
    pub gold: Permutation,
}

pub fn score_story(p: &Prediction) -> Result<StoryScore> {
    Ok(StoryScore {
        story_id: p.story_id.clone(),
        tau: kendall_tau(&p.predicted, &p.gold)?,
        exact_match: exact_match(&p.predicted, &p.gold)?,
        pairwise_ratio: pairwise_ratio(&p.predicted, &p.gold)?,
    })
}

pub fn evaluate(predictions: &[Prediction]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions to evaluate".into()));
    }
    let stories = predictions
        .iter()
        .map(score_story)
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(stories))
}

/// Aggregates per-story scores (which must be non-empty).
pub fn aggregate(stories: Vec<StoryScore>) -> EvalReport {
    let count = stories.len();
    let n = count as f64;
    let exact = stories.iter().filter(|s| s.exact_match).count();
    EvalReport {
        story_count: count,
        mean_tau: stories.iter().map(|s| s.tau).sum::<f64>() / n,
        pmr: exact as f64 / n,
        mean_pairwise_ratio: stories.iter().map(|s| s.pairwise_ratio).sum::<f64>() / n,
        stories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn perm(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    fn brute_inversions(pred: &[usize], gold: &[usize]) -> u64 {
        let pos = |seq: &[usize], x: usize| seq.iter().position(|&y| y == x).unwrap();
        let mut inv = 0;
        for a in 0..pred.len() {
            for b in a + 1..pred.len() {
                let (x, y) = (pred[a], pred[b]);
                if pos(gold, x) > pos(gold, y) {
                    inv += 1;
                }
            }
        }
        inv
    }

    #[test]
    fn tau_examples() {
        let gold = Permutation::identity(5);
        assert_eq!(kendall_tau(&gold, &gold).unwrap(), 1.0);
        assert_eq!(kendall_tau(&gold.reversed(), &gold).unwrap(), -1.0);
        let swap = perm(&[0, 2, 1, 3, 4]);
        assert_eq!(kendall_tau(&swap, &gold).unwrap(), 0.8);
        assert_eq!(pairwise_ratio(&swap, &gold).unwrap(), 0.9);
        assert_eq!(pairwise_ratio(&gold.reversed(), &gold).unwrap(), 0.0);
        assert_eq!(pairwise_ratio(&gold, &gold).unwrap(), 1.0);
    }

    #[test]
    fn single_item_conventions() {
        let one = Permutation::identity(1);
        assert_eq!(kendall_tau(&one, &one).unwrap(), 1.0);
        assert_eq!(pairwise_ratio(&one, &one).unwrap(), 1.0);
        assert!(exact_match(&one, &one).unwrap());
    }

    #[test]
    fn length_mismatch() {
        let a = Permutation::identity(3);
        let b = Permutation::identity(4);
        assert!(kendall_tau(&a, &b).is_err());
        assert!(exact_match(&a, &b).is_err());
        assert!(pairwise_ratio(&a, &b).is_err());
    }

    #[test]
    fn exact_match_cases() {
        let g = Permutation::identity(4);
        assert!(exact_match(&g, &g).unwrap());
        assert!(!exact_match(&perm(&[1, 0, 2, 3]), &g).unwrap());
    }

    fn pred(id: &str, p: &[usize]) -> Prediction {
        Prediction {
            story_id: id.into(),
            predicted: perm(p),
            gold: Permutation::identity(p.len()),
        }
    }

    #[test]
    fn evaluate_counts() {
        let all = vec![pred("a", &[0, 1, 2]), pred("b", &[0, 1])];
        let r = evaluate(&all).unwrap();
        assert_eq!((r.pmr, r.mean_tau), (1.0, 1.0));

        let mixed = vec![
            pred("a", &[0, 1, 2, 3, 4]),
            pred("b", &[0, 1, 2, 3, 4]),
            pred("c", &[1, 0, 2, 3, 4]),
            pred("d", &[4, 3, 2, 1, 0]),
            pred("e", &[0, 1, 2, 4, 3]),
        ];
        let r = evaluate(&mixed).unwrap();
        assert_eq!(r.story_count, 5);
        assert!((r.pmr - 0.4).abs() < 1e-15);
        let taus = [1.0, 1.0, 0.8, -1.0, 0.8];
        assert!((r.mean_tau - taus.iter().sum::<f64>() / 5.0).abs() < 1e-15);

        let single = evaluate(&[pred("s", &[0, 2, 1, 3, 4])]).unwrap();
        assert_eq!(single.mean_tau, 0.8);
        assert_eq!(single.pmr, 0.0);
        assert!(evaluate(&[]).is_err());
    }

    fn perm_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (2usize..=8).prop_flat_map(|n| {
            let base: Vec<usize> = (0..n).collect();
            (Just(base.clone()).prop_shuffle(), Just(base).prop_shuffle())
        })
    }

    proptest! {
        #[test]
        fn inversions_match_pair_count((p, g) in perm_pair()) {
            prop_assert_eq!(inversions(&perm(&p), &perm(&g)).unwrap(), brute_inversions(&p, &g));
        }

        #[test]
        fn ratio_is_affine_in_tau((p, g) in perm_pair()) {
            let (p, g) = (perm(&p), perm(&g));
            let tau = kendall_tau_exact(&p, &g).unwrap();
            let ratio = pairwise_ratio_exact(&p, &g).unwrap();
            prop_assert_eq!(ratio, (tau + Ratio::from_integer(1)) / Ratio::from_integer(2));
        }

        #[test]
        fn tau_depends_on_relative_order((p, g) in perm_pair()) {
            let (p, g) = (perm(&p), perm(&g));
            let relative = g.inverse().compose(&p).unwrap();
            let id = Permutation::identity(p.len());
            prop_assert_eq!(kendall_tau(&p, &g).unwrap(), kendall_tau(&relative, &id).unwrap());
            prop_assert_eq!(kendall_tau(&p, &p).unwrap(), 1.0);
            prop_assert_eq!(kendall_tau(&p.reversed(), &p).unwrap(), -1.0);
        }

        #[test]
        fn exact_match_implies_perfect_scores((p, _g) in perm_pair()) {
            let s = score_story(&Prediction { story_id: "x".into(), predicted: perm(&p), gold: perm(&p) }).unwrap();
            prop_assert!(s.exact_match);
            prop_assert_eq!(s.tau, 1.0);
            prop_assert_eq!(s.pairwise_ratio, 1.0);
        }
    }
}
