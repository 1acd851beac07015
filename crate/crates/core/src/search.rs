//! Order recovery over a [`PairScoreMatrix`]: exhaustive and greedy search for
//! the path maximizing the summed successor scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permutation::Permutation;
use crate::scalar::Scalar;
use crate::scoring::PairScoreMatrix;

/// Largest story length accepted by [`brute_force_order`] (8! = 40,320 paths).
pub const BRUTE_FORCE_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    BruteForce,
    #[serde(alias = "nn")]
    NearestNeighbor,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::BruteForce => "brute-force",
            Strategy::NearestNeighbor => "nearest-neighbor",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute-force" | "bf" => Ok(Strategy::BruteForce),
            "nn" | "nearest-neighbor" => Ok(Strategy::NearestNeighbor),
            other => Err(Error::Config(format!("unknown search strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingResult<F> {
    pub permutation: Permutation,
    pub total_score: F,
    pub strategy: Strategy,
    /// Another path reached the same score and lost the lexicographic tie-break.
    pub ties_broken: bool,
}

fn path_score<F: Scalar>(m: &PairScoreMatrix<F>, order: &[usize]) -> F {
    order
        .windows(2)
        .fold(F::zero(), |acc, w| acc + m.get(w[0], w[1]))
}

/// Sum of `m[p[k]][p[k+1]]` over consecutive positions; 0 for a single sentence.
pub fn total_score<F: Scalar>(m: &PairScoreMatrix<F>, p: &Permutation) -> Result<F> {
    if p.len() != m.n() {
        return Err(Error::InvalidPermutation(format!(
            "length {} for a {}x{} matrix",
            p.len(),
            m.n(),
            m.n()
        )));
    }
    Ok(path_score(m, p.as_slice()))
}

/// Advances to the next permutation in lexicographic order; false after the last.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

pub fn brute_force_order<F: Scalar>(m: &PairScoreMatrix<F>) -> Result<OrderingResult<F>> {
    brute_force_order_capped(m, BRUTE_FORCE_CAP)
}

/// Exhaustive search over all `n!` orders. Permutations are visited in
/// lexicographic order and only a strictly better score replaces the incumbent,
/// so ties resolve to the lexicographically smallest order.
pub fn brute_force_order_capped<F: Scalar>(
    m: &PairScoreMatrix<F>,
    cap: usize,
) -> Result<OrderingResult<F>> {
    let n = m.n();
    if n == 0 {
        return Err(Error::Empty("score matrix".into()));
    }
    if n > cap {
        return Err(Error::SearchCap { n, cap });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = order.clone();
    let mut best_score = path_score(m, &order);
    let mut tied = false;
    while next_permutation(&mut order) {
        let s = path_score(m, &order);
        if s > best_score {
            best_score = s;
            best.copy_from_slice(&order);
            tied = false;
        } else if s == best_score {
            tied = true;
        }
    }
    Ok(OrderingResult {
        permutation: Permutation::new_unchecked(best),
        total_score: best_score,
        strategy: Strategy::BruteForce,
        ties_broken: tied,
    })
}

/// Greedy chains from every start sentence; the best-scoring chain wins.
/// Within a chain, equal successor scores go to the smallest index; between
/// chains, equal totals go to the lexicographically smallest order.
pub fn nn_order<F: Scalar>(m: &PairScoreMatrix<F>) -> Result<OrderingResult<F>> {
    let n = m.n();
    if n == 0 {
        return Err(Error::Empty("score matrix".into()));
    }
    let mut best: Option<(Vec<usize>, F)> = None;
    let mut tied = false;
    for start in 0..n {
        let mut visited = vec![false; n];
        visited[start] = true;
        let mut chain = vec![start];
        let mut score = F::zero();
        for _ in 1..n {
            let last = *chain.last().expect("chain is non-empty");
            let mut pick: Option<(usize, F)> = None;
            for j in (0..n).filter(|&j| !visited[j]) {
                let s = m.get(last, j);
                match pick {
                    Some((_, b)) if s < b => {}
                    Some((_, b)) if s == b => tied = true,
                    _ => pick = Some((j, s)),
                }
            }
            let (j, s) = pick.expect("an unvisited sentence remains");
            visited[j] = true;
            chain.push(j);
            score = score + s;
        }
        match &best {
            Some((_, b)) if score < *b => {}
            Some((_, b)) if score == *b => tied = true,
            _ => best = Some((chain, score)),
        }
    }
    let (order, total_score) = best.expect("n >= 1");
    Ok(OrderingResult {
        permutation: Permutation::new_unchecked(order),
        total_score,
        strategy: Strategy::NearestNeighbor,
        ties_broken: tied,
    })
}

pub fn order_with<F: Scalar>(
    m: &PairScoreMatrix<F>,
    strategy: Strategy,
) -> Result<OrderingResult<F>> {
    match strategy {
        Strategy::BruteForce => brute_force_order(m),
        Strategy::NearestNeighbor => nn_order(m),
    }
}
