//! Training objective: mean over scored positions of `1 - cos(candidate_i,
//! target_i)` plus `λ·‖W‖²` over weight matrices.

use super::matrix::Matrix;
use super::{bilstm, input_matrix, ut, Backbone, CandidateSet, ModelParams, TensorKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_targets<F>(n_candidates: usize, targets: &[Vec<F>]) -> Result<()> {
    if targets.is_empty() || targets.len() > n_candidates || targets.len() + 1 < n_candidates {
        return Err(Error::LengthMismatch {
            left: n_candidates,
            right: targets.len(),
        });
    }
    Ok(())
}

/// Loss and gradient w.r.t. the candidate rows for the positions that have a
/// target (the first `targets.len()` rows).
fn cosine_loss<F: Scalar>(out: &Matrix<F>, targets: &[Vec<F>]) -> Result<(F, Matrix<F>)> {
    check_targets(out.rows(), targets)?;
    let m = F::of(targets.len() as f64);
    let mut total = F::zero();
    let mut grad = Matrix::zeros(out.rows(), out.cols());
    for (i, t) in targets.iter().enumerate() {
        let c = out.row(i);
        if t.len() != c.len() {
            return Err(Error::DimensionMismatch {
                record: i,
                expected: c.len(),
                found: t.len(),
            });
        }
        let cc = c.iter().map(|&x| x * x).sum::<F>();
        let tt = t.iter().map(|&x| x * x).sum::<F>();
        if cc.is_zero() {
            return Err(Error::ZeroNorm(format!("candidate {i}")));
        }
        if tt.is_zero() {
            return Err(Error::ZeroNorm(format!("target {i}")));
        }
        let (cn, tn) = (cc.sqrt(), tt.sqrt());
        let dot = c.iter().zip(t).fold(F::zero(), |a, (&x, &y)| a + x * y);
        let cos = dot / (cn * tn);
        total = total + F::one() - cos;
        // d(1 - cos)/dc = -(t / (|c||t|) - cos · c / |c|²)
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = -(t[j] / (cn * tn) - cos * c[j] / cc) / m;
        }
    }
    Ok((total / m, grad))
}

fn regularization<F: Scalar>(params: &ModelParams<F>, lambda: F) -> F {
    lambda * params.weight_sq_norm()
}

pub(crate) fn add_regularization_grad<F: Scalar>(
    params: &ModelParams<F>,
    lambda: F,
    grads: &mut [Matrix<F>],
) {
    let two_lambda = lambda + lambda;
    for ((s, v), g) in params.specs().iter().zip(params.values()).zip(grads) {
        if s.kind == TensorKind::Weight {
            for (gg, &w) in g.data_mut().iter_mut().zip(v.data()) {
                *gg = *gg + two_lambda * w;
            }
        }
    }
}

/// Objective for given candidates: `targets[i]` is the embedding that should
/// follow sentence `i`; a trailing candidate without a target is ignored.
pub fn loss<F: Scalar>(
    candidates: &CandidateSet<F>,
    targets: &[Vec<F>],
    params: &ModelParams<F>,
    lambda: F,
) -> Result<F> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set".into()));
    }
    let out = Matrix::from_rows(&candidates.candidates);
    Ok(cosine_loss(&out, targets)?.0 + regularization(params, lambda))
}

fn check_story<F>(gold: &[Vec<F>]) -> Result<()> {
    if gold.len() < 2 {
        return Err(Error::Empty(
            "training stories need at least two sentences".into(),
        ));
    }
    Ok(())
}

/// Teacher-forced data loss of one gold-ordered story and its parameter
/// gradient (no regularization).
pub(crate) fn data_loss_and_grad<F: Scalar>(
    params: &ModelParams<F>,
    gold: &[Vec<F>],
) -> Result<(F, Vec<Matrix<F>>)> {
    check_story(gold)?;
    let x = input_matrix(&params.config, gold)?;
    let targets = &gold[1..];
    match params.config.backbone {
        Backbone::UniversalTransformer => {
            let (out, cache) = ut::forward(params, &x);
            let (l, dout) = cosine_loss(&out, targets)?;
            Ok((l, ut::backward(params, &cache, &dout)))
        }
        Backbone::Bilstm => {
            let (out, cache) = bilstm::forward(params, &x);
            let (l, dout) = cosine_loss(&out, targets)?;
            Ok((l, bilstm::backward(params, &cache, &dout)))
        }
    }
}

pub(crate) fn data_loss<F: Scalar>(params: &ModelParams<F>, gold: &[Vec<F>]) -> Result<F> {
    check_story(gold)?;
    let x = input_matrix(&params.config, gold)?;
    let out = match params.config.backbone {
        Backbone::UniversalTransformer => ut::forward(params, &x).0,
        Backbone::Bilstm => bilstm::forward(params, &x).0,
    };
    Ok(cosine_loss(&out, &gold[1..])?.0)
}

/// Full objective of one gold-ordered story: the model reads all of `gold` and
/// position `i` is scored against `gold[i + 1]`.
pub fn story_objective<F: Scalar>(params: &ModelParams<F>, gold: &[Vec<F>], lambda: F) -> Result<F> {
    Ok(data_loss(params, gold)? + regularization(params, lambda))
}

/// [`story_objective`] and its gradient, one matrix per parameter tensor.
pub fn story_gradients<F: Scalar>(
    params: &ModelParams<F>,
    gold: &[Vec<F>],
    lambda: F,
) -> Result<(F, Vec<Matrix<F>>)> {
    let (l, mut grads) = data_loss_and_grad(params, gold)?;
    add_regularization_grad(params, lambda, &mut grads);
    Ok((l + regularization(params, lambda), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use crate::rng::SeededRng;

    fn params() -> ModelParams<f64> {
        init_params(&ModelConfig::new(3, Backbone::UniversalTransformer, 0)).unwrap()
    }

    #[test]
    fn perfect_candidates_give_zero() {
        let t = vec![vec![0.6, 0.8, 0.0], vec![0.0, 0.0, 1.0]];
        let c = CandidateSet { candidates: t.clone() };
        assert_eq!(loss(&c, &t, &params(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn opposite_candidate_gives_two() {
        let c = CandidateSet { candidates: vec![vec![-1.0, 0.0, 0.0], vec![5.0, 5.0, 5.0]] };
        let t = vec![vec![1.0, 0.0, 0.0]];
        assert_eq!(loss(&c, &t, &params(), 0.0).unwrap(), 2.0);
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = SeededRng::new(5);
        let mut v = || (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<f64>>();
        let c = CandidateSet { candidates: vec![v(), v(), v(), v()] };
        let t = vec![v(), v(), v()];
        let p = params();
        let lambda = 1e-3;
        let mut expected = 0.0;
        for i in 0..3 {
            let dot: f64 = (0..3).map(|j| c.candidates[i][j] * t[i][j]).sum();
            let nc: f64 = c.candidates[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            let nt: f64 = t[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            expected += 1.0 - dot / (nc * nt);
        }
        expected /= 3.0;
        let mut sq = 0.0;
        for (s, m) in p.specs().iter().zip(p.values()) {
            if s.kind == TensorKind::Weight {
                sq += m.data().iter().map(|x| x * x).sum::<f64>();
            }
        }
        expected += lambda * sq;
        assert!((loss(&c, &t, &p, lambda).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_vectors_and_bad_lengths_rejected() {
        let p = params();
        let c = CandidateSet { candidates: vec![vec![0.0; 3], vec![1.0; 3]] };
        assert!(matches!(loss(&c, &[vec![1.0; 3]], &p, 0.0), Err(Error::ZeroNorm(_))));
        let c = CandidateSet { candidates: vec![vec![1.0; 3], vec![1.0; 3]] };
        assert!(matches!(loss(&c, &[vec![0.0; 3]], &p, 0.0), Err(Error::ZeroNorm(_))));
        let c = CandidateSet { candidates: vec![vec![1.0; 3]; 4] };
        assert!(loss(&c, &[vec![1.0; 3]], &p, 0.0).is_err());
        assert!(story_objective(&p, &[vec![1.0; 3]], 0.0).is_err());
    }
}
