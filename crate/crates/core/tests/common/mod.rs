#![allow(dead_code)]

use slm_core::model::{story_gradients, story_objective, Matrix};
use slm_core::rng::SeededRng;
use slm_core::{init_params, Backbone, ModelConfig, ModelParams};

pub fn random_story(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Central differences of the story objective for every parameter entry.
pub fn finite_difference_gradients(
    params: &ModelParams<f64>,
    gold: &[Vec<f64>],
    lambda: f64,
    step: f64,
) -> Vec<Matrix<f64>> {
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    for t in 0..params.values().len() {
        for k in 0..params.values()[t].data().len() {
            let orig = params.values()[t].data()[k];
            probe.values_mut()[t].data_mut()[k] = orig + step;
            let plus = story_objective(&probe, gold, lambda).unwrap();
            probe.values_mut()[t].data_mut()[k] = orig - step;
            let minus = story_objective(&probe, gold, lambda).unwrap();
            probe.values_mut()[t].data_mut()[k] = orig;
            out[t].data_mut()[k] = (plus - minus) / (2.0 * step);
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both norms
/// are below `1e-10`.
pub fn relative_error(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a.sum_squares().sqrt().max(b.sum_squares().sqrt());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Adds uniform noise in `±amount` to every parameter, moving biases and
/// gains away from their initial constants.
pub fn jitter(params: &mut ModelParams<f64>, seed: u64, amount: f64) {
    let mut rng = SeededRng::new(seed);
    for m in params.values_mut() {
        for x in m.data_mut() {
            *x += rng.uniform(-amount, amount);
        }
    }
}

pub fn gradient_config(backbone: Backbone) -> ModelConfig {
    ModelConfig {
        d: 8,
        h: 32,
        heads: 2,
        depth_steps: 2,
        backbone,
        seed: 17,
    }
}

/// Per-tensor relative error between analytic and central-difference
/// gradients at d=8, h=32, heads=2, T=2, n=5.
pub fn gradient_errors(params: &ModelParams<f64>) -> Vec<(String, f64)> {
    let gold = random_story(5, params.config.d, 3);
    let lambda = 1e-3;
    let (_, analytic) = story_gradients(params, &gold, lambda).unwrap();
    let numeric = finite_difference_gradients(params, &gold, lambda, 1e-5);
    params
        .specs()
        .iter()
        .zip(&analytic)
        .zip(&numeric)
        .map(|((spec, a), n)| (spec.name.clone(), relative_error(a, n)))
        .collect()
}

pub fn jittered(backbone: Backbone) -> ModelParams<f64> {
    let mut p: ModelParams<f64> = init_params(&gradient_config(backbone)).unwrap();
    jitter(&mut p, 99, 0.1);
    p
}
