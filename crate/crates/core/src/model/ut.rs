//! Universal-transformer backbone.
//!
//! Encoder: `depth_steps` applications of one shared block; before step `t` a
//! sinusoidal embedding of `t` is added to every row. No embedding of sentence
//! position is used, so the map is equivariant under row permutations.
//! Decoder: one block whose queries are the refined rows and whose memory is
//! the full refined set, then an affine `d → d` output projection.

use super::layers::{block, block_backward, block_forward, BlockCache};
use super::matrix::Matrix;
use super::ModelParams;
use crate::scalar::Scalar;

const ENCODER: usize = 0;
const DECODER: usize = block::LEN;
const OUTPUT_W: usize = 2 * block::LEN;
const OUTPUT_B: usize = OUTPUT_W + 1;

/// Sinusoidal embedding of recurrence step `t` (1-based), width `d`.
pub(crate) fn timestep_embedding<F: Scalar>(t: usize, d: usize) -> Matrix<F> {
    let data = (0..d)
        .map(|i| {
            let freq = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = t as f64 / freq;
            F::of(if i % 2 == 0 { angle.sin() } else { angle.cos() })
        })
        .collect();
    Matrix::from_vec(1, d, data)
}

pub(crate) struct UtCache<F> {
    steps: Vec<BlockCache<F>>,
    decoder: BlockCache<F>,
    decoded: Matrix<F>,
}

pub(crate) fn forward<F: Scalar>(params: &ModelParams<F>, x: &Matrix<F>) -> (Matrix<F>, UtCache<F>) {
    let cfg = &params.config;
    let w = params.values();
    let enc = &w[ENCODER..ENCODER + block::LEN];
    let dec = &w[DECODER..DECODER + block::LEN];
    let mut state = x.clone();
    let mut steps = Vec::with_capacity(cfg.depth_steps);
    for t in 1..=cfg.depth_steps {
        let a = state.add_row(&timestep_embedding(t, cfg.d));
        let (next, cache) = block_forward(enc, &a, &a, cfg.heads);
        steps.push(cache);
        state = next;
    }
    let (decoded, decoder) = block_forward(dec, &state, &state, cfg.heads);
    let out = decoded.matmul(&w[OUTPUT_W]).add_row(&w[OUTPUT_B]);
    (
        out,
        UtCache {
            steps,
            decoder,
            decoded,
        },
    )
}

/// Gradients of all parameters given `d out`.
pub(crate) fn backward<F: Scalar>(
    params: &ModelParams<F>,
    cache: &UtCache<F>,
    dout: &Matrix<F>,
) -> Vec<Matrix<F>> {
    let w = params.values();
    let mut g = params.zeros_like();
    g[OUTPUT_W].add_assign(&cache.decoded.t_matmul(dout));
    g[OUTPUT_B].add_assign(&dout.sum_rows());
    let ddecoded = dout.matmul_t(&w[OUTPUT_W]);

    let (enc_g, rest) = g.split_at_mut(DECODER);
    let dec_g = &mut rest[..block::LEN];
    let (dq, dm) = block_backward(&w[DECODER..DECODER + block::LEN], &cache.decoder, &ddecoded, dec_g);
    let mut dstate = dq.add(&dm);
    let enc = &w[ENCODER..ENCODER + block::LEN];
    for step in cache.steps.iter().rev() {
        let (dq, dm) = block_backward(enc, step, &dstate, &mut enc_g[..block::LEN]);
        // the timestep embedding is constant, so d state = d a
        dstate = dq.add(&dm);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestep_embedding_values() {
        let e: Matrix<f64> = timestep_embedding(1, 4);
        assert!((e.get(0, 0) - 1f64.sin()).abs() < 1e-15);
        assert!((e.get(0, 1) - 1f64.cos()).abs() < 1e-15);
        assert!((e.get(0, 2) - (1.0 / 100.0f64).sin()).abs() < 1e-15);
        assert!((e.get(0, 3) - (1.0 / 100.0f64).cos()).abs() < 1e-15);
        let odd: Matrix<f64> = timestep_embedding(3, 5);
        assert_eq!(odd.cols(), 5);
    }
}
