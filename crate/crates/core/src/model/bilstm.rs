//! Bidirectional LSTM backbone (gate order i, f, g, o). The two directions'
//! hidden states are concatenated per position and mapped `2k → d`.

use super::matrix::Matrix;
use super::{ModelConfig, ModelParams};
use crate::scalar::Scalar;

const FWD: usize = 0;
const BWD: usize = 3;
const OUTPUT_W: usize = 6;
const OUTPUT_B: usize = 7;

/// Hidden size of each direction.
pub(crate) fn hidden_size(config: &ModelConfig) -> usize {
    config.d
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

struct StepCache<F> {
    x: Vec<F>,
    h_prev: Vec<F>,
    c_prev: Vec<F>,
    i: Vec<F>,
    f: Vec<F>,
    g: Vec<F>,
    o: Vec<F>,
    c_tanh: Vec<F>,
}

struct DirectionCache<F> {
    /// Indexed by processing step, not position.
    steps: Vec<StepCache<F>>,
    /// Hidden state per position.
    hidden: Matrix<F>,
}

pub(crate) struct BilstmCache<F> {
    fwd: DirectionCache<F>,
    bwd: DirectionCache<F>,
    concat: Matrix<F>,
}

fn run_direction<F: Scalar>(
    wx: &Matrix<F>,
    wh: &Matrix<F>,
    b: &Matrix<F>,
    x: &Matrix<F>,
    reverse: bool,
) -> DirectionCache<F> {
    let n = x.rows();
    let k = wh.rows();
    let mut h = vec![F::zero(); k];
    let mut c = vec![F::zero(); k];
    let mut hidden = Matrix::zeros(n, k);
    let mut steps = Vec::with_capacity(n);
    let positions: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
    for &pos in &positions {
        let xr = x.row(pos);
        let mut z: Vec<F> = b.data().to_vec();
        for (a, &xv) in xr.iter().enumerate() {
            for (zz, &wv) in z.iter_mut().zip(wx.row(a)) {
                *zz = *zz + xv * wv;
            }
        }
        for (a, &hv) in h.iter().enumerate() {
            for (zz, &wv) in z.iter_mut().zip(wh.row(a)) {
                *zz = *zz + hv * wv;
            }
        }
        let gi: Vec<F> = z[..k].iter().map(|&v| sigmoid(v)).collect();
        let gf: Vec<F> = z[k..2 * k].iter().map(|&v| sigmoid(v)).collect();
        let gg: Vec<F> = z[2 * k..3 * k].iter().map(|&v| v.tanh()).collect();
        let go: Vec<F> = z[3 * k..].iter().map(|&v| sigmoid(v)).collect();
        let c_new: Vec<F> = (0..k).map(|j| gf[j] * c[j] + gi[j] * gg[j]).collect();
        let c_tanh: Vec<F> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<F> = (0..k).map(|j| go[j] * c_tanh[j]).collect();
        hidden.row_mut(pos).copy_from_slice(&h_new);
        steps.push(StepCache {
            x: xr.to_vec(),
            h_prev: std::mem::replace(&mut h, h_new),
            c_prev: std::mem::replace(&mut c, c_new),
            i: gi,
            f: gf,
            g: gg,
            o: go,
            c_tanh,
        });
    }
    DirectionCache { steps, hidden }
}

pub(crate) fn forward<F: Scalar>(
    params: &ModelParams<F>,
    x: &Matrix<F>,
) -> (Matrix<F>, BilstmCache<F>) {
    let w = params.values();
    let fwd = run_direction(&w[FWD], &w[FWD + 1], &w[FWD + 2], x, false);
    let bwd = run_direction(&w[BWD], &w[BWD + 1], &w[BWD + 2], x, true);
    let k = fwd.hidden.cols();
    let mut concat = Matrix::zeros(x.rows(), 2 * k);
    concat.set_cols(0, &fwd.hidden);
    concat.set_cols(k, &bwd.hidden);
    let out = concat.matmul(&w[OUTPUT_W]).add_row(&w[OUTPUT_B]);
    (out, BilstmCache { fwd, bwd, concat })
}

fn direction_backward<F: Scalar>(
    wh: &Matrix<F>,
    cache: &DirectionCache<F>,
    dhidden: &Matrix<F>,
    reverse: bool,
    grads: &mut [Matrix<F>],
) {
    let k = wh.rows();
    let n = cache.steps.len();
    let mut dh_next = vec![F::zero(); k];
    let mut dc_next = vec![F::zero(); k];
    for s in (0..n).rev() {
        let pos = if reverse { n - 1 - s } else { s };
        let st = &cache.steps[s];
        let dh: Vec<F> = (0..k).map(|j| dhidden.get(pos, j) + dh_next[j]).collect();
        let mut dz = vec![F::zero(); 4 * k];
        for j in 0..k {
            let dc = dh[j] * st.o[j] * (F::one() - st.c_tanh[j] * st.c_tanh[j]) + dc_next[j];
            let d_o = dh[j] * st.c_tanh[j];
            let di = dc * st.g[j];
            let dg = dc * st.i[j];
            let df = dc * st.c_prev[j];
            dc_next[j] = dc * st.f[j];
            dz[j] = di * st.i[j] * (F::one() - st.i[j]);
            dz[k + j] = df * st.f[j] * (F::one() - st.f[j]);
            dz[2 * k + j] = dg * (F::one() - st.g[j] * st.g[j]);
            dz[3 * k + j] = d_o * st.o[j] * (F::one() - st.o[j]);
        }
        let [gwx, gwh, gb] = grads else {
            unreachable!("three tensors per direction")
        };
        for (a, &xv) in st.x.iter().enumerate() {
            for (gv, &d) in gwx.row_mut(a).iter_mut().zip(&dz) {
                *gv = *gv + xv * d;
            }
        }
        for (a, &hv) in st.h_prev.iter().enumerate() {
            for (gv, &d) in gwh.row_mut(a).iter_mut().zip(&dz) {
                *gv = *gv + hv * d;
            }
        }
        for (gv, &d) in gb.data_mut().iter_mut().zip(&dz) {
            *gv = *gv + d;
        }
        for (a, o) in dh_next.iter_mut().enumerate() {
            *o = wh.row(a).iter().zip(&dz).fold(F::zero(), |acc, (&w, &d)| acc + w * d);
        }
    }
}

pub(crate) fn backward<F: Scalar>(
    params: &ModelParams<F>,
    cache: &BilstmCache<F>,
    dout: &Matrix<F>,
) -> Vec<Matrix<F>> {
    let w = params.values();
    let mut g = params.zeros_like();
    g[OUTPUT_W].add_assign(&cache.concat.t_matmul(dout));
    g[OUTPUT_B].add_assign(&dout.sum_rows());
    let dconcat = dout.matmul_t(&w[OUTPUT_W]);
    let k = cache.fwd.hidden.cols();
    direction_backward(&w[FWD + 1], &cache.fwd, &dconcat.cols_slice(0, k), false, &mut g[FWD..FWD + 3]);
    direction_backward(&w[BWD + 1], &cache.bwd, &dconcat.cols_slice(k, 2 * k), true, &mut g[BWD..BWD + 3]);
    g
}
