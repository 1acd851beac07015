//! Forward and backward passes of the transformer building blocks.
//!
//! Parameters are passed as slices of [`Matrix`] laid out as described by the
//! `block` index constants; gradients accumulate into a slice with the same
//! layout.

use super::matrix::Matrix;
use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-5;

pub(crate) struct LayerNormCache<F> {
    xhat: Matrix<F>,
    inv_std: Vec<F>,
}

/// Row-wise layer normalization with gain `g` and shift `b` (both `1 × d`).
pub(crate) fn layer_norm<F: Scalar>(
    x: &Matrix<F>,
    g: &Matrix<F>,
    b: &Matrix<F>,
) -> (Matrix<F>, LayerNormCache<F>) {
    let (n, d) = x.shape();
    let df = F::of(d as f64);
    let eps = F::of(LN_EPS);
    let mut xhat = Matrix::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<F>() / df;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / df;
        let is = F::one() / (var + eps).sqrt();
        for (o, &v) in xhat.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
        inv_std.push(is);
    }
    let mut y = xhat.clone();
    for r in 0..n {
        for ((o, &gg), &bb) in y.row_mut(r).iter_mut().zip(g.data()).zip(b.data()) {
            *o = *o * gg + bb;
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward<F: Scalar>(
    cache: &LayerNormCache<F>,
    g: &Matrix<F>,
    dy: &Matrix<F>,
    dg: &mut Matrix<F>,
    db: &mut Matrix<F>,
) -> Matrix<F> {
    let (n, d) = dy.shape();
    let df = F::of(d as f64);
    let mut dx = Matrix::zeros(n, d);
    for r in 0..n {
        let xh = cache.xhat.row(r);
        let dyr = dy.row(r);
        let mut mean_dxh = F::zero();
        let mut mean_dxh_xh = F::zero();
        for c in 0..d {
            let dxh = dyr[c] * g.data()[c];
            mean_dxh = mean_dxh + dxh;
            mean_dxh_xh = mean_dxh_xh + dxh * xh[c];
            dg.data_mut()[c] = dg.data()[c] + dyr[c] * xh[c];
            db.data_mut()[c] = db.data()[c] + dyr[c];
        }
        mean_dxh = mean_dxh / df;
        mean_dxh_xh = mean_dxh_xh / df;
        let is = cache.inv_std[r];
        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
            let dxh = dyr[c] * g.data()[c];
            *o = is * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
        }
    }
    dx
}

/// GELU, tanh approximation.
pub(crate) fn gelu<F: Scalar>(u: F) -> F {
    let c = F::of((2.0 / std::f64::consts::PI).sqrt());
    let k = F::of(0.044715);
    let half = F::of(0.5);
    half * u * (F::one() + (c * (u + k * u * u * u)).tanh())
}

pub(crate) fn gelu_grad<F: Scalar>(u: F) -> F {
    let c = F::of((2.0 / std::f64::consts::PI).sqrt());
    let k = F::of(0.044715);
    let half = F::of(0.5);
    let t = (c * (u + k * u * u * u)).tanh();
    half * (F::one() + t) + half * u * (F::one() - t * t) * c * (F::one() + F::of(3.0) * k * u * u)
}

pub(crate) struct FeedForwardCache<F> {
    x: Matrix<F>,
    pre: Matrix<F>,
    act: Matrix<F>,
}

/// `gelu(x·W1 + b1)·W2 + b2`.
pub(crate) fn feed_forward<F: Scalar>(
    x: &Matrix<F>,
    w1: &Matrix<F>,
    b1: &Matrix<F>,
    w2: &Matrix<F>,
    b2: &Matrix<F>,
) -> (Matrix<F>, FeedForwardCache<F>) {
    let pre = x.matmul(w1).add_row(b1);
    let act = pre.map(gelu);
    let y = act.matmul(w2).add_row(b2);
    (
        y,
        FeedForwardCache {
            x: x.clone(),
            pre,
            act,
        },
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn feed_forward_backward<F: Scalar>(
    cache: &FeedForwardCache<F>,
    w1: &Matrix<F>,
    w2: &Matrix<F>,
    dy: &Matrix<F>,
    dw1: &mut Matrix<F>,
    db1: &mut Matrix<F>,
    dw2: &mut Matrix<F>,
    db2: &mut Matrix<F>,
) -> Matrix<F> {
    dw2.add_assign(&cache.act.t_matmul(dy));
    db2.add_assign(&dy.sum_rows());
    let dact = dy.matmul_t(w2);
    let dpre = dact.zip_map(&cache.pre, |g, u| g * gelu_grad(u));
    dw1.add_assign(&cache.x.t_matmul(&dpre));
    db1.add_assign(&dpre.sum_rows());
    dpre.matmul_t(w1)
}

fn softmax_rows<F: Scalar>(s: &Matrix<F>) -> Matrix<F> {
    let mut p = s.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut total = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    p
}

pub(crate) struct AttentionCache<F> {
    query_in: Matrix<F>,
    memory_in: Matrix<F>,
    q: Matrix<F>,
    k: Matrix<F>,
    v: Matrix<F>,
    probs: Vec<Matrix<F>>,
    concat: Matrix<F>,
}

pub(crate) struct AttentionWeights<'a, F> {
    pub wq: &'a Matrix<F>,
    pub wk: &'a Matrix<F>,
    pub wv: &'a Matrix<F>,
    pub wo: &'a Matrix<F>,
    pub bo: &'a Matrix<F>,
}

/// Multi-head scaled dot-product attention of `query_in` rows over
/// `memory_in` rows. Projections map `d → h`; heads split `h` evenly.
pub(crate) fn attention<F: Scalar>(
    w: &AttentionWeights<'_, F>,
    query_in: &Matrix<F>,
    memory_in: &Matrix<F>,
    heads: usize,
) -> (Matrix<F>, AttentionCache<F>) {
    let q = query_in.matmul(w.wq);
    let k = memory_in.matmul(w.wk);
    let v = memory_in.matmul(w.wv);
    let h = q.cols();
    let dh = h / heads;
    let scale = F::one() / F::of(dh as f64).sqrt();
    let mut concat = Matrix::zeros(q.rows(), h);
    let mut probs = Vec::with_capacity(heads);
    for head in 0..heads {
        let (lo, hi) = (head * dh, (head + 1) * dh);
        let qh = q.cols_slice(lo, hi);
        let kh = k.cols_slice(lo, hi);
        let vh = v.cols_slice(lo, hi);
        let p = softmax_rows(&qh.matmul_t(&kh).scale(scale));
        concat.set_cols(lo, &p.matmul(&vh));
        probs.push(p);
    }
    let out = concat.matmul(w.wo).add_row(w.bo);
    (
        out,
        AttentionCache {
            query_in: query_in.clone(),
            memory_in: memory_in.clone(),
            q,
            k,
            v,
            probs,
            concat,
        },
    )
}

pub(crate) struct AttentionGrads<'a, F> {
    pub wq: &'a mut Matrix<F>,
    pub wk: &'a mut Matrix<F>,
    pub wv: &'a mut Matrix<F>,
    pub wo: &'a mut Matrix<F>,
    pub bo: &'a mut Matrix<F>,
}

/// Returns `(d query_in, d memory_in)`.
pub(crate) fn attention_backward<F: Scalar>(
    w: &AttentionWeights<'_, F>,
    cache: &AttentionCache<F>,
    dout: &Matrix<F>,
    g: AttentionGrads<'_, F>,
) -> (Matrix<F>, Matrix<F>) {
    g.wo.add_assign(&cache.concat.t_matmul(dout));
    g.bo.add_assign(&dout.sum_rows());
    let dconcat = dout.matmul_t(w.wo);
    let heads = cache.probs.len();
    let h = cache.q.cols();
    let dh = h / heads;
    let scale = F::one() / F::of(dh as f64).sqrt();
    let mut dq = Matrix::zeros(cache.q.rows(), h);
    let mut dk = Matrix::zeros(cache.k.rows(), h);
    let mut dv = Matrix::zeros(cache.v.rows(), h);
    for (head, p) in cache.probs.iter().enumerate() {
        let (lo, hi) = (head * dh, (head + 1) * dh);
        let qh = cache.q.cols_slice(lo, hi);
        let kh = cache.k.cols_slice(lo, hi);
        let vh = cache.v.cols_slice(lo, hi);
        let doh = dconcat.cols_slice(lo, hi);
        let dp = doh.matmul_t(&vh);
        dv.set_cols(lo, &p.t_matmul(&doh));
        let mut ds = Matrix::zeros(p.rows(), p.cols());
        for r in 0..p.rows() {
            let pr = p.row(r);
            let dpr = dp.row(r);
            let dot = pr.iter().zip(dpr).fold(F::zero(), |a, (&x, &y)| a + x * y);
            for (c, o) in ds.row_mut(r).iter_mut().enumerate() {
                *o = pr[c] * (dpr[c] - dot) * scale;
            }
        }
        dq.set_cols(lo, &ds.matmul(&kh));
        dk.set_cols(lo, &ds.t_matmul(&qh));
    }
    g.wq.add_assign(&cache.query_in.t_matmul(&dq));
    g.wk.add_assign(&cache.memory_in.t_matmul(&dk));
    g.wv.add_assign(&cache.memory_in.t_matmul(&dv));
    let dquery = dq.matmul_t(w.wq);
    let dmemory = dk.matmul_t(w.wk).add(&dv.matmul_t(w.wv));
    (dquery, dmemory)
}

/// Tensor layout of one attention + transition block.
pub(crate) mod block {
    pub const WQ: usize = 0;
    pub const WK: usize = 1;
    pub const WV: usize = 2;
    pub const WO: usize = 3;
    pub const BO: usize = 4;
    pub const LN1_G: usize = 5;
    pub const LN1_B: usize = 6;
    pub const W1: usize = 7;
    pub const B1: usize = 8;
    pub const W2: usize = 9;
    pub const B2: usize = 10;
    pub const LN2_G: usize = 11;
    pub const LN2_B: usize = 12;
    pub const LEN: usize = 13;

    pub const NAMES: [&str; LEN] = [
        "attn.wq", "attn.wk", "attn.wv", "attn.wo", "attn.bo", "ln1.gain", "ln1.bias",
        "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2", "ln2.gain", "ln2.bias",
    ];
}

pub(crate) struct BlockCache<F> {
    attn: AttentionCache<F>,
    ln1: LayerNormCache<F>,
    ffn: FeedForwardCache<F>,
    ln2: LayerNormCache<F>,
}

fn attention_weights<F>(w: &[Matrix<F>]) -> AttentionWeights<'_, F> {
    AttentionWeights {
        wq: &w[block::WQ],
        wk: &w[block::WK],
        wv: &w[block::WV],
        wo: &w[block::WO],
        bo: &w[block::BO],
    }
}

/// Post-norm block:
/// `z = LN1(query + Attn(query, memory))`, `out = LN2(z + FFN(z))`.
pub(crate) fn block_forward<F: Scalar>(
    w: &[Matrix<F>],
    query: &Matrix<F>,
    memory: &Matrix<F>,
    heads: usize,
) -> (Matrix<F>, BlockCache<F>) {
    use block::*;
    let (a, attn) = attention(&attention_weights(w), query, memory, heads);
    let (z, ln1) = layer_norm(&query.add(&a), &w[LN1_G], &w[LN1_B]);
    let (f, ffn) = feed_forward(&z, &w[W1], &w[B1], &w[W2], &w[B2]);
    let (out, ln2) = layer_norm(&z.add(&f), &w[LN2_G], &w[LN2_B]);
    (out, BlockCache { attn, ln1, ffn, ln2 })
}

/// Returns `(d query, d memory)`.
pub(crate) fn block_backward<F: Scalar>(
    w: &[Matrix<F>],
    cache: &BlockCache<F>,
    dout: &Matrix<F>,
    g: &mut [Matrix<F>],
) -> (Matrix<F>, Matrix<F>) {
    use block::*;
    let dr2 = {
        let (dg, db) = pair_mut(g, LN2_G, LN2_B);
        layer_norm_backward(&cache.ln2, &w[LN2_G], dout, dg, db)
    };
    let dz_ffn = {
        let [dw1, db1, dw2, db2] = quad_mut(g, W1);
        feed_forward_backward(&cache.ffn, &w[W1], &w[W2], &dr2, dw1, db1, dw2, db2)
    };
    let dz = dr2.add(&dz_ffn);
    let dr1 = {
        let (dg, db) = pair_mut(g, LN1_G, LN1_B);
        layer_norm_backward(&cache.ln1, &w[LN1_G], &dz, dg, db)
    };
    let (head, _) = g.split_at_mut(LN1_G);
    let [gwq, gwk, gwv, gwo, gbo] = head else {
        unreachable!("block layout starts with five attention tensors")
    };
    let grads = AttentionGrads {
        wq: gwq,
        wk: gwk,
        wv: gwv,
        wo: gwo,
        bo: gbo,
    };
    let (dq_attn, dmemory) = attention_backward(&attention_weights(w), &cache.attn, &dr1, grads);
    (dr1.add(&dq_attn), dmemory)
}

fn pair_mut<F>(g: &mut [Matrix<F>], a: usize, b: usize) -> (&mut Matrix<F>, &mut Matrix<F>) {
    debug_assert_eq!(a + 1, b);
    let (x, y) = g[a..=b].split_at_mut(1);
    (&mut x[0], &mut y[0])
}

fn quad_mut<F>(g: &mut [Matrix<F>], start: usize) -> [&mut Matrix<F>; 4] {
    let [a, b, c, d] = &mut g[start..start + 4] else {
        unreachable!("slice has four elements")
    };
    [a, b, c, d]
}
