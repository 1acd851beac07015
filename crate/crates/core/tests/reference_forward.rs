//! Forward passes recomputed with plain scalar loops, read from the parameter
//! tensors by name.

mod common;

use common::{jitter, random_story};
use slm_core::rng::SeededRng;
use slm_core::{bilstm_forward, candidate_next, init_params, ut_forward, Backbone, ModelConfig, ModelParams};

type Rows = Vec<Vec<f64>>;

fn w(p: &ModelParams<f64>, name: &str, r: usize, c: usize) -> f64 {
    p.tensor(name).unwrap_or_else(|| panic!("no tensor {name}")).get(r, c)
}

fn affine(p: &ModelParams<f64>, x: &[f64], weight: &str, bias: Option<&str>) -> Vec<f64> {
    let cols = p.tensor(weight).unwrap().cols();
    (0..cols)
        .map(|c| {
            let mut s = bias.map_or(0.0, |b| w(p, b, 0, c));
            for (k, xv) in x.iter().enumerate() {
                s += xv * w(p, weight, k, c);
            }
            s
        })
        .collect()
}

fn layer_norm(p: &ModelParams<f64>, x: &[f64], prefix: &str) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(c, v)| {
            (v - mean) / (var + 1e-5).sqrt() * w(p, &format!("{prefix}.gain"), 0, c)
                + w(p, &format!("{prefix}.bias"), 0, c)
        })
        .collect()
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh())
}

fn block(p: &ModelParams<f64>, pre: &str, rows: &Rows, heads: usize) -> Rows {
    let name = |s: &str| format!("{pre}.{s}");
    let q: Rows = rows.iter().map(|x| affine(p, x, &name("attn.wq"), None)).collect();
    let k: Rows = rows.iter().map(|x| affine(p, x, &name("attn.wk"), None)).collect();
    let v: Rows = rows.iter().map(|x| affine(p, x, &name("attn.wv"), None)).collect();
    let h = q[0].len();
    let dh = h / heads;
    rows.iter()
        .enumerate()
        .map(|(i, x)| {
            let mut ctx = vec![0.0; h];
            for hd in 0..heads {
                let cols = hd * dh..(hd + 1) * dh;
                let logits: Vec<f64> = (0..rows.len())
                    .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = e.iter().sum();
                for c in cols {
                    ctx[c] = (0..rows.len()).map(|j| e[j] / total * v[j][c]).sum();
                }
            }
            let a = affine(p, &ctx, &name("attn.wo"), Some(&name("attn.bo")));
            let r1: Vec<f64> = x.iter().zip(&a).map(|(x, a)| x + a).collect();
            let z = layer_norm(p, &r1, &name("ln1"));
            let hidden: Vec<f64> = affine(p, &z, &name("ffn.w1"), Some(&name("ffn.b1")))
                .into_iter()
                .map(gelu)
                .collect();
            let f = affine(p, &hidden, &name("ffn.w2"), Some(&name("ffn.b2")));
            let r2: Vec<f64> = z.iter().zip(&f).map(|(z, f)| z + f).collect();
            layer_norm(p, &r2, &name("ln2"))
        })
        .collect()
}

fn naive_ut(p: &ModelParams<f64>, x: &Rows) -> Rows {
    let cfg = &p.config;
    let mut state = x.clone();
    for t in 1..=cfg.depth_steps {
        for row in state.iter_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                let angle = t as f64 / 10000f64.powf((2 * (i / 2)) as f64 / cfg.d as f64);
                *v += if i % 2 == 0 { angle.sin() } else { angle.cos() };
            }
        }
        state = block(p, "encoder", &state, cfg.heads);
    }
    block(p, "decoder", &state, cfg.heads)
        .iter()
        .map(|r| affine(p, r, "output.w", Some("output.b")))
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn naive_direction(p: &ModelParams<f64>, dir: &str, x: &Rows, reverse: bool) -> Rows {
    let k = p.tensor(&format!("{dir}.wh")).unwrap().rows();
    let n = x.len();
    let mut h = vec![0.0; k];
    let mut c = vec![0.0; k];
    let mut out = vec![Vec::new(); n];
    for s in 0..n {
        let t = if reverse { n - 1 - s } else { s };
        let a = affine(p, &x[t], &format!("{dir}.wx"), Some(&format!("{dir}.b")));
        let r = affine(p, &h, &format!("{dir}.wh"), None);
        let z: Vec<f64> = a.iter().zip(&r).map(|(a, r)| a + r).collect();
        for j in 0..k {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[k + j]);
            let g = z[2 * k + j].tanh();
            let o = sigmoid(z[3 * k + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        out[t] = h.clone();
    }
    out
}

fn naive_bilstm(p: &ModelParams<f64>, x: &Rows) -> Rows {
    let f = naive_direction(p, "forward", x, false);
    let b = naive_direction(p, "backward", x, true);
    f.iter()
        .zip(&b)
        .map(|(f, b)| {
            let cat: Vec<f64> = f.iter().chain(b).copied().collect();
            affine(p, &cat, "output.w", Some("output.b"))
        })
        .collect()
}

fn max_dev(a: &Rows, b: &Rows) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn params(cfg: ModelConfig) -> ModelParams<f64> {
    let mut p = init_params(&cfg).unwrap();
    jitter(&mut p, cfg.seed + 1000, 0.2);
    p
}

fn ut_config(d: usize, h: usize, heads: usize, depth_steps: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        d,
        h,
        heads,
        depth_steps,
        backbone: Backbone::UniversalTransformer,
        seed,
    }
}

#[test]
fn ut_matches_reference_d2_single_head() {
    let p = params(ut_config(2, 4, 1, 1, 5));
    for n in 1..=5 {
        let x = random_story(n, 2, n as u64);
        let got = ut_forward(&p, &x).unwrap().candidates;
        let dev = max_dev(&got, &naive_ut(&p, &x));
        assert!(dev < 1e-12, "n={n}: {dev:e}");
    }
}

#[test]
fn ut_matches_reference_multi_head_multi_step() {
    let p = params(ut_config(6, 12, 3, 3, 8));
    let x = random_story(5, 6, 21);
    let got = ut_forward(&p, &x).unwrap().candidates;
    assert!(max_dev(&got, &naive_ut(&p, &x)) < 1e-12);
}

#[test]
fn bilstm_matches_reference_d2() {
    let cfg = ModelConfig {
        h: 8,
        heads: 1,
        ..ModelConfig::new(2, Backbone::Bilstm, 4)
    };
    let p = params(cfg);
    for n in 1..=5 {
        let x = random_story(n, 2, 40 + n as u64);
        let got = bilstm_forward(&p, &x).unwrap().candidates;
        let dev = max_dev(&got, &naive_bilstm(&p, &x));
        assert!(dev < 1e-12, "n={n}: {dev:e}");
    }
}

#[test]
fn bilstm_hand_computed_single_step() {
    // d=2, all weights zero except the input-gate and cell-gate biases.
    let cfg = ModelConfig::new(2, Backbone::Bilstm, 0);
    let mut p: ModelParams<f64> = init_params(&cfg).unwrap();
    for m in p.values_mut() {
        m.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    for dir in ["forward", "backward"] {
        let b = p.tensor_mut(&format!("{dir}.b")).unwrap();
        // gates laid out as i, f, g, o with k = 2
        b.set(0, 0, 100.0);
        b.set(0, 1, 100.0);
        b.set(0, 4, 0.5);
        b.set(0, 5, -0.5);
        b.set(0, 6, 100.0);
        b.set(0, 7, 100.0);
    }
    let ow = p.tensor_mut("output.w").unwrap();
    ow.set(0, 0, 1.0);
    ow.set(3, 1, 1.0);
    let got = bilstm_forward(&p, &[vec![0.3, -0.2]]).unwrap().candidates;
    // i = o = 1, c = tanh(±0.5), h = tanh(c)
    let h = (0.5f64).tanh().tanh();
    assert!((got[0][0] - h).abs() < 1e-12);
    assert!((got[0][1] + h).abs() < 1e-12);
}

fn permutation_trial(p: &ModelParams<f64>, rng: &mut SeededRng, n: usize) -> f64 {
    let x = random_story(n, p.config.d, rng.next_u64());
    let mut perm: Vec<usize> = (0..n).collect();
    while perm.iter().enumerate().all(|(i, &v)| i == v) {
        rng.shuffle(&mut perm);
    }
    let px: Rows = perm.iter().map(|&i| x[i].clone()).collect();
    let base = candidate_next(p, &x).unwrap().candidates;
    let permuted = candidate_next(p, &px).unwrap().candidates;
    let expected: Rows = perm.iter().map(|&i| base[i].clone()).collect();
    max_dev(&permuted, &expected)
}

#[test]
fn ut_is_permutation_equivariant() {
    let p = params(ModelConfig::new(16, Backbone::UniversalTransformer, 2));
    let mut rng = SeededRng::new(77);
    let worst = (0..50)
        .map(|t| permutation_trial(&p, &mut rng, 2 + t % 7))
        .fold(0.0, f64::max);
    assert!(worst <= 1e-9, "{worst:e}");
}

#[test]
fn bilstm_is_not_permutation_equivariant() {
    let p = params(ModelConfig::new(16, Backbone::Bilstm, 2));
    let mut rng = SeededRng::new(77);
    let devs: Vec<f64> = (0..50).map(|t| permutation_trial(&p, &mut rng, 2 + t % 7)).collect();
    assert!(devs.iter().all(|&d| d > 1e-9), "{devs:?}");
}
