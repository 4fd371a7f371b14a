//! Scalar-by-scalar reference forward pass for a one-layer, one-head model.

use lookahead_model::config::Dtype;
use lookahead_model::{ModelConfig, Transformer};
use rand::Rng;
use lookahead_core::seed;

struct Weights<'a> {
    m: &'a Transformer<f64>,
}

impl Weights<'_> {
    fn t(&self, name: &str) -> &[f64] {
        let info = self.m.layout.tensor(name).unwrap_or_else(|| panic!("no tensor {name}"));
        &self.m.params[info.range()]
    }

    /// Row-major [rows, cols] lookup.
    fn at(&self, name: &str, r: usize, c: usize, cols: usize) -> f64 {
        self.t(name)[r * cols + c]
    }
}

fn layernorm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * g[i] + b[i])
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn matvec(w: &Weights, name: &str, x: &[f64], out: usize) -> Vec<f64> {
    (0..out)
        .map(|o| (0..x.len()).map(|i| x[i] * w.at(name, i, o, out)).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn reference(m: &Transformer<f64>, ids: &[u32]) -> Vec<Vec<f64>> {
    let w = Weights { m };
    let c = m.config.d_model;
    let f = m.config.d_ff;
    let v = m.config.vocab_size;
    let mut xs: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(p, &id)| (0..c).map(|i| w.at("wte", id as usize, i, c) + w.at("wpe", p, i, c)).collect())
        .collect();

    let ln1: Vec<Vec<f64>> = xs.iter().map(|x| layernorm(x, w.t("h0.ln1.g"), w.t("h0.ln1.b"))).collect();
    let qkv: Vec<Vec<f64>> = ln1.iter().map(|x| add(&matvec(&w, "h0.attn.qkv.w", x, 3 * c), w.t("h0.attn.qkv.b"))).collect();
    for t in 0..ids.len() {
        let q = &qkv[t][..c];
        let scores: Vec<f64> = (0..=t)
            .map(|s| q.iter().zip(&qkv[s][c..2 * c]).map(|(a, b)| a * b).sum::<f64>() / (c as f64).sqrt())
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let y: Vec<f64> = (0..c)
            .map(|i| (0..=t).map(|s| scores[s].exp() / z * qkv[s][2 * c + i]).sum())
            .collect();
        let o = add(&matvec(&w, "h0.attn.proj.w", &y, c), w.t("h0.attn.proj.b"));
        xs[t] = add(&xs[t], &o);
    }
    for x in xs.iter_mut() {
        let h = layernorm(x, w.t("h0.ln2.g"), w.t("h0.ln2.b"));
        let a: Vec<f64> = add(&matvec(&w, "h0.mlp.fc.w", &h, f), w.t("h0.mlp.fc.b")).into_iter().map(gelu).collect();
        let o = add(&matvec(&w, "h0.mlp.proj.w", &a, c), w.t("h0.mlp.proj.b"));
        *x = add(x, &o);
    }
    xs.iter()
        .map(|x| {
            let h = layernorm(x, w.t("lnf.g"), w.t("lnf.b"));
            (0..v).map(|k| (0..c).map(|i| h[i] * w.at("wte", k, i, c)).sum()).collect()
        })
        .collect()
}

#[test]
fn one_layer_one_head_matches_scalar_reference() {
    let cfg = ModelConfig {
        n_layers: 1,
        n_heads: 1,
        d_model: 4,
        d_ff: 8,
        vocab_size: 7,
        max_seq_len: 3,
        init_std: 0.5,
        dtype: Dtype::F64,
        tie_head: true,
    };
    let mut m = Transformer::<f64>::new(cfg, 21).unwrap();
    let mut rng = seed::rng(22);
    for p in m.params.iter_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let ids = [5, 0, 3];
    let got = m.forward(&ids, 1, 3).unwrap().logits;
    let want = reference(&m, &ids);
    for (t, row) in want.iter().enumerate() {
        for (k, &x) in row.iter().enumerate() {
            assert!((got[t * 7 + k] - x).abs() < 1e-12, "position {t} token {k}: {} vs {x}", got[t * 7 + k]);
        }
    }
}
