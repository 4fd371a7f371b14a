//! Forward and backward kernels. Row-major buffers throughout; `n` is the
//! number of rows (batch x positions).

use crate::scalar::{gemm, Mat, Scalar};

pub const LN_EPS: f64 = 1e-5;

pub struct LnCache<S> {
    pub out: Vec<S>,
    pub mean: Vec<S>,
    pub rstd: Vec<S>,
}

pub fn layernorm_forward<S: Scalar>(x: &[S], g: &[S], b: &[S], n: usize, c: usize) -> LnCache<S> {
    let mut out = vec![S::zero(); n * c];
    let mut mean = vec![S::zero(); n];
    let mut rstd = vec![S::zero(); n];
    let cf = S::lit(c as f64);
    let eps = S::lit(LN_EPS);
    for r in 0..n {
        let row = &x[r * c..(r + 1) * c];
        let m = row.iter().copied().sum::<S>() / cf;
        let var = row.iter().map(|&v| (v - m) * (v - m)).sum::<S>() / cf;
        let rs = S::one() / (var + eps).sqrt();
        let o = &mut out[r * c..(r + 1) * c];
        for i in 0..c {
            o[i] = (row[i] - m) * rs * g[i] + b[i];
        }
        mean[r] = m;
        rstd[r] = rs;
    }
    LnCache { out, mean, rstd }
}

/// Accumulates into `dx`, `dg` and `db`.
#[allow(clippy::too_many_arguments)]
pub fn layernorm_backward<S: Scalar>(
    dout: &[S],
    x: &[S],
    g: &[S],
    cache: &LnCache<S>,
    dx: &mut [S],
    dg: &mut [S],
    db: &mut [S],
    n: usize,
    c: usize,
) {
    let cf = S::lit(c as f64);
    for r in 0..n {
        let (m, rs) = (cache.mean[r], cache.rstd[r]);
        let xr = &x[r * c..(r + 1) * c];
        let dr = &dout[r * c..(r + 1) * c];
        let mut sum_dxhat = S::zero();
        let mut sum_dxhat_xhat = S::zero();
        for i in 0..c {
            let xhat = (xr[i] - m) * rs;
            let dxhat = dr[i] * g[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dg[i] += dr[i] * xhat;
            db[i] += dr[i];
        }
        let mean_dxhat = sum_dxhat / cf;
        let mean_dxhat_xhat = sum_dxhat_xhat / cf;
        let dxr = &mut dx[r * c..(r + 1) * c];
        for i in 0..c {
            let xhat = (xr[i] - m) * rs;
            let dxhat = dr[i] * g[i];
            dxr[i] += rs * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
    }
}

/// `out[n, o] = x[n, i] w[i, o] + bias[o]`.
pub fn linear_forward<S: Scalar>(x: &[S], w: &[S], bias: &[S], n: usize, i: usize, o: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * o];
    for r in 0..n {
        out[r * o..(r + 1) * o].copy_from_slice(&bias[..o]);
    }
    gemm(n, i, o, S::one(), Mat::rows(x, i), Mat::rows(w, o), S::one(), &mut out, o);
    out
}

/// Returns `dx`; accumulates into `dw` and `dbias`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<S: Scalar>(
    dout: &[S],
    x: &[S],
    w: &[S],
    dw: &mut [S],
    dbias: &mut [S],
    n: usize,
    i: usize,
    o: usize,
) -> Vec<S> {
    let mut dx = vec![S::zero(); n * i];
    gemm(n, o, i, S::one(), Mat::rows(dout, o), Mat::t(w, o), S::zero(), &mut dx, i);
    gemm(i, n, o, S::one(), Mat::t(x, i), Mat::rows(dout, o), S::one(), dw, o);
    for r in 0..n {
        for (db, &d) in dbias.iter_mut().zip(&dout[r * o..(r + 1) * o]) {
            *db += d;
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU, evaluated as `x * sigmoid(2u)` with
/// `u = sqrt(2/pi) (x + 0.044715 x^3)`, which equals `0.5 x (1 + tanh u)`.
pub fn gelu_forward<S: Scalar>(x: &[S]) -> Vec<S> {
    let (c2, a) = (S::lit(2.0 * GELU_C), S::lit(GELU_A));
    x.iter()
        .map(|&v| v / (S::one() + (-(c2 * (v + a * v * v * v))).exp_kernel()))
        .collect()
}

pub fn gelu_backward<S: Scalar>(x: &[S], dout: &[S]) -> Vec<S> {
    let (c2, a, three) = (S::lit(2.0 * GELU_C), S::lit(GELU_A), S::lit(3.0));
    x.iter()
        .zip(dout)
        .map(|(&v, &d)| {
            let s = S::one() / (S::one() + (-(c2 * (v + a * v * v * v))).exp_kernel());
            let du = c2 * (S::one() + three * a * v * v);
            (s + v * s * (S::one() - s) * du) * d
        })
        .collect()
}

/// Shape of the attention problem.
#[derive(Clone, Copy, Debug)]
pub struct AttnShape {
    pub b: usize,
    pub t: usize,
    pub c: usize,
    pub h: usize,
}

impl AttnShape {
    fn hs(&self) -> usize {
        self.c / self.h
    }
}

/// Causal multi-head self-attention over a packed `[n, 3c]` q|k|v buffer.
/// Returns the attention probabilities `[b, h, t, t]` and head outputs
/// `[n, c]`.
pub fn attention_forward<S: Scalar>(qkv: &[S], s: AttnShape) -> (Vec<S>, Vec<S>) {
    let AttnShape { b, t, c, h } = s;
    let hs = s.hs();
    let scale = S::one() / S::lit(hs as f64).sqrt();
    let mut att = vec![S::zero(); b * h * t * t];
    let mut y = vec![S::zero(); b * t * c];
    for bi in 0..b {
        let base = bi * t * 3 * c;
        for hi in 0..h {
            let q = &qkv[base + hi * hs..];
            let k = &qkv[base + c + hi * hs..];
            let v = &qkv[base + 2 * c + hi * hs..];
            let a = &mut att[(bi * h + hi) * t * t..(bi * h + hi + 1) * t * t];
            gemm(t, hs, t, scale, Mat::strided(q, 3 * c, 1), Mat::strided(k, 1, 3 * c), S::zero(), a, t);
            for i in 0..t {
                let row = &mut a[i * t..(i + 1) * t];
                let mx = row[..=i].iter().copied().fold(S::neg_infinity(), S::max);
                let mut sum = S::zero();
                for x in &mut row[..=i] {
                    *x = (*x - mx).exp();
                    sum += *x;
                }
                for x in &mut row[..=i] {
                    *x /= sum;
                }
                row[i + 1..].fill(S::zero());
            }
            let out = &mut y[bi * t * c + hi * hs..];
            gemm(t, t, hs, S::one(), Mat::rows(a, t), Mat::strided(v, 3 * c, 1), S::zero(), out, c);
        }
    }
    (att, y)
}

/// Gradient of [`attention_forward`] with respect to the packed qkv buffer.
pub fn attention_backward<S: Scalar>(dy: &[S], qkv: &[S], att: &[S], s: AttnShape) -> Vec<S> {
    let AttnShape { b, t, c, h } = s;
    let hs = s.hs();
    let scale = S::one() / S::lit(hs as f64).sqrt();
    let mut dqkv = vec![S::zero(); b * t * 3 * c];
    let mut datt = vec![S::zero(); t * t];
    for bi in 0..b {
        let base = bi * t * 3 * c;
        for hi in 0..h {
            let a = &att[(bi * h + hi) * t * t..(bi * h + hi + 1) * t * t];
            let dyh = &dy[bi * t * c + hi * hs..];
            // dP = dY V^T
            gemm(t, hs, t, S::one(), Mat::strided(dyh, c, 1), Mat::strided(&qkv[base + 2 * c + hi * hs..], 1, 3 * c), S::zero(), &mut datt, t);
            // dV = P^T dY
            gemm(t, t, hs, S::one(), Mat::t(a, t), Mat::strided(dyh, c, 1), S::zero(), &mut dqkv[base + 2 * c + hi * hs..], 3 * c);
            // softmax backward, row by row over the causal prefix
            for i in 0..t {
                let p = &a[i * t..=i * t + i];
                let d = &mut datt[i * t..(i + 1) * t];
                let dot: S = p.iter().zip(d.iter()).map(|(&pp, &dd)| pp * dd).sum();
                for j in 0..=i {
                    d[j] = p[j] * (d[j] - dot);
                }
                d[i + 1..].fill(S::zero());
            }
            // dQ = dS K * scale ; dK = dS^T Q * scale
            gemm(t, t, hs, scale, Mat::rows(&datt, t), Mat::strided(&qkv[base + c + hi * hs..], 3 * c, 1), S::zero(), &mut dqkv[base + hi * hs..], 3 * c);
            gemm(t, t, hs, scale, Mat::t(&datt, t), Mat::strided(&qkv[base + hi * hs..], 3 * c, 1), S::zero(), &mut dqkv[base + c + hi * hs..], 3 * c);
        }
    }
    dqkv
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let mx = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for x in row.iter_mut() {
        *x = (*x - mx).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

pub fn add_in_place<S: Scalar>(acc: &mut [S], x: &[S]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
