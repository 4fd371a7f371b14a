//! AdamW with bias correction and decoupled weight decay.

use crate::params::Layout;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Clone, Debug)]
pub struct AdamWState<S> {
    pub config: AdamWConfig,
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub step: u64,
    /// Per-parameter decay flag, expanded from the layout.
    decay: Vec<bool>,
}

impl<S: Scalar> AdamWState<S> {
    pub fn new(config: AdamWConfig, layout: &Layout) -> Self {
        let mut decay = vec![false; layout.total];
        for t in &layout.tensors {
            decay[t.range()].fill(t.decay);
        }
        Self::with_decay_mask(config, decay)
    }

    /// Every entry decays iff its flag is set.
    pub fn with_decay_mask(config: AdamWConfig, decay: Vec<bool>) -> Self {
        let n = decay.len();
        Self { config, m: vec![S::zero(); n], v: vec![S::zero(); n], step: 0, decay }
    }

    /// One update at learning rate `lr`.
    pub fn step(&mut self, params: &mut [S], grads: &[S], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let (one_b1, one_b2) = (S::lit(1.0 - c.beta1), S::lit(1.0 - c.beta2));
        let (lr_s, eps) = (S::lit(lr), S::lit(c.eps));
        let (bc1, bc2) = (S::lit(bc1), S::lit(bc2));
        let shrink = S::lit(1.0 - lr * c.weight_decay);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + one_b1 * g;
            self.v[i] = b2 * self.v[i] + one_b2 * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            if self.decay[i] {
                params[i] *= shrink;
            }
            params[i] -= lr_s * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<S: Scalar>(grads: &mut [S], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = S::lit(max_norm / (norm + 1e-6));
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(wd: f64, n: usize) -> AdamWState<f64> {
        AdamWState::with_decay_mask(AdamWConfig { weight_decay: wd, ..AdamWConfig::default() }, vec![true; n])
    }

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let mut s = state(0.0, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3], 1e-2);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn decay_only_shrinks_geometrically() {
        let mut s = state(0.1, 1);
        let mut p = vec![2.0];
        for _ in 0..3 {
            s.step(&mut p, &[0.0], 0.5);
        }
        assert!((p[0] - 2.0 * 0.95f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn two_scalar_steps_match_hand_arithmetic() {
        let mut s = state(0.0, 1);
        let mut p = vec![1.0];
        let lr = 0.1;
        s.step(&mut p, &[0.5], lr);
        // m=0.05, v=0.00025; mhat=0.5, vhat=0.25 -> step 0.1*0.5/(0.5+1e-8)
        let p1 = 1.0 - lr * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - p1).abs() < 1e-15);
        s.step(&mut p, &[-1.0], lr);
        let m: f64 = 0.9 * 0.05 - 0.1;
        let v: f64 = 0.999 * 0.00025 + 0.001;
        let mhat = m / (1.0 - 0.81);
        let vhat = v / (1.0 - 0.999f64.powi(2));
        let p2 = p1 - lr * mhat / (vhat.sqrt() + 1e-8);
        assert!((p[0] - p2).abs() < 1e-14);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![3.0f64, 4.0];
        let n = clip_grad_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        let after = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((after - 1.0).abs() < 1e-6);
    }
}
