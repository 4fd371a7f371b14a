//! Central finite-difference gradient checking for fp64 models.

use lookahead_core::seed;
use rand::Rng;

use crate::error::ModelError;
use crate::transformer::{Batch, Transformer};

/// Worst relative error found, per tensor and overall.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: String,
    pub per_tensor: Vec<(String, f64)>,
    pub checked: usize,
}

/// Compares analytic gradients with `(L(w + h) - L(w - h)) / 2h` on up to
/// `per_tensor` randomly sampled entries of every parameter tensor.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`. Central differences
/// resolve about `eps * loss / h ~ 1e-11`, so the floor keeps structurally
/// zero entries (key biases, whose gradient cancels under softmax) from
/// dividing noise by noise.
pub fn check_gradients(model: &mut Transformer<f64>, batch: &Batch, per_tensor: usize, h: f64, rng_seed: u64) -> Result<GradCheck, ModelError> {
    let (_, grads) = model.loss_and_grad(batch)?;
    let mut rng = seed::rng(rng_seed);
    let mut out = GradCheck { max_rel_error: 0.0, worst: String::new(), per_tensor: Vec::new(), checked: 0 };
    for t in model.layout.tensors.clone() {
        let range = t.range();
        let mut tensor_max = 0.0f64;
        for _ in 0..per_tensor.min(range.len()) {
            let i = rng.random_range(range.clone());
            let orig = model.params[i];
            model.params[i] = orig + h;
            let up = model.loss(batch)?;
            model.params[i] = orig - h;
            let down = model.loss(batch)?;
            model.params[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            out.checked += 1;
            tensor_max = tensor_max.max(rel);
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = format!("{}[{}] analytic {analytic:e} numeric {numeric:e}", t.name, i - t.offset);
            }
        }
        out.per_tensor.push((t.name.clone(), tensor_max));
    }
    Ok(out)
}
