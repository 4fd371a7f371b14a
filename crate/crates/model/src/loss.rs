//! Masked token-level cross-entropy.

use crate::error::ModelError;
use crate::ops::softmax_in_place;
use crate::scalar::Scalar;

/// `-sum_j mask_j log p(target_j) / sum_j mask_j` over `n` rows of `v`
/// logits. Returns the loss and its gradient with respect to the logits;
/// rows with mask 0 get an exactly-zero gradient.
pub fn masked_cross_entropy<S: Scalar>(
    logits: &[S],
    targets: &[u32],
    mask: &[u8],
    v: usize,
) -> Result<(S, Vec<S>), ModelError> {
    let n = targets.len();
    if logits.len() != n * v || mask.len() != n {
        return Err(ModelError::Shape(format!(
            "logits {} / targets {} / mask {} disagree with vocab {v}",
            logits.len(),
            n,
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m != 0).count();
    if count == 0 {
        return Err(ModelError::EmptyMask);
    }
    let norm = S::one() / S::lit(count as f64);
    let mut dlogits = vec![S::zero(); n * v];
    let mut total = S::zero();
    for r in 0..n {
        if mask[r] == 0 {
            continue;
        }
        let tgt = targets[r] as usize;
        if tgt >= v {
            return Err(ModelError::TokenOutOfRange { id: targets[r], vocab: v });
        }
        let src = &logits[r * v..(r + 1) * v];
        let mx = src.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = mx + src.iter().map(|&x| (x - mx).exp()).sum::<S>().ln();
        total += lse - src[tgt];
        let row = &mut dlogits[r * v..(r + 1) * v];
        row.copy_from_slice(src);
        softmax_in_place(row);
        row[tgt] -= S::one();
        for x in row.iter_mut() {
            *x *= norm;
        }
    }
    Ok((total * norm, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_v() {
        let v = 13;
        let logits = vec![0.25f64; 3 * v];
        let (loss, _) = masked_cross_entropy(&logits, &[1, 5, 12], &[1, 1, 1], v).unwrap();
        assert!((loss - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn masked_rows_have_zero_gradient() {
        let logits: Vec<f64> = (0..12).map(|x| (x as f64 * 0.37).sin()).collect();
        let (_, d) = masked_cross_entropy(&logits, &[0, 1, 2], &[1, 0, 1], 4).unwrap();
        assert!(d[4..8].iter().all(|&x| x == 0.0));
        assert!(d[..4].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let r = masked_cross_entropy(&[0.0f32; 4], &[0, 1], &[0, 0], 2);
        assert!(matches!(r, Err(ModelError::EmptyMask)));
    }
}
