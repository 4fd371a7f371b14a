use lookahead_core::seed;
use lookahead_model::config::Dtype;
use lookahead_model::gradcheck::check_gradients;
use lookahead_model::loss::masked_cross_entropy;
use lookahead_model::{Batch, ModelConfig, Transformer};
use rand::Rng;

fn tiny(tie_head: bool) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 32,
        vocab_size: 11,
        max_seq_len: 6,
        init_std: 0.4,
        dtype: Dtype::F64,
        tie_head,
    }
}

fn random_model(cfg: ModelConfig, seed: u64) -> Transformer<f64> {
    let mut m = Transformer::<f64>::new(cfg, seed).unwrap();
    // push gains/biases off their trivial init so every tensor is exercised
    let mut rng = seed::rng(seed ^ 0xabc);
    for p in m.params.iter_mut() {
        *p += rng.random_range(-0.2..0.2);
    }
    m
}

fn random_batch(rows: usize, t: usize, v: u32, seed: u64) -> Batch {
    let mut rng = seed::rng(seed);
    let n = rows * t;
    let mut mask: Vec<u8> = (0..n).map(|_| rng.random_bool(0.7) as u8).collect();
    mask[0] = 1;
    Batch {
        rows,
        seq_len: t,
        inputs: (0..n).map(|_| rng.random_range(0..v)).collect(),
        targets: (0..n).map(|_| rng.random_range(0..v)).collect(),
        mask,
    }
}

fn max_rel_error(m: &mut Transformer<f64>, batch: &Batch, per_tensor: usize, seed: u64) -> (f64, String) {
    let r = check_gradients(m, batch, per_tensor, 1e-5, seed).unwrap();
    assert_eq!(r.per_tensor.len(), m.layout.tensors.len());
    (r.max_rel_error, r.worst)
}

#[test]
fn gradients_match_finite_differences_untied() {
    let mut m = random_model(tiny(false), 1);
    let batch = random_batch(2, 6, 11, 2);
    let (err, at) = max_rel_error(&mut m, &batch, 12, 3);
    eprintln!("max relative error {err:e} at {at}");
    assert!(err < 1e-4, "max relative error {err:e} at {at}");
}

#[test]
fn gradients_match_finite_differences_tied() {
    let mut m = random_model(tiny(true), 4);
    let batch = random_batch(3, 5, 11, 5);
    let (err, at) = max_rel_error(&mut m, &batch, 12, 6);
    eprintln!("max relative error {err:e} at {at}");
    assert!(err < 1e-4, "max relative error {err:e} at {at}");
}

#[test]
fn masked_logits_do_not_move_the_loss() {
    let m = random_model(tiny(true), 7);
    let batch = random_batch(2, 6, 11, 8);
    let fwd = m.forward(&batch.inputs, batch.rows, batch.seq_len).unwrap();
    let v = 11;
    let (base, grad) = masked_cross_entropy(&fwd.logits, &batch.targets, &batch.mask, v).unwrap();
    let mut logits = fwd.logits.clone();
    let mut rng = seed::rng(9);
    for (r, &mk) in batch.mask.iter().enumerate() {
        if mk == 0 {
            assert!(grad[r * v..(r + 1) * v].iter().all(|&g| g == 0.0));
            for x in &mut logits[r * v..(r + 1) * v] {
                *x += rng.random_range(-5.0..5.0);
            }
        }
    }
    let (moved, _) = masked_cross_entropy(&logits, &batch.targets, &batch.mask, v).unwrap();
    assert!((moved - base).abs() < 1e-12);
}

#[test]
fn all_ones_mask_matches_plain_cross_entropy() {
    let m = random_model(tiny(false), 10);
    let mut batch = random_batch(2, 6, 11, 11);
    batch.mask = vec![1; 12];
    let fwd = m.forward(&batch.inputs, 2, 6).unwrap();
    let (loss, _) = masked_cross_entropy(&fwd.logits, &batch.targets, &batch.mask, 11).unwrap();
    let mut reference = 0.0;
    for (r, &t) in batch.targets.iter().enumerate() {
        let row = &fwd.logits[r * 11..(r + 1) * 11];
        let z: f64 = row.iter().map(|x| x.exp()).sum();
        reference -= (row[t as usize].exp() / z).ln();
    }
    reference /= 12.0;
    assert!((loss - reference).abs() < 1e-6);
}

#[test]
fn masked_positions_contribute_no_gradient() {
    // Changing the target at a masked position must leave every gradient
    // entry unchanged, including the embedding row of that target.
    let m = random_model(tiny(true), 12);
    let mut batch = random_batch(2, 6, 11, 13);
    batch.mask[4] = 0;
    let (_, g1) = m.loss_and_grad(&batch).unwrap();
    batch.targets[4] = (batch.targets[4] + 3) % 11;
    let (_, g2) = m.loss_and_grad(&batch).unwrap();
    assert_eq!(g1, g2);
}

#[test]
fn fp64_training_steps_are_bit_identical() {
    use lookahead_model::adamw::{AdamWConfig, AdamWState};
    let run = || {
        let mut m = random_model(tiny(true), 14);
        let mut opt = AdamWState::new(AdamWConfig::default(), &m.layout);
        let batch = random_batch(2, 6, 11, 15);
        (0..5)
            .map(|_| {
                let (loss, g) = m.loss_and_grad(&batch).unwrap();
                opt.step(&mut m.params, &g, 1e-2);
                loss.to_bits()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
