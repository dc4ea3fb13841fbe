//! End-to-end gradient verification: analytic reverse-mode gradients of the
//! full encoder/decoder/loss pipeline against central finite differences on
//! the f32 master weights, evaluated in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use woven_core::dataset::{Query, QueryRecord};
use woven_core::nn::{
    batch_forward_loss, batch_gradients, EncoderConfig, LossConfig, NetworkWeights, Tensor3,
};
use woven_core::oracle::Kernel;

fn tiny_cfg() -> EncoderConfig {
    EncoderConfig { input_res: 8, widths: [3, 4, 5], mlp_width: 16, latent: 64, angular_width: 128 }
}

fn random_input(rng: &mut ChaCha8Rng, res: usize) -> Tensor3 {
    let mut t = Tensor3::zeros(6, res, res);
    for v in &mut t.data {
        *v = rng.gen_range(-1.0..1.0);
    }
    t
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<QueryRecord> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(-0.7..0.7);
            let y: f64 = rng.gen_range(-0.7..0.7);
            let zi = (1.0 - x * x - y * y).sqrt() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let ox: f64 = rng.gen_range(-0.7..0.7);
            let oy: f64 = rng.gen_range(-0.7..0.7);
            let zo = (1.0 - ox * ox - oy * oy).sqrt();
            QueryRecord {
                query: Query {
                    center: [rng.gen::<f32>(), rng.gen::<f32>()],
                    size: rng.gen_range(0.0..5.0),
                    wi: [x as f32, y as f32, zi as f32],
                    wo: [ox as f32, oy as f32, zo as f32],
                },
                target: [
                    rng.gen_range(0.0..0.4),
                    rng.gen_range(0.0..0.4),
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(0.0..2.0),
                ],
            }
        })
        .collect()
}

/// Check sampled weights of every parameter slot on one batch; returns the
/// worst relative error observed.
fn check_batch(net: &NetworkWeights, rng: &mut ChaCha8Rng, batch_n: usize) -> f64 {
    let input = random_input(rng, net.encoder.cfg.input_res);
    let records = random_batch(rng, batch_n);
    let batch: Vec<&QueryRecord> = records.iter().collect();
    let (alpha, beta) = (0.5, 1.0);
    let cfg = LossConfig::default();
    let (_, grads) = batch_gradients(net, &input, alpha, beta, &batch, Kernel::Box, &cfg).unwrap();

    let sizes = net.encoder.cfg; // keep cfg copy-out of closure borrows
    let _ = sizes;
    let slot_sizes = net.param_slot_sizes();
    let mut worst: f64 = 0.0;
    let mut shadow = net.clone();
    for (slot, &len) in slot_sizes.iter().enumerate() {
        for _ in 0..4.min(len) {
            let idx = rng.gen_range(0..len);
            let orig = shadow.param_get(slot, idx);
            let h = 1e-4;
            shadow.param_set(slot, idx, (orig as f64 + h) as f32);
            let stored_p = shadow.param_get(slot, idx) as f64;
            let plus =
                batch_forward_loss(&shadow, &input, alpha, beta, &batch, Kernel::Box, &cfg)
                    .unwrap();
            shadow.param_set(slot, idx, (orig as f64 - h) as f32);
            let stored_m = shadow.param_get(slot, idx) as f64;
            let minus =
                batch_forward_loss(&shadow, &input, alpha, beta, &batch, Kernel::Box, &cfg)
                    .unwrap();
            shadow.param_set(slot, idx, orig);
            let fd = (plus - minus) / (stored_p - stored_m);
            let an = grads.slot(slot, idx);
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(
                rel < 1e-3,
                "slot {slot} idx {idx}: fd {fd} vs analytic {an} (rel {rel})"
            );
        }
    }
    worst
}

#[test]
fn full_network_gradients_match_finite_differences() {
    let net = NetworkWeights::init(21, tiny_cfg());
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let worst = check_batch(&net, &mut rng, 3);
    assert!(worst < 1e-3);
}

#[test]
fn gradients_match_on_multiple_random_batches() {
    let net = NetworkWeights::init(22, tiny_cfg());
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..3 {
        check_batch(&net, &mut rng, 5);
    }
}

#[test]
fn zero_residual_batch_has_zero_gradients() {
    // zero weights -> zero predictions; zero targets -> zero residual
    let mut net = NetworkWeights::init(3, tiny_cfg());
    net.zero();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let input = random_input(&mut rng, 8);
    let mut records = random_batch(&mut rng, 4);
    for r in &mut records {
        r.target = [0.0; 4];
    }
    let batch: Vec<&QueryRecord> = records.iter().collect();
    let (loss, grads) =
        batch_gradients(&net, &input, 0.5, 1.0, &batch, Kernel::Box, &LossConfig::default())
            .unwrap();
    assert_eq!(loss, 0.0);
    grads.visit(&mut |g| assert!(g.iter().all(|v| *v == 0.0)));
}

#[test]
fn duplicated_sample_gradient_equals_single_sample() {
    let net = NetworkWeights::init(9, tiny_cfg());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let input = random_input(&mut rng, 8);
    let records = random_batch(&mut rng, 1);
    let single: Vec<&QueryRecord> = vec![&records[0]];
    let doubled: Vec<&QueryRecord> = vec![&records[0], &records[0]];
    let cfg = LossConfig::default();
    let (l1, g1) = batch_gradients(&net, &input, 0.5, 1.0, &single, Kernel::Box, &cfg).unwrap();
    let (l2, g2) = batch_gradients(&net, &input, 0.5, 1.0, &doubled, Kernel::Box, &cfg).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    let mut flat1 = Vec::new();
    g1.visit(&mut |g| flat1.extend_from_slice(g));
    let mut flat2 = Vec::new();
    g2.visit(&mut |g| flat2.extend_from_slice(g));
    for (a, b) in flat1.iter().zip(&flat2) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn grad_slots_mirror_param_slots() {
    let net = NetworkWeights::init(4, tiny_cfg());
    let grads = net.grad_zeros();
    let mut param_sizes = Vec::new();
    net.visit_params(&mut |_, v| param_sizes.push(v.len()));
    let mut grad_sizes = Vec::new();
    grads.visit(&mut |v| grad_sizes.push(v.len()));
    assert_eq!(param_sizes, grad_sizes);
}
