use woven_core::dataset::*;
use woven_core::nn::*;
use woven_core::oracle::Kernel;
use woven_core::pattern::WeaveKind;

fn main() {
    let clip: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let spec = MaterialSpec { pattern: WeaveKind::Satin { ends: 5, picks: 5 }, twist_deg: -30.0, incline_deg: 40.0, alpha: 0.15, beta: 1.5, gap: 0.2, w: 0.5 };
    let maps = spec.build_maps(512).unwrap();
    let params = spec.fabric_params();
    let queries = build_query_budget(1002, 4000, 0.2);
    let (records, _) = compute_targets(&queries, &maps, &params, Kernel::Box, 256, 1002);
    let header = DatasetHeader { material: spec, kernel: Kernel::Box, gt_samples: 256, seed: 1002, resolution: maps.resolution, record_count: records.len() as u64, note: String::new() };
    let tm = TrainMaterial::new(header, &maps, records, ENCODER_INPUT_RES).unwrap();
    let mut net = NetworkWeights::init(7, EncoderConfig::default());
    let cfg = LossConfig::default();

    for it in 0..30 {
        let start = (it * 512) % (tm.records.len().saturating_sub(512));
        let batch: Vec<&QueryRecord> = tm.records.iter().skip(start).take(512).collect();
        let (loss, grads) = batch_gradients(&net, &tm.input, 0.15, 1.5, &batch, Kernel::Box, &cfg).unwrap();
        let mut norm2 = 0.0f64;
        grads.visit(&mut |g| for v in g { norm2 += v * v; });
        let norm = norm2.sqrt();
        let scale = if norm > clip { clip / norm } else { 1.0 };
        if it < 8 || it % 5 == 0 {
            println!("iter {it}: loss {loss:.4}, ||g|| {norm:.3}, clip scale {scale:.3}");
        }
        if !loss.is_finite() { println!("DIVERGED"); break; }
        // manual clipped SGD
        let mut clipped = grads;
        {
            let c = &mut clipped;
            // scale in place via visit-mut pattern: rebuild by scaling each slot
            scale_grads(c, scale);
        }
        net.apply_sgd(&clipped, 0.05, 1e-5);
    }
}

fn scale_grads(g: &mut NetGrads, s: f64) {
    if s == 1.0 { return; }
    let e = &mut g.encoder;
    for v in e.stem.w.iter_mut().chain(e.stem.b.iter_mut()) { *v *= s; }
    for b in &mut e.blocks {
        for v in b.conv1.w.iter_mut().chain(b.conv1.b.iter_mut()) { *v *= s; }
        for v in b.conv2.w.iter_mut().chain(b.conv2.b.iter_mut()) { *v *= s; }
        if let Some(sc) = &mut b.shortcut { for v in sc.w.iter_mut().chain(sc.b.iter_mut()) { *v *= s; } }
    }
    for l in [&mut e.fc_a, &mut e.fc_b, &mut e.fc_skip, &mut e.fc_out] {
        for v in l.w.iter_mut().chain(l.b.iter_mut()) { *v *= s; }
    }
    let d = &mut g.decoder;
    for l in [&mut d.fuse1, &mut d.fuse2] { for v in l.w.iter_mut().chain(l.b.iter_mut()) { *v *= s; } }
    for l in &mut d.ang { for v in l.w.iter_mut().chain(l.b.iter_mut()) { *v *= s; } }
}
