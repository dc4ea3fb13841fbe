use std::time::Instant;
use woven_core::dataset::*;
use woven_core::nn::*;
use woven_core::oracle::Kernel;

fn main() {
    let material = MaterialSpec {
        pattern: woven_core::pattern::WeaveKind::Plain,
        twist_deg: 0.0, incline_deg: 30.0, alpha: 0.4, beta: 1.5, gap: 0.2, w: 0.5,
    };
    let maps = material.build_maps(512).unwrap();
    let queries = build_query_budget(1, 600, 0.2);
    let (records, _) = compute_targets(&queries, &maps, &material.fabric_params(), Kernel::Box, 64, 1);
    let header = DatasetHeader {
        material, kernel: Kernel::Box, gt_samples: 64, seed: 1,
        resolution: maps.resolution, record_count: records.len() as u64, note: String::new(),
    };
    let net = NetworkWeights::init(0, EncoderConfig::default());
    let tm = TrainMaterial::new(header, &maps, records, ENCODER_INPUT_RES).unwrap();

    // one batch of 512 through the full gradient path
    let batch: Vec<&QueryRecord> = tm.records.iter().cycle().take(512).collect();
    let t0 = Instant::now();
    let iters = 5;
    for _ in 0..iters {
        let (_l, _g) = batch_gradients(&net, &tm.input, 0.4, 1.5, &batch, Kernel::Box, &LossConfig::default()).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    println!("one training iteration (batch 512): {:.3}s", dt);
    println!("=> 780 iterations would be {:.1} min", 780.0 * dt / 60.0);

    let t1 = Instant::now();
    for _ in 0..5 { let _ = encode(&net, &maps, 0.4, 1.5).unwrap(); }
    println!("encode: {:.3}s", t1.elapsed().as_secs_f64() / 5.0);
}
