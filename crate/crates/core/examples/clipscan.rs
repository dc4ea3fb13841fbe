use woven_core::dataset::*;
use woven_core::nn::*;
use woven_core::oracle::Kernel;
use woven_core::pattern::WeaveKind;
use std::time::Instant;

fn main() {
    let budget: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let clip: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let width: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(128);
    let epochs: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(2);
    let specs = vec![
        MaterialSpec { pattern: WeaveKind::Plain,  twist_deg: 0.0,   incline_deg: 30.0, alpha: 0.30, beta: 0.5, gap: 0.2, w: 0.5 },
        MaterialSpec { pattern: WeaveKind::Twill(3), twist_deg: 30.0, incline_deg: 25.0, alpha: 0.70, beta: 1.0, gap: 0.2, w: 0.5 },
        MaterialSpec { pattern: WeaveKind::Satin { ends: 5, picks: 5 }, twist_deg: -30.0, incline_deg: 40.0, alpha: 0.15, beta: 1.5, gap: 0.2, w: 0.5 },
        MaterialSpec { pattern: WeaveKind::Twill(5), twist_deg: 0.0,  incline_deg: 35.0, alpha: 1.00, beta: 0.8, gap: 0.2, w: 0.5 },
    ];
    let t0 = Instant::now();
    let mut train_mats = Vec::new();
    let mut held_out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let maps = spec.build_maps(512).unwrap();
        let params = spec.fabric_params();
        let seed = 1000 + i as u64;
        let queries = build_query_budget(seed, budget, 0.2);
        let (records, _) = compute_targets(&queries, &maps, &params, Kernel::Box, 2048, seed);
        let ho_queries = build_query_budget(seed ^ 0xDEAD, 1500, 0.2);
        let (ho, _) = compute_targets(&ho_queries, &maps, &params, Kernel::Box, 2048, seed);
        let header = DatasetHeader { material: *spec, kernel: Kernel::Box, gt_samples: 2048, seed, resolution: maps.resolution, record_count: records.len() as u64, note: String::new() };
        held_out.push(ho);
        train_mats.push(TrainMaterial::new(header, &maps, records, ENCODER_INPUT_RES).unwrap());
    }
    println!("gen {:.1} min", t0.elapsed().as_secs_f64()/60.0);
    let cfg = TrainConfig { epochs, clip_norm: Some(clip), seed: 7, ..TrainConfig::default() };
    let net_cfg = EncoderConfig { angular_width: width, ..EncoderConfig::default() };
    let mut net = NetworkWeights::init(cfg.seed, net_cfg);
    let t1 = Instant::now();
    let report = train(&mut net, &train_mats, &cfg).unwrap();
    println!("budget {budget} clip {clip} width {width} epochs {epochs}: train {:.1} min, first {:.4} epochs {:?}", t1.elapsed().as_secs_f64()/60.0, report.first_window_mean_loss, report.epoch_mean_loss);
    let mut dsum = 0.0; let mut ssum = 0.0; let mut n = 0.0;
    for (tm, ho) in train_mats.iter().zip(&held_out) {
        let m = evaluate(&net, tm, ho, &LossConfig::default()).unwrap();
        println!("  d {:.4} s {:.4}", m.diffuse_mae, m.specular_g_mae);
        dsum += m.diffuse_mae; ssum += m.specular_g_mae; n += 1.0;
    }
    println!("POOLED: diffuse {:.4} specular {:.4}", dsum/n, ssum/n);
}
