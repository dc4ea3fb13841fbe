//! Desk-scale baseline run: 4 materials x 50k queries, 2 epochs.
use std::time::Instant;
use woven_core::dataset::*;
use woven_core::nn::*;
use woven_core::oracle::Kernel;
use woven_core::pattern::WeaveKind;

fn materials() -> Vec<MaterialSpec> {
    vec![
        MaterialSpec { pattern: WeaveKind::Plain,  twist_deg: 0.0,   incline_deg: 30.0, alpha: 0.30, beta: 0.5, gap: 0.2, w: 0.5 },
        MaterialSpec { pattern: WeaveKind::Twill(3), twist_deg: 30.0, incline_deg: 25.0, alpha: 0.70, beta: 1.0, gap: 0.2, w: 0.5 },
        MaterialSpec { pattern: WeaveKind::Satin { ends: 5, picks: 5 }, twist_deg: -30.0, incline_deg: 40.0, alpha: 0.15, beta: 1.5, gap: 0.2, w: 0.5 },
        MaterialSpec { pattern: WeaveKind::Twill(5), twist_deg: 0.0,  incline_deg: 35.0, alpha: 1.00, beta: 0.8, gap: 0.2, w: 0.5 },
    ]
}

fn main() {
    let budget: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let gt_samples: u32 = 2048;
    let t_all = Instant::now();

    let mut train_mats = Vec::new();
    let mut held_out = Vec::new();
    for (i, spec) in materials().iter().enumerate() {
        let t0 = Instant::now();
        let maps = spec.build_maps(512).unwrap();
        let params = spec.fabric_params();
        let seed = 1000 + i as u64;
        let queries = build_query_budget(seed, budget, 0.2);
        let (records, dropped) = compute_targets(&queries, &maps, &params, Kernel::Box, gt_samples, seed);
        // held-out: separate seed stream -> different footprints/directions
        let ho_queries = build_query_budget(seed ^ 0xDEAD, 2000, 0.2);
        let (ho_records, _) = compute_targets(&ho_queries, &maps, &params, Kernel::Box, gt_samples, seed);
        println!("material {i}: {} records ({} dropped), {:.1}s", records.len(), dropped, t0.elapsed().as_secs_f64());
        let header = DatasetHeader {
            material: *spec, kernel: Kernel::Box, gt_samples, seed,
            resolution: maps.resolution, record_count: records.len() as u64, note: String::new(),
        };
        held_out.push((header.clone(), ho_records));
        train_mats.push(TrainMaterial::new(header, &maps, records, ENCODER_INPUT_RES).unwrap());
    }

    let cfg = TrainConfig {
        epochs,
        metrics_path: Some(std::path::PathBuf::from("/tmp/baseline_metrics.csv")),
        seed: 7,
        ..TrainConfig::default()
    };
    let mut net = NetworkWeights::init(cfg.seed, EncoderConfig::default());
    let t1 = Instant::now();
    let report = train(&mut net, &train_mats, &cfg).unwrap();
    println!("train {:.1} min; first-window {:.5}, epochs {:?}", t1.elapsed().as_secs_f64()/60.0, report.first_window_mean_loss, report.epoch_mean_loss);
    println!("final/first ratio: {:.3}", report.final_epoch_mean_loss / report.first_window_mean_loss);

    for (i, ((header, ho), tm)) in held_out.iter().zip(&train_mats).enumerate() {
        let _ = header;
        let m = evaluate(&net, tm, ho, &LossConfig::default()).unwrap();
        println!("material {i} held-out: diffuse MAE {:.4}, specular g-MAE {:.4} ({} queries)", m.diffuse_mae, m.specular_g_mae, m.count);
    }
    save_weights(&net, std::path::Path::new("/tmp/baseline.wwnn")).unwrap();
    println!("total {:.1} min", t_all.elapsed().as_secs_f64()/60.0);
}
