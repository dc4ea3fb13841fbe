use std::time::Instant;
use woven_core::dataset::*;
use woven_core::oracle::Kernel;

fn main() {
    let material = MaterialSpec {
        pattern: woven_core::pattern::WeaveKind::Twill(3),
        twist_deg: 0.0,
        incline_deg: 30.0,
        alpha: 0.4,
        beta: 1.5,
        gap: 0.2,
        w: 0.5,
    };
    let maps = material.build_maps(512).unwrap();
    let params = material.fabric_params();
    let queries = build_query_budget(1, 1000, 0.2);
    let t0 = Instant::now();
    let (records, dropped) = compute_targets(&queries, &maps, &params, Kernel::Box, 2048, 1);
    let dt = t0.elapsed().as_secs_f64();
    println!("1000 queries x 2048 samples: {:.2}s ({:.1} q/s), dropped {}", dt, 1000.0/dt, dropped);
    println!("=> 50k queries would be {:.1} min", 50.0 * dt / 60.0);
    let some: Vec<_> = records.iter().take(3).map(|r| r.target).collect();
    println!("sample targets: {:?}", some);
}
