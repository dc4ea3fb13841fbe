use woven_core::dataset::*;
use woven_core::nn::g_map;
use woven_core::oracle::Kernel;
use woven_core::pattern::WeaveKind;

fn main() {
    for (name, spec) in [
        ("plain a.3 b.5", MaterialSpec { pattern: WeaveKind::Plain, twist_deg: 0.0, incline_deg: 30.0, alpha: 0.30, beta: 0.5, gap: 0.2, w: 0.5 }),
        ("satin a.15 b1.5", MaterialSpec { pattern: WeaveKind::Satin { ends: 5, picks: 5 }, twist_deg: -30.0, incline_deg: 40.0, alpha: 0.15, beta: 1.5, gap: 0.2, w: 0.5 }),
    ] {
        let maps = spec.build_maps(512).unwrap();
        let params = spec.fabric_params();
        let queries = build_query_budget(555, 1500, 0.2);
        let (a, _) = compute_targets(&queries, &maps, &params, Kernel::Box, 2048, 111);
        let (b, _) = compute_targets(&queries, &maps, &params, Kernel::Box, 2048, 222);
        let mut s_mae = 0.0; let mut s_mae_brdf = 0.0; let mut s_mae_btdf = 0.0;
        let (mut n, mut nb, mut nt) = (0.0, 0.0, 0.0);
        let mut max_g: f64 = 0.0;
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.query, rb.query);
            let k = if ra.query.is_btdf() { 1000.0 } else { 100.0 };
            for slot in 2..4 {
                let ga = g_map(ra.target[slot] as f64, k);
                let gb = g_map(rb.target[slot] as f64, k);
                max_g = max_g.max(ga);
                let d = (ga - gb).abs();
                s_mae += d; n += 1.0;
                if ra.query.is_btdf() { s_mae_btdf += d; nt += 1.0; } else { s_mae_brdf += d; nb += 1.0; }
            }
        }
        println!("{name}: GT-vs-GT specular g-MAE {:.4} (brdf {:.4}, btdf {:.4}), max g {:.2}",
            s_mae / n, s_mae_brdf / nb, s_mae_btdf / nt, max_g);
    }
}
