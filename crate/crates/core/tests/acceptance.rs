//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with its measured numbers and runtime. The heavier criteria share one
//! trained desk-scale artifact through a lazily initialized fixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use std::time::{Duration, Instant};
use woven_core::bsdf::{
    attenuation_g, combine, diffuse_point, eval_point_components, microflake_density,
    smith_lambda, specular_point, DirectionPair, FabricParams, FiberFrame,
};
use woven_core::dataset::{
    build_query_budget, compute_targets, DatasetHeader, Query, QueryRecord, StructuredQueries,
};
use woven_core::math::{clamp_pos, ols_slope, Rgb, Vec3};
use woven_core::nn::{
    batch_forward_loss, batch_gradients, encode, evaluate, g_map, save_weights, train,
    EncoderConfig, LossConfig, NetworkWeights, Tensor3, TrainConfig, TrainMaterial,
    ANGULAR_LAYERS, ANGULAR_SKIPS, ENCODER_INPUT_RES, FOOTPRINT_ENCODED_CHANNELS,
    FOOTPRINT_RAW_CHANNELS, FUSION_WIDTH, LATENT_DIM, LIGHT_CHANNELS, VIEW_CHANNELS,
};
use woven_core::oracle::{aggregate, estimate_a_p_consistency, visibility, Footprint, Kernel};
use woven_core::pattern::{MapParams, WeaveKind, YarnId};
use woven_core::render::{
    image_mse, render, EditPath, LatentCache, MaterialEdit, Primitive, RenderMode, Scene,
};

fn pass(criterion: u32, detail: &str, t: Instant) {
    eprintln!(
        "[PASS] criterion {criterion}: {detail} ({:.1}s)",
        t.elapsed().as_secs_f64()
    );
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-30)
}

fn sample_upper(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.02..1.0),
        );
        if v.length_squared() > 1e-3 {
            return v.normalized();
        }
    }
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_01_analytic_kernels() {
    let t = Instant::now();
    use std::f64::consts::PI;
    let along_z = FiberFrame::new(Vec3::Z, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    // microflake distribution examples
    for _ in 0..64 {
        let h = sample_upper(&mut rng);
        assert!(rel_close(
            microflake_density(h, &along_z, 1.0).unwrap(),
            1.0 / PI,
            1e-6
        ));
    }
    assert!(rel_close(
        microflake_density(Vec3::Z, &along_z, 0.5).unwrap(),
        1.0 / (8.0 * PI),
        1e-6
    ));
    assert!(rel_close(
        microflake_density(Vec3::X, &along_z, 0.5).unwrap(),
        2.0 / PI,
        1e-6
    ));

    // projected-area / shadowing examples
    for alpha in [0.1, 0.33, 0.5, 1.0] {
        let f = FiberFrame::new(Vec3::Z, alpha).unwrap();
        assert!(rel_close(smith_lambda(Vec3::Z, &f), alpha, 1e-6));
    }
    for theta in [0.2f64, 0.7, 1.2] {
        let w = Vec3::new(theta.sin(), 0.0, theta.cos());
        assert!(rel_close(smith_lambda(w, &along_z), 1.0 / theta.cos(), 1e-6));
    }

    // attenuation examples
    assert!(rel_close(
        attenuation_g(1.0, 1.0, 2.0),
        (1.0 - (-4.0f64).exp()) / 2.0,
        1e-6
    ));
    assert!(rel_close(attenuation_g(0.0, 1e-12, 2.0), 2.0, 1e-6));
    assert_eq!(attenuation_g(0.3, 1.7, 2.0), attenuation_g(1.7, 0.3, 2.0));

    // specular point example and diffuse examples
    let pair = DirectionPair { wi: Vec3::Z, wo: Vec3::Z };
    let v = specular_point(&pair, Vec3::Z, Vec3::X, 1.0, 2.0);
    assert!(rel_close(v, (1.0 / PI) * attenuation_g(1.0, 1.0, 2.0) / 4.0, 1e-6));
    assert!(rel_close(diffuse_point(&pair, Vec3::Z, 0.7), 1.0 / PI, 1e-6));
    let tilt = Vec3::new((60f64).to_radians().sin(), 0.0, (60f64).to_radians().cos());
    assert!(rel_close(diffuse_point(&pair, tilt, 1.0), 0.5 / PI, 1e-6));

    // reciprocity on ten thousand random upper-hemisphere pairs
    for _ in 0..10_000 {
        let wi = sample_upper(&mut rng);
        let wo = sample_upper(&mut rng);
        let n_p = sample_upper(&mut rng);
        let t_p = sample_upper(&mut rng).cross(n_p);
        if t_p.length_squared() < 1e-6 {
            continue;
        }
        let t_p = t_p.normalized();
        let alpha = rng.gen_range(0.1..1.0);
        let a = specular_point(&DirectionPair { wi, wo }, n_p, t_p, alpha, 2.0);
        let b = specular_point(&DirectionPair { wi: wo, wo: wi }, n_p, t_p, alpha, 2.0);
        assert!(rel_close(a, b, 1e-6), "reciprocity: {a} vs {b}");
    }
    assert!(t.elapsed() < Duration::from_secs(1), "runtime budget");
    pass(1, "analytic kernels reproduce closed forms; reciprocity on 1e4 pairs", t);
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_02_visible_area_self_consistency() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let n = 100_000;
    let mut agree = 0;
    let mut total = 0;
    for mi in 0..20 {
        let spec = woven_core::dataset::sample_material_seeded(900 + mi, 0.5);
        let maps = spec.build_maps(256).unwrap();
        let params = spec.fabric_params();
        for _ in 0..5 {
            let fp = Footprint::new(
                (rng.gen::<f64>(), rng.gen::<f64>()),
                rng.gen_range(0.05..3.0),
                Kernel::Box,
            );
            let wo = sample_upper(&mut rng);
            let (integral, closed) =
                estimate_a_p_consistency(&fp, wo, &maps, &params, n, rng.gen());
            let se = (integral.std_error.powi(2) + closed.std_error.powi(2))
                .sqrt()
                .max(1e-12);
            total += 1;
            if (integral.value - closed.value).abs() <= 3.0 * se {
                agree += 1;
            }
        }
    }
    assert!(
        agree * 100 >= total * 95,
        "{agree}/{total} within 3 standard errors"
    );
    assert!(t.elapsed() < Duration::from_secs(120), "runtime budget");
    pass(
        2,
        &format!("visible-area forms agree within 3se on {agree}/{total} queries at N=1e5"),
        t,
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_03_oracle_convergence_rate() {
    let t = Instant::now();
    let spec = woven_core::dataset::MaterialSpec {
        pattern: WeaveKind::Plain,
        twist_deg: 0.0,
        incline_deg: 30.0,
        alpha: 0.5,
        beta: 1.0,
        gap: 0.2,
        w: 0.5,
    };
    let maps = spec.build_maps(256).unwrap();
    let params = spec.fabric_params();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let queries: Vec<(Footprint, DirectionPair)> = (0..10)
        .map(|_| {
            let fp = Footprint::new(
                (rng.gen::<f64>(), rng.gen::<f64>()),
                rng.gen_range(0.2..1.5),
                Kernel::Box,
            );
            let wi = sample_upper(&mut rng);
            let wo = sample_upper(&mut rng);
            (fp, DirectionPair { wi, wo })
        })
        .collect();

    let exponents: Vec<u32> = (9..=17).collect();
    let replicates = 12u64;
    let mut slopes = Vec::new();
    for (qi, (fp, pair)) in queries.iter().enumerate() {
        let mut log_n = Vec::new();
        let mut log_se = Vec::new();
        for &e in &exponents {
            let n = 1u32 << e;
            // empirical standard error across independent replicates
            let mut sums = [0.0f64; 4];
            let mut sqs = [0.0f64; 4];
            for r in 0..replicates {
                let stats = aggregate(fp, pair, &maps, &params, n, 9000 + (qi as u64) * 100 + r);
                for (k, v) in stats.quad.to_array().into_iter().enumerate() {
                    sums[k] += v;
                    sqs[k] += v * v;
                }
            }
            let m = replicates as f64;
            let mut pooled = 0.0;
            let mut used = 0;
            for k in 0..4 {
                let mean = sums[k] / m;
                let var = (sqs[k] / m - mean * mean).max(0.0) * m / (m - 1.0);
                if var > 1e-24 {
                    pooled += var;
                    used += 1;
                }
            }
            if used == 0 {
                continue;
            }
            log_n.push((n as f64).ln());
            log_se.push((pooled / used as f64).sqrt().ln());
        }
        assert!(log_n.len() >= 7, "query {qi} produced too few usable points");
        slopes.push(ols_slope(&log_n, &log_se));
    }
    for (qi, s) in slopes.iter().enumerate() {
        assert!(
            (-0.6..=-0.4).contains(s),
            "query {qi}: standard-error slope {s}"
        );
    }
    assert!(t.elapsed() < Duration::from_secs(300), "runtime budget");
    let mean_slope = slopes.iter().sum::<f64>() / slopes.len() as f64;
    pass(
        3,
        &format!("standard-error slope vs N: mean {mean_slope:.3}, all within -0.5 +/- 0.1"),
        t,
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_degenerate_footprint_equivalence() {
    let t = Instant::now();
    let spec = woven_core::dataset::MaterialSpec {
        pattern: WeaveKind::Twill(3),
        twist_deg: 30.0,
        incline_deg: 35.0,
        alpha: 0.4,
        beta: 1.2,
        gap: 0.2,
        w: 0.5,
    };
    let maps = spec.build_maps(256).unwrap();
    let params = spec.fabric_params();
    let beta = params.uniform_beta();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checked = 0;
    for _ in 0..1000 {
        let u = rng.gen::<f64>();
        let v = rng.gen::<f64>();
        let wi0 = sample_upper(&mut rng);
        let wi = if rng.gen_bool(0.3) { wi0.mirror_z() } else { wi0 };
        let wo = sample_upper(&mut rng);
        let pair = DirectionPair { wi, wo };
        let fp = Footprint::new((u, v), 0.0, Kernel::Box);
        let stats = aggregate(&fp, &pair, &maps, &params, 8, rng.gen());

        // independent point-evaluation route
        let sh = maps.shading_at(maps.texel_of_uv(u, v), beta);
        let facing = wo.dot(sh.normal);
        let vis_o = facing > 0.0 && visibility(&maps, u, v, wo, beta);
        let a_o = if vis_o {
            facing / sh.normal.z.max(1e-4)
        } else {
            0.0
        };
        if a_o < 1e-6 {
            assert!(stats.degenerate);
            continue;
        }
        let wi_eff = pair.wi_folded();
        let cos_i = clamp_pos(wi_eff.dot(sh.normal));
        let vis_i = cos_i > 0.0 && visibility(&maps, u, v, wi_eff, beta);
        let point = eval_point_components(&sh, &pair, &params).to_array();
        for (got, q) in stats.quad.to_array().iter().zip(point) {
            let expect = if vis_i { q * cos_i * a_o / a_o } else { 0.0 };
            assert!(
                (got - expect).abs() <= 1e-6 * expect.abs().max(1.0),
                "({u},{v}): {got} vs {expect}"
            );
        }
        checked += 1;
    }
    assert!(checked > 800, "only {checked} non-degenerate texels");
    pass(
        4,
        &format!("size-zero patches equal the point formula on {checked} random texels"),
        t,
    );
}

// ---------------------------------------------------------------- criterion 5

fn tiny_cfg() -> EncoderConfig {
    EncoderConfig { input_res: 8, widths: [3, 4, 5], mlp_width: 16, latent: LATENT_DIM, angular_width: 128 }
}

fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<QueryRecord> {
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
                    center: [rng.gen(), rng.gen()],
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

#[test]
fn criterion_05_gradient_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let net = NetworkWeights::init(515, tiny_cfg());
    let cfg = LossConfig::default();
    let mut worst: f64 = 0.0;
    for batch_i in 0..10 {
        let mut input = Tensor3::zeros(6, 8, 8);
        for v in &mut input.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let records = random_records(&mut rng, 3);
        let batch: Vec<&QueryRecord> = records.iter().collect();
        let (_, grads) =
            batch_gradients(&net, &input, 0.5, 1.0, &batch, Kernel::Box, &cfg).unwrap();
        let slot_sizes = net.param_slot_sizes();
        let mut shadow = net.clone();
        for (slot, &len) in slot_sizes.iter().enumerate() {
            for _ in 0..3.min(len) {
                let idx = rng.gen_range(0..len);
                let orig = shadow.param_get(slot, idx);
                shadow.param_set(slot, idx, (orig as f64 + 1e-4) as f32);
                let sp = shadow.param_get(slot, idx) as f64;
                let plus =
                    batch_forward_loss(&shadow, &input, 0.5, 1.0, &batch, Kernel::Box, &cfg)
                        .unwrap();
                shadow.param_set(slot, idx, (orig as f64 - 1e-4) as f32);
                let sm = shadow.param_get(slot, idx) as f64;
                let minus =
                    batch_forward_loss(&shadow, &input, 0.5, 1.0, &batch, Kernel::Box, &cfg)
                        .unwrap();
                shadow.param_set(slot, idx, orig);
                let fd = (plus - minus) / (sp - sm);
                let an = grads.slot(slot, idx);
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(
                    rel < 1e-3,
                    "batch {batch_i} slot {slot} idx {idx}: fd {fd} vs {an} (rel {rel})"
                );
            }
        }
    }
    assert!(t.elapsed() < Duration::from_secs(60), "runtime budget");
    pass(
        5,
        &format!("analytic gradients match finite differences on 10 batches (worst rel {worst:.2e})"),
        t,
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_06_stock_constants() {
    let t = Instant::now();
    let net = NetworkWeights::init(0, EncoderConfig::default());
    assert_eq!(LATENT_DIM, 64);
    assert_eq!(net.decoder.latent, 64);
    assert_eq!(FUSION_WIDTH, 128);
    assert_eq!(net.decoder.fuse1.out_dim, 128);
    assert_eq!(net.decoder.fuse2.out_dim, 128);
    assert_eq!(ANGULAR_LAYERS, 5);
    assert_eq!(net.decoder.ang.len(), 5);
    assert_eq!(ANGULAR_SKIPS, 1);
    assert_eq!(FOOTPRINT_RAW_CHANNELS, 3);
    assert_eq!(FOOTPRINT_ENCODED_CHANNELS, 24);
    assert_eq!(LIGHT_CHANNELS, 3);
    assert_eq!(VIEW_CHANNELS, 2);
    assert_eq!(
        net.decoder.ang[0].in_dim,
        FUSION_WIDTH + LIGHT_CHANNELS + VIEW_CHANNELS
    );
    assert_eq!(net.decoder.ang[4].out_dim, 4);

    let loss = LossConfig::default();
    assert_eq!(loss.lambda_s, 0.4);
    assert_eq!(loss.lambda_c, 0.1);
    assert_eq!(loss.k_brdf, 100.0);
    assert_eq!(loss.k_btdf, 1000.0);

    let tc = TrainConfig::default();
    assert_eq!(tc.lr, 5e-2);
    assert_eq!(tc.batch_size, 512);
    assert_eq!(tc.epochs, 10);
    assert!((tc.lr_for_epoch(5) - 5e-2).abs() < 1e-15);
    assert!((tc.lr_for_epoch(6) - 1e-2).abs() < 1e-15);
    assert!((tc.lr_for_epoch(8) - 1e-2).abs() < 1e-15);
    assert!((tc.lr_for_epoch(9) - 2e-3).abs() < 1e-16);
    assert!((tc.lr_for_epoch(10) - 2e-3).abs() < 1e-16);

    assert_eq!(woven_core::bsdf::OPTICAL_DEPTH_DEFAULT, 2.0);
    assert_eq!(MapParams::default().gap, 0.2);
    assert_eq!(woven_core::dataset::sample_material_seeded(1, 0.5).gap, 0.2);

    // query generation counts
    let sq = StructuredQueries::new(42);
    assert_eq!(sq.centers().len(), 64);
    for ci in 0..64 {
        assert_eq!(sq.sizes(ci).len(), 20);
        let pairs = sq.direction_pairs(ci).len();
        assert!(
            (2200..=2800).contains(&pairs),
            "center {ci}: {pairs} direction pairs"
        );
    }
    pass(6, "network, loss, schedule, sampling constants as specified", t);
}

// --------------------------------------------------------- shared fixture 7-10

struct Gate {
    net: NetworkWeights,
    report: woven_core::nn::TrainReport,
    train_mats: Vec<TrainMaterial>,
    held_out: Vec<Vec<QueryRecord>>,
    build_time: Duration,
}

static GATE: OnceLock<Gate> = OnceLock::new();

fn gate_materials() -> Vec<woven_core::dataset::MaterialSpec> {
    use woven_core::dataset::MaterialSpec;
    vec![
        MaterialSpec {
            pattern: WeaveKind::Plain,
            twist_deg: 0.0,
            incline_deg: 30.0,
            alpha: 0.30,
            beta: 0.5,
            gap: 0.2,
            w: 0.5,
        },
        MaterialSpec {
            pattern: WeaveKind::Twill(3),
            twist_deg: 30.0,
            incline_deg: 25.0,
            alpha: 0.70,
            beta: 1.0,
            gap: 0.2,
            w: 0.5,
        },
        MaterialSpec {
            pattern: WeaveKind::Satin { ends: 5, picks: 5 },
            twist_deg: -30.0,
            incline_deg: 40.0,
            alpha: 0.15,
            beta: 1.5,
            gap: 0.2,
            w: 0.5,
        },
        MaterialSpec {
            pattern: WeaveKind::Twill(5),
            twist_deg: 0.0,
            incline_deg: 35.0,
            alpha: 1.00,
            beta: 0.8,
            gap: 0.2,
            w: 0.5,
        },
    ]
}

/// The desk-scale learning gate: 4 materials x 50k queries, 2 epochs at the
/// stock schedule.
fn gate() -> &'static Gate {
    GATE.get_or_init(|| {
        let t = Instant::now();
        let budget = 50_000;
        let gt_samples = 2048;
        let mut train_mats = Vec::new();
        let mut held_out = Vec::new();
        for (i, spec) in gate_materials().iter().enumerate() {
            let maps = spec.build_maps(512).unwrap();
            let params = spec.fabric_params();
            let seed = 1000 + i as u64;
            let queries = build_query_budget(seed, budget, 0.2);
            let (records, _) =
                compute_targets(&queries, &maps, &params, Kernel::Box, gt_samples, seed);
            let ho_queries = build_query_budget(seed ^ 0xDEAD, 2000, 0.2);
            let (ho, _) =
                compute_targets(&ho_queries, &maps, &params, Kernel::Box, gt_samples, seed);
            let header = DatasetHeader {
                material: *spec,
                kernel: Kernel::Box,
                gt_samples,
                seed,
                resolution: maps.resolution,
                record_count: records.len() as u64,
                note: String::new(),
            };
            held_out.push(ho);
            train_mats
                .push(TrainMaterial::new(header, &maps, records, ENCODER_INPUT_RES).unwrap());
        }
        let cfg = TrainConfig { epochs: 2, seed: 7, ..TrainConfig::default() };
        let mut net = NetworkWeights::init(cfg.seed, EncoderConfig::default());
        let report = train(&mut net, &train_mats, &cfg).unwrap();
        Gate { net, report, train_mats, held_out, build_time: t.elapsed() }
    })
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_07_desk_scale_learning_gate() {
    let t = Instant::now();
    let g = gate();
    let total_records: usize = g.train_mats.iter().map(|m| m.records.len()).sum();
    assert!(g.train_mats.len() >= 4);
    assert!(total_records >= 4 * 49_000, "{total_records} records");

    let ratio = g.report.final_epoch_mean_loss / g.report.first_window_mean_loss;
    assert!(
        ratio < 0.5,
        "final epoch loss {} vs first-window {} (ratio {ratio:.3})",
        g.report.final_epoch_mean_loss,
        g.report.first_window_mean_loss
    );

    let mut d_sum = 0.0;
    let mut s_sum = 0.0;
    let mut n = 0.0;
    let mut per_mat = String::new();
    for (tm, ho) in g.train_mats.iter().zip(&g.held_out) {
        let m = evaluate(&g.net, tm, ho, &LossConfig::default()).unwrap();
        per_mat.push_str(&format!(" [{:.3}/{:.3}]", m.diffuse_mae, m.specular_g_mae));
        d_sum += m.diffuse_mae * m.count as f64;
        s_sum += m.specular_g_mae * m.count as f64;
        n += m.count as f64;
    }
    let d_mae = d_sum / n;
    let s_mae = s_sum / n;
    assert!(d_mae <= 0.05, "held-out diffuse MAE {d_mae:.4} > 0.05");
    assert!(s_mae <= 0.15, "held-out specular g-space MAE {s_mae:.4} > 0.15");
    assert!(g.build_time < Duration::from_secs(4 * 3600), "runtime budget");
    pass(
        7,
        &format!(
            "loss ratio {ratio:.3}; held-out diffuse MAE {d_mae:.4}, specular g-MAE {s_mae:.4}{per_mat} (fixture {:.0}s)",
            g.build_time.as_secs_f64()
        ),
        t,
    );
}

// ---------------------------------------------------------------- criterion 8

/// Zoom-sweep scene: a huge fronto-parallel quad under a directional light so
/// every frame is fully covered at any distance.
fn sweep_scene(distance: f64, spec: &woven_core::dataset::MaterialSpec) -> Scene {
    let mut scene = woven_core::render::single_cloth_scene(distance, 256);
    scene.materials[0].spec = *spec;
    scene.materials[0].kd_warp = Rgb::new(0.6, 0.25, 0.2);
    scene.materials[0].kd_weft = Rgb::new(0.7, 0.6, 0.5);
    scene.materials[0].ks_warp = Rgb::splat(0.4);
    scene.materials[0].ks_weft = Rgb::splat(0.35);
    scene.light = woven_core::render::Light::Directional {
        direction: Vec3::new(-0.3, -0.35, -0.89).normalized(),
        intensity: Rgb::splat(2.5),
    };
    if let Primitive::Quad { edge_u, edge_v, uv_repeats, .. } =
        &mut scene.objects[0].primitive
    {
        *edge_u = Vec3::new(400.0, 0.0, 0.0);
        *edge_v = Vec3::new(0.0, 400.0, 0.0);
        *uv_repeats = 4000.0;
    }
    scene
}

#[test]
fn criterion_08_anti_aliasing_end_to_end() {
    let t = Instant::now();
    let g = gate();
    let spec = g.train_mats[0].header.material;

    // distances spanning footprint sizes ~0.05 .. ~5 repeats
    let n_frames = 9;
    let d_lo = 3.1f64;
    let d_hi = 309.0f64;
    let mut neural_frames = Vec::new();
    let mut ref1_frames = Vec::new();
    let mut sizes = Vec::new();
    for k in 0..n_frames {
        let f = k as f64 / (n_frames - 1) as f64;
        let d = d_lo * (d_hi / d_lo).powf(f);
        let scene = sweep_scene(d, &spec);
        let cache = LatentCache::build(&scene, Some(&g.net)).unwrap();
        let (neural, _) = render(&scene, &cache, Some(&g.net), RenderMode::Neural, 0).unwrap();
        let (ref1, _) =
            render(&scene, &cache, None, RenderMode::Reference { spp: 1 }, 40 + k as u64)
                .unwrap();
        sizes.push(d * 0.0162);
        neural_frames.push(neural);
        ref1_frames.push(ref1);
    }

    // scale stability: adjacent-frame change
    let mut neural_adj = 0.0;
    let mut ref_adj = 0.0;
    for k in 1..n_frames {
        neural_adj += image_mse(&neural_frames[k - 1], &neural_frames[k]).unwrap();
        ref_adj += image_mse(&ref1_frames[k - 1], &ref1_frames[k]).unwrap();
    }
    neural_adj /= (n_frames - 1) as f64;
    ref_adj /= (n_frames - 1) as f64;
    assert!(
        neural_adj < ref_adj,
        "adjacent-frame mse: neural {neural_adj:.3e} vs reference {ref_adj:.3e}"
    );

    // accuracy against converged ground truth on the minification frames
    let mut mse_neural = 0.0;
    let mut mse_ref = 0.0;
    let mut gt_frames = 0.0;
    for k in 0..n_frames {
        if sizes[k] < 0.5 {
            continue;
        }
        let f = k as f64 / (n_frames - 1) as f64;
        let d = d_lo * (d_hi / d_lo).powf(f);
        let scene = sweep_scene(d, &spec);
        let cache = LatentCache::build(&scene, None).unwrap();
        let (gt, _) =
            render(&scene, &cache, None, RenderMode::Reference { spp: 256 }, 777).unwrap();
        mse_neural += image_mse(&neural_frames[k], &gt).unwrap();
        mse_ref += image_mse(&ref1_frames[k], &gt).unwrap();
        gt_frames += 1.0;
    }
    mse_neural /= gt_frames;
    mse_ref /= gt_frames;
    assert!(
        mse_neural < mse_ref,
        "vs 256spp ground truth: neural mse {mse_neural:.3e}, 1spp reference {mse_ref:.3e}"
    );
    assert!(t.elapsed() < Duration::from_secs(1800), "runtime budget");
    pass(
        8,
        &format!(
            "zoom sweep: adjacent mse {neural_adj:.2e} (neural) < {ref_adj:.2e} (1spp); vs GT {mse_neural:.2e} < {mse_ref:.2e}"
        ),
        t,
    );
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_storage_bound() {
    let t = Instant::now();
    let g = gate();
    let dir = std::env::temp_dir().join("woven_acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("trained.wwnn");
    save_weights(&g.net, &path).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    assert!(
        bytes < 5 * 1024 * 1024,
        "weights occupy {bytes} bytes, budget is 5 MB"
    );
    // per-material state is one 64-float latent, independent of the weights
    let maps = gate_materials()[0].build_maps(128).unwrap();
    let z = encode(&g.net, &maps, 0.3, 0.5).unwrap();
    assert_eq!(z.len(), 64);
    pass(
        9,
        &format!("serialized weights {bytes} bytes (< 5 MB); latents are 64 floats"),
        t,
    );
}

// --------------------------------------------------------------- criterion 10

#[test]
fn criterion_10_editing_paths() {
    let t = Instant::now();
    let g = gate();
    let mut scene = woven_core::render::single_cloth_scene(2.0, 64);
    scene.materials[0].spec = g.train_mats[1].header.material;
    let mut cache = LatentCache::build(&scene, Some(&g.net)).unwrap();
    cache.reset_encode_count();

    // albedo edit: no encoder execution, then render
    let p = cache
        .edit_material(
            &mut scene,
            Some(&g.net),
            "cloth",
            &MaterialEdit { kd_weft: Some(Rgb::new(0.9, 0.3, 0.2)), ..MaterialEdit::default() },
        )
        .unwrap();
    assert_eq!(p, EditPath::NoEncode);
    let (_img, _) = render(&scene, &cache, Some(&g.net), RenderMode::Neural, 0).unwrap();
    assert_eq!(cache.encode_count(), 0, "albedo edit must not run the encoder");

    // roughness edit: exactly one encode
    let p = cache
        .edit_material(
            &mut scene,
            Some(&g.net),
            "cloth",
            &MaterialEdit { alpha: Some(0.45), ..MaterialEdit::default() },
        )
        .unwrap();
    assert_eq!(p, EditPath::ReEncode { maps_rebuilt: false });
    assert_eq!(cache.encode_count(), 1);

    // pattern edit: exactly one more encode (with maps rebuilt)
    let p = cache
        .edit_material(
            &mut scene,
            Some(&g.net),
            "cloth",
            &MaterialEdit { pattern: Some(WeaveKind::Satin { ends: 5, picks: 5 }), ..MaterialEdit::default() },
        )
        .unwrap();
    assert_eq!(p, EditPath::ReEncode { maps_rebuilt: true });
    assert_eq!(cache.encode_count(), 2);

    // post-edit render equals a cold start of the edited scene, bit for bit
    let (incremental, _) = render(&scene, &cache, Some(&g.net), RenderMode::Neural, 0).unwrap();
    let cold_cache = LatentCache::build(&scene, Some(&g.net)).unwrap();
    let (cold, _) = render(&scene, &cold_cache, Some(&g.net), RenderMode::Neural, 0).unwrap();
    assert_eq!(incremental.data, cold.data, "incremental cache must match cold start");
    pass(
        10,
        "albedo edits bypass the encoder; parameter edits re-encode once; caches stay exact",
        t,
    );
}

// Gap texels carry no response and stay out of the yarn partition; checked
// here because the stock-constant criterion pins the 0.2 ratio.
#[test]
fn stock_gap_ratio_in_maps() {
    let spec = woven_core::dataset::sample_material_seeded(3, 0.5);
    let maps = spec.build_maps(256).unwrap();
    let gaps = maps.yarn_id.iter().filter(|y| **y == YarnId::Gap).count();
    let frac = gaps as f64 / maps.texel_count() as f64;
    assert!((frac - 0.2).abs() < 0.005, "gap fraction {frac}");
    let texel = maps.shading_at(0, spec.beta);
    let params = FabricParams::default();
    if texel.yarn == YarnId::Gap {
        let pair = DirectionPair { wi: Vec3::Z, wo: Vec3::Z };
        assert_eq!(combine(&eval_point_components(&texel, &pair, &params), &params), Rgb::BLACK);
    }
}
