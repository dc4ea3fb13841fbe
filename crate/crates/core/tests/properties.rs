//! Property tests for the model invariants that hold over whole input ranges.

use proptest::prelude::*;
use woven_core::bsdf::{combine, specular_point, ComponentQuad, DirectionPair, FabricParams};
use woven_core::dataset::{Query, QueryRecord};
use woven_core::math::{Rgb, Vec3};
use woven_core::nn::{g_map, g_unmap};
use woven_core::oracle::{Footprint, Kernel};

fn upper_dir() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.05f64..1.0)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalized())
}

fn tangent_for(n: Vec3) -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_filter_map("degenerate tangent", move |(x, y, z)| {
        let v = Vec3::new(x, y, z).cross(n);
        if v.length_squared() > 1e-6 {
            Some(v.normalized())
        } else {
            None
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn specular_kernel_is_reciprocal(
        wi in upper_dir(),
        wo in upper_dir(),
        n_p in upper_dir(),
        alpha in 0.1f64..1.0,
        seed_t in upper_dir(),
    ) {
        let t_p = seed_t.cross(n_p);
        prop_assume!(t_p.length_squared() > 1e-6);
        let t_p = t_p.normalized();
        let a = specular_point(&DirectionPair { wi, wo }, n_p, t_p, alpha, 2.0);
        let b = specular_point(&DirectionPair { wi: wo, wo: wi }, n_p, t_p, alpha, 2.0);
        prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-30));
        prop_assert!(a.is_finite() && a >= 0.0);
    }

    #[test]
    fn combine_is_linear_in_albedo(
        quad in (0.0f64..2.0, 0.0f64..2.0, 0.0f64..5.0, 0.0f64..5.0),
        scale in 0.1f64..0.5,
        base in 0.0f64..0.5,
    ) {
        let quad = ComponentQuad { c_warp: quad.0, c_weft: quad.1, s_warp: quad.2, s_weft: quad.3 };
        let p1 = FabricParams {
            kd_warp: Rgb::splat(base),
            kd_weft: Rgb::splat(base * 0.5),
            ks_warp: Rgb::splat(base * 0.8),
            ks_weft: Rgb::splat(base * 0.3),
            ..FabricParams::default()
        };
        let mut p2 = p1;
        p2.kd_warp = p1.kd_warp * (1.0 / scale);
        p2.kd_weft = p1.kd_weft * (1.0 / scale);
        p2.ks_warp = p1.ks_warp * (1.0 / scale);
        p2.ks_weft = p1.ks_weft * (1.0 / scale);
        let a = combine(&quad, &p1);
        let b = combine(&quad, &p2) * scale;
        prop_assert!((a.r - b.r).abs() <= 1e-12 * a.r.abs().max(1e-15));
        prop_assert!((a.g - b.g).abs() <= 1e-12 * a.g.abs().max(1e-15));
        prop_assert!((a.b - b.b).abs() <= 1e-12 * a.b.abs().max(1e-15));
    }

    #[test]
    fn g_mapping_round_trips_and_preserves_order(
        x in 0.0f64..1000.0,
        y in 0.0f64..1000.0,
        btdf in any::<bool>(),
    ) {
        let k = if btdf { 1000.0 } else { 100.0 };
        let rx = g_unmap(g_map(x, k), k);
        prop_assert!((rx - x).abs() <= 1e-6 * x.max(1e-9));
        if x < y {
            prop_assert!(g_map(x, k) < g_map(y, k));
        }
    }

    #[test]
    fn query_records_round_trip_through_bytes(
        cu in 0.0f32..1.0,
        cv in 0.0f32..1.0,
        size in 0.0f32..5.0,
        dir in (-0.7f64..0.7, -0.7f64..0.7, -0.7f64..0.7, -0.7f64..0.7),
        flip in any::<bool>(),
        target in ([0.0f32..10.0, 0.0f32..10.0, 0.0f32..10.0, 0.0f32..10.0]),
    ) {
        let zi = (1.0 - dir.0 * dir.0 - dir.1 * dir.1).sqrt();
        let zo = (1.0 - dir.2 * dir.2 - dir.3 * dir.3).sqrt();
        let rec = QueryRecord {
            query: Query {
                center: [cu, cv],
                size,
                wi: [dir.0 as f32, dir.1 as f32, if flip { -zi } else { zi } as f32],
                wo: [dir.2 as f32, dir.3 as f32, zo as f32],
            },
            target: [target[0], target[1], target[2], target[3]],
        };
        let mut buf = Vec::new();
        rec.write_to(&mut buf);
        let back = QueryRecord::from_bytes(&buf).unwrap();
        prop_assert_eq!(rec, back);
    }

    #[test]
    fn footprints_wrap_to_unit_torus(
        cu in -3.0f64..3.0,
        cv in -3.0f64..3.0,
        size in 0.0f64..5.0,
    ) {
        let fp = Footprint::new((cu, cv), size, Kernel::Box);
        prop_assert!((0.0..1.0).contains(&fp.center.0));
        prop_assert!((0.0..1.0).contains(&fp.center.1));
        let shifted = Footprint::new((cu + 1.0, cv - 2.0), size, Kernel::Box);
        prop_assert!((fp.center.0 - shifted.center.0).abs() < 1e-9);
        prop_assert!((fp.center.1 - shifted.center.1).abs() < 1e-9);
    }
}
