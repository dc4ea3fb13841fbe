//! Micro-benchmarks for the per-point shading kernels.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use woven_core::bsdf::{
    attenuation_g, eval_point_components, microflake_density, smith_lambda, DirectionPair,
    FabricParams, FiberFrame,
};
use woven_core::math::Vec3;
use woven_core::nn::one_blob_encode;
use woven_core::pattern::{TexelShading, YarnId};

fn bench_kernels(c: &mut Criterion) {
    let frame = FiberFrame::new(Vec3::new(0.6, 0.64, 0.48).normalized(), 0.35).unwrap();
    let h = Vec3::new(0.2, -0.4, 0.89).normalized();
    let w = Vec3::new(0.3, 0.1, 0.94).normalized();

    c.bench_function("microflake_density", |b| {
        b.iter(|| microflake_density(black_box(h), black_box(&frame), black_box(0.35)).unwrap())
    });
    c.bench_function("smith_lambda", |b| {
        b.iter(|| smith_lambda(black_box(w), black_box(&frame)))
    });
    c.bench_function("attenuation_g", |b| {
        b.iter(|| attenuation_g(black_box(0.7), black_box(1.3), black_box(2.0)))
    });

    let texel = TexelShading {
        normal: Vec3::new(0.1, -0.2, 0.97).normalized(),
        orientation: Vec3::new(0.97, 0.05, -0.1).normalized(),
        yarn: YarnId::Weft,
    };
    let pair = DirectionPair {
        wi: Vec3::new(0.4, 0.2, 0.89).normalized(),
        wo: Vec3::new(-0.3, 0.5, 0.81).normalized(),
    };
    let params = FabricParams::default();
    c.bench_function("eval_point_components", |b| {
        b.iter(|| eval_point_components(black_box(&texel), black_box(&pair), black_box(&params)))
    });

    c.bench_function("one_blob_encode", |b| {
        b.iter(|| one_blob_encode(black_box(0.37)))
    });
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
