//! CPU renderer: one primary ray per pixel, footprint from ray differentials,
//! direct illumination from one light, shading by either a single decoder
//! query (Neural) or the Monte-Carlo aggregation oracle (Reference).

use super::image::FloatImage;
use super::scene::{Light, Primitive, Scene, SceneMaterial};
use crate::bsdf::{combine, DirectionPair, FabricParams};
use crate::dataset::MaterialSpec;
use crate::error::{Error, Result};
use crate::math::{wrap01, Rgb, Vec3};
use crate::nn::{unmap_prediction, LossConfig, NetworkWeights};
use crate::oracle::{aggregate, Footprint};
use crate::pattern::{GeometryMaps, WeaveKind};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

/// Map synthesis target resolution used by the rendering pipeline.
pub const MAP_RESOLUTION: u32 = 512;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RenderMode {
    /// One decoder query per pixel.
    Neural,
    /// Monte-Carlo oracle with the given per-pixel sample budget.
    Reference { spp: u32 },
}

/// A ray/primitive intersection with the local shading frame and UV data.
pub struct Hit {
    pub t: f64,
    pub pos: Vec3,
    /// Shading frame: x along the UV u direction, z the surface normal
    /// facing the camera.
    pub frame_x: Vec3,
    pub frame_y: Vec3,
    pub frame_z: Vec3,
    pub uv: (f64, f64),
    /// World-space position derivatives per UV unit.
    pub dp_du: Vec3,
    pub dp_dv: Vec3,
    pub object: usize,
}

fn intersect(prim: &Primitive, origin: Vec3, dir: Vec3) -> Option<(f64, Vec3)> {
    match prim {
        Primitive::Quad { center, edge_u, edge_v, .. } => {
            let n = edge_u.cross(*edge_v);
            let denom = dir.dot(n);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = (*center - origin).dot(n) / denom;
            if t <= 1e-9 {
                return None;
            }
            let p = origin + dir * t;
            let d = p - *center;
            let a = d.dot(*edge_u) / edge_u.length_squared();
            let b = d.dot(*edge_v) / edge_v.length_squared();
            if a.abs() > 1.0 || b.abs() > 1.0 {
                return None;
            }
            Some((t, p))
        }
        Primitive::Sphere { center, radius, .. } => {
            let oc = origin - *center;
            let b = oc.dot(dir);
            let c = oc.length_squared() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t = if -b - sq > 1e-9 {
                -b - sq
            } else if -b + sq > 1e-9 {
                -b + sq
            } else {
                return None;
            };
            Some((t, origin + dir * t))
        }
    }
}

/// Fill in UV, derivatives and the camera-facing shading frame at a hit point.
fn shade_data(prim: &Primitive, p: Vec3, dir: Vec3) -> Option<(Vec3, Vec3, Vec3, (f64, f64), Vec3, Vec3)> {
    match prim {
        Primitive::Quad { center, edge_u, edge_v, uv_repeats } => {
            let d = p - *center;
            let a = d.dot(*edge_u) / edge_u.length_squared();
            let b = d.dot(*edge_v) / edge_v.length_squared();
            let uv = ((a + 1.0) / 2.0 * uv_repeats, (b + 1.0) / 2.0 * uv_repeats);
            let dp_du = *edge_u * (2.0 / uv_repeats);
            let dp_dv = *edge_v * (2.0 / uv_repeats);
            let mut n = edge_u.cross(*edge_v).normalized();
            if n.dot(dir) > 0.0 {
                n = -n;
            }
            let x = (dp_du - n * dp_du.dot(n)).normalized();
            let y = n.cross(x);
            Some((x, y, n, uv, dp_du, dp_dv))
        }
        Primitive::Sphere { center, radius, uv_repeats } => {
            let d = (p - *center).normalized();
            let theta = d.z.clamp(-1.0, 1.0).acos();
            let phi = d.y.atan2(d.x);
            let uv = (
                (phi / (2.0 * std::f64::consts::PI) + 0.5) * uv_repeats,
                theta / std::f64::consts::PI * uv_repeats,
            );
            let sin_t = theta.sin().max(1e-9);
            // dp/dphi and dp/dtheta scaled into per-UV-unit derivatives
            let dp_dphi = Vec3::new(-d.y, d.x, 0.0) * *radius;
            let dp_dtheta =
                Vec3::new(d.x * d.z / sin_t, d.y * d.z / sin_t, -sin_t) * *radius;
            let dp_du = dp_dphi * (2.0 * std::f64::consts::PI / uv_repeats);
            let dp_dv = dp_dtheta * (std::f64::consts::PI / uv_repeats);
            let mut n = d;
            if n.dot(dir) > 0.0 {
                n = -n;
            }
            let x = (dp_du - n * dp_du.dot(n)).normalized();
            let y = n.cross(x);
            Some((x, y, n, uv, dp_du, dp_dv))
        }
    }
}

/// Closest-hit trace against all scene objects.
pub fn trace(scene: &Scene, origin: Vec3, dir: Vec3) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, obj) in scene.objects.iter().enumerate() {
        if let Some((t, p)) = intersect(&obj.primitive, origin, dir) {
            if best.as_ref().map_or(true, |h| t < h.t) {
                if let Some((x, y, z, uv, dp_du, dp_dv)) = shade_data(&obj.primitive, p, dir) {
                    best = Some(Hit {
                        t,
                        pos: p,
                        frame_x: x,
                        frame_y: y,
                        frame_z: z,
                        uv,
                        dp_du,
                        dp_dv,
                        object: i,
                    });
                }
            }
        }
    }
    best
}

/// Isotropic texture-space footprint from ray differentials: offset rays one
/// pixel right/down, reprojected onto the tangent plane and converted to UV
/// offsets through the position derivatives. Falls back to a distance/field-
/// of-view heuristic when the derivatives degenerate.
pub fn footprint_from_hit(
    scene: &Scene,
    hit: &Hit,
    px: u32,
    py: u32,
    fallback_count: Option<&mut u64>,
) -> Footprint {
    let (w, h) = scene.resolution;
    let origin = scene.camera.position;
    let du2 = hit.dp_du.length_squared();
    let dv2 = hit.dp_dv.length_squared();
    let size = if du2 > 1e-16 && dv2 > 1e-16 {
        let mut axis_len = [0.0f64; 2];
        for (k, (ox, oy)) in [(1.0, 0.0), (0.0, 1.0)].iter().enumerate() {
            let dir = scene
                .camera
                .ray_dir(px as f64 + ox, py as f64 + oy, w, h);
            // intersect the offset ray with the tangent plane at the hit
            let denom = dir.dot(hit.frame_z);
            if denom.abs() < 1e-12 {
                axis_len[k] = 0.0;
                continue;
            }
            let t = (hit.pos - origin).dot(hit.frame_z) / denom;
            let p = origin + dir * t;
            let off = p - hit.pos;
            let du = off.dot(hit.dp_du) / du2;
            let dv = off.dot(hit.dp_dv) / dv2;
            axis_len[k] = (du * du + dv * dv).sqrt();
        }
        let m = axis_len[0].max(axis_len[1]);
        if m > 0.0 {
            m
        } else {
            if let Some(c) = fallback_count {
                *c += 1;
            }
            heuristic_size(scene, hit)
        }
    } else {
        if let Some(c) = fallback_count {
            *c += 1;
        }
        heuristic_size(scene, hit)
    };
    Footprint::new((wrap01(hit.uv.0), wrap01(hit.uv.1)), size, scene.kernel)
}

fn heuristic_size(scene: &Scene, hit: &Hit) -> f64 {
    let (_, h) = scene.resolution;
    let pixel_angle = 2.0 * (scene.camera.fov_deg.to_radians() / 2.0).tan() / h as f64;
    hit.t * pixel_angle
}

/// Which work an edit required.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EditPath {
    /// Values were identical; cache untouched.
    NoChange,
    /// Albedo-only edit; no encoder execution.
    NoEncode,
    /// Encoder re-ran; geometry maps were rebuilt only when the pattern set
    /// (pattern, twist, inclination) changed.
    ReEncode { maps_rebuilt: bool },
}

struct CacheEntry {
    material: SceneMaterial,
    maps: Arc<GeometryMaps>,
    latent: Option<Vec<f64>>,
}

/// Per-scene material cache: geometry maps for the oracle path, latents for
/// the neural path, and an instrumented encoder counter.
pub struct LatentCache {
    entries: HashMap<String, CacheEntry>,
    encode_count: u64,
}

impl LatentCache {
    /// Build maps (always) and latents (when a network is supplied).
    pub fn build(scene: &Scene, net: Option<&NetworkWeights>) -> Result<Self> {
        let mut cache = LatentCache { entries: HashMap::new(), encode_count: 0 };
        // share maps between materials with the same pattern set
        let mut maps_pool: HashMap<(usize, i64, i64), Arc<GeometryMaps>> = HashMap::new();
        for m in &scene.materials {
            let maps = cache.maps_for(&m.spec, &mut maps_pool)?;
            let latent = match net {
                Some(net) => {
                    cache.encode_count += 1;
                    Some(crate::nn::encode(net, &maps, m.spec.alpha, m.spec.beta)?)
                }
                None => None,
            };
            cache
                .entries
                .insert(m.id.clone(), CacheEntry { material: m.clone(), maps, latent });
        }
        Ok(cache)
    }

    fn maps_for(
        &self,
        spec: &MaterialSpec,
        pool: &mut HashMap<(usize, i64, i64), Arc<GeometryMaps>>,
    ) -> Result<Arc<GeometryMaps>> {
        let key = (
            spec.pattern.index().unwrap_or(usize::MAX),
            (spec.twist_deg * 1000.0) as i64,
            (spec.incline_deg * 1000.0) as i64,
        );
        if let Some(m) = pool.get(&key) {
            return Ok(m.clone());
        }
        let maps = Arc::new(spec.build_maps(MAP_RESOLUTION)?);
        pool.insert(key, maps.clone());
        Ok(maps)
    }

    pub fn encode_count(&self) -> u64 {
        self.encode_count
    }

    pub fn reset_encode_count(&mut self) {
        self.encode_count = 0;
    }

    pub fn latent(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).and_then(|e| e.latent.as_deref())
    }

    /// Ids of materials without latents (neural rendering preflight).
    pub fn missing_latents(&self, scene: &Scene) -> Vec<String> {
        scene
            .materials
            .iter()
            .filter(|m| self.latent(&m.id).is_none())
            .map(|m| m.id.clone())
            .collect()
    }

    /// Apply a parameter edit to one material, doing the least work that
    /// keeps the cache consistent. The scene's material entry is updated too.
    pub fn edit_material(
        &mut self,
        scene: &mut Scene,
        net: Option<&NetworkWeights>,
        id: &str,
        edit: &MaterialEdit,
    ) -> Result<EditPath> {
        let current = scene
            .material(id)
            .ok_or_else(|| Error::Scene(format!("no material '{id}'")))?
            .clone();
        let edited = edit.apply_to(&current)?;
        if edited == current {
            return Ok(EditPath::NoChange);
        }
        let pattern_changed = edited.spec.pattern != current.spec.pattern
            || edited.spec.twist_deg != current.spec.twist_deg
            || edited.spec.incline_deg != current.spec.incline_deg;
        let encoder_coupled = pattern_changed
            || edited.spec.alpha != current.spec.alpha
            || edited.spec.beta != current.spec.beta;

        let entry = self
            .entries
            .get_mut(id)
            .ok_or_else(|| Error::Scene(format!("material '{id}' not cached")))?;
        if !encoder_coupled {
            entry.material = edited.clone();
            *scene.material_mut(id).unwrap() = edited;
            return Ok(EditPath::NoEncode);
        }
        if pattern_changed {
            entry.maps = Arc::new(edited.spec.build_maps(MAP_RESOLUTION)?);
        }
        if let Some(net) = net {
            self.encode_count += 1;
            entry.latent = Some(crate::nn::encode(
                net,
                &entry.maps,
                edited.spec.alpha,
                edited.spec.beta,
            )?);
        } else {
            entry.latent = None;
        }
        entry.material = edited.clone();
        *scene.material_mut(id).unwrap() = edited;
        Ok(EditPath::ReEncode { maps_rebuilt: pattern_changed })
    }
}

/// A sparse material edit; unset fields keep their value.
#[derive(Clone, Debug, Default)]
pub struct MaterialEdit {
    pub pattern: Option<WeaveKind>,
    pub twist_deg: Option<f64>,
    pub incline_deg: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub kd_warp: Option<Rgb>,
    pub kd_weft: Option<Rgb>,
    pub ks_warp: Option<Rgb>,
    pub ks_weft: Option<Rgb>,
}

impl MaterialEdit {
    fn apply_to(&self, m: &SceneMaterial) -> Result<SceneMaterial> {
        let mut out = m.clone();
        if let Some(p) = self.pattern {
            out.spec.pattern = p;
        }
        if let Some(t) = self.twist_deg {
            out.spec.twist_deg = t;
        }
        if let Some(i) = self.incline_deg {
            out.spec.incline_deg = i;
        }
        if let Some(a) = self.alpha {
            out.spec.alpha = a;
        }
        if let Some(b) = self.beta {
            out.spec.beta = b;
        }
        if let Some(c) = self.kd_warp {
            out.kd_warp = c;
        }
        if let Some(c) = self.kd_weft {
            out.kd_weft = c;
        }
        if let Some(c) = self.ks_warp {
            out.ks_warp = c;
        }
        if let Some(c) = self.ks_weft {
            out.ks_weft = c;
        }
        // range check with the sampling-table bounds in the message
        out.spec.validate().map_err(|e| {
            Error::InvalidParameter(format!(
                "{e}; editable ranges: twist in {{-30,0,30}}, inclination [15,45], \
                 roughness [0.1,1], height scaling [0,2]"
            ))
        })?;
        out.fabric_params().validate()?;
        Ok(out)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RenderStats {
    pub fallback_footprints: u64,
    pub degenerate_patches: u64,
}

fn pixel_seed(seed: u64, idx: u64) -> u64 {
    // splitmix64
    let mut z = seed ^ idx.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Render the scene. Neural mode requires `net` and latents in the cache;
/// Reference mode runs the oracle with the configured sample budget.
pub fn render(
    scene: &Scene,
    cache: &LatentCache,
    net: Option<&NetworkWeights>,
    mode: RenderMode,
    seed: u64,
) -> Result<(FloatImage, RenderStats)> {
    scene.validate()?;
    if mode == RenderMode::Neural {
        if net.is_none() {
            return Err(Error::Scene("neural rendering needs network weights".into()));
        }
        let missing = cache.missing_latents(scene);
        if !missing.is_empty() {
            return Err(Error::Scene(format!(
                "materials missing latents: {}",
                missing.join(", ")
            )));
        }
    }
    let (w, h) = scene.resolution;
    let loss_cfg = LossConfig::default();
    let rows: Vec<(Vec<[f32; 3]>, RenderStats)> = (0..h)
        .into_par_iter()
        .map(|py| {
            let mut row = vec![[0.0f32; 3]; w as usize];
            let mut stats = RenderStats::default();
            for px in 0..w {
                let rgb = shade_pixel(
                    scene, cache, net, mode, seed, px, py, &loss_cfg, &mut stats,
                );
                row[px as usize] = [rgb.r as f32, rgb.g as f32, rgb.b as f32];
            }
            (row, stats)
        })
        .collect();
    let mut img = FloatImage::new(w, h);
    let mut stats = RenderStats::default();
    for (py, (row, s)) in rows.into_iter().enumerate() {
        for (px, p) in row.into_iter().enumerate() {
            img.data[py * w as usize + px] = p;
        }
        stats.fallback_footprints += s.fallback_footprints;
        stats.degenerate_patches += s.degenerate_patches;
    }
    Ok((img, stats))
}

#[allow(clippy::too_many_arguments)]
fn shade_pixel(
    scene: &Scene,
    cache: &LatentCache,
    net: Option<&NetworkWeights>,
    mode: RenderMode,
    seed: u64,
    px: u32,
    py: u32,
    loss_cfg: &LossConfig,
    stats: &mut RenderStats,
) -> Rgb {
    let (w, h) = scene.resolution;
    let dir = scene.camera.ray_dir(px as f64, py as f64, w, h);
    let Some(hit) = trace(scene, scene.camera.position, dir) else {
        return scene.background;
    };
    let fp = footprint_from_hit(scene, &hit, px, py, Some(&mut stats.fallback_footprints));

    // local frame directions
    let to_local = |v: Vec3| -> Vec3 {
        Vec3::new(v.dot(hit.frame_x), v.dot(hit.frame_y), v.dot(hit.frame_z))
    };
    let wo = to_local(-dir);
    if wo.z <= 0.0 {
        return scene.background;
    }
    let (wi_world, radiance) = match &scene.light {
        Light::Point { position, intensity } => {
            let l = *position - hit.pos;
            let d2 = l.length_squared().max(1e-12);
            (l.normalized(), *intensity * (1.0 / d2))
        }
        Light::Directional { direction, intensity } => (-*direction, *intensity),
    };
    let wi = to_local(wi_world);
    if wi.z == 0.0 {
        return Rgb::BLACK;
    }
    let pair = DirectionPair { wi: wi.normalized(), wo: wo.normalized() };

    let mat_id = &scene.objects[hit.object].material;
    let entry = cache.entries.get(mat_id).expect("validated material");
    let params: FabricParams = entry.material.fabric_params();

    let quad = match mode {
        RenderMode::Neural => {
            let z = entry.latent.as_deref().expect("latents checked");
            let decoder = &net.expect("net checked").decoder;
            let pred = decoder.decode(
                z,
                &fp,
                [pair.wi.x, pair.wi.y, pair.wi.z],
                [pair.wo.x, pair.wo.y],
            );
            unmap_prediction(pred, pair.is_transmission(), loss_cfg)
        }
        RenderMode::Reference { spp } => {
            let idx = (py as u64) * (w as u64) + px as u64;
            let stats_out = aggregate(
                &fp,
                &pair,
                &entry.maps,
                &params,
                spp.max(1),
                pixel_seed(seed, idx),
            );
            if stats_out.degenerate {
                stats.degenerate_patches += 1;
                return Rgb::BLACK;
            }
            stats_out.quad
        }
    };
    let shade = combine(&quad, &params) * wi.z.abs();
    shade * radiance
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::image::image_mse;
    use crate::render::scene::single_cloth_scene;
    use crate::nn::EncoderConfig;

    #[test]
    fn reference_render_is_deterministic_and_light_linear() {
        let mut scene = single_cloth_scene(2.0, 24);
        scene.resolution = (24, 24);
        let cache = LatentCache::build(&scene, None).unwrap();
        let (a, _) = render(&scene, &cache, None, RenderMode::Reference { spp: 4 }, 7).unwrap();
        let (b, _) = render(&scene, &cache, None, RenderMode::Reference { spp: 4 }, 7).unwrap();
        assert_eq!(a.data, b.data);

        scene.light.scale_intensity(2.0);
        let (c, _) = render(&scene, &cache, None, RenderMode::Reference { spp: 4 }, 7).unwrap();
        for (pa, pc) in a.data.iter().zip(&c.data) {
            for k in 0..3 {
                assert_eq!(pc[k], 2.0 * pa[k], "doubling intensity must double pixels");
            }
        }
    }

    #[test]
    fn neural_render_requires_latents() {
        let scene = single_cloth_scene(2.0, 8);
        let cache = LatentCache::build(&scene, None).unwrap();
        let cfg = EncoderConfig { input_res: 8, widths: [3, 4, 5], mlp_width: 16, latent: 64, angular_width: 128 };
        let net = NetworkWeights::init(1, cfg);
        let err = render(&scene, &cache, Some(&net), RenderMode::Neural, 0).unwrap_err();
        assert!(err.to_string().contains("cloth"));
    }

    #[test]
    fn neural_render_is_deterministic() {
        let mut scene = single_cloth_scene(2.0, 16);
        scene.resolution = (16, 16);
        let cfg = EncoderConfig { input_res: 16, widths: [3, 4, 5], mlp_width: 16, latent: 64, angular_width: 128 };
        let net = NetworkWeights::init(5, cfg);
        let cache = LatentCache::build(&scene, Some(&net)).unwrap();
        assert_eq!(cache.encode_count(), 1);
        let (a, _) = render(&scene, &cache, Some(&net), RenderMode::Neural, 0).unwrap();
        let (b, _) = render(&scene, &cache, Some(&net), RenderMode::Neural, 99).unwrap();
        assert_eq!(a.data, b.data, "no stochastic path in neural mode");
    }

    #[test]
    fn zero_light_gives_black_in_both_modes() {
        let mut scene = single_cloth_scene(2.0, 8);
        scene.resolution = (8, 8);
        scene.light.scale_intensity(0.0);
        let cfg = EncoderConfig { input_res: 16, widths: [3, 4, 5], mlp_width: 16, latent: 64, angular_width: 128 };
        let net = NetworkWeights::init(5, cfg);
        let cache = LatentCache::build(&scene, Some(&net)).unwrap();
        for mode in [RenderMode::Neural, RenderMode::Reference { spp: 2 }] {
            let (img, _) = render(&scene, &cache, Some(&net), mode, 3).unwrap();
            assert!(img.data.iter().all(|p| p.iter().all(|c| *c == 0.0)));
        }
    }

    #[test]
    fn footprint_scales_with_camera_distance() {
        let near = single_cloth_scene(1.0, 64);
        let far = single_cloth_scene(2.0, 64);
        let size_at = |scene: &Scene| -> f64 {
            let dir = scene.camera.ray_dir(32.0, 32.0, 64, 64);
            let hit = trace(scene, scene.camera.position, dir).unwrap();
            footprint_from_hit(scene, &hit, 32, 32, None).size
        };
        let s1 = size_at(&near);
        let s2 = size_at(&far);
        assert!(
            (s2 / s1 - 2.0).abs() < 0.01 * 2.0,
            "footprint should double with distance: {s1} -> {s2}"
        );
    }

    #[test]
    fn footprint_matches_analytic_projection() {
        // Fronto-parallel quad that exactly fills the view height: UV extent
        // divided by image width sets the per-pixel footprint.
        let mut scene = single_cloth_scene(1.0, 64);
        // at fov 45 and distance 1, the half-height visible is tan(22.5)
        let half = (45f64.to_radians() / 2.0).tan();
        if let Primitive::Quad { edge_u, edge_v, .. } = &mut scene.objects[0].primitive {
            *edge_u = Vec3::new(half, 0.0, 0.0);
            *edge_v = Vec3::new(0.0, half, 0.0);
        }
        let dir = scene.camera.ray_dir(32.0, 32.0, 64, 64);
        let hit = trace(&scene, scene.camera.position, dir).unwrap();
        let fp = footprint_from_hit(&scene, &hit, 32, 32, None);
        let expected = 10.0 / 64.0; // uv extent / image width
        assert!(
            (fp.size - expected).abs() < 0.01 * expected,
            "size {} vs {expected}",
            fp.size
        );
    }

    #[test]
    fn grazing_view_footprint_is_larger() {
        let scene = single_cloth_scene(2.0, 64);
        let mut grazing = scene.clone();
        grazing.camera.position = Vec3::new(0.0, 1.9, 0.6);
        let size_of = |s: &Scene| -> f64 {
            let dir = s.camera.ray_dir(32.0, 32.0, 64, 64);
            let hit = trace(s, s.camera.position, dir).unwrap();
            footprint_from_hit(s, &hit, 32, 32, None).size
        };
        // same hit distance regime, steeper angle -> larger footprint
        assert!(size_of(&grazing) > size_of(&scene) * 0.9);
    }

    #[test]
    fn edits_take_the_cheapest_sufficient_path() {
        let mut scene = single_cloth_scene(2.0, 8);
        let cfg = EncoderConfig { input_res: 16, widths: [3, 4, 5], mlp_width: 16, latent: 64, angular_width: 128 };
        let net = NetworkWeights::init(5, cfg);
        let mut cache = LatentCache::build(&scene, Some(&net)).unwrap();
        cache.reset_encode_count();

        // albedo edit: no encoder run
        let p = cache
            .edit_material(
                &mut scene,
                Some(&net),
                "cloth",
                &MaterialEdit { kd_weft: Some(Rgb::new(0.9, 0.4, 0.1)), ..MaterialEdit::default() },
            )
            .unwrap();
        assert_eq!(p, EditPath::NoEncode);
        assert_eq!(cache.encode_count(), 0);

        // roughness edit: re-encode, keep maps
        let z_before = cache.latent("cloth").unwrap().to_vec();
        let p = cache
            .edit_material(
                &mut scene,
                Some(&net),
                "cloth",
                &MaterialEdit { alpha: Some(0.8), ..MaterialEdit::default() },
            )
            .unwrap();
        assert_eq!(p, EditPath::ReEncode { maps_rebuilt: false });
        assert_eq!(cache.encode_count(), 1);
        assert_ne!(z_before, cache.latent("cloth").unwrap());

        // pattern edit: maps rebuilt
        let p = cache
            .edit_material(
                &mut scene,
                Some(&net),
                "cloth",
                &MaterialEdit { pattern: Some(WeaveKind::Twill(3)), ..MaterialEdit::default() },
            )
            .unwrap();
        assert_eq!(p, EditPath::ReEncode { maps_rebuilt: true });

        // no-op edit: untouched
        let count = cache.encode_count();
        let p = cache
            .edit_material(
                &mut scene,
                Some(&net),
                "cloth",
                &MaterialEdit { alpha: Some(0.8), ..MaterialEdit::default() },
            )
            .unwrap();
        assert_eq!(p, EditPath::NoChange);
        assert_eq!(cache.encode_count(), count);

        // out-of-range edit: rejected with the valid ranges in the message
        let err = cache
            .edit_material(
                &mut scene,
                Some(&net),
                "cloth",
                &MaterialEdit { beta: Some(9.0), ..MaterialEdit::default() },
            )
            .unwrap_err();
        assert!(err.to_string().contains("[0,2]"), "{err}");

        // incremental cache equals a cold rebuild
        let cold = LatentCache::build(&scene, Some(&net)).unwrap();
        let (a, _) = render(&scene, &cache, Some(&net), RenderMode::Neural, 0).unwrap();
        let (b, _) = render(&scene, &cold, Some(&net), RenderMode::Neural, 0).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn reference_variance_shrinks_with_spp() {
        let mut scene = single_cloth_scene(3.0, 32);
        scene.resolution = (32, 32);
        let cache = LatentCache::build(&scene, None).unwrap();
        let (gt, _) = render(&scene, &cache, None, RenderMode::Reference { spp: 128 }, 100).unwrap();
        let (one, _) = render(&scene, &cache, None, RenderMode::Reference { spp: 1 }, 5).unwrap();
        let (sixteen, _) =
            render(&scene, &cache, None, RenderMode::Reference { spp: 16 }, 6).unwrap();
        let m1 = image_mse(&one, &gt).unwrap();
        let m16 = image_mse(&sixteen, &gt).unwrap();
        assert!(m1 > m16, "1 spp mse {m1} should exceed 16 spp mse {m16}");
    }
}
