//! Scene description: analytic primitives with UV parameterizations, a pinhole
//! camera, one light, and per-object fabric materials. Scenes load from a
//! small declarative TOML format.

use crate::bsdf::FabricParams;
use crate::dataset::MaterialSpec;
use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::oracle::Kernel;
use crate::pattern::WeaveKind;
use serde::Deserialize;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
}

impl Camera {
    /// Orthonormal view basis (right, up, forward).
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = (self.look_at - self.position).normalized();
        let r = f.cross(self.up).normalized();
        let u = r.cross(f);
        (r, u, f)
    }

    /// World ray direction through a pixel center (or offset sub-position).
    pub fn ray_dir(&self, px: f64, py: f64, width: u32, height: u32) -> Vec3 {
        let (r, u, f) = self.basis();
        let tan_half = (self.fov_deg.to_radians() / 2.0).tan();
        let aspect = width as f64 / height as f64;
        let ndc_x = (px + 0.5) / width as f64 * 2.0 - 1.0;
        let ndc_y = 1.0 - (py + 0.5) / height as f64 * 2.0;
        (f + r * (ndc_x * tan_half * aspect) + u * (ndc_y * tan_half)).normalized()
    }
}

#[derive(Clone, Debug)]
pub enum Light {
    Point { position: Vec3, intensity: Rgb },
    Directional { direction: Vec3, intensity: Rgb },
}

impl Light {
    pub fn scale_intensity(&mut self, s: f64) {
        match self {
            Light::Point { intensity, .. } | Light::Directional { intensity, .. } => {
                *intensity = *intensity * s;
            }
        }
    }
}

/// A fabric material as placed in a scene: procedural spec plus albedos.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneMaterial {
    pub id: String,
    pub spec: MaterialSpec,
    pub kd_warp: Rgb,
    pub kd_weft: Rgb,
    pub ks_warp: Rgb,
    pub ks_weft: Rgb,
}

impl SceneMaterial {
    pub fn fabric_params(&self) -> FabricParams {
        FabricParams {
            alpha_warp: self.spec.alpha,
            alpha_weft: self.spec.alpha,
            beta_warp: self.spec.beta,
            beta_weft: self.spec.beta,
            kd_warp: self.kd_warp,
            kd_weft: self.kd_weft,
            ks_warp: self.ks_warp,
            ks_weft: self.ks_weft,
            w: self.spec.w,
            optical_depth: crate::bsdf::OPTICAL_DEPTH_DEFAULT,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Primitive {
    /// Parallelogram spanned by half-edge vectors around a center;
    /// UV covers [0, uv_repeats]^2.
    Quad { center: Vec3, edge_u: Vec3, edge_v: Vec3, uv_repeats: f64 },
    /// Sphere with lat-long UV scaled by uv_repeats.
    Sphere { center: Vec3, radius: f64, uv_repeats: f64 },
}

#[derive(Clone, Debug)]
pub struct SceneObject {
    pub primitive: Primitive,
    pub material: String,
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub camera: Camera,
    pub light: Light,
    pub materials: Vec<SceneMaterial>,
    pub objects: Vec<SceneObject>,
    pub resolution: (u32, u32),
    pub background: Rgb,
    pub kernel: Kernel,
}

impl Scene {
    pub fn material(&self, id: &str) -> Option<&SceneMaterial> {
        self.materials.iter().find(|m| m.id == id)
    }

    pub fn material_mut(&mut self, id: &str) -> Option<&mut SceneMaterial> {
        self.materials.iter_mut().find(|m| m.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        for o in &self.objects {
            if self.material(&o.material).is_none() {
                return Err(Error::Scene(format!(
                    "object references unknown material '{}'",
                    o.material
                )));
            }
        }
        for m in &self.materials {
            m.spec.validate()?;
            m.fabric_params().validate()?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scene> {
        let raw: RawScene =
            toml::from_str(text).map_err(|e| Error::Scene(format!("scene parse error: {e}")))?;
        raw.build()
    }
}

// ---- TOML shadow types ----

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn rgb(a: [f64; 3]) -> Rgb {
    Rgb::new(a[0], a[1], a[2])
}

#[derive(Deserialize)]
struct RawScene {
    #[serde(default = "default_resolution")]
    resolution: [u32; 2],
    #[serde(default)]
    background: Option<[f64; 3]>,
    #[serde(default)]
    kernel: Option<String>,
    camera: RawCamera,
    light: RawLight,
    #[serde(default)]
    materials: Vec<RawMaterial>,
    #[serde(default)]
    objects: Vec<RawObject>,
}

fn default_resolution() -> [u32; 2] {
    [256, 256]
}

#[derive(Deserialize)]
struct RawCamera {
    position: [f64; 3],
    look_at: [f64; 3],
    #[serde(default = "default_up")]
    up: [f64; 3],
    #[serde(default = "default_fov")]
    fov_deg: f64,
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn default_fov() -> f64 {
    40.0
}

#[derive(Deserialize)]
struct RawLight {
    kind: String,
    #[serde(default)]
    position: Option<[f64; 3]>,
    #[serde(default)]
    direction: Option<[f64; 3]>,
    intensity: [f64; 3],
}

#[derive(Deserialize)]
struct RawMaterial {
    id: String,
    pattern: String,
    #[serde(default)]
    twist_deg: f64,
    #[serde(default = "default_incline")]
    incline_deg: f64,
    alpha: f64,
    beta: f64,
    #[serde(default = "default_gap")]
    gap: f64,
    #[serde(default = "default_w")]
    w: f64,
    kd_warp: [f64; 3],
    kd_weft: [f64; 3],
    ks_warp: [f64; 3],
    ks_weft: [f64; 3],
}

fn default_incline() -> f64 {
    30.0
}

fn default_gap() -> f64 {
    0.2
}

fn default_w() -> f64 {
    0.5
}

#[derive(Deserialize)]
struct RawObject {
    kind: String,
    material: String,
    #[serde(default)]
    center: [f64; 3],
    #[serde(default)]
    edge_u: Option<[f64; 3]>,
    #[serde(default)]
    edge_v: Option<[f64; 3]>,
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default = "default_repeats")]
    uv_repeats: f64,
}

fn default_repeats() -> f64 {
    8.0
}

impl RawScene {
    fn build(self) -> Result<Scene> {
        let light = match self.light.kind.as_str() {
            "point" => Light::Point {
                position: v3(self.light.position.ok_or_else(|| {
                    Error::Scene("point light needs a position".into())
                })?),
                intensity: rgb(self.light.intensity),
            },
            "directional" => Light::Directional {
                direction: v3(self.light.direction.ok_or_else(|| {
                    Error::Scene("directional light needs a direction".into())
                })?)
                .normalized(),
                intensity: rgb(self.light.intensity),
            },
            other => return Err(Error::Scene(format!("unknown light kind '{other}'"))),
        };
        let kernel = match self.kernel.as_deref() {
            None | Some("box") => Kernel::Box,
            Some("gaussian") => Kernel::Gaussian,
            Some(other) => return Err(Error::Scene(format!("unknown kernel '{other}'"))),
        };
        let materials = self
            .materials
            .into_iter()
            .map(|m| {
                Ok(SceneMaterial {
                    spec: MaterialSpec {
                        pattern: WeaveKind::parse(&m.pattern)?,
                        twist_deg: m.twist_deg,
                        incline_deg: m.incline_deg,
                        alpha: m.alpha,
                        beta: m.beta,
                        gap: m.gap,
                        w: m.w,
                    },
                    id: m.id,
                    kd_warp: rgb(m.kd_warp),
                    kd_weft: rgb(m.kd_weft),
                    ks_warp: rgb(m.ks_warp),
                    ks_weft: rgb(m.ks_weft),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let objects = self
            .objects
            .into_iter()
            .map(|o| {
                let primitive = match o.kind.as_str() {
                    "quad" => Primitive::Quad {
                        center: v3(o.center),
                        edge_u: v3(o.edge_u.ok_or_else(|| {
                            Error::Scene("quad needs edge_u".into())
                        })?),
                        edge_v: v3(o.edge_v.ok_or_else(|| {
                            Error::Scene("quad needs edge_v".into())
                        })?),
                        uv_repeats: o.uv_repeats,
                    },
                    "sphere" => Primitive::Sphere {
                        center: v3(o.center),
                        radius: o
                            .radius
                            .ok_or_else(|| Error::Scene("sphere needs a radius".into()))?,
                        uv_repeats: o.uv_repeats,
                    },
                    other => return Err(Error::Scene(format!("unknown object kind '{other}'"))),
                };
                Ok(SceneObject { primitive, material: o.material })
            })
            .collect::<Result<Vec<_>>>()?;
        let scene = Scene {
            camera: Camera {
                position: v3(self.camera.position),
                look_at: v3(self.camera.look_at),
                up: v3(self.camera.up),
                fov_deg: self.camera.fov_deg,
            },
            light,
            materials,
            objects,
            resolution: (self.resolution[0], self.resolution[1]),
            background: self.background.map(rgb).unwrap_or(Rgb::BLACK),
            kernel,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// A fronto-parallel cloth quad filling the view at distance 1, used by tests
/// and the zoom-sweep tooling.
pub fn single_cloth_scene(camera_distance: f64, resolution: u32) -> Scene {
    Scene {
        camera: Camera {
            position: Vec3::new(0.0, 0.0, camera_distance),
            look_at: Vec3::ZERO,
            up: Vec3::Y,
            fov_deg: 45.0,
        },
        light: Light::Point {
            position: Vec3::new(1.0, 1.5, 2.5),
            intensity: Rgb::splat(25.0),
        },
        materials: vec![SceneMaterial {
            id: "cloth".into(),
            spec: MaterialSpec {
                pattern: WeaveKind::Plain,
                twist_deg: 0.0,
                incline_deg: 30.0,
                alpha: 0.5,
                beta: 1.0,
                gap: 0.2,
                w: 0.5,
            },
            kd_warp: Rgb::new(0.65, 0.2, 0.2),
            kd_weft: Rgb::new(0.75, 0.65, 0.55),
            ks_warp: Rgb::splat(0.35),
            ks_weft: Rgb::splat(0.3),
        }],
        objects: vec![SceneObject {
            primitive: Primitive::Quad {
                center: Vec3::ZERO,
                edge_u: Vec3::new(1.0, 0.0, 0.0),
                edge_v: Vec3::new(0.0, 1.0, 0.0),
                uv_repeats: 10.0,
            },
            material: "cloth".into(),
        }],
        resolution: (resolution, resolution),
        background: Rgb::BLACK,
        kernel: Kernel::Box,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_scene() {
        let text = r#"
resolution = [64, 48]

[camera]
position = [0.0, 0.0, 3.0]
look_at = [0.0, 0.0, 0.0]

[light]
kind = "point"
position = [1.0, 2.0, 3.0]
intensity = [10.0, 10.0, 10.0]

[[materials]]
id = "m"
pattern = "twill3"
alpha = 0.4
beta = 1.0
kd_warp = [0.5, 0.1, 0.1]
kd_weft = [0.8, 0.8, 0.8]
ks_warp = [0.3, 0.3, 0.3]
ks_weft = [0.2, 0.2, 0.2]

[[objects]]
kind = "quad"
material = "m"
center = [0.0, 0.0, 0.0]
edge_u = [1.0, 0.0, 0.0]
edge_v = [0.0, 1.0, 0.0]
uv_repeats = 4.0
"#;
        let scene = Scene::parse(text).unwrap();
        assert_eq!(scene.resolution, (64, 48));
        assert_eq!(scene.materials.len(), 1);
        assert_eq!(scene.materials[0].spec.pattern, WeaveKind::Twill(3));
        assert_eq!(scene.objects.len(), 1);
    }

    #[test]
    fn unknown_material_reference_is_rejected() {
        let text = r#"
[camera]
position = [0.0, 0.0, 3.0]
look_at = [0.0, 0.0, 0.0]

[light]
kind = "directional"
direction = [0.0, 0.0, -1.0]
intensity = [1.0, 1.0, 1.0]

[[objects]]
kind = "sphere"
material = "ghost"
center = [0.0, 0.0, 0.0]
radius = 1.0
"#;
        assert!(Scene::parse(text).is_err());
    }

    #[test]
    fn out_of_range_material_is_rejected() {
        let mut scene = single_cloth_scene(2.0, 32);
        scene.materials[0].spec.alpha = 0.01;
        assert!(scene.validate().is_err());
    }
}
