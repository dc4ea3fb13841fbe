//! Per-point fabric shading: a fiber-like microflake specular term plus a
//! blended Lambertian diffuse term, split into per-yarn diffuse/specular
//! components that are combined with albedos only at the very end.
//!
//! Directions live in the local shading frame with the macro surface normal
//! along +z. Outgoing directions are always above the surface; an incoming
//! direction with negative z selects the transmission branch.

use crate::error::{Error, Result};
use crate::math::{clamp_pos, Rgb, Vec3};
use crate::pattern::{TexelShading, YarnId};

/// Optical depth (thickness times density) of the microflake layer.
pub const OPTICAL_DEPTH_DEFAULT: f64 = 2.0;

/// Grazing-angle clamp applied to cosine denominators.
pub const COS_CLAMP: f64 = 1e-4;

/// Procedural fabric appearance parameters.
#[derive(Copy, Clone, Debug)]
pub struct FabricParams {
    pub alpha_warp: f64,
    pub alpha_weft: f64,
    pub beta_warp: f64,
    pub beta_weft: f64,
    pub kd_warp: Rgb,
    pub kd_weft: Rgb,
    pub ks_warp: Rgb,
    pub ks_weft: Rgb,
    /// Blend weight between the ply-normal and flat Lambertian terms.
    pub w: f64,
    pub optical_depth: f64,
}

impl Default for FabricParams {
    fn default() -> Self {
        FabricParams {
            alpha_warp: 0.5,
            alpha_weft: 0.5,
            beta_warp: 1.0,
            beta_weft: 1.0,
            kd_warp: Rgb::splat(0.5),
            kd_weft: Rgb::splat(0.5),
            ks_warp: Rgb::splat(0.5),
            ks_weft: Rgb::splat(0.5),
            w: 0.5,
            optical_depth: OPTICAL_DEPTH_DEFAULT,
        }
    }
}

impl FabricParams {
    pub fn validate(&self) -> Result<()> {
        let albedo_ok = |c: Rgb| {
            (0.0..=1.0).contains(&c.r) && (0.0..=1.0).contains(&c.g) && (0.0..=1.0).contains(&c.b)
        };
        for (name, c) in [
            ("kd_warp", self.kd_warp),
            ("kd_weft", self.kd_weft),
            ("ks_warp", self.ks_warp),
            ("ks_weft", self.ks_weft),
        ] {
            if !albedo_ok(c) {
                return Err(Error::InvalidParameter(format!(
                    "{name} channels must lie in [0, 1]"
                )));
            }
        }
        for (name, a) in [("alpha_warp", self.alpha_warp), ("alpha_weft", self.alpha_weft)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} {a} outside (0, 1]")));
            }
        }
        for (name, b) in [("beta_warp", self.beta_warp), ("beta_weft", self.beta_weft)] {
            if b < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} {b} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::InvalidParameter(format!("w {} outside [0, 1]", self.w)));
        }
        Ok(())
    }

    pub fn alpha(&self, yarn: YarnId) -> f64 {
        match yarn {
            YarnId::Weft => self.alpha_weft,
            _ => self.alpha_warp,
        }
    }

    /// The single height scaling used by geometry operations. The sampling
    /// tables draw one shared value; evaluating with split values has no
    /// single height field to march.
    pub fn uniform_beta(&self) -> f64 {
        debug_assert!(
            (self.beta_warp - self.beta_weft).abs() < 1e-12,
            "geometry operations need beta_warp == beta_weft"
        );
        self.beta_warp
    }
}

/// Microflake frame: flakes oriented along `axis` with roughness `alpha`.
/// The orientation matrix is S = I + (alpha^2 - 1) axis axis^T (identity
/// across the fiber, alpha^2 along it), which keeps its quadratic forms in
/// closed form.
#[derive(Copy, Clone, Debug)]
pub struct FiberFrame {
    pub axis: Vec3,
    pub alpha: f64,
}

impl FiberFrame {
    pub fn new(axis: Vec3, alpha: f64) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!("roughness {alpha} must be > 0")));
        }
        Ok(FiberFrame { axis: axis.normalized(), alpha })
    }

    /// The dense 3x3 orientation matrix, for tests of its spectrum.
    pub fn s_matrix(&self) -> [[f64; 3]; 3] {
        let a = self.axis;
        let d = self.alpha * self.alpha - 1.0;
        let mut m = [[0.0; 3]; 3];
        let av = [a.x, a.y, a.z];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, item) in row.iter_mut().enumerate() {
                *item = if i == j { 1.0 } else { 0.0 } + d * av[i] * av[j];
            }
        }
        m
    }

    /// sigma(w) = sqrt(w^T S w): projected microflake area along unit `w`.
    #[inline]
    pub fn projected_area(&self, w: Vec3) -> f64 {
        let t = w.dot(self.axis);
        (w.length_squared() + (self.alpha * self.alpha - 1.0) * t * t)
            .max(0.0)
            .sqrt()
    }

    /// q(h) = h^T S^{-1} h for unit `h`.
    #[inline]
    fn inv_quadratic(&self, h: Vec3) -> f64 {
        let t = h.dot(self.axis);
        h.length_squared() + (1.0 / (self.alpha * self.alpha) - 1.0) * t * t
    }
}

/// An incoming/outgoing direction pair in the local shading frame.
#[derive(Copy, Clone, Debug)]
pub struct DirectionPair {
    pub wi: Vec3,
    pub wo: Vec3,
}

impl DirectionPair {
    pub fn new(wi: Vec3, wo: Vec3) -> Result<Self> {
        for (name, w) in [("wi", wi), ("wo", wo)] {
            if (w.length() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be unit length, |{name}| = {}",
                    w.length()
                )));
            }
        }
        if wo.z <= 0.0 {
            return Err(Error::InvalidParameter(
                "outgoing direction must point above the surface".into(),
            ));
        }
        Ok(DirectionPair { wi, wo })
    }

    #[inline]
    pub fn is_transmission(&self) -> bool {
        self.wi.z < 0.0
    }

    /// Incoming direction folded into the upper hemisphere; transmission is
    /// evaluated on the mirrored direction throughout.
    #[inline]
    pub fn wi_folded(&self) -> Vec3 {
        if self.is_transmission() {
            self.wi.mirror_z()
        } else {
            self.wi
        }
    }
}

/// The four aggregated scalars: per-yarn diffuse (C) and specular (S).
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct ComponentQuad {
    pub c_warp: f64,
    pub c_weft: f64,
    pub s_warp: f64,
    pub s_weft: f64,
}

impl ComponentQuad {
    pub const ZERO: ComponentQuad = ComponentQuad {
        c_warp: 0.0,
        c_weft: 0.0,
        s_warp: 0.0,
        s_weft: 0.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.c_warp, self.c_weft, self.s_warp, self.s_weft]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ComponentQuad { c_warp: a[0], c_weft: a[1], s_warp: a[2], s_weft: a[3] }
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Microflake distribution D(h) = 1 / (pi * alpha * q^2) with q = h^T S^{-1} h.
pub fn microflake_density(h: Vec3, frame: &FiberFrame, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("roughness {alpha} must be > 0")));
    }
    let frame = FiberFrame { axis: frame.axis, alpha };
    let q = frame.inv_quadratic(h);
    Ok(1.0 / (std::f64::consts::PI * alpha * q * q))
}

/// Smith shadowing term Lambda(w) = sigma(w) / cos(theta), with the cosine
/// taken against the frame's +z and clamped away from grazing.
pub fn smith_lambda(w: Vec3, frame: &FiberFrame) -> f64 {
    frame.projected_area(w) / w.z.abs().max(COS_CLAMP)
}

fn smith_lambda_about(w: Vec3, normal: Vec3, frame: &FiberFrame) -> f64 {
    frame.projected_area(w) / clamp_pos(w.dot(normal)).max(COS_CLAMP)
}

/// Attenuation through the flake layer:
/// G = (1 - e^{-T rho (Li + Lo)}) / (Li + Lo), in (0, T rho].
pub fn attenuation_g(lambda_i: f64, lambda_o: f64, optical_depth: f64) -> f64 {
    let s = lambda_i + lambda_o;
    if s < 1e-9 {
        optical_depth
    } else {
        -(-optical_depth * s).exp_m1() / s
    }
}

/// Unweighted specular kernel D(h) G / (4 cos_i cos_o) in the ply frame built
/// from (n_p, t_p). Specular albedo is applied later in [`combine`].
pub fn specular_point(pair: &DirectionPair, n_p: Vec3, t_p: Vec3, alpha: f64, optical_depth: f64) -> f64 {
    let wi = pair.wi_folded();
    let wo = pair.wo;
    let cos_i = wi.dot(n_p);
    let cos_o = wo.dot(n_p);
    if cos_i <= 0.0 || cos_o <= 0.0 {
        return 0.0;
    }
    let frame = FiberFrame { axis: t_p, alpha };
    let h = (wi + wo).normalized();
    let q = frame.inv_quadratic(h);
    let d = 1.0 / (std::f64::consts::PI * alpha * q * q);
    let li = smith_lambda_about(wi, n_p, &frame);
    let lo = smith_lambda_about(wo, n_p, &frame);
    let g = attenuation_g(li, lo, optical_depth);
    d * g / (4.0 * cos_i.max(COS_CLAMP) * cos_o.max(COS_CLAMP))
}

/// Blended Lambertian kernel (diffuse albedo applied later):
/// w <wi . n_p> / (pi <wi . n_s>) + (1 - w) / pi for reflection; the flat
/// term alone for transmission.
pub fn diffuse_point(pair: &DirectionPair, n_p: Vec3, w: f64) -> f64 {
    let inv_pi = std::f64::consts::FRAC_1_PI;
    if pair.is_transmission() {
        return (1.0 - w) * inv_pi;
    }
    let num = clamp_pos(pair.wi.dot(n_p));
    let den = clamp_pos(pair.wi.z).max(COS_CLAMP);
    w * num / den * inv_pi + (1.0 - w) * inv_pi
}

/// Route the point diffuse/specular values into the slots of the texel's yarn.
/// Gap texels have no surface response.
pub fn eval_point_components(
    texel: &TexelShading,
    pair: &DirectionPair,
    params: &FabricParams,
) -> ComponentQuad {
    if texel.yarn == YarnId::Gap {
        return ComponentQuad::ZERO;
    }
    let alpha = params.alpha(texel.yarn);
    let c = diffuse_point(pair, texel.normal, params.w);
    let s = specular_point(pair, texel.normal, texel.orientation, alpha, params.optical_depth);
    match texel.yarn {
        YarnId::Warp => ComponentQuad { c_warp: c, s_warp: s, ..ComponentQuad::ZERO },
        YarnId::Weft => ComponentQuad { c_weft: c, s_weft: s, ..ComponentQuad::ZERO },
        YarnId::Gap => unreachable!(),
    }
}

/// Final shading value: albedo-weighted sum of the four components.
pub fn combine(quad: &ComponentQuad, params: &FabricParams) -> Rgb {
    params.kd_warp * quad.c_warp
        + params.kd_weft * quad.c_weft
        + params.ks_warp * quad.s_warp
        + params.ks_weft * quad.s_weft
}
