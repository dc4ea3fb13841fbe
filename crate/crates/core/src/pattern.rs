//! Procedural weave patterns and per-texel yarn geometry.
//!
//! A weave is a binary interlacing grid (which yarn family is on top at each
//! crossing). From the grid we synthesize tileable per-texel maps for one
//! repeat: ply normal, ply orientation, height and yarn identity. Yarns are
//! modeled as bent cylinders: a cosine cross-section lobe across the yarn
//! width, and a smoothstep centerline that dips/rises at over/under crossings
//! with a peak tilt equal to the inclination angle.

use crate::error::{Error, Result};
use crate::math::{clamp_pos, smoothstep, smoothstep_deriv, wrap01, Vec3};
use std::io::{Read, Write};
use std::path::Path;

const BLOB_MAGIC: &[u8; 4] = b"WWGM";
const BLOB_VERSION: u32 = 1;

/// Which yarn family covers a crossing.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum WeaveCell {
    WarpOver,
    WeftOver,
}

/// Per-texel yarn identity. Warp yarns run along +v, weft yarns along +u.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum YarnId {
    Warp,
    Weft,
    Gap,
}

impl YarnId {
    pub fn to_u8(self) -> u8 {
        match self {
            YarnId::Warp => 0,
            YarnId::Weft => 1,
            YarnId::Gap => 2,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(YarnId::Warp),
            1 => Ok(YarnId::Weft),
            2 => Ok(YarnId::Gap),
            other => Err(Error::BadFormat(format!("unknown yarn id {other}"))),
        }
    }

    /// Nominal in-plane yarn axis.
    pub fn axis(self) -> Vec3 {
        match self {
            YarnId::Warp => Vec3::Y,
            _ => Vec3::X,
        }
    }
}

/// The named weave families. The seven stock patterns are
/// plain, twill 3/5/8 and satin 5x5 / 8x8 / 5x10.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum WeaveKind {
    Plain,
    Twill(u32),
    /// `ends` warp columns repeating over `picks` weft rows.
    Satin { ends: u32, picks: u32 },
}

impl WeaveKind {
    /// The stock pattern set, indexed 0..=6.
    pub const COUNT: usize = 7;

    pub fn from_index(w: usize) -> Result<Self> {
        Ok(match w {
            0 => WeaveKind::Plain,
            1 => WeaveKind::Twill(3),
            2 => WeaveKind::Twill(5),
            3 => WeaveKind::Twill(8),
            4 => WeaveKind::Satin { ends: 5, picks: 5 },
            5 => WeaveKind::Satin { ends: 8, picks: 8 },
            6 => WeaveKind::Satin { ends: 5, picks: 10 },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "pattern index {other} outside 0..=6"
                )))
            }
        })
    }

    pub fn index(self) -> Option<usize> {
        let set: [WeaveKind; 7] = [
            WeaveKind::Plain,
            WeaveKind::Twill(3),
            WeaveKind::Twill(5),
            WeaveKind::Twill(8),
            WeaveKind::Satin { ends: 5, picks: 5 },
            WeaveKind::Satin { ends: 8, picks: 8 },
            WeaveKind::Satin { ends: 5, picks: 10 },
        ];
        set.iter().position(|k| *k == self)
    }

    pub fn parse(name: &str) -> Result<Self> {
        let n = name.trim().to_ascii_lowercase();
        match n.as_str() {
            "plain" => return Ok(WeaveKind::Plain),
            "twill3" => return Ok(WeaveKind::Twill(3)),
            "twill5" => return Ok(WeaveKind::Twill(5)),
            "twill8" => return Ok(WeaveKind::Twill(8)),
            "satin5" | "satin5x5" => return Ok(WeaveKind::Satin { ends: 5, picks: 5 }),
            "satin8" | "satin8x8" => return Ok(WeaveKind::Satin { ends: 8, picks: 8 }),
            "satin5x10" => return Ok(WeaveKind::Satin { ends: 5, picks: 10 }),
            _ => {}
        }
        if let Some(rest) = n.strip_prefix("twill") {
            if let Ok(k) = rest.parse::<u32>() {
                return Ok(WeaveKind::Twill(k));
            }
        }
        if let Some(rest) = n.strip_prefix("satin") {
            if let Some((a, b)) = rest.split_once('x') {
                if let (Ok(e), Ok(p)) = (a.parse::<u32>(), b.parse::<u32>()) {
                    return Ok(WeaveKind::Satin { ends: e, picks: p });
                }
            }
        }
        Err(Error::InvalidParameter(format!("unknown weave pattern '{name}'")))
    }

    pub fn name(self) -> String {
        match self {
            WeaveKind::Plain => "plain".to_owned(),
            WeaveKind::Twill(k) => format!("twill{k}"),
            WeaveKind::Satin { ends, picks } => format!("satin{ends}x{picks}"),
        }
    }

    /// Smallest texture resolution >= `target` that is a multiple of the
    /// repeat dimensions (the synthesis precondition).
    pub fn default_resolution(self, target: u32) -> u32 {
        let (rows, cols) = match self {
            WeaveKind::Plain => (2, 2),
            WeaveKind::Twill(k) => (k, k),
            WeaveKind::Satin { ends, picks } => (picks, ends),
        };
        let l = lcm(rows, cols).max(1);
        target.div_ceil(l) * l
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u32, b: u32) -> u32 {
    a / gcd(a, b) * b
}

/// Classical satin move number: the smallest counter 2..=n-2 coprime with n
/// that is not 1 or n-1. None exists below five ends (and for 6).
fn satin_move(ends: u32) -> Option<u32> {
    (2..ends.saturating_sub(1)).find(|&s| gcd(s, ends) == 1 && s != ends - 1)
}

/// Binary interlacing grid for one repeat. `rows` index weft yarns along v,
/// `cols` index warp yarns along u; lookup tiles with modular indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeaveMatrix {
    pub rows: u32,
    pub cols: u32,
    cells: Vec<WeaveCell>,
}

impl WeaveMatrix {
    pub fn at(&self, row: i64, col: i64) -> WeaveCell {
        let r = row.rem_euclid(self.rows as i64) as usize;
        let c = col.rem_euclid(self.cols as i64) as usize;
        self.cells[r * self.cols as usize + c]
    }

    /// True when every row interlaces (contains both cell kinds).
    pub fn rows_interlace(&self) -> bool {
        (0..self.rows as i64).all(|r| {
            let mut warp = false;
            let mut weft = false;
            for c in 0..self.cols as i64 {
                match self.at(r, c) {
                    WeaveCell::WarpOver => warp = true,
                    WeaveCell::WeftOver => weft = true,
                }
            }
            warp && weft
        })
    }
}

/// Canonical interlacing grid for the named weave.
pub fn build_weave_matrix(kind: WeaveKind) -> Result<WeaveMatrix> {
    let range_ok = |n: u32| (2..=16).contains(&n);
    match kind {
        WeaveKind::Plain => {
            let cells = vec![
                WeaveCell::WarpOver,
                WeaveCell::WeftOver,
                WeaveCell::WeftOver,
                WeaveCell::WarpOver,
            ];
            Ok(WeaveMatrix { rows: 2, cols: 2, cells })
        }
        WeaveKind::Twill(n) => {
            if !range_ok(n) {
                return Err(Error::UnsupportedWeave(format!(
                    "twill size {n} outside 2..=16"
                )));
            }
            let mut cells = Vec::with_capacity((n * n) as usize);
            for r in 0..n {
                for c in 0..n {
                    // one warp-over per row, shifted by one per row
                    cells.push(if c == r {
                        WeaveCell::WarpOver
                    } else {
                        WeaveCell::WeftOver
                    });
                }
            }
            Ok(WeaveMatrix { rows: n, cols: n, cells })
        }
        WeaveKind::Satin { ends, picks } => {
            if !range_ok(ends) || !range_ok(picks) {
                return Err(Error::UnsupportedWeave(format!(
                    "satin size {ends}x{picks} outside 2..=16"
                )));
            }
            let Some(mv) = satin_move(ends) else {
                return Err(Error::UnsupportedWeave(format!(
                    "no valid satin move number for {ends} ends"
                )));
            };
            if picks % ends != 0 {
                return Err(Error::UnsupportedWeave(format!(
                    "satin picks {picks} must be a multiple of ends {ends} to tile seamlessly"
                )));
            }
            let mut cells = Vec::with_capacity((ends * picks) as usize);
            for r in 0..picks {
                let over = (r * mv) % ends;
                for c in 0..ends {
                    cells.push(if c == over {
                        WeaveCell::WarpOver
                    } else {
                        WeaveCell::WeftOver
                    });
                }
            }
            Ok(WeaveMatrix { rows: picks, cols: ends, cells })
        }
    }
}

/// Synthesis parameters for one repeat of geometry maps.
#[derive(Copy, Clone, Debug)]
pub struct MapParams {
    /// Twist angle psi in degrees; rotates the ply orientation about the normal.
    pub twist_deg: f64,
    /// Inclination angle u in degrees; the peak yarn tilt at crossings.
    pub incline_deg: f64,
    /// Fraction of each yarn band occupied by the inter-yarn gap, in [0, 1).
    pub gap: f64,
    /// Height field scaling baked into the stored normals/orientations.
    pub beta: f64,
    /// Texels per repeat edge; must be a multiple of the weave dimensions.
    pub resolution: u32,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            twist_deg: 0.0,
            incline_deg: 30.0,
            gap: 0.2,
            beta: 1.0,
            resolution: 512,
        }
    }
}

/// Shading data of one texel, evaluated at some height scaling.
#[derive(Copy, Clone, Debug)]
pub struct TexelShading {
    pub normal: Vec3,
    pub orientation: Vec3,
    pub yarn: YarnId,
}

/// Per-texel geometry of one repeat plus the synthesis metadata needed to
/// re-evaluate normals at a different height scaling.
#[derive(Clone, Debug)]
pub struct GeometryMaps {
    pub resolution: u32,
    pub rows: u32,
    pub cols: u32,
    pub gap: f64,
    pub beta: f64,
    pub twist_deg: f64,
    pub incline_deg: f64,
    /// Ply normals at the synthesis beta, unit length, +z hemisphere.
    pub normal: Vec<[f32; 3]>,
    /// Ply orientations at the synthesis beta, unit length, tangent to the ply.
    pub orientation: Vec<[f32; 3]>,
    /// Heights in yarn-radius units (gap texels sit in a trench below all yarn).
    pub height: Vec<f32>,
    pub yarn_id: Vec<YarnId>,
    /// Base (beta = 1) height gradient in texture units per texture unit.
    grad: Vec<[f32; 2]>,
    /// Base heights in texture units, for visibility marching.
    height_tex: Vec<f32>,
    height_tex_max: f32,
    /// Per-block maxima of `height_tex`, the acceleration mip for marching.
    coarse_max: Vec<f32>,
    coarse_cells: u32,
    weave: WeaveMatrix,
}

/// Texels per coarse acceleration block edge.
pub const COARSE_BLOCK: u32 = 16;

fn build_coarse_max(height_tex: &[f32], l_t: u32) -> (Vec<f32>, u32) {
    let cells = l_t.div_ceil(COARSE_BLOCK);
    let mut coarse = vec![f32::NEG_INFINITY; (cells as usize) * (cells as usize)];
    for iy in 0..l_t {
        let cy = iy / COARSE_BLOCK;
        for ix in 0..l_t {
            let cx = ix / COARSE_BLOCK;
            let c = &mut coarse[(cy * cells + cx) as usize];
            let h = height_tex[(iy as usize) * (l_t as usize) + ix as usize];
            if h > *c {
                *c = h;
            }
        }
    }
    (coarse, cells)
}

/// Continuous-coordinate geometry evaluator backing the texel maps; kept
/// separate so tests can probe off-texel locations.
struct YarnField<'a> {
    weave: &'a WeaveMatrix,
    gap: f64,
    /// Yarn band half-width (radius) in texture units, per family.
    radius_warp: f64,
    radius_weft: f64,
    /// Centerline amplitude in yarn-radius units, per family.
    amp_warp: f64,
    amp_weft: f64,
    gap_height_radius_units: f64,
    gap_radius: f64,
}

struct FieldSample {
    yarn: YarnId,
    /// Height in the texel's yarn-radius units.
    height_radius_units: f64,
    /// Height in texture units.
    height_tex: f64,
    /// Analytic gradient of the texture-unit height wrt (u, v).
    grad: (f64, f64),
}

impl<'a> YarnField<'a> {
    fn new(weave: &'a WeaveMatrix, gap: f64, incline_deg: f64) -> Self {
        let rows = weave.rows as f64;
        let cols = weave.cols as f64;
        let radius_warp = (1.0 - gap) / (2.0 * cols);
        let radius_weft = (1.0 - gap) / (2.0 * rows);
        // Amplitude so that the peak centerline slope (in texture units)
        // equals tan(inclination): slope = r * A * 3 * cells_along.
        let tan_u = incline_deg.to_radians().tan();
        let amp_warp = tan_u / (3.0 * radius_warp * rows);
        let amp_weft = tan_u / (3.0 * radius_weft * cols);
        let lowest = -(radius_warp * amp_warp).max(radius_weft * amp_weft);
        let gap_radius = radius_warp.min(radius_weft);
        let gap_height_tex = lowest - 0.1 * gap_radius;
        YarnField {
            weave,
            gap,
            radius_warp,
            radius_weft,
            amp_warp,
            amp_weft,
            gap_height_radius_units: gap_height_tex / gap_radius,
            gap_radius,
        }
    }

    fn radius(&self, yarn: YarnId) -> f64 {
        match yarn {
            YarnId::Warp => self.radius_warp,
            YarnId::Weft => self.radius_weft,
            YarnId::Gap => self.gap_radius,
        }
    }

    /// Centerline over/under blend and derivative at `t` (cell units along the
    /// yarn). States come from the weave matrix along the yarn's own axis.
    fn centerline(&self, t: f64, state: impl Fn(i64) -> f64) -> (f64, f64) {
        // Transition bands span cell-center to cell-center, meeting with zero
        // slope; boundary j separates cells j-1 and j.
        let j = t.round();
        let x = t - j + 0.5;
        let prev = state(j as i64 - 1);
        let next = state(j as i64);
        let value = prev + (next - prev) * smoothstep(x);
        let deriv = (next - prev) * smoothstep_deriv(x);
        (value, deriv)
    }

    fn sample(&self, u: f64, v: f64) -> FieldSample {
        let u = wrap01(u);
        let v = wrap01(v);
        let rows = self.weave.rows as f64;
        let cols = self.weave.cols as f64;
        let col = (u * cols).floor() as i64;
        let row = (v * rows).floor() as i64;
        let owner = self.weave.at(row, col);

        // Lateral coordinate across the visible yarn's band, in cell units.
        let (lateral, along, radius, amp) = match owner {
            WeaveCell::WarpOver => {
                let xi = u * cols - (col as f64) - 0.5;
                (xi, v * rows, self.radius_warp, self.amp_warp)
            }
            WeaveCell::WeftOver => {
                let xi = v * rows - (row as f64) - 0.5;
                (xi, u * cols, self.radius_weft, self.amp_weft)
            }
        };

        let half_span = (1.0 - self.gap) / 2.0;
        if lateral.abs() > half_span {
            return FieldSample {
                yarn: YarnId::Gap,
                height_radius_units: self.gap_height_radius_units,
                height_tex: self.gap_height_radius_units * self.gap_radius,
                grad: (0.0, 0.0),
            };
        }

        let s_prime = lateral / (1.0 - self.gap);
        let lobe = (std::f64::consts::PI * s_prime).cos();
        let dlobe_dlateral =
            -std::f64::consts::PI * (std::f64::consts::PI * s_prime).sin() / (1.0 - self.gap);

        let (cl, dcl_dt) = match owner {
            WeaveCell::WarpOver => self.centerline(along, |k| {
                if self.weave.at(k, col) == WeaveCell::WarpOver {
                    1.0
                } else {
                    -1.0
                }
            }),
            WeaveCell::WeftOver => self.centerline(along, |k| {
                if self.weave.at(row, k) == WeaveCell::WeftOver {
                    1.0
                } else {
                    -1.0
                }
            }),
        };

        let h_units = lobe + amp * cl;
        // Chain rule into texture units: lateral and along are in cell units.
        let (gu, gv) = match owner {
            WeaveCell::WarpOver => (
                radius * dlobe_dlateral * cols,
                radius * amp * dcl_dt * rows,
            ),
            WeaveCell::WeftOver => (
                radius * amp * dcl_dt * cols,
                radius * dlobe_dlateral * rows,
            ),
        };

        FieldSample {
            yarn: match owner {
                WeaveCell::WarpOver => YarnId::Warp,
                WeaveCell::WeftOver => YarnId::Weft,
            },
            height_radius_units: h_units,
            height_tex: radius * h_units,
            grad: (gu, gv),
        }
    }
}

/// Shading normal of the beta-scaled height field from the base gradient.
pub fn normal_from_gradient(gx: f64, gy: f64, beta: f64) -> Vec3 {
    Vec3::new(-beta * gx, -beta * gy, 1.0).normalized()
}

/// Ply orientation: the nominal yarn axis twisted about the normal, then
/// re-orthogonalized against it.
pub fn orientation_from_normal(yarn: YarnId, normal: Vec3, twist_deg: f64) -> Vec3 {
    let axis = yarn.axis().rotated_about(normal, twist_deg.to_radians());
    (axis - normal * axis.dot(normal)).normalized()
}

/// Build the per-texel geometry maps for one repeat of `weave`.
pub fn synthesize_geometry_maps(weave: &WeaveMatrix, params: &MapParams) -> Result<GeometryMaps> {
    if !(0.0..1.0).contains(&params.gap) {
        return Err(Error::InvalidParameter(format!(
            "gap ratio {} outside [0, 1)",
            params.gap
        )));
    }
    if params.beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "height scaling beta {} must be >= 0",
            params.beta
        )));
    }
    let l_t = params.resolution;
    if l_t == 0 || l_t % weave.rows != 0 || l_t % weave.cols != 0 {
        return Err(Error::InvalidParameter(format!(
            "resolution {l_t} is not a positive multiple of the weave dimensions {}x{}",
            weave.rows, weave.cols
        )));
    }

    let field = YarnField::new(weave, params.gap, params.incline_deg);
    let n = (l_t as usize) * (l_t as usize);
    let mut maps = GeometryMaps {
        resolution: l_t,
        rows: weave.rows,
        cols: weave.cols,
        gap: params.gap,
        beta: params.beta,
        twist_deg: params.twist_deg,
        incline_deg: params.incline_deg,
        normal: Vec::with_capacity(n),
        orientation: Vec::with_capacity(n),
        height: Vec::with_capacity(n),
        yarn_id: Vec::with_capacity(n),
        grad: Vec::with_capacity(n),
        height_tex: Vec::with_capacity(n),
        height_tex_max: f32::NEG_INFINITY,
        coarse_max: Vec::new(),
        coarse_cells: 0,
        weave: weave.clone(),
    };

    for iy in 0..l_t {
        let v = (iy as f64 + 0.5) / l_t as f64;
        for ix in 0..l_t {
            let u = (ix as f64 + 0.5) / l_t as f64;
            let s = field.sample(u, v);
            let (normal, orientation) = if s.yarn == YarnId::Gap {
                (Vec3::Z, Vec3::X)
            } else {
                let nrm = normal_from_gradient(s.grad.0, s.grad.1, params.beta);
                let ori = orientation_from_normal(s.yarn, nrm, params.twist_deg);
                (nrm, ori)
            };
            maps.normal
                .push([normal.x as f32, normal.y as f32, normal.z as f32]);
            maps.orientation
                .push([orientation.x as f32, orientation.y as f32, orientation.z as f32]);
            maps.height.push(s.height_radius_units as f32);
            maps.yarn_id.push(s.yarn);
            maps.grad.push([s.grad.0 as f32, s.grad.1 as f32]);
            let ht = s.height_tex as f32;
            maps.height_tex.push(ht);
            maps.height_tex_max = maps.height_tex_max.max(ht);
        }
    }
    let (coarse, cells) = build_coarse_max(&maps.height_tex, l_t);
    maps.coarse_max = coarse;
    maps.coarse_cells = cells;
    Ok(maps)
}

impl GeometryMaps {
    #[inline]
    pub fn texel_count(&self) -> usize {
        (self.resolution as usize) * (self.resolution as usize)
    }

    /// Texel index for a wrapped texture coordinate.
    #[inline]
    pub fn texel_of_uv(&self, u: f64, v: f64) -> usize {
        let l = self.resolution as usize;
        let ix = ((wrap01(u) * l as f64) as usize).min(l - 1);
        let iy = ((wrap01(v) * l as f64) as usize).min(l - 1);
        iy * l + ix
    }

    #[inline]
    pub fn index(&self, ix: u32, iy: u32) -> usize {
        (iy as usize) * (self.resolution as usize) + ix as usize
    }

    /// Texture-unit base height of a texel (multiply by beta for the scaled field).
    #[inline]
    pub fn height_tex(&self, idx: usize) -> f64 {
        self.height_tex[idx] as f64
    }

    #[inline]
    pub fn height_tex_max(&self) -> f64 {
        self.height_tex_max as f64
    }

    /// Acceleration mip: max base height over the coarse block holding texel
    /// (ix, iy), plus the block edge length in coarse cells.
    #[inline]
    pub fn coarse_max_at(&self, ix: u32, iy: u32) -> f64 {
        let cx = ix / COARSE_BLOCK;
        let cy = iy / COARSE_BLOCK;
        self.coarse_max[(cy * self.coarse_cells + cx) as usize] as f64
    }

    #[inline]
    pub fn coarse_cells(&self) -> u32 {
        self.coarse_cells
    }

    /// Shading normal/orientation of a texel re-evaluated at `beta`.
    pub fn shading_at(&self, idx: usize, beta: f64) -> TexelShading {
        let yarn = self.yarn_id[idx];
        if yarn == YarnId::Gap {
            return TexelShading {
                normal: Vec3::Z,
                orientation: Vec3::X,
                yarn,
            };
        }
        let g = self.grad[idx];
        let normal = normal_from_gradient(g[0] as f64, g[1] as f64, beta);
        let orientation = orientation_from_normal(yarn, normal, self.twist_deg);
        TexelShading { normal, orientation, yarn }
    }

    /// Continuous-coordinate variant of [`Self::shading_at`]; exact at texel
    /// centers, used by tests and debugging tools.
    pub fn shading_at_uv(&self, u: f64, v: f64, beta: f64) -> TexelShading {
        let field = YarnField::new(&self.weave, self.gap, self.incline_deg);
        let s = field.sample(u, v);
        if s.yarn == YarnId::Gap {
            return TexelShading {
                normal: Vec3::Z,
                orientation: Vec3::X,
                yarn: YarnId::Gap,
            };
        }
        let normal = normal_from_gradient(s.grad.0, s.grad.1, beta);
        let orientation = orientation_from_normal(s.yarn, normal, self.twist_deg);
        TexelShading { normal, orientation, yarn: s.yarn }
    }

    /// Continuous base height in texture units (beta = 1).
    pub fn height_tex_at_uv(&self, u: f64, v: f64) -> f64 {
        let field = YarnField::new(&self.weave, self.gap, self.incline_deg);
        field.sample(u, v).height_tex
    }

    pub fn yarn_radius(&self, yarn: YarnId) -> f64 {
        YarnField::new(&self.weave, self.gap, self.incline_deg).radius(yarn)
    }

    pub fn weave(&self) -> &WeaveMatrix {
        &self.weave
    }

    /// Serialize to the flat binary layout: `WWGM` magic, version, resolution,
    /// then row-major texel records (normal, orientation, height as f32 LE plus
    /// a yarn-id byte), then a fixed metadata footer.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.texel_count() * 29 + 24);
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.extend_from_slice(&self.resolution.to_le_bytes());
        for i in 0..self.texel_count() {
            for c in self.normal[i] {
                out.extend_from_slice(&c.to_le_bytes());
            }
            for c in self.orientation[i] {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.extend_from_slice(&self.height[i].to_le_bytes());
            out.push(self.yarn_id[i].to_u8());
        }
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        out.extend_from_slice(&(self.gap as f32).to_le_bytes());
        out.extend_from_slice(&(self.beta as f32).to_le_bytes());
        out.extend_from_slice(&(self.twist_deg as f32).to_le_bytes());
        out.extend_from_slice(&(self.incline_deg as f32).to_le_bytes());
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<GeometryMaps> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BLOB_MAGIC {
            return Err(Error::BadFormat("geometry map magic mismatch".into()));
        }
        let version = read_u32(&mut r)?;
        if version != BLOB_VERSION {
            return Err(Error::BadFormat(format!(
                "unsupported geometry map version {version}"
            )));
        }
        let l_t = read_u32(&mut r)?;
        let n = (l_t as usize) * (l_t as usize);
        let need = n * 29 + 24;
        if r.len() < need {
            return Err(Error::BadFormat(format!(
                "geometry map truncated: need {need} bytes of payload, have {}",
                r.len()
            )));
        }
        let mut normal = Vec::with_capacity(n);
        let mut orientation = Vec::with_capacity(n);
        let mut height = Vec::with_capacity(n);
        let mut yarn_id = Vec::with_capacity(n);
        for _ in 0..n {
            normal.push([read_f32(&mut r)?, read_f32(&mut r)?, read_f32(&mut r)?]);
            orientation.push([read_f32(&mut r)?, read_f32(&mut r)?, read_f32(&mut r)?]);
            height.push(read_f32(&mut r)?);
            let mut b = [0u8; 1];
            r.read_exact(&mut b)?;
            yarn_id.push(YarnId::from_u8(b[0])?);
        }
        let rows = read_u32(&mut r)?;
        let cols = read_u32(&mut r)?;
        let gap = read_f32(&mut r)? as f64;
        let beta = read_f32(&mut r)? as f64;
        let twist_deg = read_f32(&mut r)? as f64;
        let incline_deg = read_f32(&mut r)? as f64;

        // Re-derive the weave from the rebuilt analytic field so the maps stay
        // oracle-capable.
        let weave = infer_weave(rows, cols, l_t, &yarn_id)?;
        let field = YarnField::new(&weave, gap, incline_deg);
        let mut grad = Vec::with_capacity(n);
        let mut height_tex = Vec::with_capacity(n);
        let mut height_tex_max = f32::NEG_INFINITY;
        for iy in 0..l_t {
            let v = (iy as f64 + 0.5) / l_t as f64;
            for ix in 0..l_t {
                let u = (ix as f64 + 0.5) / l_t as f64;
                let s = field.sample(u, v);
                grad.push([s.grad.0 as f32, s.grad.1 as f32]);
                let ht = s.height_tex as f32;
                height_tex.push(ht);
                height_tex_max = height_tex_max.max(ht);
            }
        }
        let (coarse_max, coarse_cells) = build_coarse_max(&height_tex, l_t);
        Ok(GeometryMaps {
            resolution: l_t,
            rows,
            cols,
            gap,
            beta,
            twist_deg,
            incline_deg,
            normal,
            orientation,
            height,
            yarn_id,
            grad,
            height_tex,
            height_tex_max,
            coarse_max,
            coarse_cells,
            weave,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_blob())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GeometryMaps> {
        let bytes = std::fs::read(path)?;
        Self::from_blob(&bytes)
    }

    /// Write the normal map as a PNG with [-1, 1] remapped to [0, 255].
    pub fn export_normal_png(&self, path: &Path) -> Result<()> {
        let l = self.resolution;
        let mut img = image::RgbImage::new(l, l);
        for iy in 0..l {
            for ix in 0..l {
                let n = self.normal[self.index(ix, iy) as usize];
                let px = [
                    remap_unit(n[0]),
                    remap_unit(n[1]),
                    remap_unit(n[2]),
                ];
                img.put_pixel(ix, iy, image::Rgb(px));
            }
        }
        img.save(path).map_err(|e| Error::Image(e.to_string()))
    }
}

fn remap_unit(v: f32) -> u8 {
    (clamp_pos(((v as f64) + 1.0) / 2.0).min(1.0) * 255.0).round() as u8
}

/// Rebuild the interlacing grid from a yarn-id map: the cell owner is the yarn
/// family of the texel at the cell center.
fn infer_weave(rows: u32, cols: u32, l_t: u32, yarn_id: &[YarnId]) -> Result<WeaveMatrix> {
    if rows == 0 || cols == 0 || l_t % rows != 0 || l_t % cols != 0 {
        return Err(Error::BadFormat(format!(
            "geometry map footer has invalid dimensions {rows}x{cols} for resolution {l_t}"
        )));
    }
    let mut cells = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            let ix = ((c as f64 + 0.5) / cols as f64 * l_t as f64) as u32;
            let iy = ((r as f64 + 0.5) / rows as f64 * l_t as f64) as u32;
            let idx = (iy as usize) * (l_t as usize) + ix as usize;
            cells.push(match yarn_id[idx] {
                YarnId::Warp => WeaveCell::WarpOver,
                YarnId::Weft => WeaveCell::WeftOver,
                YarnId::Gap => {
                    return Err(Error::BadFormat(
                        "gap texel at cell center; cannot infer weave".into(),
                    ))
                }
            });
        }
    }
    Ok(WeaveMatrix { rows, cols, cells })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}
