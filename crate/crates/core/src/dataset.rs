//! Training-data generation: material sampling, structured query generation,
//! oracle target computation and a little-endian binary record format.
//!
//! Queries are stored quantized to f32 and every per-query RNG stream is keyed
//! by (dataset seed, quantized query payload), so any stored record can be
//! reproduced bit-exactly from the file alone, in parallel or serially.

use crate::bsdf::FabricParams;
use crate::error::{Error, Result};
use crate::math::Rgb;
use crate::oracle::{aggregate, Footprint, Kernel};
use crate::pattern::{
    build_weave_matrix, synthesize_geometry_maps, GeometryMaps, MapParams, WeaveKind,
};
use crate::bsdf::DirectionPair;
use crate::math::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

const DATASET_MAGIC: &[u8; 4] = b"WWDS";
const DATASET_VERSION: u32 = 1;
/// f32 payload slots per record: footprint (3) + wi (3) + wo (3) + target (4).
const RECORD_FLOATS: usize = 13;
pub const RECORD_BYTES: usize = RECORD_FLOATS * 4;

/// Default ground-truth sample count per query.
pub const DEFAULT_GT_SAMPLES: u32 = 2048;
/// Footprint grid per repeat edge.
pub const FOOTPRINT_GRID: u32 = 8;
/// Footprint sizes drawn per center (half in each range).
pub const SIZES_PER_CENTER: usize = 20;
/// Direction strata per axis.
pub const DIRECTION_GRID: u32 = 8;
/// Per-cell jitter of the direction strata, in xy units. Small enough that
/// the valid-cell set (52 per grid) never changes, so every footprint gets
/// exactly 52 x 52 = 2704 direction pairs.
pub const DIRECTION_JITTER: f64 = 0.03;

/// One procedurally sampled fabric material.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MaterialSpec {
    pub pattern: WeaveKind,
    pub twist_deg: f64,
    pub incline_deg: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gap: f64,
    pub w: f64,
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pattern.index().is_none() {
            return Err(Error::InvalidParameter(format!(
                "pattern {} is not one of the seven stock patterns",
                self.pattern.name()
            )));
        }
        if ![-30.0, 0.0, 30.0].contains(&self.twist_deg) {
            return Err(Error::InvalidParameter(format!(
                "twist {} not in {{-30, 0, 30}}",
                self.twist_deg
            )));
        }
        if !(15.0..=45.0).contains(&self.incline_deg) {
            return Err(Error::InvalidParameter(format!(
                "inclination {} outside [15, 45]",
                self.incline_deg
            )));
        }
        if !(0.1..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "roughness {} outside [0.1, 1]",
                self.alpha
            )));
        }
        if !(0.0..=2.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "height scaling {} outside [0, 2]",
                self.beta
            )));
        }
        if !(0.0..1.0).contains(&self.gap) {
            return Err(Error::InvalidParameter(format!("gap {} outside [0, 1)", self.gap)));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::InvalidParameter(format!("w {} outside [0, 1]", self.w)));
        }
        Ok(())
    }

    /// Appearance parameters for target computation. Albedos are unit: the
    /// aggregated components are albedo-free by construction.
    pub fn fabric_params(&self) -> FabricParams {
        FabricParams {
            alpha_warp: self.alpha,
            alpha_weft: self.alpha,
            beta_warp: self.beta,
            beta_weft: self.beta,
            kd_warp: Rgb::splat(1.0),
            kd_weft: Rgb::splat(1.0),
            ks_warp: Rgb::splat(1.0),
            ks_weft: Rgb::splat(1.0),
            w: self.w,
            optical_depth: crate::bsdf::OPTICAL_DEPTH_DEFAULT,
        }
    }

    /// Geometry maps for this material's pattern set. Height scaling is not
    /// baked in: normals are re-evaluated at the material's beta during
    /// shading, and the network receives beta as a scalar.
    pub fn build_maps(&self, target_resolution: u32) -> Result<GeometryMaps> {
        let weave = build_weave_matrix(self.pattern)?;
        synthesize_geometry_maps(
            &weave,
            &MapParams {
                twist_deg: self.twist_deg,
                incline_deg: self.incline_deg,
                gap: self.gap,
                beta: 1.0,
                resolution: self.pattern.default_resolution(target_resolution),
            },
        )
    }
}

/// Draw one material from the sampling tables: discrete uniform pattern and
/// twist, continuous uniform inclination, roughness and height scaling.
pub fn sample_material(rng: &mut impl Rng, w: f64) -> MaterialSpec {
    let pattern = WeaveKind::from_index(rng.gen_range(0..7)).expect("index in range");
    let twist_deg = [-30.0, 0.0, 30.0][rng.gen_range(0..3)];
    MaterialSpec {
        pattern,
        twist_deg,
        incline_deg: rng.gen_range(15.0..=45.0),
        alpha: rng.gen_range(0.1..=1.0),
        beta: rng.gen_range(0.0..=2.0),
        gap: 0.2,
        w,
    }
}

/// [`sample_material`] on a fresh seeded stream.
pub fn sample_material_seeded(seed: u64, w: f64) -> MaterialSpec {
    sample_material(&mut ChaCha8Rng::seed_from_u64(seed), w)
}

/// One BSDF query, quantized to stored precision.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Query {
    pub center: [f32; 2],
    /// Footprint size in repeat units.
    pub size: f32,
    pub wi: [f32; 3],
    pub wo: [f32; 3],
}

impl Query {
    pub fn footprint(&self, kernel: Kernel) -> Footprint {
        Footprint::new((self.center[0] as f64, self.center[1] as f64), self.size as f64, kernel)
    }

    pub fn direction_pair(&self) -> Result<DirectionPair> {
        DirectionPair::new(
            Vec3::new(self.wi[0] as f64, self.wi[1] as f64, self.wi[2] as f64),
            Vec3::new(self.wo[0] as f64, self.wo[1] as f64, self.wo[2] as f64),
        )
    }

    pub fn is_btdf(&self) -> bool {
        self.wi[2] < 0.0
    }

    fn payload_bytes(&self) -> [u8; 36] {
        let mut out = [0u8; 36];
        let fields = [
            self.center[0], self.center[1], self.size,
            self.wi[0], self.wi[1], self.wi[2],
            self.wo[0], self.wo[1], self.wo[2],
        ];
        for (i, f) in fields.iter().enumerate() {
            out[i * 4..i * 4 + 4].copy_from_slice(&f.to_le_bytes());
        }
        out
    }
}

/// FNV-1a over (seed, query payload): the query's private RNG stream.
pub fn query_stream_seed(dataset_seed: u64, query: &Query) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for b in dataset_seed.to_le_bytes() {
        eat(b);
    }
    for b in query.payload_bytes() {
        eat(b);
    }
    h
}

/// The structured query set: stratified footprint centers, two stratified
/// size ranges per center, and per-footprint stratified direction grids with
/// alternating light-direction hemisphere.
pub struct StructuredQueries {
    seed: u64,
    centers: Vec<[f32; 2]>,
    sizes: Vec<[f32; SIZES_PER_CENTER]>,
}

impl StructuredQueries {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = FOOTPRINT_GRID as usize;
        let mut centers = Vec::with_capacity(g * g);
        for gy in 0..g {
            for gx in 0..g {
                let u = (gx as f64 + rng.gen::<f64>()) / g as f64;
                let v = (gy as f64 + rng.gen::<f64>()) / g as f64;
                centers.push([u as f32, v as f32]);
            }
        }
        let mut sizes = Vec::with_capacity(centers.len());
        for _ in 0..centers.len() {
            let mut s = [0.0f32; SIZES_PER_CENTER];
            for (j, slot) in s.iter_mut().enumerate().take(10) {
                *slot = ((j as f64 + rng.gen::<f64>()) / 10.0) as f32;
            }
            for (j, slot) in s.iter_mut().enumerate().skip(10) {
                *slot = (1.0 + 4.0 * ((j - 10) as f64 + rng.gen::<f64>()) / 10.0) as f32;
            }
            sizes.push(s);
        }
        StructuredQueries { seed, centers, sizes }
    }

    pub fn footprint_count(&self) -> usize {
        self.centers.len() * SIZES_PER_CENTER
    }

    pub fn centers(&self) -> &[[f32; 2]] {
        &self.centers
    }

    pub fn sizes(&self, center_idx: usize) -> &[f32; SIZES_PER_CENTER] {
        &self.sizes[center_idx]
    }

    /// The direction pairs shared by every size of footprint-center
    /// `center_idx`: (wi, wo) with wo above the surface and wi alternating
    /// between hemispheres.
    pub fn direction_pairs(&self, center_idx: usize) -> Vec<([f32; 3], [f32; 3])> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1000 + center_idx as u64);
        let grid_xy = |rng: &mut ChaCha8Rng| -> Vec<[f64; 2]> {
            let g = DIRECTION_GRID as i32;
            let mut pts = Vec::new();
            for gy in 0..g {
                for gx in 0..g {
                    let cx = -1.0 + (gx as f64 + 0.5) * 2.0 / g as f64;
                    let cy = -1.0 + (gy as f64 + 0.5) * 2.0 / g as f64;
                    let x = cx + rng.gen_range(-DIRECTION_JITTER..=DIRECTION_JITTER);
                    let y = cy + rng.gen_range(-DIRECTION_JITTER..=DIRECTION_JITTER);
                    if x * x + y * y < 1.0 {
                        pts.push([x, y]);
                    }
                }
            }
            pts
        };
        let wi_xy = grid_xy(&mut rng);
        let wo_xy = grid_xy(&mut rng);
        let mut pairs = Vec::with_capacity(wi_xy.len() * wo_xy.len());
        for (r, i_xy) in wi_xy.iter().enumerate() {
            for (c, o_xy) in wo_xy.iter().enumerate() {
                let zi = (1.0 - i_xy[0] * i_xy[0] - i_xy[1] * i_xy[1]).max(0.0).sqrt();
                let zo = (1.0 - o_xy[0] * o_xy[0] - o_xy[1] * o_xy[1]).max(0.0).sqrt();
                let sign = if (r * wo_xy.len() + c) % 2 == 0 { 1.0 } else { -1.0 };
                pairs.push((
                    [i_xy[0] as f32, i_xy[1] as f32, (sign * zi) as f32],
                    [o_xy[0] as f32, o_xy[1] as f32, zo as f32],
                ));
            }
        }
        pairs
    }

    /// Total structured query count (footprints x direction pairs).
    pub fn total_queries(&self) -> u64 {
        let pairs = self.direction_pairs(0).len() as u64;
        self.centers.len() as u64 * SIZES_PER_CENTER as u64 * pairs
    }

    /// Query at a flat index (center-major, then size, then direction pair).
    /// Direction pairs are per-center, so consecutive indices share them.
    pub fn query_at(&self, idx: u64, pairs: &[([f32; 3], [f32; 3])], pairs_len: u64) -> Query {
        let per_center = SIZES_PER_CENTER as u64 * pairs_len;
        let center_idx = (idx / per_center) as usize;
        let rem = idx % per_center;
        let size_idx = (rem / pairs_len) as usize;
        let pair_idx = (rem % pairs_len) as usize;
        let (wi, wo) = pairs[pair_idx];
        Query {
            center: self.centers[center_idx],
            size: self.sizes[center_idx][size_idx],
            wi,
            wo,
        }
    }

    pub fn center_of_index(&self, idx: u64, pairs_len: u64) -> usize {
        (idx / (SIZES_PER_CENTER as u64 * pairs_len)) as usize
    }

    /// Materialize a subset of the structured set by flat indices (sorted
    /// internally so per-center direction grids are built once).
    pub fn queries_by_indices(&self, indices: &mut [u64]) -> Vec<Query> {
        indices.sort_unstable();
        let pairs_len = self.direction_pairs(0).len() as u64;
        let mut out = Vec::with_capacity(indices.len());
        let mut cached_center = usize::MAX;
        let mut cached_pairs = Vec::new();
        for &idx in indices.iter() {
            let center = self.center_of_index(idx, pairs_len);
            if center != cached_center {
                cached_pairs = self.direction_pairs(center);
                cached_center = center;
            }
            out.push(self.query_at(idx, &cached_pairs, pairs_len));
        }
        out
    }
}

/// Randomized queries drawn directly from the sampling tables (footprint
/// position/size and direction xy all uniform), used to augment the
/// structured set with off-grid angles.
pub fn augmentation_queries(seed: u64, count: usize) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xA06);
    let mut out = Vec::with_capacity(count);
    let draw_xy = |rng: &mut ChaCha8Rng| -> [f64; 2] {
        loop {
            let x = rng.gen_range(-1.0..1.0);
            let y = rng.gen_range(-1.0..1.0);
            if x * x + y * y < 0.998 {
                return [x, y];
            }
        }
    };
    for _ in 0..count {
        let center = [rng.gen::<f64>() as f32, rng.gen::<f64>() as f32];
        let size = if rng.gen_bool(0.5) {
            rng.gen_range(0.0..1.0)
        } else {
            rng.gen_range(1.0..5.0)
        } as f32;
        let i_xy = draw_xy(&mut rng);
        let o_xy = draw_xy(&mut rng);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let zi = (1.0 - i_xy[0] * i_xy[0] - i_xy[1] * i_xy[1]).max(0.0).sqrt();
        let zo = (1.0 - o_xy[0] * o_xy[0] - o_xy[1] * o_xy[1]).max(0.0).sqrt();
        out.push(Query {
            center,
            size,
            wi: [i_xy[0] as f32, i_xy[1] as f32, (sign * zi) as f32],
            wo: [o_xy[0] as f32, o_xy[1] as f32, zo as f32],
        });
    }
    out
}

/// A query with its ground-truth components.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub query: Query,
    pub target: [f32; 4],
}

impl QueryRecord {
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.query.payload_bytes());
        for t in self.target {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() != RECORD_BYTES {
            return Err(Error::BadFormat("short query record".into()));
        }
        let f = |i: usize| f32::from_le_bytes(b[i * 4..i * 4 + 4].try_into().unwrap());
        Ok(QueryRecord {
            query: Query {
                center: [f(0), f(1)],
                size: f(2),
                wi: [f(3), f(4), f(5)],
                wo: [f(6), f(7), f(8)],
            },
            target: [f(9), f(10), f(11), f(12)],
        })
    }
}

/// Dataset file header: everything needed to reproduce every record.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub material: MaterialSpec,
    pub kernel: Kernel,
    pub gt_samples: u32,
    pub seed: u64,
    pub resolution: u32,
    pub record_count: u64,
    pub note: String,
}

impl DatasetHeader {
    fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.material.pattern.index().unwrap_or(0) as u32).to_le_bytes());
        for f in [
            self.material.twist_deg,
            self.material.incline_deg,
            self.material.alpha,
            self.material.beta,
            self.material.gap,
            self.material.w,
        ] {
            out.extend_from_slice(&(f as f32).to_le_bytes());
        }
        out.extend_from_slice(&self.kernel.to_u32().to_le_bytes());
        out.extend_from_slice(&self.gt_samples.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.resolution.to_le_bytes());
        out.extend_from_slice(&self.record_count.to_le_bytes());
        let note = self.note.as_bytes();
        out.extend_from_slice(&(note.len() as u32).to_le_bytes());
        out.extend_from_slice(note);
    }

    fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::BadFormat("dataset magic mismatch".into()));
        }
        let version = read_u32(r)?;
        if version != DATASET_VERSION {
            return Err(Error::BadFormat(format!("unsupported dataset version {version}")));
        }
        let pattern = WeaveKind::from_index(read_u32(r)? as usize)
            .map_err(|_| Error::BadFormat("bad pattern index".into()))?;
        let twist_deg = read_f32(r)? as f64;
        let incline_deg = read_f32(r)? as f64;
        let alpha = read_f32(r)? as f64;
        let beta = read_f32(r)? as f64;
        let gap = read_f32(r)? as f64;
        let w = read_f32(r)? as f64;
        let kernel = Kernel::from_u32(read_u32(r)?)
            .ok_or_else(|| Error::BadFormat("bad kernel tag".into()))?;
        let gt_samples = read_u32(r)?;
        let seed = read_u64(r)?;
        let resolution = read_u32(r)?;
        let record_count = read_u64(r)?;
        let note_len = read_u32(r)? as usize;
        if note_len > 1 << 20 {
            return Err(Error::BadFormat("unreasonable note length".into()));
        }
        let mut note = vec![0u8; note_len];
        r.read_exact(&mut note)?;
        let note = String::from_utf8(note)
            .map_err(|_| Error::BadFormat("note is not utf-8".into()))?;
        Ok(DatasetHeader {
            material: MaterialSpec {
                pattern,
                twist_deg,
                incline_deg,
                alpha,
                beta,
                gap,
                w,
            },
            kernel,
            gt_samples,
            seed,
            resolution,
            record_count,
            note,
        })
    }

    fn header_len(&self) -> u64 {
        let mut buf = Vec::new();
        self.write_to(&mut buf);
        buf.len() as u64
    }

    /// Byte offset of the record-count field (needed to patch it on finalize).
    fn count_field_offset() -> u64 {
        // magic(4) version(4) pattern(4) 6 f32(24) kernel(4) samples(4) seed(8) res(4)
        4 + 4 + 4 + 24 + 4 + 4 + 8 + 4
    }
}

/// Guard for training over multiple shards: the run constants must agree.
pub fn check_merge_compatible(headers: &[DatasetHeader]) -> Result<()> {
    let Some(first) = headers.first() else { return Ok(()) };
    for h in &headers[1..] {
        if (h.material.w - first.material.w).abs() > 0.0 {
            return Err(Error::HeaderMismatch(format!(
                "diffuse blend weight differs across shards: {} vs {}",
                first.material.w, h.material.w
            )));
        }
        if h.kernel != first.kernel {
            return Err(Error::HeaderMismatch("footprint kernel differs across shards".into()));
        }
        if h.gt_samples != first.gt_samples {
            return Err(Error::HeaderMismatch(format!(
                "ground-truth sample count differs across shards: {} vs {}",
                first.gt_samples, h.gt_samples
            )));
        }
    }
    Ok(())
}

/// Compute targets for a batch of queries. Parallel over queries; each query
/// evaluates on its own content-keyed stream. Degenerate queries (vanishing
/// visible area) are dropped and counted.
pub fn compute_targets(
    queries: &[Query],
    maps: &GeometryMaps,
    params: &FabricParams,
    kernel: Kernel,
    gt_samples: u32,
    seed: u64,
) -> (Vec<QueryRecord>, u64) {
    let results: Vec<Option<QueryRecord>> = queries
        .par_iter()
        .map(|q| {
            let Ok(pair) = q.direction_pair() else { return None };
            let stats = aggregate(
                &q.footprint(kernel),
                &pair,
                maps,
                params,
                gt_samples,
                query_stream_seed(seed, q),
            );
            if stats.degenerate {
                return None;
            }
            let t = stats.quad.to_array();
            Some(QueryRecord {
                query: *q,
                target: [t[0] as f32, t[1] as f32, t[2] as f32, t[3] as f32],
            })
        })
        .collect();
    let mut records = Vec::with_capacity(queries.len());
    let mut dropped = 0u64;
    for r in results {
        match r {
            Some(rec) => records.push(rec),
            None => dropped += 1,
        }
    }
    (records, dropped)
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, records: &[QueryRecord]) -> Result<()> {
    let mut header = header.clone();
    header.record_count = records.len() as u64;
    let mut buf = Vec::with_capacity(64 + records.len() * RECORD_BYTES);
    header.write_to(&mut buf);
    for r in records {
        r.write_to(&mut buf);
    }
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&buf)?;
    f.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<QueryRecord>)> {
    let mut reader = DatasetReader::open(path)?;
    let mut records = Vec::with_capacity(reader.header.record_count as usize);
    while let Some(r) = reader.next_record()? {
        records.push(r);
    }
    Ok((reader.header, records))
}

/// Streaming dataset reader; validates length against the header up front.
pub struct DatasetReader {
    pub header: DatasetHeader,
    reader: BufReader<std::fs::File>,
    remaining: u64,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let total = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let header = DatasetHeader::read_from(&mut reader)?;
        let expect = header.header_len() + header.record_count * RECORD_BYTES as u64;
        if total != expect {
            return Err(Error::BadFormat(format!(
                "dataset length {total} does not match header ({} records -> {expect} bytes)",
                header.record_count
            )));
        }
        Ok(DatasetReader { remaining: header.record_count, header, reader })
    }

    pub fn next_record(&mut self) -> Result<Option<QueryRecord>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let mut buf = [0u8; RECORD_BYTES];
        self.reader.read_exact(&mut buf)?;
        self.remaining -= 1;
        Ok(Some(QueryRecord::from_bytes(&buf)?))
    }
}

/// Build the standard query list for one material: a seeded subsample of the
/// structured set plus an augmentation share of fully randomized queries.
pub fn build_query_budget(seed: u64, budget: usize, augment_fraction: f64) -> Vec<Query> {
    let structured = StructuredQueries::new(seed);
    let total = structured.total_queries();
    let n_aug = ((budget as f64) * augment_fraction.clamp(0.0, 1.0)).round() as usize;
    let n_structured = budget.saturating_sub(n_aug);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let take = (n_structured as u64).min(total) as usize;
    let mut indices = rand::seq::index::sample(&mut rng, total as usize, take)
        .into_iter()
        .map(|i| i as u64)
        .collect::<Vec<_>>();
    let mut queries = structured.queries_by_indices(&mut indices);
    queries.extend(augmentation_queries(seed, n_aug));
    queries
}

/// End-to-end generation of one material's dataset file, resumable by chunk.
///
/// Progress is tracked in a `<path>.progress` sidecar holding the number of
/// completed chunks and records written so far; re-running with the same
/// arguments continues after the last complete chunk and produces a file
/// byte-identical to an uninterrupted run.
pub fn generate_dataset_file(
    path: &Path,
    material: &MaterialSpec,
    budget: usize,
    augment_fraction: f64,
    kernel: Kernel,
    gt_samples: u32,
    seed: u64,
    resolution: u32,
    chunk_size: usize,
    mut progress: impl FnMut(usize, usize),
) -> Result<DatasetHeader> {
    material.validate()?;
    let maps = material.build_maps(resolution)?;
    let params = material.fabric_params();
    let queries = build_query_budget(seed, budget, augment_fraction);
    let structured = StructuredQueries::new(seed);
    let note = format!(
        "desk-scale budget {} of {} structured queries per material (augment {:.0}%); full-scale reference is ~3.2M",
        budget,
        structured.total_queries(),
        augment_fraction * 100.0
    );
    let mut header = DatasetHeader {
        material: *material,
        kernel,
        gt_samples,
        seed,
        resolution: maps.resolution,
        record_count: 0,
        note,
    };

    let chunk_size = chunk_size.max(1);
    let n_chunks = queries.len().div_ceil(chunk_size);
    let progress_path = path.with_extension("wwds.progress");

    // Resume bookkeeping: (chunks done, records written).
    let mut done_chunks = 0usize;
    let mut written_records = 0u64;
    if let Ok(s) = std::fs::read_to_string(&progress_path) {
        let mut it = s.split_whitespace();
        if let (Some(a), Some(b)) = (it.next(), it.next()) {
            done_chunks = a.parse().unwrap_or(0);
            written_records = b.parse().unwrap_or(0);
        }
    }
    let header_len = header.header_len();
    let mut file = if done_chunks > 0 && path.exists() {
        let f = std::fs::OpenOptions::new().read(true).write(true).open(path)?;
        let want = header_len + written_records * RECORD_BYTES as u64;
        if f.metadata()?.len() < want {
            // sidecar ahead of the data; start over
            done_chunks = 0;
            written_records = 0;
            drop(f);
            std::fs::File::create(path)?
        } else {
            let mut f = f;
            f.set_len(want)?;
            f.seek(SeekFrom::End(0))?;
            f
        }
    } else {
        done_chunks = 0;
        written_records = 0;
        std::fs::File::create(path)?
    };

    if done_chunks == 0 {
        let mut buf = Vec::new();
        header.write_to(&mut buf);
        file.write_all(&buf)?;
        written_records = 0;
    }

    for (ci, chunk) in queries.chunks(chunk_size).enumerate() {
        if ci < done_chunks {
            continue;
        }
        let (records, _dropped) = compute_targets(chunk, &maps, &params, kernel, gt_samples, seed);
        let mut buf = Vec::with_capacity(records.len() * RECORD_BYTES);
        for r in &records {
            r.write_to(&mut buf);
        }
        file.write_all(&buf)?;
        file.flush()?;
        written_records += records.len() as u64;
        std::fs::write(&progress_path, format!("{} {}", ci + 1, written_records))?;
        progress(ci + 1, n_chunks);
    }

    // Patch the final record count into the header and drop the sidecar.
    header.record_count = written_records;
    file.seek(SeekFrom::Start(DatasetHeader::count_field_offset()))?;
    file.write_all(&written_records.to_le_bytes())?;
    file.flush()?;
    let _ = std::fs::remove_file(&progress_path);
    Ok(header)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}
