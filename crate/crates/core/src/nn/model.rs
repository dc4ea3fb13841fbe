//! The encoder/decoder network.
//!
//! Encoder: a small residual conv stack over the pattern maps (normals +
//! orientations), global average pooling, appearance scalars appended, then a
//! residual MLP block projecting to the 64-float material latent.
//!
//! Decoder: one-blob-encoded footprint fused with the latent by two fully
//! connected layers, then a five-layer angular decoder with one skip
//! connection mapping (light direction, view xy) to the four components.
//! Diffuse slots are predicted in linear space, specular slots in log space.

use super::layers::{
    leaky_relu, leaky_relu_deriv, one_blob_encode, Conv2d, Conv2dGrad, Linear, LinearGrad,
    ONE_BLOB_BINS,
};
use super::tensor::Tensor3;
use crate::error::{Error, Result};
use crate::math::wrap01;
use crate::oracle::Footprint;
use crate::pattern::GeometryMaps;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LATENT_DIM: usize = 64;
pub const FUSION_WIDTH: usize = 128;
pub const ANGULAR_LAYERS: usize = 5;
pub const ANGULAR_SKIPS: usize = 1;
pub const FOOTPRINT_RAW_CHANNELS: usize = 3;
pub const FOOTPRINT_ENCODED_CHANNELS: usize = FOOTPRINT_RAW_CHANNELS * ONE_BLOB_BINS;
pub const LIGHT_CHANNELS: usize = 3;
pub const VIEW_CHANNELS: usize = 2;
pub const ENCODER_INPUT_CHANNELS: usize = 6;
pub const ENCODER_INPUT_RES: usize = 64;
/// Footprint sizes are normalized by the top of the sampled range.
pub const FOOTPRINT_SIZE_SCALE: f64 = 5.0;

/// Network topology knobs. Defaults are the shipped network; tests shrink
/// them for finite-difference checks.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub input_res: usize,
    pub widths: [usize; 3],
    pub mlp_width: usize,
    pub latent: usize,
    /// Hidden width of the angular decoder layers (the fusion stage is fixed
    /// at [`FUSION_WIDTH`]).
    pub angular_width: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_res: ENCODER_INPUT_RES,
            widths: [16, 32, 64],
            mlp_width: FUSION_WIDTH,
            latent: LATENT_DIM,
            angular_width: 128,
        }
    }
}

/// Two 3x3 convs with a skip; 1x1 projection shortcut when shape changes.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub shortcut: Option<Conv2d>,
}

#[derive(Clone, Debug)]
pub struct BasicBlockGrad {
    pub conv1: Conv2dGrad,
    pub conv2: Conv2dGrad,
    pub shortcut: Option<Conv2dGrad>,
}

pub struct BlockCache {
    x: Tensor3,
    pre1: Tensor3,
    act1: Tensor3,
    sum: Tensor3,
}

impl BasicBlock {
    fn new(rng: &mut ChaCha8Rng, in_ch: usize, out_ch: usize, stride: usize) -> Self {
        let shortcut = if in_ch != out_ch || stride != 1 {
            Some(Conv2d::new(rng, in_ch, out_ch, 1, stride, 0))
        } else {
            None
        };
        // The residual branch's output starts at zero so every block begins as
        // its shortcut; without normalization layers this keeps activations
        // and gradients bounded at the stock learning rate.
        let mut conv2 = Conv2d::new(rng, out_ch, out_ch, 3, 1, 1);
        conv2.w.iter_mut().for_each(|w| *w = 0.0);
        BasicBlock {
            conv1: Conv2d::new(rng, in_ch, out_ch, 3, stride, 1),
            conv2,
            shortcut,
        }
    }

    fn grad_zeros(&self) -> BasicBlockGrad {
        BasicBlockGrad {
            conv1: self.conv1.grad_zeros(),
            conv2: self.conv2.grad_zeros(),
            shortcut: self.shortcut.as_ref().map(|c| c.grad_zeros()),
        }
    }

    fn forward(&self, x: Tensor3) -> (Tensor3, BlockCache) {
        let pre1 = self.conv1.forward(&x);
        let mut act1 = pre1.clone();
        for v in &mut act1.data {
            *v = leaky_relu(*v);
        }
        let pre2 = self.conv2.forward(&act1);
        let sc = match &self.shortcut {
            Some(c) => c.forward(&x),
            None => x.clone(),
        };
        let mut sum = pre2;
        for (s, v) in sum.data.iter_mut().zip(&sc.data) {
            *s += v;
        }
        let mut out = sum.clone();
        for v in &mut out.data {
            *v = leaky_relu(*v);
        }
        (out, BlockCache { x, pre1, act1, sum })
    }

    fn backward(&self, cache: &BlockCache, dout: &Tensor3, grad: &mut BasicBlockGrad) -> Tensor3 {
        let mut dsum = dout.clone();
        for (d, pre) in dsum.data.iter_mut().zip(&cache.sum.data) {
            *d *= leaky_relu_deriv(*pre);
        }
        let dact1 = self
            .conv2
            .backward(&cache.act1, &dsum, &mut grad.conv2, true)
            .expect("dx requested");
        let mut dpre1 = dact1;
        for (d, pre) in dpre1.data.iter_mut().zip(&cache.pre1.data) {
            *d *= leaky_relu_deriv(*pre);
        }
        let mut dx = self
            .conv1
            .backward(&cache.x, &dpre1, &mut grad.conv1, true)
            .expect("dx requested");
        match (&self.shortcut, &mut grad.shortcut) {
            (Some(c), Some(g)) => {
                let dsc = c.backward(&cache.x, &dsum, g, true).expect("dx requested");
                for (a, b) in dx.data.iter_mut().zip(&dsc.data) {
                    *a += b;
                }
            }
            _ => {
                for (a, b) in dx.data.iter_mut().zip(&dsum.data) {
                    *a += b;
                }
            }
        }
        dx
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub stem: Conv2d,
    pub blocks: Vec<BasicBlock>,
    pub fc_a: Linear,
    pub fc_b: Linear,
    pub fc_skip: Linear,
    pub fc_out: Linear,
}

#[derive(Clone, Debug)]
pub struct EncoderGrads {
    pub stem: Conv2dGrad,
    pub blocks: Vec<BasicBlockGrad>,
    pub fc_a: LinearGrad,
    pub fc_b: LinearGrad,
    pub fc_skip: LinearGrad,
    pub fc_out: LinearGrad,
}

pub struct EncoderCache {
    input: Tensor3,
    stem_pre: Tensor3,
    blocks: Vec<BlockCache>,
    last: Tensor3,
    feat: Vec<f64>,
    mlp_pre1: Vec<f64>,
    mlp_act1: Vec<f64>,
    res_sum: Vec<f64>,
    res_act: Vec<f64>,
}

impl Encoder {
    pub fn new(rng: &mut ChaCha8Rng, cfg: EncoderConfig) -> Self {
        let [w0, w1, w2] = cfg.widths;
        let stem = Conv2d::new(rng, ENCODER_INPUT_CHANNELS, w0, 3, 1, 1);
        let blocks = vec![
            BasicBlock::new(rng, w0, w0, 1),
            BasicBlock::new(rng, w0, w0, 1),
            BasicBlock::new(rng, w0, w1, 2),
            BasicBlock::new(rng, w1, w1, 1),
            BasicBlock::new(rng, w1, w2, 2),
            BasicBlock::new(rng, w2, w2, 1),
        ];
        let feat_dim = w2 + 2;
        // residual-branch output starts at zero, as in the conv blocks
        let mut fc_b = Linear::new(rng, cfg.mlp_width, cfg.mlp_width);
        fc_b.w.iter_mut().for_each(|w| *w = 0.0);
        Encoder {
            cfg,
            stem,
            blocks,
            fc_a: Linear::new(rng, feat_dim, cfg.mlp_width),
            fc_b,
            fc_skip: Linear::new(rng, feat_dim, cfg.mlp_width),
            fc_out: Linear::new(rng, cfg.mlp_width, cfg.latent),
        }
    }

    pub fn grad_zeros(&self) -> EncoderGrads {
        EncoderGrads {
            stem: self.stem.grad_zeros(),
            blocks: self.blocks.iter().map(|b| b.grad_zeros()).collect(),
            fc_a: self.fc_a.grad_zeros(),
            fc_b: self.fc_b.grad_zeros(),
            fc_skip: self.fc_skip.grad_zeros(),
            fc_out: self.fc_out.grad_zeros(),
        }
    }

    /// Forward pass; the cache holds everything backward needs.
    pub fn forward(&self, input: &Tensor3, alpha: f64, beta: f64) -> Result<(Vec<f64>, EncoderCache)> {
        if input.c != ENCODER_INPUT_CHANNELS
            || input.h != self.cfg.input_res
            || input.w != self.cfg.input_res
        {
            return Err(Error::InvalidParameter(format!(
                "encoder expects {}x{res}x{res} input, got {}x{}x{}",
                ENCODER_INPUT_CHANNELS,
                input.c,
                input.h,
                input.w,
                res = self.cfg.input_res
            )));
        }
        let stem_pre = self.stem.forward(input);
        let mut t = stem_pre.clone();
        for v in &mut t.data {
            *v = leaky_relu(*v);
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, cache) = b.forward(t);
            blocks.push(cache);
            t = out;
        }
        let last = t;
        // global average pool + appearance scalars
        let hw = (last.h * last.w) as f64;
        let mut feat = Vec::with_capacity(last.c + 2);
        for c in 0..last.c {
            feat.push(last.channel(c).iter().sum::<f64>() / hw);
        }
        feat.push(alpha);
        feat.push(beta);

        let mlp_pre1 = self.fc_a.forward(&feat);
        let mlp_act1: Vec<f64> = mlp_pre1.iter().map(|&v| leaky_relu(v)).collect();
        let main = self.fc_b.forward(&mlp_act1);
        let skip = self.fc_skip.forward(&feat);
        let res_sum: Vec<f64> = main.iter().zip(&skip).map(|(a, b)| a + b).collect();
        let res_act: Vec<f64> = res_sum.iter().map(|&v| leaky_relu(v)).collect();
        let z = self.fc_out.forward(&res_act);
        Ok((
            z,
            EncoderCache {
                input: input.clone(),
                stem_pre,
                blocks,
                last,
                feat,
                mlp_pre1,
                mlp_act1,
                res_sum,
                res_act,
            },
        ))
    }

    pub fn backward(&self, cache: &EncoderCache, dz: &[f64], grads: &mut EncoderGrads) {
        let d_res_act = self
            .fc_out
            .backward(&cache.res_act, dz, &mut grads.fc_out, true)
            .expect("dx requested");
        let d_res_sum: Vec<f64> = d_res_act
            .iter()
            .zip(&cache.res_sum)
            .map(|(d, pre)| d * leaky_relu_deriv(*pre))
            .collect();
        let d_act1 = self
            .fc_b
            .backward(&cache.mlp_act1, &d_res_sum, &mut grads.fc_b, true)
            .expect("dx requested");
        let d_pre1: Vec<f64> = d_act1
            .iter()
            .zip(&cache.mlp_pre1)
            .map(|(d, pre)| d * leaky_relu_deriv(*pre))
            .collect();
        let d_feat_main = self
            .fc_a
            .backward(&cache.feat, &d_pre1, &mut grads.fc_a, true)
            .expect("dx requested");
        let d_feat_skip = self
            .fc_skip
            .backward(&cache.feat, &d_res_sum, &mut grads.fc_skip, true)
            .expect("dx requested");

        // pooled-feature gradient back into the last tensor (alpha, beta are
        // inputs; their gradient slots are dropped here)
        let last = &cache.last;
        let hw = (last.h * last.w) as f64;
        let mut dt = Tensor3::zeros(last.c, last.h, last.w);
        for c in 0..last.c {
            let g = (d_feat_main[c] + d_feat_skip[c]) / hw;
            let base = c * last.h * last.w;
            for v in &mut dt.data[base..base + last.h * last.w] {
                *v = g;
            }
        }
        for i in (0..self.blocks.len()).rev() {
            dt = self.blocks[i].backward(&cache.blocks[i], &dt, &mut grads.blocks[i]);
        }
        let mut d_stem = dt;
        for (d, pre) in d_stem.data.iter_mut().zip(&cache.stem_pre.data) {
            *d *= leaky_relu_deriv(*pre);
        }
        self.stem.backward(&cache.input, &d_stem, &mut grads.stem, false);
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub latent: usize,
    pub fuse1: Linear,
    pub fuse2: Linear,
    pub ang: Vec<Linear>,
}

#[derive(Clone, Debug)]
pub struct DecoderGrads {
    pub fuse1: LinearGrad,
    pub fuse2: LinearGrad,
    pub ang: Vec<LinearGrad>,
}

impl DecoderGrads {
    pub fn add_assign(&mut self, other: &DecoderGrads) {
        let add = |a: &mut LinearGrad, b: &LinearGrad| {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        };
        add(&mut self.fuse1, &other.fuse1);
        add(&mut self.fuse2, &other.fuse2);
        for (a, b) in self.ang.iter_mut().zip(&other.ang) {
            add(a, b);
        }
    }
}

/// Spatial-fusion activations for one (latent, footprint) pair; reusable
/// across any number of angular queries.
#[derive(Clone, Debug)]
pub struct SpatialFeature {
    x: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AngularCache {
    x0: Vec<f64>,
    pre1: Vec<f64>,
    h1: Vec<f64>,
    pre2: Vec<f64>,
    h2: Vec<f64>,
    sum3: Vec<f64>,
    h3: Vec<f64>,
    pre4: Vec<f64>,
    h4: Vec<f64>,
    pub out: [f64; 4],
}

/// One-blob encoding of a footprint: wrapped center and normalized size.
pub fn footprint_channels(fp: &Footprint) -> [f64; FOOTPRINT_ENCODED_CHANNELS] {
    let mut out = [0.0; FOOTPRINT_ENCODED_CHANNELS];
    let triple = [
        wrap01(fp.center.0),
        wrap01(fp.center.1),
        (fp.size / FOOTPRINT_SIZE_SCALE).clamp(0.0, 1.0),
    ];
    for (i, x) in triple.iter().enumerate() {
        let enc = one_blob_encode(*x);
        out[i * ONE_BLOB_BINS..(i + 1) * ONE_BLOB_BINS].copy_from_slice(&enc);
    }
    out
}

impl Decoder {
    pub fn new(rng: &mut ChaCha8Rng, latent: usize, angular_width: usize) -> Self {
        let in_fuse = latent + FOOTPRINT_ENCODED_CHANNELS;
        let in_ang = FUSION_WIDTH + LIGHT_CHANNELS + VIEW_CHANNELS;
        let h = angular_width;
        // zero-start the residual branch (third angular layer), matching the
        // encoder blocks
        let mut a3 = Linear::new(rng, h, h);
        a3.w.iter_mut().for_each(|w| *w = 0.0);
        Decoder {
            latent,
            fuse1: Linear::new(rng, in_fuse, FUSION_WIDTH),
            fuse2: Linear::new(rng, FUSION_WIDTH, FUSION_WIDTH),
            ang: vec![
                Linear::new(rng, in_ang, h),
                Linear::new(rng, h, h),
                a3,
                Linear::new(rng, h, h),
                Linear::new(rng, h, 4),
            ],
        }
    }

    pub fn grad_zeros(&self) -> DecoderGrads {
        DecoderGrads {
            fuse1: self.fuse1.grad_zeros(),
            fuse2: self.fuse2.grad_zeros(),
            ang: self.ang.iter().map(|l| l.grad_zeros()).collect(),
        }
    }

    /// Fuse the material latent with the one-blob-encoded footprint.
    pub fn fuse(&self, z: &[f64], fp: &Footprint) -> SpatialFeature {
        debug_assert_eq!(z.len(), self.latent);
        let enc = footprint_channels(fp);
        let mut x = Vec::with_capacity(z.len() + enc.len());
        x.extend_from_slice(z);
        x.extend_from_slice(&enc);
        let pre1 = self.fuse1.forward(&x);
        let act1: Vec<f64> = pre1.iter().map(|&v| leaky_relu(v)).collect();
        let pre2 = self.fuse2.forward(&act1);
        let s: Vec<f64> = pre2.iter().map(|&v| leaky_relu(v)).collect();
        SpatialFeature { x, pre1, act1, pre2, s }
    }

    /// Angular decode against a fused spatial feature. Output order is
    /// (c_warp, c_weft, s_warp, s_weft) with specular slots in log space.
    pub fn angular(&self, sf: &SpatialFeature, wi: [f64; 3], wo_xy: [f64; 2]) -> AngularCache {
        let mut x0 = Vec::with_capacity(sf.s.len() + 5);
        x0.extend_from_slice(&sf.s);
        x0.extend_from_slice(&wi);
        x0.extend_from_slice(&wo_xy);
        let pre1 = self.ang[0].forward(&x0);
        let h1: Vec<f64> = pre1.iter().map(|&v| leaky_relu(v)).collect();
        let pre2 = self.ang[1].forward(&h1);
        let h2: Vec<f64> = pre2.iter().map(|&v| leaky_relu(v)).collect();
        let pre3 = self.ang[2].forward(&h2);
        let sum3: Vec<f64> = pre3.iter().zip(&h1).map(|(a, b)| a + b).collect();
        let h3: Vec<f64> = sum3.iter().map(|&v| leaky_relu(v)).collect();
        let pre4 = self.ang[3].forward(&h3);
        let h4: Vec<f64> = pre4.iter().map(|&v| leaky_relu(v)).collect();
        let out_v = self.ang[4].forward(&h4);
        let out = [out_v[0], out_v[1], out_v[2], out_v[3]];
        AngularCache { x0, pre1, h1, pre2, h2, sum3, h3, pre4, h4, out }
    }

    /// Single-query decode: fuse then angular.
    pub fn decode(&self, z: &[f64], fp: &Footprint, wi: [f64; 3], wo_xy: [f64; 2]) -> [f64; 4] {
        let sf = self.fuse(z, fp);
        self.angular(&sf, wi, wo_xy).out
    }

    /// Reverse pass for one sample. Returns dL/dz.
    pub fn backward(
        &self,
        sf: &SpatialFeature,
        ang: &AngularCache,
        dout: &[f64; 4],
        grads: &mut DecoderGrads,
    ) -> Vec<f64> {
        let d_h4 = self.ang[4]
            .backward(&ang.h4, dout, &mut grads.ang[4], true)
            .expect("dx requested");
        let d_pre4: Vec<f64> = d_h4
            .iter()
            .zip(&ang.pre4)
            .map(|(d, pre)| d * leaky_relu_deriv(*pre))
            .collect();
        let d_h3 = self.ang[3]
            .backward(&ang.h3, &d_pre4, &mut grads.ang[3], true)
            .expect("dx requested");
        let d_sum3: Vec<f64> = d_h3
            .iter()
            .zip(&ang.sum3)
            .map(|(d, pre)| d * leaky_relu_deriv(*pre))
            .collect();
        let d_h2 = self.ang[2]
            .backward(&ang.h2, &d_sum3, &mut grads.ang[2], true)
            .expect("dx requested");
        let d_pre2: Vec<f64> = d_h2
            .iter()
            .zip(&ang.pre2)
            .map(|(d, pre)| d * leaky_relu_deriv(*pre))
            .collect();
        let mut d_h1 = self.ang[1]
            .backward(&ang.h1, &d_pre2, &mut grads.ang[1], true)
            .expect("dx requested");
        for (a, b) in d_h1.iter_mut().zip(&d_sum3) {
            *a += b; // skip connection
        }
        let d_pre1: Vec<f64> = d_h1
            .iter()
            .zip(&ang.pre1)
            .map(|(d, pre)| d * leaky_relu_deriv(*pre))
            .collect();
        let d_x0 = self.ang[0]
            .backward(&ang.x0, &d_pre1, &mut grads.ang[0], true)
            .expect("dx requested");
        let d_s = &d_x0[..FUSION_WIDTH];

        let d_pre2f: Vec<f64> = d_s
            .iter()
            .zip(&sf.pre2)
            .map(|(d, pre)| d * leaky_relu_deriv(*pre))
            .collect();
        let d_act1 = self
            .fuse2
            .backward(&sf.act1, &d_pre2f, &mut grads.fuse2, true)
            .expect("dx requested");
        let d_pre1f: Vec<f64> = d_act1
            .iter()
            .zip(&sf.pre1)
            .map(|(d, pre)| d * leaky_relu_deriv(*pre))
            .collect();
        let d_x = self
            .fuse1
            .backward(&sf.x, &d_pre1f, &mut grads.fuse1, true)
            .expect("dx requested");
        d_x[..self.latent].to_vec()
    }
}

/// All trainable parameters.
#[derive(Clone, Debug)]
pub struct NetworkWeights {
    pub encoder: Encoder,
    pub decoder: Decoder,
}

#[derive(Clone, Debug)]
pub struct NetGrads {
    pub encoder: EncoderGrads,
    pub decoder: DecoderGrads,
}

impl NetGrads {
    /// Gradient slots in the same canonical order as
    /// [`NetworkWeights::visit_params`].
    pub fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        let e = &self.encoder;
        f(&e.stem.w);
        f(&e.stem.b);
        for b in &e.blocks {
            f(&b.conv1.w);
            f(&b.conv1.b);
            f(&b.conv2.w);
            f(&b.conv2.b);
            if let Some(sc) = &b.shortcut {
                f(&sc.w);
                f(&sc.b);
            }
        }
        for l in [&e.fc_a, &e.fc_b, &e.fc_skip, &e.fc_out] {
            f(&l.w);
            f(&l.b);
        }
        let d = &self.decoder;
        for l in [&d.fuse1, &d.fuse2] {
            f(&l.w);
            f(&l.b);
        }
        for l in &d.ang {
            f(&l.w);
            f(&l.b);
        }
    }

    pub fn slot(&self, slot: usize, idx: usize) -> f64 {
        let mut i = 0;
        let mut out = 0.0;
        self.visit(&mut |v| {
            if i == slot {
                out = v[idx];
            }
            i += 1;
        });
        out
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        let e = &mut self.encoder;
        f(&mut e.stem.w);
        f(&mut e.stem.b);
        for b in &mut e.blocks {
            f(&mut b.conv1.w);
            f(&mut b.conv1.b);
            f(&mut b.conv2.w);
            f(&mut b.conv2.b);
            if let Some(sc) = &mut b.shortcut {
                f(&mut sc.w);
                f(&mut sc.b);
            }
        }
        for l in [&mut e.fc_a, &mut e.fc_b, &mut e.fc_skip, &mut e.fc_out] {
            f(&mut l.w);
            f(&mut l.b);
        }
        let d = &mut self.decoder;
        for l in [&mut d.fuse1, &mut d.fuse2] {
            f(&mut l.w);
            f(&mut l.b);
        }
        for l in &mut d.ang {
            f(&mut l.w);
            f(&mut l.b);
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        self.visit(&mut |v| {
            for g in v {
                sq += g * g;
            }
        });
        sq.sqrt()
    }

    /// Scale all gradients in place (global-norm clipping support).
    pub fn scale(&mut self, s: f64) {
        if s == 1.0 {
            return;
        }
        self.visit_mut(&mut |v| {
            for g in v {
                *g *= s;
            }
        });
    }

    /// Element-wise accumulate (momentum buffers).
    pub fn add_assign(&mut self, other: &NetGrads) {
        let mut slots = Vec::new();
        other.visit(&mut |v| slots.push(v.to_vec()));
        let mut i = 0;
        self.visit_mut(&mut |v| {
            for (a, b) in v.iter_mut().zip(&slots[i]) {
                *a += b;
            }
            i += 1;
        });
    }
}

impl NetworkWeights {
    pub fn init(seed: u64, cfg: EncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NetworkWeights {
            encoder: Encoder::new(&mut rng, cfg),
            decoder: Decoder::new(&mut rng, cfg.latent, cfg.angular_width),
        }
    }

    /// Zero all weights (degenerate-path tests).
    pub fn zero(&mut self) {
        self.visit_params_mut(&mut |_, w| {
            for v in w {
                *v = 0.0;
            }
        });
    }

    pub fn grad_zeros(&self) -> NetGrads {
        NetGrads {
            encoder: self.encoder.grad_zeros(),
            decoder: self.decoder.grad_zeros(),
        }
    }

    /// Canonical parameter traversal, the single source of truth for
    /// serialization order, the topology hash and SGD updates.
    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &[f32])) {
        let conv = |f: &mut dyn FnMut(&str, &[f32]), name: &str, c: &Conv2d| {
            f(&format!("{name}.w[{}x{}x{}x{}s{}]", c.out_ch, c.in_ch, c.k, c.k, c.stride), &c.w);
            f(&format!("{name}.b[{}]", c.out_ch), &c.b);
        };
        let lin = |f: &mut dyn FnMut(&str, &[f32]), name: &str, l: &Linear| {
            f(&format!("{name}.w[{}x{}]", l.out_dim, l.in_dim), &l.w);
            f(&format!("{name}.b[{}]", l.out_dim), &l.b);
        };
        conv(f, "enc.stem", &self.encoder.stem);
        for (i, b) in self.encoder.blocks.iter().enumerate() {
            conv(f, &format!("enc.block{i}.conv1"), &b.conv1);
            conv(f, &format!("enc.block{i}.conv2"), &b.conv2);
            if let Some(sc) = &b.shortcut {
                conv(f, &format!("enc.block{i}.shortcut"), sc);
            }
        }
        lin(f, "enc.fc_a", &self.encoder.fc_a);
        lin(f, "enc.fc_b", &self.encoder.fc_b);
        lin(f, "enc.fc_skip", &self.encoder.fc_skip);
        lin(f, "enc.fc_out", &self.encoder.fc_out);
        lin(f, "dec.fuse1", &self.decoder.fuse1);
        lin(f, "dec.fuse2", &self.decoder.fuse2);
        for (i, l) in self.decoder.ang.iter().enumerate() {
            lin(f, &format!("dec.ang{i}"), l);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f32>)) {
        let conv = |f: &mut dyn FnMut(&str, &mut Vec<f32>), name: &str, c: &mut Conv2d| {
            f(&format!("{name}.w"), &mut c.w);
            f(&format!("{name}.b"), &mut c.b);
        };
        conv(f, "enc.stem", &mut self.encoder.stem);
        for (i, b) in self.encoder.blocks.iter_mut().enumerate() {
            conv(f, &format!("enc.block{i}.conv1"), &mut b.conv1);
            conv(f, &format!("enc.block{i}.conv2"), &mut b.conv2);
            if let Some(sc) = &mut b.shortcut {
                conv(f, &format!("enc.block{i}.shortcut"), sc);
            }
        }
        let lin = |f: &mut dyn FnMut(&str, &mut Vec<f32>), name: &str, l: &mut Linear| {
            f(&format!("{name}.w"), &mut l.w);
            f(&format!("{name}.b"), &mut l.b);
        };
        lin(f, "enc.fc_a", &mut self.encoder.fc_a);
        lin(f, "enc.fc_b", &mut self.encoder.fc_b);
        lin(f, "enc.fc_skip", &mut self.encoder.fc_skip);
        lin(f, "enc.fc_out", &mut self.encoder.fc_out);
        lin(f, "dec.fuse1", &mut self.decoder.fuse1);
        lin(f, "dec.fuse2", &mut self.decoder.fuse2);
        for (i, l) in self.decoder.ang.iter_mut().enumerate() {
            lin(f, &format!("dec.ang{i}"), l);
        }
    }

    /// Parameter slot lengths in canonical order.
    pub fn param_slot_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        self.visit_params(&mut |_, v| sizes.push(v.len()));
        sizes
    }

    pub fn param_get(&self, slot: usize, idx: usize) -> f32 {
        let mut i = 0;
        let mut out = 0.0f32;
        self.visit_params(&mut |_, v| {
            if i == slot {
                out = v[idx];
            }
            i += 1;
        });
        out
    }

    pub fn param_set(&mut self, slot: usize, idx: usize, value: f32) {
        let mut i = 0;
        self.visit_params_mut(&mut |_, v| {
            if i == slot {
                v[idx] = value;
            }
            i += 1;
        });
    }

    /// FNV-1a over the parameter slot descriptors.
    pub fn topology_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        self.visit_params(&mut |name, vals| {
            for b in name.bytes().chain(format!(":{}", vals.len()).bytes()) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        });
        h
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, vals| n += vals.len());
        n
    }

    /// SGD step with L2 regularization: w -= lr (g + wd w).
    pub fn apply_sgd(&mut self, grads: &NetGrads, lr: f64, weight_decay: f64) {
        fn upd(w: &mut [f32], g: &[f64], lr: f64, wd: f64) {
            debug_assert_eq!(w.len(), g.len());
            for (wi, gi) in w.iter_mut().zip(g) {
                let v = *wi as f64;
                *wi = (v - lr * (gi + wd * v)) as f32;
            }
        }
        let e = &mut self.encoder;
        let ge = &grads.encoder;
        upd(&mut e.stem.w, &ge.stem.w, lr, weight_decay);
        upd(&mut e.stem.b, &ge.stem.b, lr, weight_decay);
        for (b, gb) in e.blocks.iter_mut().zip(&ge.blocks) {
            upd(&mut b.conv1.w, &gb.conv1.w, lr, weight_decay);
            upd(&mut b.conv1.b, &gb.conv1.b, lr, weight_decay);
            upd(&mut b.conv2.w, &gb.conv2.w, lr, weight_decay);
            upd(&mut b.conv2.b, &gb.conv2.b, lr, weight_decay);
            if let (Some(sc), Some(gsc)) = (&mut b.shortcut, &gb.shortcut) {
                upd(&mut sc.w, &gsc.w, lr, weight_decay);
                upd(&mut sc.b, &gsc.b, lr, weight_decay);
            }
        }
        for (l, g) in [
            (&mut e.fc_a, &ge.fc_a),
            (&mut e.fc_b, &ge.fc_b),
            (&mut e.fc_skip, &ge.fc_skip),
            (&mut e.fc_out, &ge.fc_out),
        ] {
            upd(&mut l.w, &g.w, lr, weight_decay);
            upd(&mut l.b, &g.b, lr, weight_decay);
        }
        let d = &mut self.decoder;
        let gd = &grads.decoder;
        upd(&mut d.fuse1.w, &gd.fuse1.w, lr, weight_decay);
        upd(&mut d.fuse1.b, &gd.fuse1.b, lr, weight_decay);
        upd(&mut d.fuse2.w, &gd.fuse2.w, lr, weight_decay);
        upd(&mut d.fuse2.b, &gd.fuse2.b, lr, weight_decay);
        for (l, g) in d.ang.iter_mut().zip(&gd.ang) {
            upd(&mut l.w, &g.w, lr, weight_decay);
            upd(&mut l.b, &g.b, lr, weight_decay);
        }
    }
}

/// Downsample geometry maps to the encoder input tensor: six channels
/// (normal xyz, orientation xyz), each output texel the average of a 4x4
/// point grid inside its box. Works for any map resolution >= the target.
pub fn encoder_input(maps: &GeometryMaps, res: usize) -> Result<Tensor3> {
    if (maps.resolution as usize) < res {
        return Err(Error::InvalidParameter(format!(
            "map resolution {} below encoder input resolution {res}",
            maps.resolution
        )));
    }
    let mut out = Tensor3::zeros(ENCODER_INPUT_CHANNELS, res, res);
    let ss = 4;
    for oy in 0..res {
        for ox in 0..res {
            let mut acc = [0.0f64; 6];
            for sy in 0..ss {
                for sx in 0..ss {
                    let u = (ox as f64 + (sx as f64 + 0.5) / ss as f64) / res as f64;
                    let v = (oy as f64 + (sy as f64 + 0.5) / ss as f64) / res as f64;
                    let idx = maps.texel_of_uv(u, v);
                    let n = maps.normal[idx];
                    let t = maps.orientation[idx];
                    for k in 0..3 {
                        acc[k] += n[k] as f64;
                        acc[3 + k] += t[k] as f64;
                    }
                }
            }
            for (c, a) in acc.iter().enumerate() {
                *out.at_mut(c, oy, ox) = a / (ss * ss) as f64;
            }
        }
    }
    Ok(out)
}

/// Compress a material (maps + appearance scalars) into its latent vector.
pub fn encode(net: &NetworkWeights, maps: &GeometryMaps, alpha: f64, beta: f64) -> Result<Vec<f64>> {
    if !(0.1..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("roughness {alpha} outside [0.1, 1]")));
    }
    if !(0.0..=2.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("height scaling {beta} outside [0, 2]")));
    }
    let input = encoder_input(maps, net.encoder.cfg.input_res)?;
    let (z, _) = net.encoder.forward(&input, alpha, beta)?;
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Kernel;
    use crate::pattern::{build_weave_matrix, synthesize_geometry_maps, MapParams, WeaveKind};

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig { input_res: 8, widths: [3, 4, 5], mlp_width: 16, latent: LATENT_DIM, angular_width: 128 }
    }

    fn test_maps() -> GeometryMaps {
        let weave = build_weave_matrix(WeaveKind::Plain).unwrap();
        synthesize_geometry_maps(&weave, &MapParams { resolution: 64, ..MapParams::default() })
            .unwrap()
    }

    #[test]
    fn encode_is_deterministic() {
        let net = NetworkWeights::init(3, EncoderConfig::default());
        let maps = test_maps();
        let a = encode(&net, &maps, 0.5, 1.0).unwrap();
        let b = encode(&net, &maps, 0.5, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), LATENT_DIM);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_weights_give_input_independent_latent() {
        let mut net = NetworkWeights::init(3, tiny_cfg());
        net.zero();
        let maps = test_maps();
        let input = encoder_input(&maps, 8).unwrap();
        let (z1, _) = net.encoder.forward(&input, 0.3, 0.5).unwrap();
        let mut other = input.clone();
        for v in &mut other.data {
            *v = -*v + 0.25;
        }
        let (z2, _) = net.encoder.forward(&other, 0.9, 1.7).unwrap();
        assert_eq!(z1, z2, "zero weights must yield the bias pattern");
        assert!(z1.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn decode_factorization_is_bit_exact() {
        let net = NetworkWeights::init(11, tiny_cfg());
        let z: Vec<f64> = (0..LATENT_DIM).map(|i| (i as f64 * 0.37).sin()).collect();
        let fp = Footprint::new((0.3, 0.8), 1.7, Kernel::Box);
        let sf = net.decoder.fuse(&z, &fp);
        for k in 0..100 {
            let t = k as f64 / 100.0;
            let x = t.sin() * 0.6;
            let y = t.cos() * 0.6;
            let z_mag = (1.0 - x * x - y * y).sqrt();
            let wi = [x, y, if k % 2 == 0 { z_mag } else { -z_mag }];
            let wo_xy = [0.3 * t, -0.2];
            let shared = net.decoder.angular(&sf, wi, wo_xy).out;
            let full = net.decoder.decode(&z, &fp, wi, wo_xy);
            assert_eq!(shared, full);
        }
    }

    #[test]
    fn latent_is_sufficient_without_encoder() {
        let net = NetworkWeights::init(5, tiny_cfg());
        let maps = test_maps();
        let input = encoder_input(&maps, 8).unwrap();
        let (z, _) = net.encoder.forward(&input, 0.4, 1.1).unwrap();
        let fp = Footprint::new((0.1, 0.2), 0.5, Kernel::Box);
        let expected = net.decoder.decode(&z, &fp, [0.1, 0.2, 0.97], [0.0, 0.1]);
        // decoder detached from its encoder
        let detached = net.decoder.clone();
        drop(net);
        let got = detached.decode(&z, &fp, [0.1, 0.2, 0.97], [0.0, 0.1]);
        assert_eq!(expected, got);
    }

    #[test]
    fn shipped_topology_constants() {
        let net = NetworkWeights::init(1, EncoderConfig::default());
        assert_eq!(net.decoder.latent, 64);
        assert_eq!(net.decoder.fuse1.out_dim, 128);
        assert_eq!(net.decoder.fuse2.out_dim, 128);
        assert_eq!(net.decoder.ang.len(), 5);
        assert_eq!(net.decoder.ang[0].in_dim, 128 + 3 + 2);
        assert_eq!(net.decoder.ang[4].out_dim, 4);
        assert_eq!(FOOTPRINT_ENCODED_CHANNELS, 24);
        // distinct topologies get distinct hashes
        let tiny = NetworkWeights::init(1, tiny_cfg());
        assert_ne!(net.topology_hash(), tiny.topology_hash());
    }
}
