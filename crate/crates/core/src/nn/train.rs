//! SGD training loop: one material per iteration (encoder recomputed), a
//! query batch through the decoder, end-to-end gradients, stepped learning
//! rate. Deterministic given the seed: batch gradients reduce over fixed
//! chunks in a fixed order, so the thread count never changes the result.

use super::model::{encoder_input, NetworkWeights};
use super::tensor::Tensor3;
use super::{batch_loss, loss_grad, LossConfig};
use crate::dataset::{DatasetHeader, QueryRecord};
use crate::error::{Error, Result};
use crate::pattern::GeometryMaps;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::PathBuf;

/// Samples per parallel reduction chunk (fixed for determinism).
const GRAD_CHUNK: usize = 64;

/// One material's training assets.
pub struct TrainMaterial {
    pub header: DatasetHeader,
    pub input: Tensor3,
    pub records: Vec<QueryRecord>,
}

impl TrainMaterial {
    pub fn new(
        header: DatasetHeader,
        maps: &GeometryMaps,
        records: Vec<QueryRecord>,
        input_res: usize,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidParameter("material has no records".into()));
        }
        Ok(TrainMaterial { header, input: encoder_input(maps, input_res)?, records })
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    /// 1-indexed epochs at whose start the decay multiplies in.
    pub decay_epochs: Vec<usize>,
    pub weight_decay: f64,
    /// Global gradient-norm clip; bounds the early large-residual transient
    /// and goes inactive as the fit improves.
    pub clip_norm: Option<f64>,
    pub momentum: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub checkpoint_dir: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 512,
            lr: 5e-2,
            lr_decay: 0.2,
            decay_epochs: vec![6, 9],
            weight_decay: 1e-5,
            clip_norm: Some(3.0),
            momentum: 0.9,
            seed: 0,
            loss: LossConfig::default(),
            checkpoint_dir: None,
            metrics_path: None,
        }
    }
}

impl TrainConfig {
    /// Learning rate in force during a 1-indexed epoch.
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&d| epoch >= d).count();
        self.lr * self.lr_decay.powi(decays as i32)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub iterations: usize,
    /// Mean loss over the first hundred iterations (or all, if fewer).
    pub first_window_mean_loss: f64,
    pub final_epoch_mean_loss: f64,
    pub epoch_mean_loss: Vec<f64>,
}

struct MaterialPool {
    order: Vec<u32>,
    cursor: usize,
}

impl MaterialPool {
    fn new(n: usize) -> Self {
        MaterialPool { order: (0..n as u32).collect(), cursor: usize::MAX }
    }

    fn next_batch(&mut self, count: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.cursor >= self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

pub fn train(
    net: &mut NetworkWeights,
    materials: &[TrainMaterial],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if materials.is_empty() {
        return Err(Error::InvalidParameter("no training materials".into()));
    }
    crate::dataset::check_merge_compatible(
        &materials.iter().map(|m| m.header.clone()).collect::<Vec<_>>(),
    )?;
    let total_records: usize = materials.iter().map(|m| m.records.len()).sum();
    let iters_per_epoch = (total_records / cfg.batch_size).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pools: Vec<MaterialPool> =
        materials.iter().map(|m| MaterialPool::new(m.records.len())).collect();

    let mut metrics = match &cfg.metrics_path {
        Some(p) => {
            let mut f = std::fs::File::create(p)?;
            writeln!(f, "epoch,iteration,loss,lr")?;
            Some(f)
        }
        None => None,
    };

    let mut losses = Vec::with_capacity(cfg.epochs * iters_per_epoch);
    let mut epoch_mean_loss = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0usize;
    let mut velocity = net.grad_zeros();

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_for_epoch(epoch);
        let mut epoch_loss_sum = 0.0;
        for _ in 0..iters_per_epoch {
            iteration += 1;
            let mi = rng.gen_range(0..materials.len());
            let mat = &materials[mi];
            let batch_idx = pools[mi].next_batch(cfg.batch_size.min(mat.records.len()), &mut rng);
            let batch: Vec<&QueryRecord> =
                batch_idx.iter().map(|&i| &mat.records[i as usize]).collect();

            let (loss, mut grads) = batch_gradients(
                net,
                &mat.input,
                mat.header.material.alpha,
                mat.header.material.beta,
                &batch,
                mat.header.kernel,
                &cfg.loss,
            )?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "non-finite loss at epoch {epoch} iteration {iteration} (material {mi}, lr {lr})"
                )));
            }
            if let Some(clip) = cfg.clip_norm {
                let norm = grads.global_norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            if cfg.momentum > 0.0 {
                // v <- mu v + g, step along v
                velocity.scale(cfg.momentum);
                velocity.add_assign(&grads);
                net.apply_sgd(&velocity, lr, cfg.weight_decay);
            } else {
                net.apply_sgd(&grads, lr, cfg.weight_decay);
            }

            losses.push(loss);
            epoch_loss_sum += loss;
            if let Some(f) = metrics.as_mut() {
                writeln!(f, "{epoch},{iteration},{loss},{lr}")?;
            }
        }
        epoch_mean_loss.push(epoch_loss_sum / iters_per_epoch as f64);
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            super::weights_io::save_weights(net, &dir.join(format!("epoch_{epoch:02}.wwnn")))?;
        }
    }

    let window = losses.len().min(100);
    let first_window_mean_loss = losses[..window].iter().sum::<f64>() / window.max(1) as f64;
    Ok(TrainReport {
        iterations: iteration,
        first_window_mean_loss,
        final_epoch_mean_loss: *epoch_mean_loss.last().unwrap_or(&f64::NAN),
        epoch_mean_loss,
    })
}

/// Forward + reverse pass for one batch: batch-mean loss and gradients for
/// every weight. The decoder runs over fixed-size chunks merged in order, so
/// the result is independent of the worker count. Shared by the trainer and
/// the finite-difference gradient checks.
pub fn batch_gradients(
    net: &NetworkWeights,
    input: &Tensor3,
    alpha: f64,
    beta: f64,
    batch: &[&QueryRecord],
    kernel: crate::oracle::Kernel,
    loss_cfg: &LossConfig,
) -> Result<(f64, super::model::NetGrads)> {
    let (z, enc_cache) = net.encoder.forward(input, alpha, beta)?;

    struct ChunkOut {
        grads: super::model::DecoderGrads,
        dz: Vec<f64>,
        preds: Vec<[f64; 4]>,
    }
    let n = batch.len();
    let decoder = &net.decoder;
    let chunk_outs: Vec<ChunkOut> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = decoder.grad_zeros();
            let mut dz = vec![0.0; z.len()];
            let mut preds = Vec::with_capacity(chunk.len());
            for rec in chunk {
                let fp = rec.query.footprint(kernel);
                let sf = decoder.fuse(&z, &fp);
                let wi = [
                    rec.query.wi[0] as f64,
                    rec.query.wi[1] as f64,
                    rec.query.wi[2] as f64,
                ];
                let wo_xy = [rec.query.wo[0] as f64, rec.query.wo[1] as f64];
                let ang = decoder.angular(&sf, wi, wo_xy);
                let dout = loss_grad(&ang.out, &rec.target, rec.query.is_btdf(), loss_cfg, n);
                let dzi = decoder.backward(&sf, &ang, &dout, &mut grads);
                for (a, b) in dz.iter_mut().zip(&dzi) {
                    *a += b;
                }
                preds.push(ang.out);
            }
            ChunkOut { grads, dz, preds }
        })
        .collect();

    let mut grads = net.grad_zeros();
    let mut dz_total = vec![0.0; z.len()];
    let mut preds = Vec::with_capacity(n);
    for c in chunk_outs {
        grads.decoder.add_assign(&c.grads);
        for (a, b) in dz_total.iter_mut().zip(&c.dz) {
            *a += b;
        }
        preds.extend(c.preds);
    }
    net.encoder.backward(&enc_cache, &dz_total, &mut grads.encoder);

    let targets: Vec<[f32; 4]> = batch.iter().map(|r| r.target).collect();
    let flags: Vec<bool> = batch.iter().map(|r| r.query.is_btdf()).collect();
    Ok((batch_loss(&preds, &targets, &flags, loss_cfg), grads))
}

/// Forward-only batch loss (finite-difference oracle side).
pub fn batch_forward_loss(
    net: &NetworkWeights,
    input: &Tensor3,
    alpha: f64,
    beta: f64,
    batch: &[&QueryRecord],
    kernel: crate::oracle::Kernel,
    loss_cfg: &LossConfig,
) -> Result<f64> {
    let (z, _) = net.encoder.forward(input, alpha, beta)?;
    let preds: Vec<[f64; 4]> = batch
        .iter()
        .map(|rec| {
            let fp = rec.query.footprint(kernel);
            let sf = net.decoder.fuse(&z, &fp);
            let wi = [
                rec.query.wi[0] as f64,
                rec.query.wi[1] as f64,
                rec.query.wi[2] as f64,
            ];
            net.decoder
                .angular(&sf, wi, [rec.query.wo[0] as f64, rec.query.wo[1] as f64])
                .out
        })
        .collect();
    let targets: Vec<[f32; 4]> = batch.iter().map(|r| r.target).collect();
    let flags: Vec<bool> = batch.iter().map(|r| r.query.is_btdf()).collect();
    Ok(batch_loss(&preds, &targets, &flags, loss_cfg))
}

/// Held-out evaluation: mean absolute error on diffuse components (linear
/// space) and specular components (log space).
#[derive(Copy, Clone, Debug, Default)]
pub struct EvalMetrics {
    pub diffuse_mae: f64,
    pub specular_g_mae: f64,
    pub count: usize,
}

pub fn evaluate(
    net: &NetworkWeights,
    material: &TrainMaterial,
    records: &[QueryRecord],
    loss_cfg: &LossConfig,
) -> Result<EvalMetrics> {
    let (z, _) = net.encoder.forward(
        &material.input,
        material.header.material.alpha,
        material.header.material.beta,
    )?;
    let kernel = material.header.kernel;
    let sums: Vec<(f64, f64)> = records
        .par_iter()
        .map(|rec| {
            let fp = rec.query.footprint(kernel);
            let sf = net.decoder.fuse(&z, &fp);
            let wi = [
                rec.query.wi[0] as f64,
                rec.query.wi[1] as f64,
                rec.query.wi[2] as f64,
            ];
            let ang = net
                .decoder
                .angular(&sf, wi, [rec.query.wo[0] as f64, rec.query.wo[1] as f64]);
            let k = loss_cfg.k(rec.query.is_btdf());
            let dc = (ang.out[0] - rec.target[0] as f64).abs()
                + (ang.out[1] - rec.target[1] as f64).abs();
            let ds = (ang.out[2] - super::g_map(rec.target[2] as f64, k)).abs()
                + (ang.out[3] - super::g_map(rec.target[3] as f64, k)).abs();
            (dc, ds)
        })
        .collect();
    let n = records.len().max(1);
    let (dc, ds) = sums
        .iter()
        .fold((0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
    Ok(EvalMetrics {
        diffuse_mae: dc / (2 * n) as f64,
        specular_g_mae: ds / (2 * n) as f64,
        count: records.len(),
    })
}
