//! The trainable multi-scale fabric representation: network, losses, trainer
//! and weight persistence.

pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;
mod weights_io;

pub use layers::{one_blob_encode, ONE_BLOB_BINS};
pub use model::{
    encode, encoder_input, footprint_channels, Decoder, Encoder, EncoderConfig, NetGrads,
    NetworkWeights, SpatialFeature, ANGULAR_LAYERS, ANGULAR_SKIPS, ENCODER_INPUT_RES,
    FOOTPRINT_ENCODED_CHANNELS, FOOTPRINT_RAW_CHANNELS, FOOTPRINT_SIZE_SCALE, FUSION_WIDTH,
    LATENT_DIM, LIGHT_CHANNELS, VIEW_CHANNELS,
};
pub use tensor::Tensor3;
pub use train::{
    batch_forward_loss, batch_gradients, evaluate, train, EvalMetrics, TrainConfig, TrainMaterial,
    TrainReport,
};
pub use weights_io::{load_weights, save_weights};

use crate::bsdf::ComponentQuad;

/// Loss hyperparameters: specular/diffuse weights and the log-mapping
/// strengths for reflection and transmission targets.
#[derive(Copy, Clone, Debug)]
pub struct LossConfig {
    pub lambda_s: f64,
    pub lambda_c: f64,
    pub k_brdf: f64,
    pub k_btdf: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda_s: 0.4, lambda_c: 0.1, k_brdf: 100.0, k_btdf: 1000.0 }
    }
}

impl LossConfig {
    pub fn k(&self, is_btdf: bool) -> f64 {
        if is_btdf {
            self.k_btdf
        } else {
            self.k_brdf
        }
    }
}

/// Dynamic-range compression for specular targets.
#[inline]
pub fn g_map(x: f64, k: f64) -> f64 {
    (k * x + 1.0).ln()
}

/// Inverse of [`g_map`].
#[inline]
pub fn g_unmap(y: f64, k: f64) -> f64 {
    y.exp_m1() / k
}

/// Convert a network-space prediction (diffuse linear, specular log-mapped)
/// into a physical component quad. Negative predictions clamp to zero.
pub fn unmap_prediction(pred: [f64; 4], is_btdf: bool, cfg: &LossConfig) -> ComponentQuad {
    let k = cfg.k(is_btdf);
    ComponentQuad {
        c_warp: pred[0].max(0.0),
        c_weft: pred[1].max(0.0),
        s_warp: g_unmap(pred[2], k).max(0.0),
        s_weft: g_unmap(pred[3], k).max(0.0),
    }
}

/// Per-sample squared-error terms of the combined loss; `target` holds raw
/// (unmapped) component values.
#[inline]
fn sample_loss_terms(pred: &[f64; 4], target: &[f32; 4], k: f64, cfg: &LossConfig) -> f64 {
    let ec0 = pred[0] - target[0] as f64;
    let ec1 = pred[1] - target[1] as f64;
    let es0 = pred[2] - g_map(target[2] as f64, k);
    let es1 = pred[3] - g_map(target[3] as f64, k);
    cfg.lambda_c * (ec0 * ec0 + ec1 * ec1) + cfg.lambda_s * (es0 * es0 + es1 * es1)
}

/// Batch-mean loss over network-space predictions and raw targets.
pub fn batch_loss(
    preds: &[[f64; 4]],
    targets: &[[f32; 4]],
    is_btdf: &[bool],
    cfg: &LossConfig,
) -> f64 {
    assert_eq!(preds.len(), targets.len());
    assert_eq!(preds.len(), is_btdf.len());
    let n = preds.len().max(1) as f64;
    preds
        .iter()
        .zip(targets)
        .zip(is_btdf)
        .map(|((p, t), b)| sample_loss_terms(p, t, cfg.k(*b), cfg))
        .sum::<f64>()
        / n
}

/// dLoss/dpred for one sample under batch-mean reduction.
pub fn loss_grad(
    pred: &[f64; 4],
    target: &[f32; 4],
    is_btdf: bool,
    cfg: &LossConfig,
    batch: usize,
) -> [f64; 4] {
    let k = cfg.k(is_btdf);
    let n = batch.max(1) as f64;
    [
        2.0 * cfg.lambda_c * (pred[0] - target[0] as f64) / n,
        2.0 * cfg.lambda_c * (pred[1] - target[1] as f64) / n,
        2.0 * cfg.lambda_s * (pred[2] - g_map(target[2] as f64, k)) / n,
        2.0 * cfg.lambda_s * (pred[3] - g_map(target[3] as f64, k)) / n,
    ]
}
