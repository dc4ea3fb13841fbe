//! Network building blocks with explicit forward and reverse-mode passes.
//! Master weights are f32 (what gets serialized); all arithmetic runs in f64.

use super::tensor::Tensor3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
pub fn leaky_relu_deriv(pre: f64) -> f64 {
    if pre >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

pub fn leaky_relu_slice(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| leaky_relu(x)).collect()
}

/// He-uniform fan-in initialization.
fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f32> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit) as f32).collect()
}

/// Fully connected layer, weights row-major [out][in].
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Vec<f32>,
    pub b: Vec<f32>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Clone, Debug)]
pub struct LinearGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn new(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: he_uniform(rng, in_dim, in_dim * out_dim),
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Linear { w: vec![0.0; in_dim * out_dim], b: vec![0.0; out_dim], in_dim, out_dim }
    }

    pub fn grad_zeros(&self) -> LinearGrad {
        LinearGrad { w: vec![0.0; self.w.len()], b: vec![0.0; self.b.len()] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o] as f64;
            for (wi, xi) in row.iter().zip(x) {
                acc += (*wi as f64) * xi;
            }
            out.push(acc);
        }
        out
    }

    /// Accumulates weight/bias gradients; optionally returns dL/dx.
    pub fn backward(
        &self,
        x: &[f64],
        dout: &[f64],
        grad: &mut LinearGrad,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        debug_assert_eq!(dout.len(), self.out_dim);
        for o in 0..self.out_dim {
            let g = dout[o];
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = &mut grad.w[o * self.in_dim..(o + 1) * self.in_dim];
            for (gw, xi) in row.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
        if !want_dx {
            return None;
        }
        let mut dx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let g = dout[o];
            if g == 0.0 {
                continue;
            }
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            for (dxi, wi) in dx.iter_mut().zip(row) {
                *dxi += g * (*wi as f64);
            }
        }
        Some(dx)
    }
}

/// 2D convolution with square kernel, zero padding.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: Vec<f32>,
    pub b: Vec<f32>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
pub struct Conv2dGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv2d {
    pub fn new(
        rng: &mut ChaCha8Rng,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = in_ch * k * k;
        Conv2d {
            w: he_uniform(rng, fan_in, out_ch * in_ch * k * k),
            b: vec![0.0; out_ch],
            in_ch,
            out_ch,
            k,
            stride,
            pad,
        }
    }

    pub fn grad_zeros(&self) -> Conv2dGrad {
        Conv2dGrad { w: vec![0.0; self.w.len()], b: vec![0.0; self.b.len()] }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        debug_assert_eq!(x.c, self.in_ch);
        let (oh, ow) = self.out_size(x.h, x.w);
        let mut out = Tensor3::zeros(self.out_ch, oh, ow);
        let kk = self.k * self.k;
        for oc in 0..self.out_ch {
            let wbase = oc * self.in_ch * kk;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.b[oc] as f64;
                    for ic in 0..self.in_ch {
                        let wrow = &self.w[wbase + ic * kk..wbase + (ic + 1) * kk];
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= x.h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                acc += (wrow[ky * self.k + kx] as f64)
                                    * x.at(ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    *out.at_mut(oc, oy, ox) = acc;
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        x: &Tensor3,
        dout: &Tensor3,
        grad: &mut Conv2dGrad,
        want_dx: bool,
    ) -> Option<Tensor3> {
        let kk = self.k * self.k;
        for oc in 0..self.out_ch {
            let wbase = oc * self.in_ch * kk;
            for oy in 0..dout.h {
                for ox in 0..dout.w {
                    let g = dout.at(oc, oy, ox);
                    if g == 0.0 {
                        continue;
                    }
                    grad.b[oc] += g;
                    for ic in 0..self.in_ch {
                        let grow = &mut grad.w[wbase + ic * kk..wbase + (ic + 1) * kk];
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= x.h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                grow[ky * self.k + kx] += g * x.at(ic, iy as usize, ix as usize);
                            }
                        }
                    }
                }
            }
        }
        if !want_dx {
            return None;
        }
        let mut dx = Tensor3::zeros(x.c, x.h, x.w);
        for oc in 0..self.out_ch {
            let wbase = oc * self.in_ch * kk;
            for oy in 0..dout.h {
                for ox in 0..dout.w {
                    let g = dout.at(oc, oy, ox);
                    if g == 0.0 {
                        continue;
                    }
                    for ic in 0..self.in_ch {
                        let wrow = &self.w[wbase + ic * kk..wbase + (ic + 1) * kk];
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= x.h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                *dx.at_mut(ic, iy as usize, ix as usize) +=
                                    g * (wrow[ky * self.k + kx] as f64);
                            }
                        }
                    }
                }
            }
        }
        Some(dx)
    }
}

/// Gaussian one-blob encoding of a scalar clamped to [0, 1].
pub const ONE_BLOB_BINS: usize = 8;

pub fn one_blob_encode(x: f64) -> [f64; ONE_BLOB_BINS] {
    let x = x.clamp(0.0, 1.0);
    let sigma = 1.0 / ONE_BLOB_BINS as f64;
    let mut out = [0.0; ONE_BLOB_BINS];
    for (b, slot) in out.iter_mut().enumerate() {
        let center = (b as f64 + 0.5) / ONE_BLOB_BINS as f64;
        let d = x - center;
        *slot = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    out
}
