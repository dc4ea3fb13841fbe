//! Linear-light float images: PFM storage, tone-mapped PNG export, MSE and
//! error heat maps.

use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, top-left origin, linear RGB.
    pub data: Vec<[f32; 3]>,
}

impl FloatImage {
    pub fn new(width: u32, height: u32) -> Self {
        FloatImage {
            width,
            height,
            data: vec![[0.0; 3]; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        self.data[(y as usize) * (self.width as usize) + x as usize]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [f32; 3] {
        &mut self.data[(y as usize) * (self.width as usize) + x as usize]
    }

    /// Write as binary PFM (little-endian, bottom-to-top rows).
    pub fn save_pfm(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for c in self.pixel(x, y) {
                    f.write_all(&c.to_le_bytes())?;
                }
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load_pfm(path: &Path) -> Result<FloatImage> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim() != "PF" {
            return Err(Error::BadFormat("not a color PFM file".into()));
        }
        line.clear();
        r.read_line(&mut line)?;
        let mut dims = line.split_whitespace();
        let width: u32 = dims
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::BadFormat("bad PFM dimensions".into()))?;
        let height: u32 = dims
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::BadFormat("bad PFM dimensions".into()))?;
        line.clear();
        r.read_line(&mut line)?;
        let scale: f64 = line.trim().parse().map_err(|_| Error::BadFormat("bad PFM scale".into()))?;
        if scale >= 0.0 {
            return Err(Error::BadFormat("big-endian PFM not supported".into()));
        }
        let mut img = FloatImage::new(width, height);
        let mut buf = vec![0u8; (width as usize) * 12];
        for y in (0..height).rev() {
            r.read_exact(&mut buf)?;
            for x in 0..width as usize {
                let px = img.pixel_mut(x as u32, y);
                for c in 0..3 {
                    let off = x * 12 + c * 4;
                    px[c] = f32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
                }
            }
        }
        Ok(img)
    }

    /// Tone-mapped 2.2-gamma PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::RgbImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let p = self.pixel(x, y);
                let map = |v: f32| -> u8 {
                    let v = (v.max(0.0) as f64).min(1.0).powf(1.0 / 2.2);
                    (v * 255.0).round() as u8
                };
                img.put_pixel(x, y, image::Rgb([map(p[0]), map(p[1]), map(p[2])]));
            }
        }
        img.save(path).map_err(|e| Error::Image(e.to_string()))
    }
}

/// Mean squared error over linear RGB.
pub fn image_mse(a: &FloatImage, b: &FloatImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::InvalidParameter(format!(
            "image dimensions differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut sum = 0.0f64;
    for (pa, pb) in a.data.iter().zip(&b.data) {
        for c in 0..3 {
            let d = pa[c] as f64 - pb[c] as f64;
            sum += d * d;
        }
    }
    Ok(sum / (a.data.len() * 3) as f64)
}

/// Per-pixel absolute-error map (mean over channels), normalized to its max.
pub fn error_map(a: &FloatImage, b: &FloatImage) -> Result<FloatImage> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::InvalidParameter("image dimensions differ".into()));
    }
    let mut out = FloatImage::new(a.width, a.height);
    let mut maxe = 0.0f32;
    for (i, (pa, pb)) in a.data.iter().zip(&b.data).enumerate() {
        let e = (0..3).map(|c| (pa[c] - pb[c]).abs()).sum::<f32>() / 3.0;
        out.data[i] = [e, e, e];
        maxe = maxe.max(e);
    }
    if maxe > 0.0 {
        for p in &mut out.data {
            for c in p.iter_mut() {
                *c /= maxe;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image(seed: u32) -> FloatImage {
        let mut img = FloatImage::new(9, 5);
        for (i, p) in img.data.iter_mut().enumerate() {
            let v = ((i as u32).wrapping_mul(2654435761).wrapping_add(seed)) as f32 / u32::MAX as f32;
            *p = [v, 1.0 - v, 0.5 * v];
        }
        img
    }

    #[test]
    fn pfm_round_trip() {
        let img = test_image(1);
        let dir = std::env::temp_dir().join("woven_img");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("t.pfm");
        img.save_pfm(&p).unwrap();
        let back = FloatImage::load_pfm(&p).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn mse_closed_forms() {
        let a = test_image(2);
        assert_eq!(image_mse(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        for p in &mut b.data {
            for c in p.iter_mut() {
                *c += 0.1;
            }
        }
        let m = image_mse(&a, &b).unwrap();
        // f32 addition noise bounds the deviation from the closed form
        assert!((m - 0.01).abs() < 1e-7, "{m}");
        // checker vs inverted checker of amplitude 1
        let mut c1 = FloatImage::new(4, 4);
        let mut c2 = FloatImage::new(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                let v = ((x + y) % 2) as f32;
                *c1.pixel_mut(x, y) = [v, v, v];
                *c2.pixel_mut(x, y) = [1.0 - v, 1.0 - v, 1.0 - v];
            }
        }
        assert_eq!(image_mse(&c1, &c2).unwrap(), 1.0);
        // dimension mismatch is an error
        assert!(image_mse(&a, &c1).is_err());
    }

    #[test]
    fn error_map_is_normalized() {
        let a = test_image(3);
        let mut b = a.clone();
        b.data[7] = [2.0, 2.0, 2.0];
        let e = error_map(&a, &b).unwrap();
        let maxv = e.data.iter().map(|p| p[0]).fold(0.0f32, f32::max);
        assert!((maxv - 1.0).abs() < 1e-6);
    }
}
