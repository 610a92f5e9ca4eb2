use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::nn::{FeatureMap, Scalar};

/// 8-bit RGB raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage { width, height, data: vec![0; width * height * 3] }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            bail!(Shape, "RGB buffer of {} bytes does not match {width}x{height}", data.len());
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Normalized `[3, H, W]` network input.
    pub fn to_input<S: Scalar>(&self, norm: &Normalization) -> FeatureMap<S> {
        let plane = self.width * self.height;
        let mut out = Vec::with_capacity(plane * 3);
        for c in 0..3 {
            let (m, s) = (norm.mean[c] as f64, norm.std[c] as f64);
            out.extend(self.data.iter().skip(c).step_by(3).map(|&v| S::from_f64((v as f64 / 255.0 - m) / s)));
        }
        FeatureMap::from_vec(3, self.height, self.width, out)
    }

    pub fn transformed(&self, t: Transform) -> RgbImage {
        let (w, h) = t.output_size(self.width, self.height);
        let mut out = RgbImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = t.source(x, y, self.width, self.height);
                out.put_pixel(x, y, self.pixel(sx, sy));
            }
        }
        out
    }
}

/// Binary raster: every value is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask { width, height, data: vec![0; width * height] }
    }

    /// Any nonzero byte is foreground.
    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Result<Self> {
        if gray.len() != width * height {
            bail!(Shape, "mask buffer of {} bytes does not match {width}x{height}", gray.len());
        }
        Ok(Mask { width, height, data: gray.iter().map(|&v| u8::from(v != 0)).collect() })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Mask { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// 0/1 bytes, row-major.
    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = u8::from(v);
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Foreground as 255, background as 0.
    pub fn to_gray(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v * 255).collect()
    }

    pub fn complement(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.data.iter().map(|&v| 1 - v).collect() }
    }

    pub fn intersection_area(&self, other: &Mask) -> usize {
        self.data.iter().zip(&other.data).filter(|(&a, &b)| a != 0 && b != 0).count()
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| a == 0 || b != 0)
    }

    pub fn transformed(&self, t: Transform) -> Mask {
        let (w, h) = t.output_size(self.width, self.height);
        Mask::from_fn(w, h, |x, y| {
            let (sx, sy) = t.source(x, y, self.width, self.height);
            self.get(sx, sy)
        })
    }
}

/// One of the eight axis-aligned symmetries of a square patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Transform {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Number of 90° clockwise turns, 0..4.
    pub rotations: u8,
}

impl Transform {
    fn output_size(self, w: usize, h: usize) -> (usize, usize) {
        if self.rotations % 2 == 1 {
            (h, w)
        } else {
            (w, h)
        }
    }

    /// Source pixel for output pixel `(x, y)`; rotation is applied after flips.
    fn source(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        // Undo the rotation: output of a clockwise turn maps (x, y) <- (y, H'-1-x).
        let (mut sx, mut sy) = (x, y);
        let (mut cw, mut ch) = self.output_size(w, h);
        for _ in 0..self.rotations % 4 {
            let (px, py) = (sy, cw - 1 - sx);
            sx = px;
            sy = py;
            core::mem::swap(&mut cw, &mut ch);
        }
        if self.flip_horizontal {
            sx = w - 1 - sx;
        }
        if self.flip_vertical {
            sy = h - 1 - sy;
        }
        (sx, sy)
    }
}

/// Per-channel mean and standard deviation on the [0, 1] intensity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { mean: [0.5; 3], std: [0.25; 3] }
    }
}

impl Normalization {
    /// Channel statistics over a set of images. Zero deviations fall back to 1.
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a RgbImage>) -> Self {
        let mut sum = [0f64; 3];
        let mut sq = [0f64; 3];
        let mut n = 0f64;
        for img in images {
            for px in img.as_raw().chunks_exact(3) {
                for c in 0..3 {
                    let v = px[c] as f64 / 255.0;
                    sum[c] += v;
                    sq[c] += v * v;
                }
                n += 1.0;
            }
        }
        if n == 0.0 {
            return Normalization::default();
        }
        let mut norm = Normalization::default();
        for c in 0..3 {
            let mean = sum[c] / n;
            let var = (sq[c] / n - mean * mean).max(0.0);
            let std = libm::sqrt(var);
            norm.mean[c] = mean as f32;
            norm.std[c] = if std > 1e-6 { std as f32 } else { 1.0 };
        }
        norm
    }
}
