use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, FeatureMap, Init, MatMut, MatRef, ParamId, ParamLayout, Scalar};

/// Upper bound on im2col buffer elements; larger outputs are processed in row bands.
const COL_BUDGET: usize = 1 << 21;

/// Square-kernel 2D convolution with zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Conv2d {
    pub fn new(
        layout: &mut ParamLayout,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = layout.add(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel, kernel],
            Init::Scaled { fan_in, gain: core::f64::consts::SQRT_2 },
        );
        let bias = layout.add(format!("{name}.bias"), &[out_channels], Init::Zeros);
        Conv2d { in_channels, out_channels, kernel, stride, padding, weight, bias }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        let k = self.kernel;
        let p = 2 * self.padding;
        ((height + p - k) / self.stride + 1, (width + p - k) / self.stride + 1)
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn band_rows(&self, out_w: usize) -> usize {
        (COL_BUDGET / (self.patch_len() * out_w).max(1)).max(1)
    }

    /// Output columns `[lo, hi)` whose source column `ox * stride + kx - pad` is inside the input.
    fn valid_columns(&self, kx: usize, in_w: usize, out_w: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let hi = if in_w + p > kx { ((in_w + p - kx - 1) / s + 1).min(out_w) } else { 0 };
        (lo.min(hi), hi)
    }

    fn im2col<S: Scalar>(&self, x: &FeatureMap<S>, rows: core::ops::Range<usize>, out_w: usize, cols: &mut Vec<S>) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let (h, w) = (x.height(), x.width());
        let n = rows.len() * out_w;
        cols.clear();
        cols.resize(self.patch_len() * n, S::ZERO);
        for ci in 0..self.in_channels {
            let plane = x.channel(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let (lo, hi) = self.valid_columns(kx, w, out_w);
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for (ri, oy) in rows.clone().enumerate() {
                        let iy = oy * s + ky;
                        if iy < p || iy - p >= h || lo >= hi {
                            continue;
                        }
                        let src = &plane[(iy - p) * w..(iy - p + 1) * w];
                        let d = &mut dst[ri * out_w + lo..ri * out_w + hi];
                        let start = lo * s + kx - p;
                        if s == 1 {
                            d.copy_from_slice(&src[start..start + (hi - lo)]);
                        } else {
                            for (v, &sv) in d.iter_mut().zip(src[start..].iter().step_by(s)) {
                                *v = sv;
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<S: Scalar>(&self, cols: &[S], rows: core::ops::Range<usize>, out_w: usize, dx: &mut FeatureMap<S>) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let (h, w) = (dx.height(), dx.width());
        let n = rows.len() * out_w;
        for ci in 0..self.in_channels {
            let plane = dx.channel_mut(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let (lo, hi) = self.valid_columns(kx, w, out_w);
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * n..(row + 1) * n];
                    for (ri, oy) in rows.clone().enumerate() {
                        let iy = oy * s + ky;
                        if iy < p || iy - p >= h || lo >= hi {
                            continue;
                        }
                        let dst = &mut plane[(iy - p) * w..(iy - p + 1) * w];
                        let start = lo * s + kx - p;
                        let sv = &src[ri * out_w + lo..ri * out_w + hi];
                        for (d, &v) in dst[start..].iter_mut().step_by(s).zip(sv) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }

    pub fn forward<S: Scalar>(&self, params: &[S], layout: &ParamLayout, x: &FeatureMap<S>) -> FeatureMap<S> {
        assert_eq!(x.channels(), self.in_channels, "conv input channels");
        let (oh, ow) = self.output_size(x.height(), x.width());
        let mut y = FeatureMap::zeros(self.out_channels, oh, ow);
        let weight = &params[layout.range(self.weight)];
        let bias = &params[layout.range(self.bias)];
        let plane = oh * ow;
        let w_mat = MatRef::row_major(weight, self.out_channels, self.patch_len());
        if self.is_pointwise() {
            let xm = MatRef::row_major(x.data(), self.in_channels, plane);
            gemm(S::ONE, w_mat, xm, S::ZERO, MatMut::row_major(y.data_mut(), self.out_channels, plane));
        } else {
            let band = self.band_rows(ow);
            let mut cols = Vec::new();
            let mut r0 = 0;
            while r0 < oh {
                let r1 = (r0 + band).min(oh);
                self.im2col(x, r0..r1, ow, &mut cols);
                let n = (r1 - r0) * ow;
                let cm = MatRef::row_major(&cols, self.patch_len(), n);
                let out = MatMut::strided(&mut y.data_mut()[r0 * ow..], self.out_channels, n, plane);
                gemm(S::ONE, w_mat, cm, S::ZERO, out);
                r0 = r1;
            }
        }
        for (c, &b) in bias.iter().enumerate() {
            for v in y.channel_mut(c) {
                *v += b;
            }
        }
        y
    }

    /// Accumulates weight and bias gradients into `grads`; returns the input gradient.
    pub fn backward<S: Scalar>(
        &self,
        params: &[S],
        layout: &ParamLayout,
        x: &FeatureMap<S>,
        dy: &FeatureMap<S>,
        grads: &mut [S],
    ) -> FeatureMap<S> {
        let (oh, ow) = (dy.height(), dy.width());
        let plane = oh * ow;
        let k = self.patch_len();
        let weight = &params[layout.range(self.weight)];
        {
            let db = &mut grads[layout.range(self.bias)];
            for (c, g) in db.iter_mut().enumerate() {
                *g += dy.channel(c).iter().copied().sum::<S>();
            }
        }
        let mut dx = FeatureMap::zeros(self.in_channels, x.height(), x.width());
        let w_t = MatRef::row_major(weight, self.out_channels, k).t();
        if self.is_pointwise() {
            let dym = MatRef::row_major(dy.data(), self.out_channels, plane);
            let xm = MatRef::row_major(x.data(), self.in_channels, plane);
            let dw = MatMut::row_major(&mut grads[layout.range(self.weight)], self.out_channels, k);
            gemm(S::ONE, dym, xm.t(), S::ONE, dw);
            gemm(S::ONE, w_t, dym, S::ZERO, MatMut::row_major(dx.data_mut(), k, plane));
            return dx;
        }
        let band = self.band_rows(ow);
        let mut cols = Vec::new();
        let mut dcols = Vec::new();
        let mut r0 = 0;
        while r0 < oh {
            let r1 = (r0 + band).min(oh);
            let n = (r1 - r0) * ow;
            self.im2col(x, r0..r1, ow, &mut cols);
            let dym = MatRef::strided(&dy.data()[r0 * ow..], self.out_channels, n, plane);
            let cm = MatRef::row_major(&cols, k, n);
            let dw = MatMut::row_major(&mut grads[layout.range(self.weight)], self.out_channels, k);
            gemm(S::ONE, dym, cm.t(), S::ONE, dw);
            dcols.clear();
            dcols.resize(k * n, S::ZERO);
            gemm(S::ONE, w_t, dym, S::ZERO, MatMut::row_major(&mut dcols, k, n));
            self.col2im(&dcols, r0..r1, ow, &mut dx);
            r0 = r1;
        }
        dx
    }
}

/// Transposed convolution with a 2×2 kernel and stride 2 (exact 2× upsampling).
#[derive(Debug, Clone)]
pub struct ConvTranspose2x2 {
    pub in_channels: usize,
    pub out_channels: usize,
    weight: ParamId,
    bias: ParamId,
}

impl ConvTranspose2x2 {
    pub fn new(layout: &mut ParamLayout, name: &str, in_channels: usize, out_channels: usize) -> Self {
        let weight = layout.add(
            format!("{name}.weight"),
            &[in_channels, out_channels, 2, 2],
            Init::Scaled { fan_in: in_channels, gain: core::f64::consts::SQRT_2 },
        );
        let bias = layout.add(format!("{name}.bias"), &[out_channels], Init::Zeros);
        ConvTranspose2x2 { in_channels, out_channels, weight, bias }
    }

    pub fn forward<S: Scalar>(&self, params: &[S], layout: &ParamLayout, x: &FeatureMap<S>) -> FeatureMap<S> {
        assert_eq!(x.channels(), self.in_channels, "transposed conv input channels");
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let rows = self.out_channels * 4;
        let weight = &params[layout.range(self.weight)];
        let bias = &params[layout.range(self.bias)];
        let mut z = vec![S::ZERO; rows * hw];
        gemm(
            S::ONE,
            MatRef::row_major(weight, self.in_channels, rows).t(),
            MatRef::row_major(x.data(), self.in_channels, hw),
            S::ZERO,
            MatMut::row_major(&mut z, rows, hw),
        );
        let mut y = FeatureMap::zeros(self.out_channels, 2 * h, 2 * w);
        let ow = 2 * w;
        for co in 0..self.out_channels {
            let b = bias[co];
            let out = y.channel_mut(co);
            for a in 0..2 {
                for bx in 0..2 {
                    let src = &z[(co * 4 + a * 2 + bx) * hw..(co * 4 + a * 2 + bx + 1) * hw];
                    for i in 0..h {
                        let row = &mut out[(2 * i + a) * ow..(2 * i + a + 1) * ow];
                        for j in 0..w {
                            row[2 * j + bx] = src[i * w + j] + b;
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward<S: Scalar>(
        &self,
        params: &[S],
        layout: &ParamLayout,
        x: &FeatureMap<S>,
        dy: &FeatureMap<S>,
        grads: &mut [S],
    ) -> FeatureMap<S> {
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let rows = self.out_channels * 4;
        let ow = 2 * w;
        let mut dz = vec![S::ZERO; rows * hw];
        {
            let db = &mut grads[layout.range(self.bias)];
            for co in 0..self.out_channels {
                let g = dy.channel(co);
                db[co] += g.iter().copied().sum::<S>();
                for a in 0..2 {
                    for bx in 0..2 {
                        let dst = &mut dz[(co * 4 + a * 2 + bx) * hw..(co * 4 + a * 2 + bx + 1) * hw];
                        for i in 0..h {
                            for j in 0..w {
                                dst[i * w + j] = g[(2 * i + a) * ow + 2 * j + bx];
                            }
                        }
                    }
                }
            }
        }
        let xm = MatRef::row_major(x.data(), self.in_channels, hw);
        let dzm = MatRef::row_major(&dz, rows, hw);
        gemm(
            S::ONE,
            xm,
            dzm.t(),
            S::ONE,
            MatMut::row_major(&mut grads[layout.range(self.weight)], self.in_channels, rows),
        );
        let weight = &params[layout.range(self.weight)];
        let mut dx = FeatureMap::zeros(self.in_channels, h, w);
        gemm(
            S::ONE,
            MatRef::row_major(weight, self.in_channels, rows),
            dzm,
            S::ZERO,
            MatMut::row_major(dx.data_mut(), self.in_channels, hw),
        );
        dx
    }
}
