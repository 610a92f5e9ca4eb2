use alloc::format;
use alloc::vec::Vec;

use super::{FeatureMap, Init, ParamId, ParamLayout, Scalar};

const EPS: f64 = 1e-5;

/// Group normalization with a per-channel affine transform. Statistics are
/// per sample, so training and inference compute the same function.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub channels: usize,
    pub groups: usize,
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone)]
pub struct GroupNormCache<S> {
    normalized: FeatureMap<S>,
    inv_std: Vec<S>,
}

impl GroupNorm {
    pub fn new(layout: &mut ParamLayout, name: &str, channels: usize, groups: usize) -> Self {
        assert!(groups > 0 && channels % groups == 0, "{channels} channels not divisible into {groups} groups");
        let gamma = layout.add(format!("{name}.gamma"), &[channels], Init::Ones);
        let beta = layout.add(format!("{name}.beta"), &[channels], Init::Zeros);
        GroupNorm { channels, groups, gamma, beta }
    }

    pub fn forward<S: Scalar>(
        &self,
        params: &[S],
        layout: &ParamLayout,
        x: &FeatureMap<S>,
    ) -> (FeatureMap<S>, GroupNormCache<S>) {
        assert_eq!(x.channels(), self.channels, "group norm channels");
        let gamma = &params[layout.range(self.gamma)];
        let beta = &params[layout.range(self.beta)];
        let per = self.channels / self.groups;
        let span = per * x.plane();
        let count = S::from_f64(span as f64);
        let mut normalized = x.clone();
        let mut inv_std = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let chunk = &mut normalized.data_mut()[g * span..(g + 1) * span];
            let mean = chunk.iter().copied().sum::<S>() / count;
            let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / count;
            let inv = S::ONE / (var + S::from_f64(EPS)).sqrt();
            for v in chunk.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let mut y = normalized.clone();
        for c in 0..self.channels {
            let (gm, bt) = (gamma[c], beta[c]);
            for v in y.channel_mut(c) {
                *v = *v * gm + bt;
            }
        }
        (y, GroupNormCache { normalized, inv_std })
    }

    pub fn backward<S: Scalar>(
        &self,
        params: &[S],
        layout: &ParamLayout,
        cache: &GroupNormCache<S>,
        dy: &FeatureMap<S>,
        grads: &mut [S],
    ) -> FeatureMap<S> {
        let gamma = &params[layout.range(self.gamma)];
        let xhat = &cache.normalized;
        {
            let gr = layout.range(self.gamma);
            let br = layout.range(self.beta);
            for c in 0..self.channels {
                let (mut dg, mut db) = (S::ZERO, S::ZERO);
                for (&g, &h) in dy.channel(c).iter().zip(xhat.channel(c)) {
                    dg += g * h;
                    db += g;
                }
                grads[gr.start + c] += dg;
                grads[br.start + c] += db;
            }
        }
        let plane = dy.plane();
        let per = self.channels / self.groups;
        let span = per * plane;
        let n = S::from_f64(span as f64);
        let mut dx = FeatureMap::zeros(self.channels, dy.height(), dy.width());
        for g in 0..self.groups {
            let (mut sum_d, mut sum_dx) = (S::ZERO, S::ZERO);
            for c in g * per..(g + 1) * per {
                let gm = gamma[c];
                for (&d, &h) in dy.channel(c).iter().zip(xhat.channel(c)) {
                    let dh = d * gm;
                    sum_d += dh;
                    sum_dx += dh * h;
                }
            }
            let scale = cache.inv_std[g] / n;
            for c in g * per..(g + 1) * per {
                let gm = gamma[c];
                let out = &mut dx.data_mut()[c * plane..(c + 1) * plane];
                for ((o, &d), &h) in out.iter_mut().zip(dy.channel(c)).zip(xhat.channel(c)) {
                    *o = scale * (n * d * gm - sum_d - h * sum_dx);
                }
            }
        }
        dx
    }
}
