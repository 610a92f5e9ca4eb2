use alloc::vec;
use alloc::vec::Vec;

use super::Scalar;

/// A dense `[channels, height, width]` array in channel-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<S>,
}

impl<S: Scalar> FeatureMap<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap { channels, height, width, data: vec![S::ZERO; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), channels * height * width, "feature map buffer has wrong length");
        FeatureMap { channels, height, width, data }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: S) -> Self {
        FeatureMap { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[S] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [S] {
        let p = self.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> S {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape<T>(&self, other: &FeatureMap<T>) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn add_assign(&mut self, other: &FeatureMap<S>) {
        assert!(self.same_shape(other), "shape mismatch in add");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Stack channels of `a` followed by channels of `b`.
    pub fn concat(a: &FeatureMap<S>, b: &FeatureMap<S>) -> Self {
        assert!(a.height == b.height && a.width == b.width, "spatial mismatch in concat");
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        FeatureMap { channels: a.channels + b.channels, height: a.height, width: a.width, data }
    }

    /// Inverse of [`FeatureMap::concat`]: split after `first` channels.
    pub fn split(self, first: usize) -> (FeatureMap<S>, FeatureMap<S>) {
        assert!(first <= self.channels);
        let cut = first * self.plane();
        let mut data = self.data;
        let rest = data.split_off(cut);
        (
            FeatureMap { channels: first, height: self.height, width: self.width, data },
            FeatureMap { channels: self.channels - first, height: self.height, width: self.width, data: rest },
        )
    }

    /// Per-channel spatial mean.
    pub fn global_average(&self) -> Vec<S> {
        let inv = S::from_f64(1.0 / self.plane() as f64);
        (0..self.channels).map(|c| self.channel(c).iter().copied().sum::<S>() * inv).collect()
    }

    pub fn cast<T: Scalar>(&self) -> FeatureMap<T> {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }
}
