use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with standard deviation `gain / sqrt(fan_in)`.
    Scaled { fan_in: usize, gain: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    pub init: Init,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Names and offsets of every trainable tensor inside one flat buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        let len = shape.iter().product();
        let name = name.into();
        debug_assert!(self.specs.iter().all(|s| s.name != name), "duplicate parameter {name}");
        self.specs.push(ParamSpec { name, shape: shape.to_vec(), offset: self.total, len, init });
        self.total += len;
        ParamId(self.specs.len() - 1)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn range(&self, id: ParamId) -> Range<usize> {
        let s = &self.specs[id.0];
        s.offset..s.offset + s.len
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Total parameter count of tensors whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.specs.iter().filter(|s| s.name.starts_with(prefix)).map(|s| s.len).sum()
    }

    pub fn initialize<S: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<S> {
        let mut values = Vec::with_capacity(self.total);
        for spec in &self.specs {
            match spec.init {
                Init::Zeros => values.extend(core::iter::repeat_n(S::ZERO, spec.len)),
                Init::Ones => values.extend(core::iter::repeat_n(S::ONE, spec.len)),
                Init::Scaled { fan_in, gain } => {
                    let std = gain / libm::sqrt(fan_in.max(1) as f64);
                    for _ in 0..spec.len {
                        let z: f64 = StandardNormal.sample(rng);
                        values.push(S::from_f64(z * std));
                    }
                }
            }
        }
        values
    }
}
