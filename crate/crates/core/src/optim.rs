//! First-order optimizers and learning-rate schedules over a flat parameter buffer.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Sgd { momentum: f64, nesterov: bool },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgd { .. } => "sgd",
            Method::Adam { .. } => "adam",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Method::Sgd { momentum: 0.99, nesterov: true }),
            "adam" => Ok(Method::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }),
            _ => bail!(InvalidArgument, "unknown optimizer `{s}` (expected sgd or adam)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub lr: f64,
    /// L2 penalty added to every gradient.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { method: Method::Sgd { momentum: 0.99, nesterov: true }, lr: 1e-2, weight_decay: 1e-4 }
    }
}

impl fmt::Display for OptimizerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            Method::Sgd { momentum, nesterov } => {
                write!(f, "sgd(lr={}, momentum={momentum}, nesterov={nesterov}, weight_decay={})", self.lr, self.weight_decay)
            }
            Method::Adam { beta1, beta2, eps } => write!(
                f,
                "adam(lr={}, beta1={beta1}, beta2={beta2}, eps={eps}, weight_decay={})",
                self.lr, self.weight_decay
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LrSchedule {
    Constant,
    /// `lr · (1 − step/total)^power`
    #[default]
    Poly,
}

pub const POLY_POWER: f64 = 0.9;

impl LrSchedule {
    pub fn lr(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Poly => {
                let frac = if total == 0 { 0.0 } else { (step as f64 / total as f64).min(1.0) };
                base * libm::pow(1.0 - frac, POLY_POWER)
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Poly => "poly",
        }
    }
}

impl FromStr for LrSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "poly" => Ok(LrSchedule::Poly),
            _ => bail!(InvalidArgument, "unknown schedule `{s}` (expected poly or constant)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<f32>,
    second: Vec<f32>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, len: usize) -> Self {
        let second = match config.method {
            Method::Adam { .. } => vec![0.0; len],
            Method::Sgd { .. } => Vec::new(),
        };
        Optimizer { config, first: vec![0.0; len], second, steps: 0 }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Apply one update with learning rate `lr`.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        assert_eq!(params.len(), self.first.len(), "parameter count");
        assert_eq!(grads.len(), params.len(), "gradient count");
        self.steps += 1;
        let wd = self.config.weight_decay as f32;
        let lr32 = lr as f32;
        match self.config.method {
            Method::Sgd { momentum, nesterov } => {
                let mu = momentum as f32;
                for ((p, &g), v) in params.iter_mut().zip(grads).zip(self.first.iter_mut()) {
                    let g = g + wd * *p;
                    *v = mu * *v + g;
                    let d = if nesterov { g + mu * *v } else { *v };
                    *p -= lr32 * d;
                }
            }
            Method::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - libm::pow(beta1, t as f64);
                let c2 = 1.0 - libm::pow(beta2, t as f64);
                let step = (lr * libm::sqrt(c2) / c1) as f32;
                let (b1, b2, e) = (beta1 as f32, beta2 as f32, eps as f32);
                for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
                    let g = g + wd * *p;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step * *m / (libm::sqrtf(*v) + e);
                }
            }
        }
    }
}
