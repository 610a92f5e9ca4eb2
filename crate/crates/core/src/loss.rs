//! Per-task binary losses on two-channel logits.
//!
//! With `z = l_fg − l_bg` the foreground probability is `σ(z)`. The soft-Dice
//! term is `1 − (2Σpt + ε) / (Σp + Σt + ε)` and the cross-entropy term is the
//! pixel mean of `−t ln p − (1 − t) ln(1 − p)`.

use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};
use crate::nn::{FeatureMap, Scalar};

pub const DICE_SMOOTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    DiceBce,
    Bce,
    Dice,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::DiceBce => "dice_bce",
            LossKind::Bce => "bce",
            LossKind::Dice => "dice",
        }
    }

    fn weights(self) -> (f64, f64) {
        match self {
            LossKind::DiceBce => (1.0, 1.0),
            LossKind::Bce => (0.0, 1.0),
            LossKind::Dice => (1.0, 0.0),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dice_bce" => Ok(LossKind::DiceBce),
            "bce" => Ok(LossKind::Bce),
            "dice" => Ok(LossKind::Dice),
            _ => bail!(InvalidArgument, "unknown loss `{s}` (expected dice_bce, bce or dice)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub dice: f64,
    pub bce: f64,
}

impl LossTerms {
    pub fn total(&self, kind: LossKind) -> f64 {
        let (wd, wb) = kind.weights();
        wd * self.dice + wb * self.bce
    }
}

fn check_target(target: &[u8]) -> Result<()> {
    if let Some(v) = target.iter().find(|&&v| v > 1) {
        bail!(InvalidTarget, "target holds value {v}; expected 0 or 1");
    }
    Ok(())
}

/// `x ln y` with the convention `0 ln 0 = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * libm::log(y)
    }
}

/// Loss terms of foreground probabilities `p` against a 0/1 target.
pub fn terms_from_probabilities(p: &[f64], target: &[u8]) -> Result<LossTerms> {
    if p.len() != target.len() || p.is_empty() {
        bail!(Shape, "prediction has {} pixels, target {}", p.len(), target.len());
    }
    check_target(target)?;
    let (mut inter, mut sum_p, mut sum_t, mut bce) = (0.0, 0.0, 0.0, 0.0);
    for (&pi, &ti) in p.iter().zip(target) {
        let t = ti as f64;
        inter += pi * t;
        sum_p += pi;
        sum_t += t;
        bce -= xlogy(t, pi) + xlogy(1.0 - t, 1.0 - pi);
    }
    Ok(LossTerms {
        dice: 1.0 - (2.0 * inter + DICE_SMOOTH) / (sum_p + sum_t + DICE_SMOOTH),
        bce: bce / p.len() as f64,
    })
}

/// Loss of two-channel logits and its gradient with respect to them.
pub fn loss_and_grad<S: Scalar>(logits: &FeatureMap<S>, target: &[u8], kind: LossKind) -> Result<(LossTerms, FeatureMap<S>)> {
    if logits.channels() != 2 || logits.plane() != target.len() {
        bail!(Shape, "logits {}x{}x{} do not match a target of {} pixels", logits.channels(), logits.height(), logits.width(), target.len());
    }
    check_target(target)?;
    let n = target.len();
    let (bg, fg) = (logits.channel(0), logits.channel(1));
    let mut p = alloc::vec::Vec::with_capacity(n);
    let (mut inter, mut sum_p, mut sum_t, mut bce) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let z = (fg[i] - bg[i]).to_f64();
        let t = target[i] as f64;
        let pi = 1.0 / (1.0 + libm::exp(-z));
        // softplus(z) − t z, stable for large |z|
        bce += z.max(0.0) - t * z + libm::log1p(libm::exp(-libm::fabs(z)));
        inter += pi * t;
        sum_p += pi;
        sum_t += t;
        p.push(pi);
    }
    let denom = sum_p + sum_t + DICE_SMOOTH;
    let numer = 2.0 * inter + DICE_SMOOTH;
    let terms = LossTerms { dice: 1.0 - numer / denom, bce: bce / n as f64 };
    let (wd, wb) = kind.weights();
    let mut grad = FeatureMap::zeros(2, logits.height(), logits.width());
    let (gb, gf) = grad.data_mut().split_at_mut(n);
    for i in 0..n {
        let t = target[i] as f64;
        let pi = p[i];
        let d_dice_dp = -(2.0 * t * denom - numer) / (denom * denom);
        let dz = wd * d_dice_dp * pi * (1.0 - pi) + wb * (pi - t) / n as f64;
        gf[i] = S::from_f64(dz);
        gb[i] = S::from_f64(-dz);
    }
    Ok((terms, grad))
}
