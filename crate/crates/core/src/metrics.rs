//! Overlap metrics on binary masks.

use alloc::vec::Vec;

use crate::data::Mask;
use crate::error::{bail, Result};

fn pack(bits: &[u8]) -> Vec<u64> {
    bits.chunks(64)
        .map(|chunk| chunk.iter().enumerate().fold(0u64, |w, (i, &b)| w | (((b != 0) as u64) << i)))
        .collect()
}

/// Dice coefficient `2|A∩B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice_score(pred: &Mask, truth: &Mask) -> Result<f64> {
    if !pred.same_shape(truth) {
        bail!(
            InvalidArgument,
            "mask shapes differ: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        );
    }
    let (a, b) = (pack(pred.as_bytes()), pack(truth.as_bytes()));
    let (mut inter, mut size) = (0u64, 0u64);
    for (x, y) in a.iter().zip(&b) {
        inter += (x & y).count_ones() as u64;
        size += (x.count_ones() + y.count_ones()) as u64;
    }
    if size == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / size as f64)
}
