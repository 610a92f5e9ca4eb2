//! Minimal single-sample tensor engine with explicit backward passes.
//!
//! Every layer works on one `[C, H, W]` feature map at a time. Batches are
//! processed item by item and their gradients accumulated, which is exact
//! because no layer normalizes across the batch dimension.

mod conv;
mod norm;
mod params;
mod scalar;
mod tensor;

pub use conv::{Conv2d, ConvTranspose2x2};
pub use norm::{GroupNorm, GroupNormCache};
pub use params::{Init, ParamId, ParamLayout, ParamSpec};
pub use scalar::{gemm, MatMut, MatRef, Scalar};
pub use tensor::FeatureMap;

pub fn relu_in_place<S: Scalar>(x: &mut FeatureMap<S>) {
    for v in x.data_mut() {
        if *v < S::ZERO {
            *v = S::ZERO;
        }
    }
}

/// Zero the upstream gradient where the activation output was clamped.
pub fn relu_backward_in_place<S: Scalar>(activated: &FeatureMap<S>, grad: &mut FeatureMap<S>) {
    debug_assert_eq!(activated.len(), grad.len());
    for (g, &y) in grad.data_mut().iter_mut().zip(activated.data()) {
        if y <= S::ZERO {
            *g = S::ZERO;
        }
    }
}
