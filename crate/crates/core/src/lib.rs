//! Task-conditioned dynamic-head segmentation for glomerular tissue and lesions.
//!
//! One residual U-Net backbone serves every class: a controller maps pooled
//! bottleneck features plus a one-hot task vector to the parameters of a small
//! per-sample convolutional head. Training data is partially labeled: each
//! sample carries a mask for exactly one class.
//!
//! The crate is `no_std` (with `alloc`). File formats are handled as text or
//! byte buffers; reading and writing them is left to the caller.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod evaluation;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod optim;
pub mod synth;
pub mod taxonomy;
pub mod training;

pub use error::{Error, Result};
pub use taxonomy::{ClassSet, GlomClass, Group, Species, TaskVector, Taxonomy};
