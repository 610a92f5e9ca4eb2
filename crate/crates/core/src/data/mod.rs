//! Partially labeled samples, dataset manifests, patient-level splits and
//! the image-pool batch scheduler.

mod compose;
mod image;
mod manifest;
mod pool;
mod sample;
mod split;

pub use compose::{compose_samples, compose_training_set, DomainSplits, TransferApproach};
pub use image::{Mask, Normalization, RgbImage, Transform};
pub use manifest::{load_samples, DatasetManifest, ManifestEntry, MemorySource, SampleSource, MANIFEST_VERSION};
pub use pool::{interleave_by_class, pool_feed, ImagePool, DEFAULT_BATCH_SIZE};
pub use sample::PatchSample;
pub use split::{max_ratio_deviation, split_by_patient, ClassSplit, Split, SplitAssignment, DEFAULT_RATIOS};
