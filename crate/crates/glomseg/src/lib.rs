//! Command-line pipeline around `glomseg-core`: dataset ingestion, synthetic
//! data generation, training, evaluation, the transfer suite and patch
//! segmentation with multi-channel mask export.
//!
//! Exit codes of the `glomseg` binary:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | configuration error (unknown key, bad value, bad class list) |
//! | 3 | data error (malformed mask, unreadable image, missing class or domain) |
//! | 4 | runtime failure (file system, non-finite loss) |

pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod ingest;
pub mod io;
pub mod run;
pub mod tiling;

pub use config::RunConfig;
pub use error::{PipelineError, Result};
