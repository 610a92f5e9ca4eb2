//! Whole-slide tiling hook.
//!
//! The pipeline consumes patch directories. A slide reader that cuts
//! glomerulus-centred patches out of a whole-slide image plugs in here; none
//! ships with this crate.

use std::path::Path;

use glomseg_core::data::RgbImage;

use crate::error::Result;

/// One patch cut from a slide, with its top-left corner in slide pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub x: u64,
    pub y: u64,
    pub image: RgbImage,
}

pub trait Tiler {
    /// Patches of `slide`, in a stable order.
    fn tiles(&self, slide: &Path) -> Result<Vec<Tile>>;
}
