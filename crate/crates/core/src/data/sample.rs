use alloc::string::String;

use super::{Mask, RgbImage};
use crate::error::{bail, Result};
use crate::taxonomy::{Species, Taxonomy};

/// One image with a mask for a single class; other classes are unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub image: RgbImage,
    pub mask: Mask,
    pub task: usize,
    pub patient_id: String,
    pub species: Species,
    pub source_wsi: String,
}

impl PatchSample {
    /// Checks shapes, the task index and species availability. `size`, when
    /// given, is the required square side length.
    pub fn validate(&self, size: Option<usize>) -> Result<()> {
        let tax = Taxonomy::canonical();
        if self.task >= tax.len() {
            bail!(InvalidSample, "task index {} is outside the registry", self.task);
        }
        if self.image.width() != self.mask.width() || self.image.height() != self.mask.height() {
            bail!(
                InvalidSample,
                "image is {}x{} but mask is {}x{}",
                self.image.width(),
                self.image.height(),
                self.mask.width(),
                self.mask.height()
            );
        }
        if let Some(n) = size {
            if self.image.width() != n || self.image.height() != n {
                bail!(InvalidSample, "sample is {}x{}, expected {n}x{n}", self.image.width(), self.image.height());
            }
        }
        if self.patient_id.is_empty() {
            bail!(InvalidSample, "sample has no patient id");
        }
        let class = tax.class(self.task);
        if !class.species.contains(self.species) {
            bail!(InvalidSample, "class {} is not annotated in {} data", class.code, self.species.as_str());
        }
        Ok(())
    }
}
