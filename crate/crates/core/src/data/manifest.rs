//! Tab-separated dataset manifest.
//!
//! ```text
//! # glomseg-manifest v1
//! # taxonomy 1a2b3c4d5e6f7a8b
//! # norm_mean 0.5,0.5,0.5        (optional)
//! # norm_std 0.25,0.25,0.25      (optional)
//! image_path<TAB>mask_path<TAB>task_code<TAB>patient_id<TAB>species[<TAB>source_wsi]
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Mask, Normalization, PatchSample, RgbImage};
use crate::error::{bail, Error, Result};
use crate::taxonomy::{ClassSet, Species, Taxonomy};

pub const MANIFEST_VERSION: u32 = 1;
const MAGIC: &str = "# glomseg-manifest v";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_path: String,
    pub mask_path: String,
    pub task: usize,
    pub patient_id: String,
    pub species: Species,
    pub source_wsi: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub taxonomy_fingerprint: String,
    pub normalization: Option<Normalization>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        DatasetManifest::new(Vec::new())
    }
}

fn triple(v: [f32; 3]) -> String {
    format!("{:?},{:?},{:?}", v[0], v[1], v[2])
}

fn parse_triple(s: &str) -> Result<[f32; 3]> {
    let mut out = [0f32; 3];
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!(Format, "expected three comma-separated values, got `{s}`");
    }
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| Error::Format(format!("bad number `{p}`")))?;
    }
    Ok(out)
}

impl DatasetManifest {
    /// Manifest bound to the live registry.
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            entries,
            taxonomy_fingerprint: Taxonomy::canonical().fingerprint(),
            normalization: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn task_set(&self) -> ClassSet {
        let mut set = ClassSet::empty();
        for e in &self.entries {
            set.insert(e.task);
        }
        set
    }

    pub fn patients(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.entries.iter().map(|e| e.patient_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Sample count per (species, class), in registry order.
    pub fn counts(&self) -> BTreeMap<(Species, usize), usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry((e.species, e.task)).or_insert(0) += 1;
        }
        out
    }

    pub fn filter(&self, keep: impl Fn(&ManifestEntry) -> bool) -> DatasetManifest {
        DatasetManifest {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
            taxonomy_fingerprint: self.taxonomy_fingerprint.clone(),
            normalization: self.normalization,
        }
    }

    /// Registry compatibility plus per-entry checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        let tax = Taxonomy::canonical();
        tax.check_fingerprint(&self.taxonomy_fingerprint)?;
        for (i, e) in self.entries.iter().enumerate() {
            if e.task >= tax.len() {
                bail!(InvalidSample, "entry {i}: task index {} is outside the registry", e.task);
            }
            if e.patient_id.is_empty() {
                bail!(InvalidSample, "entry {i}: empty patient id");
            }
            let class = tax.class(e.task);
            if !class.species.contains(e.species) {
                bail!(InvalidSample, "entry {i}: class {} is not annotated in {} data", class.code, e.species.as_str());
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let tax = Taxonomy::canonical();
        let mut out = format!("{MAGIC}{MANIFEST_VERSION}\n# taxonomy {}\n", self.taxonomy_fingerprint);
        if let Some(n) = &self.normalization {
            out.push_str(&format!("# norm_mean {}\n# norm_std {}\n", triple(n.mean), triple(n.std)));
        }
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}",
                e.image_path,
                e.mask_path,
                tax.code(e.task),
                e.patient_id,
                e.species.as_str()
            ));
            if !e.source_wsi.is_empty() {
                out.push('\t');
                out.push_str(&e.source_wsi);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tax = Taxonomy::canonical();
        let mut lines = text.lines().enumerate();
        let version = lines
            .next()
            .and_then(|(_, l)| l.trim_end().strip_prefix(MAGIC))
            .ok_or_else(|| Error::Format("missing manifest header".into()))?;
        if version != MANIFEST_VERSION.to_string() {
            bail!(Format, "unsupported manifest version {version}");
        }
        let mut fingerprint = None;
        let (mut mean, mut std) = (None, None);
        let mut entries = Vec::new();
        for (n, raw) in lines {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut parts = comment.trim().splitn(2, ' ');
                match (parts.next(), parts.next()) {
                    (Some("taxonomy"), Some(v)) => fingerprint = Some(v.trim().to_string()),
                    (Some("norm_mean"), Some(v)) => mean = Some(parse_triple(v)?),
                    (Some("norm_std"), Some(v)) => std = Some(parse_triple(v)?),
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 && fields.len() != 6 {
                bail!(Format, "line {}: expected 5 or 6 tab-separated fields, found {}", n + 1, fields.len());
            }
            let species: Species =
                fields[4].parse().map_err(|e: Error| Error::Format(format!("line {}: {e}", n + 1)))?;
            entries.push(ManifestEntry {
                image_path: fields[0].to_string(),
                mask_path: fields[1].to_string(),
                task: tax.index_of(fields[2])?,
                patient_id: fields[3].to_string(),
                species,
                source_wsi: fields.get(5).map(|s| s.to_string()).unwrap_or_default(),
            });
        }
        let taxonomy_fingerprint =
            fingerprint.ok_or_else(|| Error::Format("manifest header lacks a taxonomy fingerprint".into()))?;
        let normalization = match (mean, std) {
            (Some(mean), Some(std)) => Some(Normalization { mean, std }),
            (None, None) => None,
            _ => bail!(Format, "manifest header needs both norm_mean and norm_std"),
        };
        Ok(DatasetManifest { entries, taxonomy_fingerprint, normalization })
    }
}

/// Pixel data behind manifest entries.
pub trait SampleSource {
    fn load_image(&self, path: &str) -> Result<RgbImage>;
    fn load_mask(&self, path: &str) -> Result<Mask>;
}

/// Load and validate every entry; the registry fingerprint is checked first.
pub fn load_samples(manifest: &DatasetManifest, source: &dyn SampleSource) -> Result<Vec<PatchSample>> {
    manifest.validate()?;
    manifest
        .entries
        .iter()
        .map(|e| {
            let sample = PatchSample {
                image: source.load_image(&e.image_path)?,
                mask: source.load_mask(&e.mask_path)?,
                task: e.task,
                patient_id: e.patient_id.clone(),
                species: e.species,
                source_wsi: e.source_wsi.clone(),
            };
            sample.validate(None).map_err(|err| Error::Data(format!("{}: {err}", e.image_path)))?;
            Ok(sample)
        })
        .collect()
}

/// In-memory source keyed by path.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    images: BTreeMap<String, RgbImage>,
    masks: BTreeMap<String, Mask>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_image(&mut self, path: impl Into<String>, image: RgbImage) {
        self.images.insert(path.into(), image);
    }

    pub fn insert_mask(&mut self, path: impl Into<String>, mask: Mask) {
        self.masks.insert(path.into(), mask);
    }

    pub fn remove_image(&mut self, path: &str) -> Option<RgbImage> {
        self.images.remove(path)
    }
}

impl SampleSource for MemorySource {
    fn load_image(&self, path: &str) -> Result<RgbImage> {
        self.images.get(path).cloned().ok_or_else(|| Error::Data(format!("no image at `{path}`")))
    }

    fn load_mask(&self, path: &str) -> Result<Mask> {
        self.masks.get(path).cloned().ok_or_else(|| Error::Data(format!("no mask at `{path}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(task: usize, patient: &str, species: Species) -> ManifestEntry {
        ManifestEntry {
            image_path: format!("{}/{patient}/a.png", task),
            mask_path: format!("{}/{patient}/a_mask.png", task),
            task,
            patient_id: patient.into(),
            species,
            source_wsi: String::new(),
        }
    }

    #[test]
    fn text_round_trip() {
        let mut m = DatasetManifest::new(alloc::vec![entry(0, "p1", Species::Human), entry(7, "p2", Species::Rodent)]);
        m.entries[1].source_wsi = "slide-4".into();
        assert_eq!(DatasetManifest::from_text(&m.to_text()).unwrap(), m);
        m.normalization = Some(Normalization { mean: [0.1, 0.2, 0.3], std: [0.4, 0.5, 0.6] });
        assert_eq!(DatasetManifest::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn validation_catches_species_and_fingerprint() {
        let m = DatasetManifest::new(alloc::vec![entry(1, "p1", Species::Human)]);
        assert!(matches!(m.validate(), Err(Error::InvalidSample(_))));
        let mut m = DatasetManifest::new(alloc::vec![entry(1, "p1", Species::Rodent)]);
        assert!(m.validate().is_ok());
        m.taxonomy_fingerprint = "0000000000000000".into();
        assert!(matches!(m.validate(), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn rejects_malformed_lines() {
        let fp = Taxonomy::canonical().fingerprint();
        assert!(DatasetManifest::from_text("a\tb\tGS\tp\thuman\n").is_err());
        let bad = format!("# glomseg-manifest v1\n# taxonomy {fp}\na\tb\tGS\n");
        assert!(DatasetManifest::from_text(&bad).is_err());
        let unknown = format!("# glomseg-manifest v1\n# taxonomy {fp}\na\tb\tXYZ\tp\thuman\n");
        assert!(matches!(DatasetManifest::from_text(&unknown), Err(Error::UnknownClass { .. })));
    }
}
