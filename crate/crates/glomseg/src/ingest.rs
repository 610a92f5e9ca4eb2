//! Dataset tree scanning.
//!
//! Layout: `<root>/<species>/<class code>/<patient>/<sample>.png` with the
//! mask next to it as `<sample>_mask.png`.

use std::path::{Path, PathBuf};

use glomseg_core::data::{DatasetManifest, ManifestEntry, Normalization, RgbImage};
use glomseg_core::{Species, Taxonomy};
use walkdir::WalkDir;

use crate::error::{PipelineError, Result};
use crate::io::{read_image, read_mask};

pub const MASK_SUFFIX: &str = "_mask.png";

#[derive(Debug, Clone)]
pub struct Ingested {
    pub manifest: DatasetManifest,
    /// Images without a mask, relative to the root; excluded from the manifest.
    pub orphans: Vec<PathBuf>,
}

impl Ingested {
    pub fn warnings(&self) -> Vec<String> {
        self.orphans.iter().map(|p| format!("no mask for {}; excluded", p.display())).collect()
    }
}

fn rel_string(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

pub fn is_mask(path: &Path) -> bool {
    path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(MASK_SUFFIX))
}

pub fn is_png(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Mask path of image `path`.
pub fn mask_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    path.with_file_name(format!("{stem}{MASK_SUFFIX}"))
}

/// Walk `root` and pair every image with its mask. Masks are decoded and
/// checked against their image; normalization statistics over all images
/// (resized to `size` when given) are stored in the manifest header.
pub fn scan(root: &Path, size: Option<usize>) -> Result<Ingested> {
    if !root.is_dir() {
        return Err(glomseg_core::Error::InvalidArgument(format!("{} is not a directory", root.display())).into());
    }
    let tax = Taxonomy::canonical();
    let mut entries = Vec::new();
    let mut orphans = Vec::new();
    let mut images: Vec<RgbImage> = Vec::new();
    let walk = WalkDir::new(root).min_depth(4).max_depth(4).sort_by_file_name();
    for item in walk {
        let item = item.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            PipelineError::io(path, e.into())
        })?;
        let path = item.path();
        if !item.file_type().is_file() || !is_png(path) || is_mask(path) {
            continue;
        }
        let rel = path.strip_prefix(root).expect("walk stays under root");
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        let species: Species = parts[0].parse().map_err(|e| PipelineError::Data(format!("{}: {e}", rel.display())))?;
        let task = tax.index_of(&parts[1]).map_err(|e| PipelineError::Data(format!("{}: {e}", rel.display())))?;
        let mask = mask_path(path);
        if !mask.is_file() {
            orphans.push(rel.to_path_buf());
            continue;
        }
        let image = read_image(path, size)?;
        let m = read_mask(&mask, size)?;
        if (m.width(), m.height()) != (image.width(), image.height()) {
            return Err(PipelineError::Image {
                path: mask.clone(),
                message: format!("mask is {}x{} but image is {}x{}", m.width(), m.height(), image.width(), image.height()),
            });
        }
        images.push(image);
        entries.push(ManifestEntry {
            image_path: rel_string(rel),
            mask_path: rel_string(&mask_path(rel)),
            task,
            patient_id: parts[2].clone(),
            species,
            source_wsi: String::new(),
        });
    }
    if entries.is_empty() {
        return Err(glomseg_core::Error::InvalidArgument(format!("no image/mask pairs under {}", root.display())).into());
    }
    let mut manifest = DatasetManifest::new(entries);
    manifest.validate().map_err(|e| PipelineError::Data(e.to_string()))?;
    manifest.normalization = Some(Normalization::from_images(&images));
    Ok(Ingested { manifest, orphans })
}

/// Sample counts per class and species, one row per class in registry order.
pub fn count_summary(manifest: &DatasetManifest) -> String {
    let tax = Taxonomy::canonical();
    let counts = manifest.counts();
    let mut out = String::from("class\trodent\thuman\n");
    let mut totals = [0usize; 2];
    for c in 0..tax.len() {
        let row: Vec<String> = Species::ALL
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                if !tax.class(c).species.contains(s) {
                    return "-".to_string();
                }
                let n = counts.get(&(s, c)).copied().unwrap_or(0);
                totals[k] += n;
                n.to_string()
            })
            .collect();
        out.push_str(&format!("{}\t{}\n", tax.code(c), row.join("\t")));
    }
    out.push_str(&format!("total\t{}\t{}\n", totals[0], totals[1]));
    out
}
