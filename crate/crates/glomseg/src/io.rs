//! PNG reading and writing, resizing, atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use glomseg_core::data::{Mask, RgbImage, SampleSource};
use image::imageops::{self, FilterType};
use image::{GrayImage, ImageBuffer, Luma, Rgb};

use crate::error::{PipelineError, Result};

fn image_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Image { path: path.to_path_buf(), message: e.to_string() }
}

/// RGB patch, resized bilinearly to `size`×`size` when given.
pub fn read_image(path: &Path, size: Option<usize>) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_rgb8();
    let img = match size {
        Some(s) if img.dimensions() != (s as u32, s as u32) => imageops::resize(&img, s as u32, s as u32, FilterType::Triangle),
        _ => img,
    };
    let (w, h) = img.dimensions();
    Ok(RgbImage::from_raw(w as usize, h as usize, img.into_raw())?)
}

/// Single-channel mask; any nonzero value is foreground. Resizing uses
/// nearest-neighbour sampling.
pub fn read_mask(path: &Path, size: Option<usize>) -> Result<Mask> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    if img.color().channel_count() != 1 && img.color().channel_count() != 2 {
        return Err(image_error(path, format!("mask must be single-channel, found {:?}", img.color())));
    }
    let gray = img.to_luma8();
    let gray = match size {
        Some(s) if gray.dimensions() != (s as u32, s as u32) => imageops::resize(&gray, s as u32, s as u32, FilterType::Nearest),
        _ => gray,
    };
    let (w, h) = gray.dimensions();
    Ok(Mask::from_gray(w as usize, h as usize, gray.as_raw())?)
}

pub fn encode_rgb(image: &RgbImage) -> Result<Vec<u8>> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(image.width() as u32, image.height() as u32, image.as_raw().to_vec())
            .expect("buffer matches dimensions");
    encode(buf)
}

pub fn encode_gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Vec<u8>> {
    let len = pixels.len();
    let buf: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(width as u32, height as u32, pixels)
        .ok_or_else(|| PipelineError::Data(format!("{len} bytes do not fill a {width}x{height} image")))?;
    encode(buf)
}

fn encode<P: image::PixelWithColorType>(buf: ImageBuffer<P, Vec<P::Subpixel>>) -> Result<Vec<u8>>
where
    [P::Subpixel]: image::EncodableLayout,
{
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| PipelineError::Data(e.to_string()))?;
    Ok(out.into_inner())
}

/// Write through a temporary file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| PipelineError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| PipelineError::io(path, e))?;
    tmp.persist(path).map_err(|e| PipelineError::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

/// Manifest paths resolved against a dataset root.
pub struct FileSource {
    pub root: PathBuf,
    pub size: Option<usize>,
}

impl FileSource {
    pub fn new(root: impl Into<PathBuf>, size: Option<usize>) -> Self {
        FileSource { root: root.into(), size }
    }
}

fn to_core(e: PipelineError) -> glomseg_core::Error {
    match e {
        PipelineError::Core(c) => c,
        other => glomseg_core::Error::Data(other.to_string()),
    }
}

impl SampleSource for FileSource {
    fn load_image(&self, path: &str) -> glomseg_core::Result<RgbImage> {
        read_image(&self.root.join(path), self.size).map_err(to_core)
    }

    fn load_mask(&self, path: &str) -> glomseg_core::Result<Mask> {
        read_mask(&self.root.join(path), self.size).map_err(to_core)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_and_resize() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RgbImage::new(4, 4);
        img.put_pixel(1, 2, [10, 200, 30]);
        let p = dir.path().join("a.png");
        atomic_write(&p, &encode_rgb(&img).unwrap()).unwrap();
        assert_eq!(read_image(&p, None).unwrap(), img);
        assert_eq!(read_image(&p, Some(8)).unwrap().width(), 8);

        let m = Mask::from_fn(4, 4, |x, y| x == y);
        let mp = dir.path().join("a_mask.png");
        atomic_write(&mp, &encode_gray(4, 4, m.to_gray()).unwrap()).unwrap();
        assert_eq!(read_mask(&mp, None).unwrap(), m);
        let big = read_mask(&mp, Some(8)).unwrap();
        assert_eq!(big.area(), 16);
        assert!(read_mask(&p, None).is_err());
    }
}
