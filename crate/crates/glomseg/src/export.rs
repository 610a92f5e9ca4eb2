//! Multi-channel mask export.
//!
//! A mask stack is one grayscale PNG `size` pixels wide and `k * size`
//! pixels tall: channel `i` occupies rows `i*size .. (i+1)*size` and holds
//! 0 or 255 per pixel. `legend.tsv` names the classes of the channels.

use glomseg_core::data::{Mask, RgbImage};
use glomseg_core::{ClassSet, Taxonomy};

use crate::error::{PipelineError, Result};
use crate::io::{encode_gray, encode_rgb};

/// Overlay colour of each class, registry order.
pub const PALETTE: [[u8; 3]; 14] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [0, 0, 128],
    [128, 128, 0],
    [255, 215, 0],
    [0, 255, 127],
];

pub const LEGEND_HEADER: &str = "channel\tindex\tcode\tname\tcolor";

/// One line per exported channel.
pub fn legend(classes: ClassSet) -> String {
    let tax = Taxonomy::canonical();
    let mut out = format!("{LEGEND_HEADER}\n");
    for (ch, c) in classes.iter().enumerate() {
        let [r, g, b] = PALETTE[c];
        out.push_str(&format!("{ch}\t{c}\t{}\t{}\t#{r:02x}{g:02x}{b:02x}\n", tax.code(c), tax.class(c).name));
    }
    out
}

/// Class codes of the channels listed in a legend.
pub fn parse_legend(text: &str) -> Result<Vec<String>> {
    let mut lines = text.lines();
    if lines.next() != Some(LEGEND_HEADER) {
        return Err(PipelineError::Data("legend header missing".into()));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 5 || cols[0] != i.to_string() {
                return Err(PipelineError::Data(format!("legend line {}: `{l}`", i + 2)));
            }
            Ok(cols[2].to_string())
        })
        .collect()
}

/// Stacked grayscale PNG of `masks`.
pub fn encode_stack(masks: &[Mask]) -> Result<Vec<u8>> {
    let first = masks.first().ok_or_else(|| PipelineError::Data("no channels to export".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut pixels = Vec::with_capacity(w * h * masks.len());
    for m in masks {
        if !m.same_shape(first) {
            return Err(PipelineError::Data("channels differ in size".into()));
        }
        pixels.extend(m.to_gray());
    }
    encode_gray(w, h * masks.len(), pixels)
}

/// Split a decoded stack of `channels` square channels back into masks.
pub fn split_stack(width: usize, height: usize, gray: &[u8], channels: usize) -> Result<Vec<Mask>> {
    if channels == 0 || height % channels != 0 || gray.len() != width * height {
        return Err(PipelineError::Data(format!("{width}x{height} stack does not hold {channels} channels")));
    }
    let side = height / channels;
    gray.chunks_exact(width * side).map(|c| Ok(Mask::from_gray(width, side, c)?)).collect()
}

/// Image with each channel's class colour blended at half opacity, later
/// channels on top.
pub fn overlay(image: &RgbImage, classes: ClassSet, masks: &[Mask]) -> RgbImage {
    let mut out = image.clone();
    for (c, m) in classes.iter().zip(masks) {
        let col = PALETTE[c];
        for y in 0..out.height() {
            for x in 0..out.width() {
                if m.get(x, y) {
                    let p = out.pixel(x, y);
                    out.put_pixel(x, y, [0, 1, 2].map(|k| ((p[k] as u16 + col[k] as u16) / 2) as u8));
                }
            }
        }
    }
    out
}

pub fn encode_overlay(image: &RgbImage, classes: ClassSet, masks: &[Mask]) -> Result<Vec<u8>> {
    encode_rgb(&overlay(image, classes, masks))
}
