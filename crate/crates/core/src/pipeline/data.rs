//! Image files to and from model input.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::evalkit::{Entry, Manifest};

use super::model::INPUT_SHAPE;
use super::synth::Sample;

fn image_err(path: &Path, e: image::ImageError) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

/// Grayscale, resized to 100×32, scaled to `[-1, 1]`.
pub fn load_image(path: &Path) -> Result<Vec<f32>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (h, w) = (INPUT_SHAPE[1] as u32, INPUT_SHAPE[2] as u32);
    let img = if img.dimensions() == (w, h) {
        img
    } else {
        image::imageops::resize(&img, w, h, FilterType::Triangle)
    };
    Ok(img.pixels().map(|p| p.0[0] as f32 / 127.5 - 1.0).collect())
}

/// Writes a `[-1, 1]` image as 8-bit grayscale PNG.
pub fn save_image(path: &Path, pixels: &[f32]) -> Result<()> {
    let (h, w) = (INPUT_SHAPE[1] as u32, INPUT_SHAPE[2] as u32);
    let img = GrayImage::from_fn(w, h, |x, y| {
        let v = pixels[(y * w + x) as usize];
        Luma([((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

fn resolve(base: &Path, image: &str) -> PathBuf {
    let p = Path::new(image);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads every entry's image relative to `base`.
pub fn load_samples(m: &Manifest, base: &Path) -> Result<Vec<Sample>> {
    m.entries
        .iter()
        .map(|e| {
            Ok(Sample {
                image: load_image(&resolve(base, &e.image))?,
                label: e.label.clone(),
            })
        })
        .collect()
}

/// Writes samples as `prefix_NNNNN.png` under `dir` and returns their
/// manifest (dataset `custom`, relative paths).
pub fn write_samples(samples: &[Sample], dir: &Path, prefix: &str) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{prefix}_{i:05}.png");
        save_image(&dir.join(&name), &s.image)?;
        entries.push(Entry::new(name, s.label.clone(), "custom"));
    }
    Manifest::new(entries)
}
