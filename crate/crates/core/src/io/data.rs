//! Aligned infrared/visible pairs, directory discovery and patch sampling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::color::rgb_to_ycbcr;
use super::image::load_image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct ImagePair<T> {
    /// `[1, H, W]`; RGB infrared input is reduced to luma.
    pub ir: Tensor<T>,
    /// `[1, H, W]`.
    pub vi_luma: Tensor<T>,
    /// `[2, H, W]` Cb/Cr when the visible image is RGB.
    pub vi_chroma: Option<Tensor<T>>,
    pub ir_path: PathBuf,
    pub vi_path: PathBuf,
}

impl<T: Scalar> ImagePair<T> {
    pub fn dims(&self) -> (usize, usize) {
        (self.ir.shape()[1], self.ir.shape()[2])
    }
}

fn luma_and_chroma<T: Scalar>(img: Tensor<T>) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    match img.shape()[0] {
        1 => Ok((img, None)),
        3 => rgb_to_ycbcr(&img).map(|(y, c)| (y, Some(c))),
        c => Err(Error::UnsupportedImage(format!("{c}-channel image"))),
    }
}

pub fn load_pair<T: Scalar>(ir_path: impl AsRef<Path>, vi_path: impl AsRef<Path>) -> Result<ImagePair<T>> {
    let (ir_path, vi_path) = (ir_path.as_ref().to_path_buf(), vi_path.as_ref().to_path_buf());
    let (ir, _) = luma_and_chroma(load_image(&ir_path)?)?;
    let (vi_luma, vi_chroma) = luma_and_chroma(load_image(&vi_path)?)?;
    if ir.shape() != vi_luma.shape() {
        return Err(Error::Data(format!(
            "{} is {:?} but {} is {:?}",
            ir_path.display(),
            &ir.shape()[1..],
            vi_path.display(),
            &vi_luma.shape()[1..]
        )));
    }
    Ok(ImagePair { ir, vi_luma, vi_chroma, ir_path, vi_path })
}

/// `(name, ir, vi)` for every `<name>_ir.<ext>` / `<name>_vi.<ext>` pair in
/// `dir`, sorted by name. `ext` is `pgm` or `png`.
pub fn find_pairs(dir: impl AsRef<Path>) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let dir = dir.as_ref();
    let mut found: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext_ok = path.extension().and_then(|e| e.to_str()).is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"));
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else { continue };
        if !ext_ok {
            continue;
        }
        if let Some(name) = stem.strip_suffix("_ir") {
            found.entry(name.to_string()).or_default().0 = Some(path);
        } else if let Some(name) = stem.strip_suffix("_vi") {
            found.entry(name.to_string()).or_default().1 = Some(path);
        }
    }
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for (name, (ir, vi)) in found {
        match (ir, vi) {
            (Some(ir), Some(vi)) => pairs.push((name, ir, vi)),
            (Some(p), None) | (None, Some(p)) => unpaired.push(p.display().to_string()),
            (None, None) => unreachable!(),
        }
    }
    if !unpaired.is_empty() {
        return Err(Error::Data(format!("unpaired files: {}", unpaired.join(", "))));
    }
    if pairs.is_empty() {
        return Err(Error::Data(format!("no <name>_ir / <name>_vi pairs found in {}", dir.display())));
    }
    Ok(pairs)
}

pub fn load_dir<T: Scalar>(dir: impl AsRef<Path>) -> Result<Vec<ImagePair<T>>> {
    find_pairs(dir)?.into_iter().map(|(_, ir, vi)| load_pair(ir, vi)).collect()
}

/// Aligned `[1, size, size]` crops taken from one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch<T> {
    pub ir: Tensor<T>,
    pub vi: Tensor<T>,
    pub top: usize,
    pub left: usize,
}

fn crop_window<T: Scalar>(img: &Tensor<T>, top: usize, left: usize, size: usize) -> Result<Tensor<T>> {
    img.narrow(1, top, size)?.narrow(2, left, size)
}

/// Draw `count` uniformly placed windows from `rng`.
pub fn sample_patches_with<T: Scalar, R: Rng + ?Sized>(pair: &ImagePair<T>, size: usize, count: usize, rng: &mut R) -> Result<Vec<Patch<T>>> {
    let (h, w) = pair.dims();
    if size == 0 || size > h || size > w {
        return Err(Error::Data(format!("patch size {size} does not fit a {h}x{w} image ({})", pair.ir_path.display())));
    }
    (0..count)
        .map(|_| {
            let top = rng.random_range(0..=h - size);
            let left = rng.random_range(0..=w - size);
            Ok(Patch {
                ir: crop_window(&pair.ir, top, left, size)?,
                vi: crop_window(&pair.vi_luma, top, left, size)?,
                top,
                left,
            })
        })
        .collect()
}

pub fn sample_patches<T: Scalar>(pair: &ImagePair<T>, size: usize, count: usize, seed: u64) -> Result<Vec<Patch<T>>> {
    sample_patches_with(pair, size, count, &mut ChaCha8Rng::seed_from_u64(seed))
}
