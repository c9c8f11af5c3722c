use crate::error::{MetricError, Result};

/// An 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(MetricError::Empty);
        }
        if pixels.len() != width * height {
            return Err(MetricError::PixelCount { width, height, expected: width * height, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    /// Quantize `[0, 1]` intensities: scale by 255, round, clamp.
    pub fn from_unit(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let pixels = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Self::new(width, height, pixels)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let pixels = (0..width * height).map(|i| f(i / width, i % width)).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Pixel values as `f64` on the 0–255 scale.
    pub fn to_plane(&self) -> Plane {
        Plane { width: self.width, height: self.height, data: self.pixels.iter().map(|&p| f64::from(p)).collect() }
    }
}

/// A real-valued working image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self { width: self.width, height: self.height, data }
    }

    /// Every second row and column, starting at the first.
    pub fn downsample2(&self) -> Self {
        let (w, h) = (self.width.div_ceil(2), self.height.div_ceil(2));
        let mut data = Vec::with_capacity(w * h);
        for r in (0..self.height).step_by(2) {
            data.extend(self.data[r * self.width..(r + 1) * self.width].iter().step_by(2));
        }
        Self { width: w, height: h, data }
    }
}

/// Fail unless all three images share dimensions.
pub(crate) fn check_triple(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<()> {
    if ir.dims() != vi.dims() || ir.dims() != fused.dims() {
        return Err(MetricError::DimensionMismatch { ir: ir.dims(), vi: vi.dims(), fused: fused.dims() });
    }
    Ok(())
}

pub(crate) fn check_pair(a: &GrayImage, b: &GrayImage) -> Result<()> {
    check_triple(a, b, b)
}
