#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wmamba_metrics::GrayImage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random()).unwrap()
}

/// Warm blobs on a dim gradient, like a thermal frame.
pub fn thermal(n: usize) -> GrayImage {
    GrayImage::from_fn(n, n, |r, c| {
        let (y, x) = (r as f64 / n as f64, c as f64 / n as f64);
        let blob = |cy: f64, cx: f64, rad: f64| (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * rad * rad)).exp();
        let v = 30.0 + 40.0 * y + 180.0 * blob(0.3, 0.65, 0.08) + 120.0 * blob(0.7, 0.25, 0.05);
        v.min(255.0) as u8
    })
    .unwrap()
}

/// Textured scene with a horizon, like a visible frame.
pub fn visible(n: usize) -> GrayImage {
    GrayImage::from_fn(n, n, |r, c| {
        let base = if r > n * 2 / 3 { 150.0 } else { 90.0 };
        (base + 50.0 * (c as f64 / 3.0).sin() * (r as f64 / 5.0).cos()).round() as u8
    })
    .unwrap()
}

/// `img + σ·255·z` quantized, with `z` drawn once per seed so sweeps share one pattern.
pub fn with_noise(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let mut r = rng(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let px = img.pixels().iter().map(|&p| (f64::from(p) + sigma * 255.0 * z.sample(&mut r)).round().clamp(0.0, 255.0) as u8).collect();
    GrayImage::new(img.width(), img.height(), px).unwrap()
}
