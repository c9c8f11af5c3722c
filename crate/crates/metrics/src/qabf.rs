//! Edge-preservation metric `Q^{AB/F}`.
//!
//! Sobel strength `g` and orientation `α` are compared between each source and
//! the fused image; the relative strength `G` and orientation agreement `A`
//! pass through sigmoids and their product is averaged with weight `g^L` of the
//! source. Scores are divided by the sigmoid product at `G = A = 1`, so perfect
//! preservation scores exactly 1.

use std::f64::consts::FRAC_PI_2;

use crate::config::QabfParams;
use crate::error::Result;
use crate::filter::separable;
use crate::image::{check_triple, GrayImage};

/// Sobel strength and orientation in `(−π/2, π/2]`.
fn edges(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let p = img.to_plane();
    // horizontal derivative: smooth columns, difference along rows
    let gx = separable(&p, &[-1.0, 0.0, 1.0], &[1.0, 2.0, 1.0]);
    let gy = separable(&p, &[1.0, 2.0, 1.0], &[-1.0, 0.0, 1.0]);
    let strength = gx.data.iter().zip(&gy.data).map(|(x, y)| x.hypot(*y)).collect();
    let angle = gx.data.iter().zip(&gy.data).map(|(&x, &y)| if x == 0.0 { FRAC_PI_2 } else { (y / x).atan() }).collect();
    (strength, angle)
}

fn sigmoid(gamma: f64, kappa: f64, sigma: f64, x: f64) -> f64 {
    gamma / (1.0 + (kappa * (x - sigma)).exp())
}

/// Per-pixel preservation of source edges `(g_s, α_s)` in the fused image.
fn preservation(p: &QabfParams, src: (&[f64], &[f64]), fused: (&[f64], &[f64])) -> Vec<f64> {
    let perfect = sigmoid(p.gamma_g, p.kappa_g, p.sigma_g, 1.0) * sigmoid(p.gamma_a, p.kappa_a, p.sigma_a, 1.0);
    (0..src.0.len())
        .map(|i| {
            let (gs, gf) = (src.0[i], fused.0[i]);
            let g = match (gs > gf, gs == gf) {
                (_, true) => 1.0,
                (true, _) => gf / gs,
                (false, _) => gs / gf,
            };
            let a = ((src.1[i] - fused.1[i]).abs() - FRAC_PI_2).abs() / FRAC_PI_2;
            sigmoid(p.gamma_g, p.kappa_g, p.sigma_g, g) * sigmoid(p.gamma_a, p.kappa_a, p.sigma_a, a) / perfect
        })
        .collect()
}

pub fn qabf_with(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage, p: &QabfParams) -> Result<f64> {
    check_triple(ir, vi, fused)?;
    let (ga, aa) = edges(ir);
    let (gb, ab) = edges(vi);
    let (gf, af) = edges(fused);
    let qa = preservation(p, (&ga, &aa), (&gf, &af));
    let qb = preservation(p, (&gb, &ab), (&gf, &af));
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..ga.len() {
        let (wa, wb) = (ga[i].powf(p.weight_power), gb[i].powf(p.weight_power));
        num += qa[i] * wa + qb[i] * wb;
        den += wa + wb;
    }
    if den == 0.0 {
        // edge-free sources: perfect only if the fused image adds no edges
        return Ok(if gf.iter().all(|&g| g == 0.0) { 1.0 } else { 0.0 });
    }
    Ok((num / den).clamp(0.0, 1.0))
}

pub fn qabf(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<f64> {
    qabf_with(ir, vi, fused, &QabfParams::default())
}
