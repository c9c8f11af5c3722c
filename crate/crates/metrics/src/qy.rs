//! SSIM-based fusion metric `Q_Y`.
//!
//! Where the sources agree (`SSIM(ir, vi) ≥ threshold`) the fused image is
//! scored by a variance-weighted blend of its similarity to each source;
//! elsewhere by the better of the two.

use crate::config::{QyParams, SsimParams};
use crate::error::Result;
use crate::filter::{gaussian_taps, local_stats};
use crate::image::{check_pair, check_triple, GrayImage, Plane};

/// Per-pixel SSIM over a Gaussian window, plus the two local variances.
fn ssim_parts(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> (Vec<f64>, Plane, Plane) {
    let s = local_stats(&a.to_plane(), &b.to_plane(), &gaussian_taps(p.window, p.sigma));
    let map = (0..s.mu_a.data.len())
        .map(|i| {
            let (ma, mb) = (s.mu_a.data[i], s.mu_b.data[i]);
            let (va, vb, c) = (s.var_a.data[i], s.var_b.data[i], s.cov.data[i]);
            let v = (2.0 * ma * mb + p.c1) * (2.0 * c + p.c2) / ((ma * ma + mb * mb + p.c1) * (va + vb + p.c2));
            v.clamp(0.0, 1.0)
        })
        .collect();
    (map, s.var_a, s.var_b)
}

/// Mean SSIM with negative local values clamped to zero.
pub fn ssim(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<f64> {
    check_pair(a, b)?;
    let (map, _, _) = ssim_parts(a, b, p);
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

pub fn qy_with(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage, p: &QyParams) -> Result<f64> {
    check_triple(ir, vi, fused)?;
    let (s_iv, var_ir, var_vi) = ssim_parts(ir, vi, &p.ssim);
    let (s_fi, _, _) = ssim_parts(fused, ir, &p.ssim);
    let (s_fv, _, _) = ssim_parts(fused, vi, &p.ssim);
    let total: f64 = (0..s_iv.len())
        .map(|i| {
            if s_iv[i] >= p.threshold {
                let (a, b) = (var_ir.data[i], var_vi.data[i]);
                let lambda = if a + b > 0.0 { a / (a + b) } else { 0.5 };
                lambda * s_fi[i] + (1.0 - lambda) * s_fv[i]
            } else {
                s_fi[i].max(s_fv[i])
            }
        })
        .sum();
    Ok((total / s_iv.len() as f64).clamp(0.0, 1.0))
}

pub fn qy(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<f64> {
    qy_with(ir, vi, fused, &QyParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern() -> GrayImage {
        GrayImage::from_fn(20, 20, |r, c| (128.0 + 100.0 * ((r as f64) * 0.7).sin() * ((c as f64) * 0.5).cos()) as u8).unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let p = pattern();
        assert_eq!(ssim(&p, &p, &SsimParams::default()).unwrap(), 1.0);
        assert!((qy(&p, &p, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_structure_scores_low() {
        let p = pattern();
        let inv = GrayImage::new(20, 20, p.pixels().iter().map(|&v| 255 - v).collect()).unwrap();
        assert!(qy(&p, &p, &inv).unwrap() < 0.5);
    }

    #[test]
    fn disagreeing_sources_take_the_better_match() {
        let p = pattern();
        let inv = GrayImage::new(20, 20, p.pixels().iter().map(|&v| 255 - v).collect()).unwrap();
        // sources disagree everywhere structured, fused matches one of them
        let q = qy(&p, &inv, &p).unwrap();
        assert!(q > 0.9, "{q}");
    }
}
