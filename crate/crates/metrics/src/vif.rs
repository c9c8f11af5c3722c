//! Multi-scale visual information fidelity for fusion.
//!
//! Each source is a reference and the fused image its distorted version under
//! a scalar Gaussian-scale-mixture channel `F = g·S + V`. Per scale, the
//! information the fused image carries about both sources is divided by the
//! information in the sources themselves; scales are combined with fixed
//! weights normalized to sum to one.

use crate::config::VifParams;
use crate::error::Result;
use crate::filter::{gaussian_blur, gaussian_taps, local_stats};
use crate::image::{check_triple, GrayImage, Plane};

/// `(Σ log2(1 + g²σ_s²/(σ_v² + σ_n²)), Σ log2(1 + σ_s²/σ_n²))` over one scale.
fn channel_information(src: &Plane, fused: &Plane, taps: &[f64], p: &VifParams) -> (f64, f64) {
    let s = local_stats(src, fused, taps);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..src.data.len() {
        let (vs, vf, cov) = (s.var_a.data[i], s.var_b.data[i], s.cov.data[i]);
        let (g, sv) = if vs < p.eps {
            (0.0, vf)
        } else if vf < p.eps {
            (0.0, 0.0)
        } else {
            let g = cov / vs;
            if g < 0.0 {
                (0.0, vf)
            } else {
                (g, vf - g * cov)
            }
        };
        let vs = if vs < p.eps { 0.0 } else { vs };
        let sv = sv.max(p.eps);
        num += (1.0 + g * g * vs / (sv + p.sigma_n_sq)).log2();
        den += (1.0 + vs / p.sigma_n_sq).log2();
    }
    (num, den)
}

pub fn vif_with(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage, p: &VifParams) -> Result<f64> {
    check_triple(ir, vi, fused)?;
    let (mut a, mut b, mut f) = (ir.to_plane(), vi.to_plane(), fused.to_plane());
    let weights = &p.scale_weights[..p.scales.min(4)];
    let total_weight: f64 = weights.iter().sum();
    let mut score = 0.0;
    for (scale, &w) in weights.iter().enumerate() {
        let n = (1usize << (p.scales - scale)) + 1;
        let taps = gaussian_taps(n, n as f64 / 5.0);
        if scale > 0 {
            a = gaussian_blur(&a, &taps).downsample2();
            b = gaussian_blur(&b, &taps).downsample2();
            f = gaussian_blur(&f, &taps).downsample2();
        }
        if w == 0.0 {
            continue;
        }
        let (na, da) = channel_information(&a, &f, &taps, p);
        let (nb, db) = channel_information(&b, &f, &taps, p);
        // no source information at this scale: nothing is lost
        let ratio = if da + db > 0.0 { (na + nb) / (da + db) } else { 1.0 };
        score += w * ratio;
    }
    Ok((score / total_weight).max(0.0))
}

pub fn vif(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<f64> {
    vif_with(ir, vi, fused, &VifParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(n: usize) -> GrayImage {
        GrayImage::from_fn(n, n, |r, c| ((r * r + 3 * c) % 256) as u8).unwrap()
    }

    #[test]
    fn identical_triple_is_one() {
        let p = pattern(40);
        assert!((vif(&p, &p, &p).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_fused_carries_nothing() {
        let p = pattern(40);
        let flat = GrayImage::from_fn(40, 40, |_, _| 100).unwrap();
        assert!(vif(&p, &p, &flat).unwrap() < 1e-12);
    }

    #[test]
    fn small_images_run_every_scale() {
        let p = pattern(5);
        assert!((vif(&p, &p, &p).unwrap() - 1.0).abs() < 1e-9);
    }
}
