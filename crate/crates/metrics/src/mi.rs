//! Fusion mutual information `I(F; A) + I(F; B)` from 256-bin histograms, in bits.

use crate::error::Result;
use crate::image::{check_pair, check_triple, GrayImage};

pub const BINS: usize = 256;

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits of the gray-level histogram.
pub fn entropy(img: &GrayImage) -> f64 {
    let mut counts = [0u64; BINS];
    for &p in img.pixels() {
        counts[p as usize] += 1;
    }
    let n = img.len() as f64;
    -counts.iter().map(|&c| plogp(c as f64 / n)).sum::<f64>()
}

/// `I(A; B) = Σ p(a,b) log2(p(a,b) / (p(a) p(b)))`, clamped at zero.
pub fn mutual_information(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check_pair(a, b)?;
    let mut joint = vec![0u64; BINS * BINS];
    let (mut ca, mut cb) = ([0u64; BINS], [0u64; BINS]);
    for (&x, &y) in a.pixels().iter().zip(b.pixels()) {
        joint[x as usize * BINS + y as usize] += 1;
        ca[x as usize] += 1;
        cb[y as usize] += 1;
    }
    let n = a.len() as f64;
    let mut mi = 0.0;
    for (i, row) in joint.chunks_exact(BINS).enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                // p(a,b) / (p(a) p(b)) = c n / (ca cb)
                mi += c as f64 / n * (c as f64 * n / (ca[i] as f64 * cb[j] as f64)).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

pub fn mi(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<f64> {
    check_triple(ir, vi, fused)?;
    Ok(mutual_information(fused, ir)? + mutual_information(fused, vi)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_of_two_equal_levels_is_one_bit() {
        let img = GrayImage::from_fn(4, 4, |r, _| if r < 2 { 10 } else { 200 }).unwrap();
        assert!((entropy(&img) - 1.0).abs() < 1e-15);
        assert!((mutual_information(&img, &img).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_image_shares_nothing() {
        let a = GrayImage::from_fn(4, 4, |r, c| (r * 4 + c) as u8).unwrap();
        let k = GrayImage::from_fn(4, 4, |_, _| 7).unwrap();
        assert_eq!(entropy(&k), 0.0);
        assert_eq!(mutual_information(&a, &k).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let a = GrayImage::from_fn(4, 4, |_, _| 0).unwrap();
        let b = GrayImage::from_fn(4, 5, |_, _| 0).unwrap();
        assert!(mi(&a, &a, &b).is_err());
    }
}
