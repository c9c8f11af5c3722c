//! Nonlinear correlation information entropy.
//!
//! Each image's pixels are rank-ordered and split into 256 equal-population
//! bins, so every marginal is uniform. The nonlinear correlation coefficient of
//! a pair is `H(X) + H(Y) − H(X, Y)` with entropies in base 256. The three
//! pairwise coefficients form a correlation matrix `R` with unit diagonal and
//! `NCIE = 1 + Σ (λ/3) log₂₅₆(λ/3)` over its eigenvalues.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::Result;
use crate::image::{check_triple, GrayImage};
use crate::mi::BINS;

/// Rank bin of every pixel; ties are broken by position.
fn rank_bins(img: &GrayImage) -> Vec<u16> {
    let px = img.pixels();
    let mut order: Vec<u32> = (0..px.len() as u32).collect();
    order.sort_by_key(|&i| (px[i as usize], i));
    let n = px.len();
    let mut bins = vec![0u16; n];
    for (rank, &i) in order.iter().enumerate() {
        bins[i as usize] = (rank * BINS / n) as u16;
    }
    bins
}

fn entropy_base_b(counts: &[u64], n: f64) -> f64 {
    let ln_b = (BINS as f64).ln();
    -counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n * (c as f64 / n).ln()).sum::<f64>() / ln_b
}

/// Nonlinear correlation coefficient of two rank-binned images, in `[0, 1]`.
fn ncc(a: &[u16], b: &[u16]) -> f64 {
    let mut joint = vec![0u64; BINS * BINS];
    let (mut ca, mut cb) = (vec![0u64; BINS], vec![0u64; BINS]);
    for (&x, &y) in a.iter().zip(b) {
        joint[x as usize * BINS + y as usize] += 1;
        ca[x as usize] += 1;
        cb[y as usize] += 1;
    }
    let n = a.len() as f64;
    (entropy_base_b(&ca, n) + entropy_base_b(&cb, n) - entropy_base_b(&joint, n)).clamp(0.0, 1.0)
}

/// The symmetric 3×3 correlation matrix over (ir, vi, fused).
pub fn correlation_matrix(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<Matrix3<f64>> {
    check_triple(ir, vi, fused)?;
    let (bi, bv, bf) = (rank_bins(ir), rank_bins(vi), rank_bins(fused));
    let (iv, if_, vf) = (ncc(&bi, &bv), ncc(&bi, &bf), ncc(&bv, &bf));
    Ok(Matrix3::new(1.0, iv, if_, iv, 1.0, vf, if_, vf, 1.0))
}

/// `1 + Σ (λ/3) log₂₅₆(λ/3)`; non-positive eigenvalues contribute nothing.
pub fn ncie_from_matrix(r: &Matrix3<f64>) -> f64 {
    let ln_b = (BINS as f64).ln();
    let eig = SymmetricEigen::new(*r).eigenvalues;
    let s: f64 = eig.iter().map(|&l| l / 3.0).filter(|&p| p > 0.0).map(|p| p * p.ln() / ln_b).sum();
    (1.0 + s).clamp(0.0, 1.0)
}

pub fn ncie(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<f64> {
    Ok(ncie_from_matrix(&correlation_matrix(ir, vi, fused)?))
}
