//! Phase-congruency fusion metric `Q_P`.
//!
//! For each feature map (phase congruency, maximum moment, minimum moment) the
//! fused map is correlated with the pointwise maximum of the source maps. The
//! metric is the product of the three correlations, each clamped to `[0, 1]`.

use crate::config::PhaseParams;
use crate::error::Result;
use crate::image::{check_triple, GrayImage, Plane};
use crate::phase::phase_congruency;

/// Pearson correlation; two constant maps correlate fully only when equal.
fn correlation(a: &Plane, b: &Plane) -> f64 {
    let n = a.data.len() as f64;
    let (ma, mb) = (a.data.iter().sum::<f64>() / n, b.data.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a.data == b.data { 1.0 } else { 0.0 };
    }
    (sab / (saa * sbb).sqrt()).clamp(0.0, 1.0)
}

pub fn qp_with(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage, p: &PhaseParams) -> Result<f64> {
    check_triple(ir, vi, fused)?;
    let a = phase_congruency(&ir.to_plane(), p);
    let b = phase_congruency(&vi.to_plane(), p);
    let f = phase_congruency(&fused.to_plane(), p);
    let pairs = [(&a.pc, &b.pc, &f.pc), (&a.max_moment, &b.max_moment, &f.max_moment), (&a.min_moment, &b.min_moment, &f.min_moment)];
    Ok(pairs.iter().map(|(x, y, z)| correlation(z, &x.zip(y, f64::max))).product())
}

pub fn qp(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<f64> {
    qp_with(ir, vi, fused, &PhaseParams::default())
}
