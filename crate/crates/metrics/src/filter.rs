//! Separable filtering with symmetric (edge-repeating) boundaries.

use crate::image::Plane;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Index into `0..n` reflecting about the edges with the edge sample repeated.
pub(crate) fn symmetric(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Correlate rows with `row` taps and columns with `col` taps, same size output.
pub fn separable(img: &Plane, row: &[f64], col: &[f64]) -> Plane {
    let (w, h) = (img.width, img.height);
    let (rr, rc) = ((row.len() / 2) as isize, (col.len() / 2) as isize);
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        let line = &img.data[r * w..(r + 1) * w];
        for c in 0..w {
            tmp[r * w + c] = row.iter().enumerate().map(|(k, t)| t * line[symmetric(c as isize + k as isize - rr, w)]).sum();
        }
    }
    let mut out = Plane::zeros(w, h);
    for r in 0..h {
        for c in 0..w {
            out.data[r * w + c] =
                col.iter().enumerate().map(|(k, t)| t * tmp[symmetric(r as isize + k as isize - rc, h) * w + c]).sum();
        }
    }
    out
}

pub fn gaussian_blur(img: &Plane, taps: &[f64]) -> Plane {
    separable(img, taps, taps)
}

/// Local means, variances and covariance under a Gaussian window.
pub(crate) struct LocalStats {
    pub mu_a: Plane,
    pub mu_b: Plane,
    pub var_a: Plane,
    pub var_b: Plane,
    pub cov: Plane,
}

pub(crate) fn local_stats(a: &Plane, b: &Plane, taps: &[f64]) -> LocalStats {
    let mu_a = gaussian_blur(a, taps);
    let mu_b = gaussian_blur(b, taps);
    let ea2 = gaussian_blur(&a.zip(a, |x, y| x * y), taps);
    let eb2 = gaussian_blur(&b.zip(b, |x, y| x * y), taps);
    let eab = gaussian_blur(&a.zip(b, |x, y| x * y), taps);
    let var_a = ea2.zip(&mu_a, |e, m| (e - m * m).max(0.0));
    let var_b = eb2.zip(&mu_b, |e, m| (e - m * m).max(0.0));
    let cov = eab.zip(&mu_a.zip(&mu_b, |x, y| x * y), |e, m| e - m);
    LocalStats { mu_a, mu_b, var_a, var_b, cov }
}
