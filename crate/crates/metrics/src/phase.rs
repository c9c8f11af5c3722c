//! Phase congruency from a log-Gabor filter bank, with principal moments.
//!
//! Filtering is done in the frequency domain. Per orientation, the local
//! energy along the mean phase direction is reduced by a noise threshold
//! estimated from the smallest scale's amplitude (Rayleigh model) and weighted
//! by how widely the response spreads across scales. The orientation-wise
//! results give the overall phase congruency and the maximum and minimum
//! moments of its covariance across orientation.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::config::PhaseParams;
use crate::image::Plane;

type C64 = Complex<f64>;

/// In-place 2-D FFT, unnormalized in both directions.
fn fft2(data: &mut [C64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(data);
    let mut column = vec![C64::default(); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }
}

/// Signed frequency of FFT bin `i` out of `n`, in cycles per sample.
fn freq(i: usize, n: usize) -> f64 {
    let k = if i <= (n - 1) / 2 { i as isize } else { i as isize - n as isize };
    k as f64 / n as f64
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug)]
pub struct PhaseCongruency {
    /// Overall phase congruency, in `[0, 1]`.
    pub pc: Plane,
    /// Maximum moment (edge strength).
    pub max_moment: Plane,
    /// Minimum moment (corner strength).
    pub min_moment: Plane,
}

pub fn phase_congruency(img: &Plane, p: &PhaseParams) -> PhaseCongruency {
    let (w, h) = (img.width, img.height);
    let n = w * h;
    let mut spectrum: Vec<C64> = img.data.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft2(&mut spectrum, w, h, false);

    // polar frequency grid; the DC radius is set to 1 to keep the log finite
    let mut radius = vec![0.0; n];
    let (mut sin_t, mut cos_t) = (vec![0.0; n], vec![0.0; n]);
    for r in 0..h {
        for c in 0..w {
            let (fx, fy) = (freq(c, w), -freq(r, h));
            let rad = fx.hypot(fy);
            let theta = fy.atan2(fx);
            radius[r * w + c] = if r == 0 && c == 0 { 1.0 } else { rad };
            sin_t[r * w + c] = theta.sin();
            cos_t[r * w + c] = theta.cos();
        }
    }
    let lowpass: Vec<f64> = radius.iter().map(|&r| 1.0 / (1.0 + (r / 0.45).powi(30))).collect();
    let log_sigma = 2.0 * p.sigma_onf.ln().powi(2);
    let log_gabor: Vec<Vec<f64>> = (0..p.scales)
        .map(|s| {
            let fo = 1.0 / (p.min_wavelength * p.mult.powi(s as i32));
            let mut lg: Vec<f64> =
                radius.iter().zip(&lowpass).map(|(&r, &lp)| (-(r / fo).ln().powi(2) / log_sigma).exp() * lp).collect();
            lg[0] = 0.0;
            lg
        })
        .collect();

    let theta_sigma = PI / p.orientations as f64 / p.d_theta_on_sigma;
    let (mut cov_x2, mut cov_y2, mut cov_xy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut energy_all, mut an_all) = (vec![0.0; n], vec![0.0; n]);
    let mut eo: Vec<Vec<C64>> = vec![Vec::new(); p.scales];

    for o in 0..p.orientations {
        let angle = o as f64 * PI / p.orientations as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_t[i] * ca - cos_t[i] * sa;
                let dc = cos_t[i] * ca + sin_t[i] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let (mut sum_an, mut max_an) = (vec![0.0; n], vec![0.0f64; n]);
        let (mut sum_e, mut sum_o) = (vec![0.0; n], vec![0.0; n]);
        let mut tau = 0.0;
        for (s, lg) in log_gabor.iter().enumerate() {
            let mut resp: Vec<C64> = spectrum.iter().enumerate().map(|(i, &z)| z * (lg[i] * spread[i])).collect();
            fft2(&mut resp, w, h, true);
            resp.iter_mut().for_each(|z| *z /= n as f64);
            let mut amps: Vec<f64> = resp.iter().map(|z| z.norm()).collect();
            for i in 0..n {
                sum_an[i] += amps[i];
                max_an[i] = max_an[i].max(amps[i]);
                sum_e[i] += resp[i].re;
                sum_o[i] += resp[i].im;
            }
            if s == 0 {
                tau = median(&mut amps) / 4f64.ln().sqrt();
            }
            eo[s] = resp;
        }

        // energy along the mean phase direction
        let mut energy = vec![0.0; n];
        for i in 0..n {
            let mag = sum_e[i].hypot(sum_o[i]) + p.epsilon;
            let (me, mo) = (sum_e[i] / mag, sum_o[i] / mag);
            energy[i] = eo.iter().map(|r| r[i].re * me + r[i].im * mo - (r[i].re * mo - r[i].im * me).abs()).sum();
        }

        let inv = 1.0 / p.mult;
        let total_tau = tau * (1.0 - inv.powi(p.scales as i32)) / (1.0 - inv);
        let threshold = total_tau * (PI / 2.0).sqrt() + p.k * total_tau * ((4.0 - PI) / 2.0).sqrt();

        for i in 0..n {
            let e = (energy[i] - threshold).max(0.0);
            let width = if p.scales > 1 { (sum_an[i] / (max_an[i] + p.epsilon) - 1.0) / (p.scales - 1) as f64 } else { 1.0 };
            let weight = 1.0 / (1.0 + ((p.cut_off - width) * p.g).exp());
            let pc_o = weight * e / (sum_an[i] + p.epsilon);
            energy_all[i] += weight * e;
            an_all[i] += sum_an[i];
            let (cx, cy) = (pc_o * ca, pc_o * sa);
            cov_x2[i] += cx * cx;
            cov_y2[i] += cy * cy;
            cov_xy[i] += cx * cy;
        }
    }

    let half = p.orientations as f64 / 2.0;
    let mut max_moment = Plane::zeros(w, h);
    let mut min_moment = Plane::zeros(w, h);
    let mut pc = Plane::zeros(w, h);
    for i in 0..n {
        let (x2, y2, xy) = (cov_x2[i] / half, cov_y2[i] / half, 2.0 * cov_xy[i] / half);
        let denom = xy.hypot(x2 - y2) + p.epsilon;
        max_moment.data[i] = (x2 + y2 + denom) / 2.0;
        min_moment.data[i] = (x2 + y2 - denom) / 2.0;
        pc.data[i] = energy_all[i] / (an_all[i] + p.epsilon);
    }
    PhaseCongruency { pc, max_moment, min_moment }
}
