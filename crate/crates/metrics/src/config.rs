//! Every constant the metrics depend on, in one table.

/// Edge-preservation sigmoids: `Q = Γ / (1 + exp(κ (x − σ)))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QabfParams {
    pub gamma_g: f64,
    pub kappa_g: f64,
    pub sigma_g: f64,
    pub gamma_a: f64,
    pub kappa_a: f64,
    pub sigma_a: f64,
    /// Exponent on edge strength in the weighting.
    pub weight_power: f64,
}

impl Default for QabfParams {
    fn default() -> Self {
        Self { gamma_g: 0.9994, kappa_g: -15.0, sigma_g: 0.5, gamma_a: 0.9879, kappa_a: -22.0, sigma_a: 0.8, weight_power: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 7, sigma: 1.5, c1: (0.01f64 * 255.0).powi(2), c2: (0.03f64 * 255.0).powi(2) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QyParams {
    pub ssim: SsimParams,
    /// Source-similarity threshold that switches between weighting and max.
    pub threshold: f64,
}

impl Default for QyParams {
    fn default() -> Self {
        Self { ssim: SsimParams::default(), threshold: 0.75 }
    }
}

/// Log-Gabor phase congruency bank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseParams {
    pub scales: usize,
    pub orientations: usize,
    pub min_wavelength: f64,
    pub mult: f64,
    pub sigma_onf: f64,
    /// Noise threshold in standard deviations above the mean noise energy.
    pub k: f64,
    /// Ratio of orientation spacing to the angular Gaussian's sigma.
    pub d_theta_on_sigma: f64,
    /// Frequency-spread fraction below which phase congruency is penalized.
    pub cut_off: f64,
    /// Sharpness of that penalty.
    pub g: f64,
    pub epsilon: f64,
}

impl Default for PhaseParams {
    fn default() -> Self {
        Self {
            scales: 4,
            orientations: 6,
            min_wavelength: 3.0,
            mult: 2.1,
            sigma_onf: 0.55,
            k: 2.0,
            d_theta_on_sigma: 1.2,
            cut_off: 0.5,
            g: 10.0,
            epsilon: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VifParams {
    pub scales: usize,
    /// Variance of the additive neural noise.
    pub sigma_n_sq: f64,
    pub eps: f64,
    /// Per-scale weights, finest first.
    pub scale_weights: [f64; 4],
}

impl Default for VifParams {
    fn default() -> Self {
        Self { scales: 4, sigma_n_sq: 2.0, eps: 1e-10, scale_weights: [1.0, 0.0, 0.15, 1.0] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricConfig {
    pub qabf: QabfParams,
    pub qy: QyParams,
    pub qp: PhaseParams,
    pub vif: VifParams,
}
