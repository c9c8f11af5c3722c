use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters. The parameter set is a pure function of
/// this struct.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub c_prime: usize,
    pub n_state: usize,
    pub wfe_per_stage: usize,
    pub input_channels: usize,
    #[serde(default)]
    pub ablation: Ablation,
}

/// Architecture switches; each one is independent of the others.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub disable_wfe: bool,
    pub disable_cafm: bool,
    pub disable_gam: bool,
    /// Route the low band through the state-space path and the detail
    /// bands through the convolutional path.
    pub reverse_frequency: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { c_prime: 32, n_state: 16, wfe_per_stage: 1, input_channels: 1, ablation: Ablation::default() }
    }
}

impl ModelConfig {
    pub fn with_width(c_prime: usize) -> Self {
        Self { c_prime, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_prime < 4 || self.c_prime % 2 != 0 {
            return Err(Error::Invalid(format!("c_prime must be even and >= 4, got {}", self.c_prime)));
        }
        if self.n_state == 0 {
            return Err(Error::Invalid("n_state must be positive".into()));
        }
        if self.input_channels != 1 {
            return Err(Error::Invalid(format!(
                "the network fuses single-channel images, got input_channels = {}",
                self.input_channels
            )));
        }
        Ok(())
    }
}
