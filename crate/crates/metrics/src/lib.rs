//! Quality metrics for infrared/visible image fusion.
//!
//! Every metric takes the two sources and the fused result as 8-bit grayscale
//! images of equal size:
//!
//! | metric | measures                                         | range   |
//! |--------|--------------------------------------------------|---------|
//! | `mi`   | mutual information between fused and each source | `≥ 0`   |
//! | `ncie` | nonlinear correlation information entropy        | `[0,1]` |
//! | `qabf` | Sobel edge preservation                          | `[0,1]` |
//! | `qp`   | phase-congruency feature preservation            | `[0,1]` |
//! | `qy`   | SSIM-based structural similarity                 | `[0,1]` |
//! | `vif`  | visual information fidelity                      | `≥ 0`   |
//!
//! Constants live in [`MetricConfig`]; the plain functions use its defaults.

pub mod config;
pub mod error;
pub mod filter;
pub mod image;
pub mod mi;
pub mod ncie;
pub mod phase;
pub mod qabf;
pub mod qp;
pub mod qy;
pub mod report;
pub mod vif;

pub use config::{MetricConfig, PhaseParams, QabfParams, QyParams, SsimParams, VifParams};
pub use error::{MetricError, Result};
pub use image::{GrayImage, Plane};
pub use mi::{entropy, mi, mutual_information};
pub use ncie::ncie;
pub use qabf::{qabf, qabf_with};
pub use qp::{qp, qp_with};
pub use qy::{qy, qy_with, ssim};
pub use report::{evaluate, evaluate_all, evaluate_all_with, to_csv, to_json, Metric, MetricReport};
pub use vif::{vif, vif_with};
