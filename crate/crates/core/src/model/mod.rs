//! The fusion network: shallow extraction, wavelet/state-space feature
//! stages with cross-modal modulation between them, and reconstruction.
//!
//! ```text
//! f_sf  = SF(I)                  per modality, [N, C', H/2, W/2]
//! f_df  = WFE(f_sf)
//! f_ccf = WFE(CAFM(f_df^vi, f_df^ir))
//! I_F   = FR(f_ccf^vi, f_ccf^ir)  [N, 1, H, W] in (0, 1)
//! ```
//!
//! The two modality branches do not share weights.

mod blocks;
mod cafm;
mod config;
mod reconstruct;

pub use blocks::{ConvBlock, GatedAttention, ShallowExtractor, WaveletMamba, WfeBlock};
pub use cafm::{interleave, Cafm};
pub use config::{Ablation, ModelConfig};
pub use reconstruct::FuseReconstruct;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{join, Module, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One modality's extractor and its two WFE stages.
#[derive(Clone, Debug)]
pub struct Branch<T> {
    pub sf: ShallowExtractor<T>,
    pub stage1: Vec<WfeBlock<T>>,
    pub stage2: Vec<WfeBlock<T>>,
}

impl<T: Scalar> Branch<T> {
    fn new<R: Rng + ?Sized>(prefix: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let a = cfg.ablation;
        let blocks = if a.disable_wfe { 0 } else { cfg.wfe_per_stage };
        let stage = |name: &str, rng: &mut R| -> Vec<WfeBlock<T>> {
            (0..blocks)
                .map(|i| {
                    let p = join(&join(prefix, name), &i.to_string());
                    WfeBlock::new(&p, cfg.c_prime, cfg.n_state, a.reverse_frequency, !a.disable_gam, rng)
                })
                .collect()
        };
        let sf = ShallowExtractor::new(&join(prefix, "sf"), cfg.input_channels, cfg.c_prime, rng);
        let stage1 = stage("stage1", rng);
        let stage2 = stage("stage2", rng);
        Self { sf, stage1, stage2 }
    }
}

fn run_stage<'g, T: Scalar>(g: &'g Graph<T>, blocks: &[WfeBlock<T>], mut x: Var<'g, T>) -> Result<Var<'g, T>> {
    for b in blocks {
        x = b.forward(g, x)?;
    }
    Ok(x)
}

impl<T: Scalar> Module<T> for Branch<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.sf.visit_params(f);
        self.stage1.iter().chain(&self.stage2).for_each(|b| b.visit_params(f));
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.sf.visit_params_mut(f);
        self.stage1.iter_mut().chain(&mut self.stage2).for_each(|b| b.visit_params_mut(f));
    }
}

/// Intermediate maps of one modality.
#[derive(Clone, Copy, Debug)]
pub struct FeatureStage<X> {
    pub f_sf: X,
    pub f_df: X,
    pub f_ccf: X,
}

#[derive(Clone, Debug)]
pub struct WMamba<T> {
    pub config: ModelConfig,
    pub vi: Branch<T>,
    pub ir: Branch<T>,
    pub cafm: Option<Cafm<T>>,
    pub fr: FuseReconstruct<T>,
}

impl<T: Scalar> WMamba<T> {
    /// Fresh fan-in uniform initialization from a seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_rng(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let vi = Branch::new("vi", &config, rng);
        let ir = Branch::new("ir", &config, rng);
        let cafm = (!config.ablation.disable_cafm).then(|| Cafm::new("cafm", config.c_prime, rng));
        let fr = FuseReconstruct::new("fr", config.c_prime, rng);
        Ok(Self { config, vi, ir, cafm, fr })
    }

    fn check_input(name: &str, x: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = x.dims4()?;
        if c != 1 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::shape(
                "forward",
                format!("{name} must be [N, 1, H, W] with H, W divisible by 4, got {:?}", x.shape()),
            ));
        }
        if let Some(v) = x.data().iter().find(|&&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::Invalid(format!("{name} pixel {v} outside [0, 1]")));
        }
        Ok(())
    }

    /// Feature maps of both modalities, `(vi, ir)`.
    pub fn features<'g>(&self, g: &'g Graph<T>, ir: Var<'g, T>, vi: Var<'g, T>) -> Result<(FeatureStage<Var<'g, T>>, FeatureStage<Var<'g, T>>)> {
        Self::check_input("ir", &ir.value())?;
        Self::check_input("vi", &vi.value())?;
        if ir.shape() != vi.shape() {
            return Err(Error::shape("forward", format!("ir {:?} vs vi {:?}", ir.shape(), vi.shape())));
        }
        let sf_vi = self.vi.sf.forward(g, vi)?;
        let sf_ir = self.ir.sf.forward(g, ir)?;
        let df_vi = run_stage(g, &self.vi.stage1, sf_vi)?;
        let df_ir = run_stage(g, &self.ir.stage1, sf_ir)?;
        let (m_vi, m_ir) = match &self.cafm {
            Some(c) => c.forward(g, df_vi, df_ir)?,
            None => (df_vi, df_ir),
        };
        let ccf_vi = run_stage(g, &self.vi.stage2, m_vi)?;
        let ccf_ir = run_stage(g, &self.ir.stage2, m_ir)?;
        Ok((
            FeatureStage { f_sf: sf_vi, f_df: df_vi, f_ccf: ccf_vi },
            FeatureStage { f_sf: sf_ir, f_df: df_ir, f_ccf: ccf_ir },
        ))
    }

    /// `[N, 1, H, W]` pair to the fused `[N, 1, H, W]` image.
    pub fn forward<'g>(&self, g: &'g Graph<T>, ir: Var<'g, T>, vi: Var<'g, T>) -> Result<Var<'g, T>> {
        let (fv, fi) = self.features(g, ir, vi)?;
        self.fr.forward(g, fv.f_ccf, fi.f_ccf)
    }

    /// Inference on plain tensors.
    pub fn fuse(&self, ir: &Tensor<T>, vi: &Tensor<T>) -> Result<Tensor<T>> {
        let g = Graph::inference();
        let out = self.forward(&g, g.constant(ir.clone()), g.constant(vi.clone()))?;
        Ok((*out.value()).clone())
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> WMamba<U> {
        let mut out = WMamba::<U>::new(self.config.clone(), 0).expect("config already validated");
        let values: Vec<Tensor<U>> = self.parameters().iter().map(|p| p.value().cast()).collect();
        let mut it = values.into_iter();
        out.visit_params_mut(&mut |p| p.set(it.next().expect("same parameter layout")));
        out
    }
}

impl<T: Scalar> Module<T> for WMamba<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.vi.visit_params(f);
        self.ir.visit_params(f);
        if let Some(c) = &self.cafm {
            c.visit_params(f);
        }
        self.fr.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.vi.visit_params_mut(f);
        self.ir.visit_params_mut(f);
        if let Some(c) = &mut self.cafm {
            c.visit_params_mut(f);
        }
        self.fr.visit_params_mut(f);
    }
}
