use rand::Rng;

use crate::autograd::{Conv2dSpec, Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{fan_in_uniform, join, Conv2d, LayerNorm, Module, Parameter};
use crate::scalar::Scalar;
use crate::ssm::SsmBlock;

macro_rules! visit_fields {
    ($ty:ident { $($field:ident),* }) => {
        impl<T: $crate::scalar::Scalar> $crate::nn::Module<T> for $ty<T> {
            fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a $crate::nn::Parameter<T>)) {
                $(self.$field.visit_params(f);)*
            }

            fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut $crate::nn::Parameter<T>)) {
                $(self.$field.visit_params_mut(f);)*
            }
        }
    };
}
pub(crate) use visit_fields;

/// Image to half-resolution features: stride-2 3×3 conv, SiLU, 3×3 conv.
#[derive(Clone, Debug)]
pub struct ShallowExtractor<T> {
    pub down: Conv2d<T>,
    pub refine: Conv2d<T>,
}

impl<T: Scalar> ShallowExtractor<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, cin: usize, c: usize, rng: &mut R) -> Self {
        let name = join(prefix, "down");
        let fan_in = cin * 9;
        // pad (1, 0) keeps stride 2 exact on even extents: out = H / 2
        let down = Conv2d {
            weight: Parameter::new(join(&name, "weight"), fan_in_uniform(&[c, cin, 3, 3], fan_in, rng)),
            bias: Some(Parameter::new(join(&name, "bias"), fan_in_uniform(&[c], fan_in, rng))),
            spec: Conv2dSpec { stride: 2, pad_h: (1, 0), pad_w: (1, 0), groups: 1 },
        };
        Self { down, refine: Conv2d::same3(&join(prefix, "refine"), c, c, rng) }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[2] % 4 != 0 || shape[3] % 4 != 0 {
            return Err(Error::shape("shallow_extract", format!("need [N, C, H, W] with H, W divisible by 4, got {shape:?}")));
        }
        self.refine.forward(g, self.down.forward(g, x)?.silu())
    }
}

visit_fields!(ShallowExtractor { down, refine });

/// Channel-preserving `x + conv(SiLU(conv(x)))`. Zeroing `conv2` makes it
/// the identity.
#[derive(Clone, Debug)]
pub struct ConvBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, c: usize, rng: &mut R) -> Self {
        Self { conv1: Conv2d::same3(&join(prefix, "conv1"), c, c, rng), conv2: Conv2d::same3(&join(prefix, "conv2"), c, c, rng) }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.add(self.conv2.forward(g, self.conv1.forward(g, x)?.silu())?)
    }
}

visit_fields!(ConvBlock { conv1, conv2 });

/// Haar split, convolution on one frequency group and a bidirectional
/// state-space block on the other, 1×1 band fusion, inverse transform.
#[derive(Clone, Debug)]
pub struct WaveletMamba<T> {
    pub conv_path: ConvBlock<T>,
    pub ssm_path: SsmBlock<T>,
    /// `4C -> 4C` over the stacked `[LL-group, detail-group]` bands.
    pub fuse: Conv2d<T>,
    pub reverse_frequency: bool,
}

impl<T: Scalar> WaveletMamba<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, c: usize, n_state: usize, reverse_frequency: bool, rng: &mut R) -> Self {
        let (conv_c, ssm_c) = if reverse_frequency { (3 * c, c) } else { (c, 3 * c) };
        Self {
            conv_path: ConvBlock::new(&join(prefix, "conv"), conv_c, rng),
            ssm_path: SsmBlock::new(&join(prefix, "ssm"), ssm_c, n_state, rng),
            fuse: Conv2d::pointwise(&join(prefix, "fuse"), 4 * c, 4 * c, rng),
            reverse_frequency,
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let b = x.dwt2_bands()?;
        let stacked = if self.reverse_frequency {
            let high = self.conv_path.forward(g, Var::concat(&[b.lh, b.hl, b.hh], 1)?)?;
            Var::concat(&[self.ssm_path.forward(g, b.ll)?, high], 1)?
        } else {
            let low = self.conv_path.forward(g, b.ll)?;
            Var::concat(&[low, self.ssm_path.forward_bands(g, [b.lh, b.hl, b.hh])?], 1)?
        };
        self.fuse.forward(g, stacked)?.idwt2()
    }
}

visit_fields!(WaveletMamba { conv_path, ssm_path, fuse });

/// Gated attention: `x + branch(x)` with
/// `branch(x) = PW(f_att ⊙ DW(w_att))`, `(f_att, w_att) = split(Conv1x1(LN(x)))`.
#[derive(Clone, Debug)]
pub struct GatedAttention<T> {
    pub norm: LayerNorm<T>,
    pub expand: Conv2d<T>,
    pub dw: Conv2d<T>,
    pub pw: Conv2d<T>,
}

impl<T: Scalar> GatedAttention<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, c: usize, rng: &mut R) -> Self {
        Self {
            norm: LayerNorm::new(&join(prefix, "norm"), c),
            expand: Conv2d::pointwise(&join(prefix, "expand"), c, 2 * c, rng),
            dw: Conv2d::new(&join(prefix, "dw"), c, c, 3, 1, 1, c, true, rng),
            pw: Conv2d::pointwise(&join(prefix, "pw"), c, c, rng),
        }
    }

    /// The residual-free part; zero when `pw` is zeroed.
    pub fn branch<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let c = self.pw.out_channels();
        let parts = self.expand.forward(g, self.norm.forward(g, x)?)?.split(&[c, c], 1)?;
        let gated = parts[0].mul(self.dw.forward(g, parts[1])?)?;
        self.pw.forward(g, gated)
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.add(self.branch(g, x)?)
    }
}

visit_fields!(GatedAttention { norm, expand, dw, pw });

/// Two pre-norm residual sublayers:
/// `f' = f + WM(LN(f))`, `f_out = f' + GAM(LN(f'))`.
///
/// The gated sublayer contributes only its branch, so zeroing `wm.fuse` and
/// `gam.pw` makes the block an exact identity.
#[derive(Clone, Debug)]
pub struct WfeBlock<T> {
    pub norm1: LayerNorm<T>,
    pub wm: WaveletMamba<T>,
    pub norm2: LayerNorm<T>,
    pub gam: Option<GatedAttention<T>>,
}

impl<T: Scalar> WfeBlock<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, c: usize, n_state: usize, reverse_frequency: bool, use_gam: bool, rng: &mut R) -> Self {
        Self {
            norm1: LayerNorm::new(&join(prefix, "norm1"), c),
            wm: WaveletMamba::new(&join(prefix, "wm"), c, n_state, reverse_frequency, rng),
            norm2: LayerNorm::new(&join(prefix, "norm2"), c),
            gam: use_gam.then(|| GatedAttention::new(&join(prefix, "gam"), c, rng)),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, f: Var<'g, T>) -> Result<Var<'g, T>> {
        let f1 = f.add(self.wm.forward(g, self.norm1.forward(g, f)?)?)?;
        match &self.gam {
            Some(gam) => f1.add(gam.branch(g, self.norm2.forward(g, f1)?)?),
            None => Ok(f1),
        }
    }

    /// Zero both sublayers' final projections.
    pub fn zero_output_projections(&mut self) {
        self.wm.fuse.zero();
        if let Some(gam) = &mut self.gam {
            gam.pw.zero();
        }
    }
}

impl<T: Scalar> Module<T> for WfeBlock<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.norm1.visit_params(f);
        self.wm.visit_params(f);
        if let Some(gam) = &self.gam {
            self.norm2.visit_params(f);
            gam.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.norm1.visit_params_mut(f);
        self.wm.visit_params_mut(f);
        if let Some(gam) = &mut self.gam {
            self.norm2.visit_params_mut(f);
            gam.visit_params_mut(f);
        }
    }
}
