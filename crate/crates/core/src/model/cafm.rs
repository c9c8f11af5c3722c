use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{join, Conv2d, Module, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Channel interleave `[own_1, other_1, own_2, other_2, ...]`: padded channel
/// `2k` is `own` channel `k`, padded channel `2k + 1` is `other` channel `k`.
pub fn interleave<'g, T: Scalar>(own: Var<'g, T>, other: Var<'g, T>) -> Result<Var<'g, T>> {
    let shape = own.shape();
    if shape != other.shape() || shape.len() != 4 {
        return Err(Error::shape("cafm", format!("{shape:?} vs {:?}", other.shape())));
    }
    let [n, c, h, w] = [shape[0], shape[1], shape[2], shape[3]];
    let a = own.reshape([n, c, 1, h, w])?;
    let b = other.reshape([n, c, 1, h, w])?;
    Var::concat(&[a, b], 2)?.reshape([n, 2 * c, h, w])
}

/// Cross-modal modulation: interleave, per-channel weight, `2C -> C` projection.
#[derive(Clone, Debug)]
pub struct Cafm<T> {
    pub weight_vi: Parameter<T>,
    pub weight_ir: Parameter<T>,
    pub proj_vi: Conv2d<T>,
    pub proj_ir: Conv2d<T>,
}

impl<T: Scalar> Cafm<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, c: usize, rng: &mut R) -> Self {
        Self {
            weight_vi: Parameter::new(join(prefix, "weight_vi"), Tensor::ones([2 * c])),
            weight_ir: Parameter::new(join(prefix, "weight_ir"), Tensor::ones([2 * c])),
            proj_vi: Conv2d::pointwise(&join(prefix, "proj_vi"), 2 * c, c, rng),
            proj_ir: Conv2d::pointwise(&join(prefix, "proj_ir"), 2 * c, c, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, vi: Var<'g, T>, ir: Var<'g, T>) -> Result<(Var<'g, T>, Var<'g, T>)> {
        let pv = interleave(vi, ir)?.scale_axis(self.weight_vi.bind(g), 1)?;
        let pi = interleave(ir, vi)?.scale_axis(self.weight_ir.bind(g), 1)?;
        Ok((self.proj_vi.forward(g, pv)?, self.proj_ir.forward(g, pi)?))
    }
}

impl<T: Scalar> Module<T> for Cafm<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        f(&self.weight_vi);
        f(&self.weight_ir);
        self.proj_vi.visit_params(f);
        self.proj_ir.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.weight_vi);
        f(&mut self.weight_ir);
        self.proj_vi.visit_params_mut(f);
        self.proj_ir.visit_params_mut(f);
    }
}
