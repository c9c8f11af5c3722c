use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{join, Conv2d};
use crate::scalar::Scalar;

use super::blocks::visit_fields;

/// Fusion and reconstruction: concat, two 3×3 conv + SiLU stages, nearest 2×
/// upsample, 3×3 conv + SiLU, 1×1 conv to one channel, sigmoid.
#[derive(Clone, Debug)]
pub struct FuseReconstruct<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub out: Conv2d<T>,
}

impl<T: Scalar> FuseReconstruct<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, c: usize, rng: &mut R) -> Self {
        let half = (c / 2).max(1);
        Self {
            conv1: Conv2d::same3(&join(prefix, "conv1"), 2 * c, c, rng),
            conv2: Conv2d::same3(&join(prefix, "conv2"), c, c, rng),
            conv3: Conv2d::same3(&join(prefix, "conv3"), c, half, rng),
            out: Conv2d::pointwise(&join(prefix, "out"), half, 1, rng),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, vi: Var<'g, T>, ir: Var<'g, T>) -> Result<Var<'g, T>> {
        if vi.shape() != ir.shape() {
            return Err(Error::shape("fuse_reconstruct", format!("{:?} vs {:?}", vi.shape(), ir.shape())));
        }
        let x = Var::concat(&[vi, ir], 1)?;
        let x = self.conv1.forward(g, x)?.silu();
        let x = self.conv2.forward(g, x)?.silu();
        let x = self.conv3.forward(g, x.upsample_nearest2x()?)?.silu();
        Ok(self.out.forward(g, x)?.sigmoid())
    }
}

visit_fields!(FuseReconstruct { conv1, conv2, conv3, out });
