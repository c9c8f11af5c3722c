//! Intensity and Sobel-gradient fusion losses.
//!
//! ```text
//! L_int  = mean |I_F − max(I_ir, I_vi)|
//! L_grad = mean_interior | |∇I_F| − max(|∇I_ir|, |∇I_vi|) |
//! L      = λ_int·L_int + λ_grad·L_grad
//! ```
//!
//! `|∇I| = |S_x ⋆ I| + |S_y ⋆ I|` with zero padding; the gradient term skips a
//! one-pixel border so the padding never contributes.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_int: f64,
    pub lambda_grad: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_int: 10.0, lambda_grad: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_int >= 0.0 && self.lambda_grad >= 0.0) {
            return Err(Error::Invalid(format!("loss weights must be >= 0, got {self:?}")));
        }
        Ok(())
    }
}

/// Sobel kernels as a `[2, 1, 3, 3]` weight: `S_x` then `S_y = S_xᵀ`.
fn sobel_weight<T: Scalar>() -> Tensor<T> {
    Tensor::from_fn([2, 1, 3, 3], |i| {
        let (k, r, c) = (i / 9, (i / 3) % 3, i % 3);
        T::lit(if k == 0 { SOBEL_X[r][c] } else { SOBEL_X[c][r] })
    })
}

/// Signed Sobel responses `[N, 2, H, W]`: channel 0 is `S_x ⋆ I`, channel 1 `S_y ⋆ I`.
pub fn sobel_components<'g, T: Scalar>(img: Var<'g, T>) -> Result<Var<'g, T>> {
    let shape = img.shape();
    if shape.len() != 4 || shape[1] != 1 {
        return Err(Error::shape("sobel", format!("expected [N, 1, H, W], got {shape:?}")));
    }
    let w = img.graph().constant(sobel_weight());
    img.conv2d(w, None, 1, 1, 1)
}

/// `|S_x ⋆ I| + |S_y ⋆ I|`, `[N, 1, H, W]`.
pub fn sobel_grad<'g, T: Scalar>(img: Var<'g, T>) -> Result<Var<'g, T>> {
    let parts = sobel_components(img)?.abs().split(&[1, 1], 1)?;
    parts[0].add(parts[1])
}

fn check_triple<T: Scalar>(op: &'static str, fused: Var<'_, T>, ir: Var<'_, T>, vi: Var<'_, T>) -> Result<()> {
    if fused.shape() != ir.shape() || fused.shape() != vi.shape() {
        return Err(Error::shape(op, format!("fused {:?}, ir {:?}, vi {:?}", fused.shape(), ir.shape(), vi.shape())));
    }
    Ok(())
}

fn interior<'g, T: Scalar>(x: Var<'g, T>) -> Result<Var<'g, T>> {
    let s = x.shape();
    if s.len() != 4 || s[2] < 3 || s[3] < 3 {
        return Err(Error::shape("gradient_loss", format!("need at least 3×3 images, got {s:?}")));
    }
    x.narrow(2, 1, s[2] - 2)?.narrow(3, 1, s[3] - 2)
}

pub fn intensity_loss<'g, T: Scalar>(fused: Var<'g, T>, ir: Var<'g, T>, vi: Var<'g, T>) -> Result<Var<'g, T>> {
    check_triple("intensity_loss", fused, ir, vi)?;
    Ok(fused.sub(ir.maximum(vi)?)?.abs().mean())
}

pub fn gradient_loss<'g, T: Scalar>(fused: Var<'g, T>, ir: Var<'g, T>, vi: Var<'g, T>) -> Result<Var<'g, T>> {
    check_triple("gradient_loss", fused, ir, vi)?;
    let target = sobel_grad(ir)?.maximum(sobel_grad(vi)?)?;
    let diff = sobel_grad(fused)?.sub(target)?;
    Ok(interior(diff)?.abs().mean())
}

/// The weighted total and both unweighted terms.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms<V> {
    pub total: V,
    pub int: V,
    pub grad: V,
}

pub fn total_loss<'g, T: Scalar>(
    fused: Var<'g, T>,
    ir: Var<'g, T>,
    vi: Var<'g, T>,
    weights: LossWeights,
) -> Result<LossTerms<Var<'g, T>>> {
    weights.validate()?;
    let int = intensity_loss(fused, ir, vi)?;
    let grad = gradient_loss(fused, ir, vi)?;
    let total = int.scale(T::lit(weights.lambda_int)).add(grad.scale(T::lit(weights.lambda_grad)))?;
    Ok(LossTerms { total, int, grad })
}

/// Loss terms on plain tensors, no gradients.
pub fn evaluate<T: Scalar>(fused: &Tensor<T>, ir: &Tensor<T>, vi: &Tensor<T>, weights: LossWeights) -> Result<LossTerms<T>> {
    let g = Graph::inference();
    let t = total_loss(g.constant(fused.clone()), g.constant(ir.clone()), g.constant(vi.clone()), weights)?;
    Ok(LossTerms { total: t.total.value().item(), int: t.int.value().item(), grad: t.grad.value().item() })
}
