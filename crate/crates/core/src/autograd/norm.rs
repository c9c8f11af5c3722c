use super::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<'g, T: Scalar> Var<'g, T> {
    /// Layer normalization over the channel axis (axis 1) independently at
    /// every other index, followed by a per-channel affine map.
    pub fn layer_norm(self, gamma: Var<'g, T>, beta: Var<'g, T>, eps: T) -> Result<Var<'g, T>> {
        let x = self.value();
        let (gv, bv) = (gamma.value(), beta.value());
        let shape = x.shape().to_vec();
        if shape.len() < 2 || shape[1] == 0 {
            return Err(Error::shape("layer_norm", format!("need [N, C, ..] with C >= 1, got {shape:?}")));
        }
        let (n, c) = (shape[0], shape[1]);
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(Error::shape(
                "layer_norm",
                format!("gamma {:?} / beta {:?} for {c} channels", gv.shape(), bv.shape()),
            ));
        }
        if eps <= T::zero() {
            return Err(Error::Invalid("layer_norm eps must be positive".into()));
        }
        let inner: usize = shape[2..].iter().product();
        let inv_c = T::one() / T::lit(c as f64);

        let mut xhat = vec![T::zero(); x.numel()];
        let mut rstd = vec![T::zero(); n * inner];
        let mut mean = vec![T::zero(); inner];
        let mut var = vec![T::zero(); inner];
        for b in 0..n {
            let xb = &x.data()[b * c * inner..(b + 1) * c * inner];
            mean.fill(T::zero());
            var.fill(T::zero());
            for ch in 0..c {
                for (m, &v) in mean.iter_mut().zip(&xb[ch * inner..(ch + 1) * inner]) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m *= inv_c);
            for ch in 0..c {
                for ((s, &v), &m) in var.iter_mut().zip(&xb[ch * inner..(ch + 1) * inner]).zip(&mean) {
                    let d = v - m;
                    *s += d * d;
                }
            }
            let rs = &mut rstd[b * inner..(b + 1) * inner];
            for (r, &v) in rs.iter_mut().zip(&var) {
                *r = T::one() / (v * inv_c + eps).sqrt();
            }
            let xh = &mut xhat[b * c * inner..(b + 1) * c * inner];
            for ch in 0..c {
                let row = ch * inner..(ch + 1) * inner;
                for (((o, &v), &m), &r) in xh[row.clone()].iter_mut().zip(&xb[row]).zip(&mean).zip(rs.iter()) {
                    *o = (v - m) * r;
                }
            }
        }
        let mut out = xhat.clone();
        for b in 0..n {
            for ch in 0..c {
                let (gm, bt) = (gv.data()[ch], bv.data()[ch]);
                let base = (b * c + ch) * inner;
                out[base..base + inner].iter_mut().for_each(|v| *v = *v * gm + bt);
            }
        }
        let out = Tensor::new(shape.clone(), out)?;
        Ok(self.push("layer_norm", out, &[self, gamma, beta], move |g, _| {
            let gd = g.data();
            let mut gx = vec![T::zero(); gd.len()];
            let mut ggamma = vec![T::zero(); c];
            let mut gbeta = vec![T::zero(); c];
            let mut mean_dy = vec![T::zero(); inner];
            let mut mean_dy_xhat = vec![T::zero(); inner];
            for b in 0..n {
                mean_dy.fill(T::zero());
                mean_dy_xhat.fill(T::zero());
                for ch in 0..c {
                    let base = (b * c + ch) * inner;
                    let gm = gv.data()[ch];
                    let (mut sg, mut sgx) = (T::zero(), T::zero());
                    for k in 0..inner {
                        let dy = gd[base + k];
                        let xh = xhat[base + k];
                        sg += dy;
                        sgx += dy * xh;
                        let dxh = dy * gm;
                        mean_dy[k] += dxh;
                        mean_dy_xhat[k] += dxh * xh;
                    }
                    gbeta[ch] += sg;
                    ggamma[ch] += sgx;
                }
                for ch in 0..c {
                    let base = (b * c + ch) * inner;
                    let gm = gv.data()[ch];
                    for k in 0..inner {
                        let dxh = gd[base + k] * gm;
                        let r = rstd[b * inner + k];
                        gx[base + k] = r * (dxh - mean_dy[k] * inv_c - xhat[base + k] * mean_dy_xhat[k] * inv_c);
                    }
                }
            }
            vec![
                Some(Tensor::new(shape, gx).expect("input shape")),
                Some(Tensor::new([c], ggamma).expect("gamma shape")),
                Some(Tensor::new([c], gbeta).expect("beta shape")),
            ]
        }))
    }
}
