//! Single-level orthonormal 2D Haar transform.
//!
//! Each non-overlapping 2×2 block `[[a, b], [c, d]]` maps to
//!
//! ```text
//! LL = (a + b + c + d) / 2    LH = (a + b - c - d) / 2
//! HL = (a - b + c - d) / 2    HH = (a - b - c + d) / 2
//! ```
//!
//! The 4×4 block matrix is symmetric and orthogonal, so it is its own
//! inverse, and the adjoint of the analysis transform is the synthesis
//! transform.

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The four sub-bands of a feature map, each `[N, C, H/2, W/2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubBands<X> {
    pub ll: X,
    pub lh: X,
    pub hl: X,
    pub hh: X,
}

impl<X> SubBands<X> {
    pub fn as_array(&self) -> [&X; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }

    pub fn map<Y>(self, mut f: impl FnMut(X) -> Y) -> SubBands<Y> {
        SubBands { ll: f(self.ll), lh: f(self.lh), hl: f(self.hl), hh: f(self.hh) }
    }
}

impl<T: Scalar> SubBands<Tensor<T>> {
    pub fn energy(&self) -> T {
        self.as_array().iter().map(|b| b.sum_sq()).sum()
    }
}

fn check_even<T: Scalar>(x: &Tensor<T>) -> Result<[usize; 4]> {
    let dims = x.dims4()?;
    if dims[2] % 2 != 0 || dims[3] % 2 != 0 {
        return Err(Error::shape(
            "dwt2",
            format!("spatial extents must be even, got {}x{}", dims[2], dims[3]),
        ));
    }
    Ok(dims)
}

/// Analysis transform with the four bands stacked on the channel axis:
/// `[N, C, H, W] -> [N, 4C, H/2, W/2]`, band-major (`LL` channels first).
pub fn dwt2_stacked<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = check_even(x)?;
    let (bh, bw) = (h / 2, w / 2);
    let half = T::lit(0.5);
    let mut out = Tensor::zeros([n, 4 * c, bh, bw]);
    let src = x.data();
    let dst = out.data_mut();
    let band_len = bh * bw;
    for b in 0..n {
        for ch in 0..c {
            let plane = &src[(b * c + ch) * h * w..][..h * w];
            let band = |k: usize| ((b * 4 + k) * c + ch) * band_len;
            let (o_ll, o_lh, o_hl, o_hh) = (band(0), band(1), band(2), band(3));
            for i in 0..bh {
                for j in 0..bw {
                    let a = plane[2 * i * w + 2 * j];
                    let bb = plane[2 * i * w + 2 * j + 1];
                    let cc = plane[(2 * i + 1) * w + 2 * j];
                    let d = plane[(2 * i + 1) * w + 2 * j + 1];
                    let k = i * bw + j;
                    dst[o_ll + k] = (a + bb + cc + d) * half;
                    dst[o_lh + k] = (a + bb - cc - d) * half;
                    dst[o_hl + k] = (a - bb + cc - d) * half;
                    dst[o_hh + k] = (a - bb - cc + d) * half;
                }
            }
        }
    }
    Ok(out)
}

/// Synthesis transform, the exact inverse of [`dwt2_stacked`].
pub fn idwt2_stacked<T: Scalar>(bands: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c4, bh, bw] = bands.dims4()?;
    if c4 % 4 != 0 {
        return Err(Error::shape("idwt2", format!("stacked bands need 4C channels, got {c4}")));
    }
    let c = c4 / 4;
    let (h, w) = (2 * bh, 2 * bw);
    let half = T::lit(0.5);
    let mut out = Tensor::zeros([n, c, h, w]);
    let src = bands.data();
    let dst = out.data_mut();
    let band_len = bh * bw;
    for b in 0..n {
        for ch in 0..c {
            let band = |k: usize| &src[((b * 4 + k) * c + ch) * band_len..][..band_len];
            let (ll, lh, hl, hh) = (band(0), band(1), band(2), band(3));
            let plane = &mut dst[(b * c + ch) * h * w..][..h * w];
            for i in 0..bh {
                for j in 0..bw {
                    let k = i * bw + j;
                    let (s0, s1, s2, s3) = (ll[k], lh[k], hl[k], hh[k]);
                    plane[2 * i * w + 2 * j] = (s0 + s1 + s2 + s3) * half;
                    plane[2 * i * w + 2 * j + 1] = (s0 + s1 - s2 - s3) * half;
                    plane[(2 * i + 1) * w + 2 * j] = (s0 - s1 + s2 - s3) * half;
                    plane[(2 * i + 1) * w + 2 * j + 1] = (s0 - s1 - s2 + s3) * half;
                }
            }
        }
    }
    Ok(out)
}

pub fn dwt2<T: Scalar>(x: &Tensor<T>) -> Result<SubBands<Tensor<T>>> {
    let stacked = dwt2_stacked(x)?;
    let c = x.shape()[1];
    let mut parts = stacked.split(&[c, c, c, c], 1)?.into_iter();
    let mut next = || parts.next().expect("four bands");
    Ok(SubBands { ll: next(), lh: next(), hl: next(), hh: next() })
}

pub fn idwt2<T: Scalar>(bands: &SubBands<Tensor<T>>) -> Result<Tensor<T>> {
    let shape = bands.ll.shape();
    if bands.as_array().iter().any(|b| b.shape() != shape) {
        return Err(Error::shape(
            "idwt2",
            format!(
                "band shapes differ: {:?} {:?} {:?} {:?}",
                bands.ll.shape(),
                bands.lh.shape(),
                bands.hl.shape(),
                bands.hh.shape()
            ),
        ));
    }
    idwt2_stacked(&Tensor::concat(&bands.as_array(), 1)?)
}

impl<'g, T: Scalar> Var<'g, T> {
    /// Differentiable analysis transform, bands stacked on the channel axis.
    pub fn dwt2(self) -> Result<Var<'g, T>> {
        let out = dwt2_stacked(&self.value())?;
        Ok(self.push("dwt2", out, &[self], |g, _| {
            vec![Some(idwt2_stacked(g).expect("adjoint of dwt2"))]
        }))
    }

    /// Differentiable synthesis transform from stacked bands.
    pub fn idwt2(self) -> Result<Var<'g, T>> {
        let out = idwt2_stacked(&self.value())?;
        Ok(self.push("idwt2", out, &[self], |g, _| {
            vec![Some(dwt2_stacked(g).expect("adjoint of idwt2"))]
        }))
    }

    /// Analysis transform split into named bands.
    pub fn dwt2_bands(self) -> Result<SubBands<Var<'g, T>>> {
        let c = self.shape().get(1).copied().unwrap_or(0);
        let stacked = self.dwt2()?;
        let mut parts = stacked.split(&[c, c, c, c], 1)?.into_iter();
        let mut next = || parts.next().expect("four bands");
        Ok(SubBands { ll: next(), lh: next(), hl: next(), hh: next() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_has_only_ll() {
        let x = Tensor::<f64>::full([1, 2, 4, 6], 0.7);
        let b = dwt2(&x).unwrap();
        assert!(b.ll.data().iter().all(|&v| (v - 1.4).abs() < 1e-15));
        for band in [&b.lh, &b.hl, &b.hh] {
            assert!(band.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_block_values() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = dwt2(&x).unwrap();
        assert_eq!(
            [b.ll.data()[0], b.lh.data()[0], b.hl.data()[0], b.hh.data()[0]],
            [5.0, -2.0, -1.0, 0.0]
        );
    }

    #[test]
    fn inverse_of_constant_bands() {
        let v = 0.3;
        let bands = SubBands {
            ll: Tensor::<f64>::full([1, 1, 3, 2], 2.0 * v),
            lh: Tensor::zeros([1, 1, 3, 2]),
            hl: Tensor::zeros([1, 1, 3, 2]),
            hh: Tensor::zeros([1, 1, 3, 2]),
        };
        let x = idwt2(&bands).unwrap();
        assert_eq!(x.shape(), &[1, 1, 6, 4]);
        assert!(x.data().iter().all(|&p| (p - v).abs() < 1e-15));
    }

    #[test]
    fn perfect_reconstruction_and_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::rand_uniform([1, 3, 8, 8], -1.0, 1.0, &mut rng);
        let b = dwt2(&x).unwrap();
        assert!(((b.energy() - x.sum_sq()) / x.sum_sq()).abs() < 1e-12);
        assert!(idwt2(&b).unwrap().max_abs_diff(&x) < 1e-12);
        let b2 = dwt2(&idwt2(&b).unwrap()).unwrap();
        for (p, q) in b.as_array().iter().zip(b2.as_array()) {
            assert!(p.max_abs_diff(q) < 1e-12);
        }
    }

    #[test]
    fn odd_extent_errors() {
        assert!(dwt2(&Tensor::<f32>::zeros([1, 1, 3, 4])).is_err());
        assert!(dwt2(&Tensor::<f32>::zeros([1, 1, 4, 5])).is_err());
    }

    #[test]
    fn mismatched_bands_error() {
        let bands = SubBands {
            ll: Tensor::<f32>::zeros([1, 1, 2, 2]),
            lh: Tensor::zeros([1, 1, 2, 2]),
            hl: Tensor::zeros([1, 1, 2, 3]),
            hh: Tensor::zeros([1, 1, 2, 2]),
        };
        assert!(idwt2(&bands).is_err());
    }
}
