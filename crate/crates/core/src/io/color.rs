//! Full-range BT.601 YCbCr on `[0, 1]` values, chroma centred at 0.5.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

fn planes<T: Scalar>(t: &Tensor<T>, c: usize, op: &'static str) -> Result<usize> {
    match *t.shape() {
        [tc, h, w] if tc == c => Ok(h * w),
        ref s => Err(Error::shape(op, format!("expected [{c}, H, W], got {s:?}"))),
    }
}

/// `[3, H, W]` RGB to (`[1, H, W]` luma, `[2, H, W]` Cb/Cr).
pub fn rgb_to_ycbcr<T: Scalar>(rgb: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let n = planes(rgb, 3, "rgb_to_ycbcr")?;
    let (h, w) = (rgb.shape()[1], rgb.shape()[2]);
    let d = rgb.data();
    let mut y = Vec::with_capacity(n);
    let mut cbcr = vec![T::zero(); 2 * n];
    for i in 0..n {
        let (r, g, b) = (d[i].to_f64_lossy(), d[n + i].to_f64_lossy(), d[2 * n + i].to_f64_lossy());
        let luma = KR * r + KG * g + KB * b;
        y.push(T::lit(luma));
        cbcr[i] = T::lit(0.5 + (b - luma) / (2.0 * (1.0 - KB)));
        cbcr[n + i] = T::lit(0.5 + (r - luma) / (2.0 * (1.0 - KR)));
    }
    Ok((Tensor::new([1, h, w], y)?, Tensor::new([2, h, w], cbcr)?))
}

/// Inverse of [`rgb_to_ycbcr`]; output is not clamped.
pub fn ycbcr_to_rgb<T: Scalar>(y: &Tensor<T>, cbcr: &Tensor<T>) -> Result<Tensor<T>> {
    let n = planes(y, 1, "ycbcr_to_rgb")?;
    if planes(cbcr, 2, "ycbcr_to_rgb")? != n || y.shape()[1..] != cbcr.shape()[1..] {
        return Err(Error::shape("ycbcr_to_rgb", format!("luma {:?} vs chroma {:?}", y.shape(), cbcr.shape())));
    }
    let (h, w) = (y.shape()[1], y.shape()[2]);
    let mut out = vec![T::zero(); 3 * n];
    for i in 0..n {
        let luma = y.data()[i].to_f64_lossy();
        let cb = cbcr.data()[i].to_f64_lossy() - 0.5;
        let cr = cbcr.data()[n + i].to_f64_lossy() - 0.5;
        let r = luma + 2.0 * (1.0 - KR) * cr;
        let b = luma + 2.0 * (1.0 - KB) * cb;
        let g = (luma - KR * r - KB * b) / KG;
        out[i] = T::lit(r);
        out[n + i] = T::lit(g);
        out[2 * n + i] = T::lit(b);
    }
    Tensor::new([3, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gray_and_white() {
        let gray = Tensor::<f64>::full([3, 2, 2], 0.3);
        let (y, c) = rgb_to_ycbcr(&gray).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
        assert!(c.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let (y, _) = rgb_to_ycbcr(&Tensor::<f64>::ones([3, 1, 1])).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rgb = Tensor::<f32>::rand_uniform([3, 9, 7], 0.0, 1.0, &mut rng);
        let (y, c) = rgb_to_ycbcr(&rgb).unwrap();
        assert!(ycbcr_to_rgb(&y, &c).unwrap().max_abs_diff(&rgb) < 1e-5);
    }
}
