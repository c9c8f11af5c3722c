use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let k = i % period;
    if k < n {
        k
    } else {
        period - k
    }
}

/// Reflection-pad the last two axes on the bottom/right up to the next
/// multiple. Returns the padded tensor and the original `(H, W)`.
pub fn pad_to_multiple<T: Scalar>(img: &Tensor<T>, multiple: usize) -> Result<(Tensor<T>, (usize, usize))> {
    let r = img.rank();
    if r < 2 || multiple == 0 {
        return Err(Error::shape("pad_to_multiple", format!("need rank >= 2 and multiple >= 1, got {:?}", img.shape())));
    }
    let (h, w) = (img.shape()[r - 2], img.shape()[r - 1]);
    if h == 0 || w == 0 {
        return Err(Error::shape("pad_to_multiple", "empty image"));
    }
    let (ph, pw) = (h.div_ceil(multiple) * multiple, w.div_ceil(multiple) * multiple);
    if (ph, pw) == (h, w) {
        return Ok((img.clone(), (h, w)));
    }
    let mut shape = img.shape().to_vec();
    shape[r - 2] = ph;
    shape[r - 1] = pw;
    let planes = img.numel() / (h * w);
    let src = img.data();
    let mut out = Vec::with_capacity(planes * ph * pw);
    for p in 0..planes {
        let plane = &src[p * h * w..(p + 1) * h * w];
        for i in 0..ph {
            let row = &plane[reflect(i, h) * w..][..w];
            out.extend((0..pw).map(|j| row[reflect(j, w)]));
        }
    }
    Ok((Tensor::new(shape, out)?, (h, w)))
}

/// Keep the top-left `(H, W)` of the last two axes.
pub fn crop<T: Scalar>(img: &Tensor<T>, dims: (usize, usize)) -> Result<Tensor<T>> {
    let r = img.rank();
    if r < 2 {
        return Err(Error::shape("crop", format!("need rank >= 2, got {:?}", img.shape())));
    }
    img.narrow(r - 2, 0, dims.0)?.narrow(r - 1, 0, dims.1)
}
