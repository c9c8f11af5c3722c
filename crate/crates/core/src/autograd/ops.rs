use std::rc::Rc;

use super::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{inverse_permutation, split_axis, Tensor};

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<'g, T: Scalar> Var<'g, T> {
    fn unary(self, op: &'static str, f: impl Fn(T) -> T, df: fn(T, T) -> T) -> Var<'g, T> {
        let x = self.value();
        let out = x.map(f);
        self.push(op, out, &[self], move |g, y| {
            let data = g
                .data()
                .iter()
                .zip(x.data())
                .zip(y.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape().to_vec(), data).expect("same shape"))]
        })
    }

    pub fn silu(self) -> Var<'g, T> {
        self.unary("silu", |x| x * sigmoid(x), |x, _| {
            let s = sigmoid(x);
            s * (T::one() + x * (T::one() - s))
        })
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        self.unary("sigmoid", sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn softplus(self) -> Var<'g, T> {
        self.unary("softplus", softplus, |x, _| sigmoid(x))
    }

    pub fn exp(self) -> Var<'g, T> {
        self.unary("exp", T::exp, |_, y| y)
    }

    /// `|x|` with subgradient 0 at 0.
    pub fn abs(self) -> Var<'g, T> {
        self.unary("abs", T::abs, |x, _| {
            if x > T::zero() {
                T::one()
            } else if x < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn neg(self) -> Var<'g, T> {
        self.scale(-T::one())
    }

    pub fn scale(self, s: T) -> Var<'g, T> {
        let out = self.value().map(|x| x * s);
        self.push("scale", out, &[self], move |g, _| vec![Some(g.map(|x| x * s))])
    }

    pub fn add_scalar(self, s: T) -> Var<'g, T> {
        let out = self.value().map(|x| x + s);
        self.push("add_scalar", out, &[self], |g, _| vec![Some(g.clone())])
    }

    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let out = self.value().zip_map(&other.value(), |a, b| a + b)?;
        Ok(self.push("add", out, &[self, other], |g, _| vec![Some(g.clone()), Some(g.clone())]))
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let out = self.value().zip_map(&other.value(), |a, b| a - b)?;
        Ok(self.push("sub", out, &[self, other], |g, _| vec![Some(g.clone()), Some(g.map(|x| -x))]))
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |a, b| a * b)?;
        Ok(self.push("mul", out, &[self, other], move |g, _| {
            let ga = g.zip_map(&b, |g, b| g * b).expect("same shape");
            let gb = g.zip_map(&a, |g, a| g * a).expect("same shape");
            vec![Some(ga), Some(gb)]
        }))
    }

    /// Elementwise maximum. On ties the gradient goes to `self`.
    pub fn maximum(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, T::max)?;
        Ok(self.push("maximum", out, &[self, other], move |g, _| {
            let mut ga = Tensor::zeros(g.shape().to_vec());
            let mut gb = Tensor::zeros(g.shape().to_vec());
            for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
                if x >= y {
                    ga.data_mut()[i] = g.data()[i];
                } else {
                    gb.data_mut()[i] = g.data()[i];
                }
            }
            vec![Some(ga), Some(gb)]
        }))
    }

    pub fn sum(self) -> Var<'g, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.push("sum", Tensor::scalar(x.sum()), &[self], move |g, _| {
            vec![Some(Tensor::full(shape, g.item()))]
        })
    }

    pub fn mean(self) -> Var<'g, T> {
        let n = self.value().numel();
        self.sum().scale(T::one() / T::lit(n as f64))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g, T>> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let out = (*x).clone().reshape(shape)?;
        Ok(self.push("reshape", out, &[self], move |g, _| {
            vec![Some(g.clone().reshape(in_shape).expect("same numel"))]
        }))
    }

    pub fn permute(self, axes: &[usize]) -> Result<Var<'g, T>> {
        let out = self.value().permute(axes)?;
        let inv = inverse_permutation(axes);
        Ok(self.push("permute", out, &[self], move |g, _| {
            vec![Some(g.permute(&inv).expect("valid permutation"))]
        }))
    }

    pub fn flip(self, axis: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(Error::shape("flip", format!("axis {axis} out of range for {:?}", x.shape())));
        }
        Ok(self.push("flip", x.flip(axis), &[self], move |g, _| vec![Some(g.flip(axis))]))
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let out = x.narrow(axis, start, len)?;
        Ok(self.push("narrow", out, &[self], move |g, _| {
            let (outer, n, inner) = split_axis(&in_shape, axis);
            let mut full = Tensor::zeros(in_shape);
            let dst = full.data_mut();
            for o in 0..outer {
                let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                let base = (o * n + start) * inner;
                dst[base..base + len * inner].copy_from_slice(src);
            }
            vec![Some(full)]
        }))
    }

    /// Channel-wise (or any-axis) split into consecutive pieces.
    pub fn split(self, sizes: &[usize], axis: usize) -> Result<Vec<Var<'g, T>>> {
        let shape = self.shape();
        if axis >= shape.len() || sizes.iter().sum::<usize>() != shape[axis] {
            return Err(Error::shape(
                "split",
                format!("sizes {sizes:?} do not partition axis {axis} of {shape:?}"),
            ));
        }
        let mut start = 0;
        sizes
            .iter()
            .map(|&len| {
                let part = self.narrow(axis, start, len);
                start += len;
                part
            })
            .collect()
    }

    pub fn concat(parts: &[Var<'g, T>], axis: usize) -> Result<Var<'g, T>> {
        let first = *parts.first().ok_or_else(|| Error::Invalid("concat of an empty list".into()))?;
        let values: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let out = Tensor::concat(&refs, axis)?;
        let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let n = parts.len();
        Ok(first.push("concat", out, parts, move |g, _| {
            let pieces = g.split(&sizes, axis).expect("concat layout");
            debug_assert_eq!(pieces.len(), n);
            pieces.into_iter().map(Some).collect()
        }))
    }

    /// Multiply by a vector broadcast along `axis`: `out[.., i, ..] = x[.., i, ..] * w[i]`.
    pub fn scale_axis(self, w: Var<'g, T>, axis: usize) -> Result<Var<'g, T>> {
        let (x, wv) = (self.value(), w.value());
        check_axis_vector("scale_axis", &x, &wv, axis)?;
        let (outer, n, inner) = split_axis(x.shape(), axis);
        let mut out = (*x).clone();
        for o in 0..outer {
            for i in 0..n {
                let s = wv.data()[i];
                let base = (o * n + i) * inner;
                out.data_mut()[base..base + inner].iter_mut().for_each(|v| *v *= s);
            }
        }
        Ok(self.push("scale_axis", out, &[self, w], move |g, _| {
            let mut gx = g.clone();
            let mut gw = Tensor::zeros([n]);
            for o in 0..outer {
                for i in 0..n {
                    let base = (o * n + i) * inner;
                    let s = wv.data()[i];
                    let gs = &mut gx.data_mut()[base..base + inner];
                    let mut acc = T::zero();
                    for (k, gv) in gs.iter_mut().enumerate() {
                        acc += *gv * x.data()[base + k];
                        *gv *= s;
                    }
                    gw.data_mut()[i] += acc;
                }
            }
            vec![Some(gx), Some(gw)]
        }))
    }

    /// Add a vector broadcast along `axis`.
    pub fn shift_axis(self, b: Var<'g, T>, axis: usize) -> Result<Var<'g, T>> {
        let (x, bv) = (self.value(), b.value());
        check_axis_vector("shift_axis", &x, &bv, axis)?;
        let (outer, n, inner) = split_axis(x.shape(), axis);
        let mut out = (*x).clone();
        for o in 0..outer {
            for i in 0..n {
                let s = bv.data()[i];
                let base = (o * n + i) * inner;
                out.data_mut()[base..base + inner].iter_mut().for_each(|v| *v += s);
            }
        }
        Ok(self.push("shift_axis", out, &[self, b], move |g, _| {
            let mut gb = Tensor::zeros([n]);
            for o in 0..outer {
                for i in 0..n {
                    let base = (o * n + i) * inner;
                    gb.data_mut()[i] += g.data()[base..base + inner].iter().copied().sum::<T>();
                }
            }
            vec![Some(g.clone()), Some(gb)]
        }))
    }

    /// Affine map over the last axis: `x[.., Din] · Wᵀ + b` with `W: [Dout, Din]`.
    pub fn linear(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>) -> Result<Var<'g, T>> {
        let (x, w) = (self.value(), weight.value());
        let din = *x.shape().last().ok_or_else(|| Error::shape("linear", "input is a scalar"))?;
        let [dout, wdin] = match w.shape() {
            &[a, b] => [a, b],
            s => return Err(Error::shape("linear", format!("weight must be rank 2, got {s:?}"))),
        };
        if wdin != din {
            return Err(Error::shape("linear", format!("input width {din} vs weight {:?}", w.shape())));
        }
        let bv = bias.map(|b| b.value());
        if let Some(b) = &bv {
            if b.shape() != [dout] {
                return Err(Error::shape("linear", format!("bias {:?} for {dout} outputs", b.shape())));
            }
        }
        let rows = x.numel() / din;
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().expect("rank >= 1") = dout;
        let mut out = vec![T::zero(); rows * dout];
        for r in 0..rows {
            let xr = &x.data()[r * din..(r + 1) * din];
            let orow = &mut out[r * dout..(r + 1) * dout];
            for (o, ov) in orow.iter_mut().enumerate() {
                let wr = &w.data()[o * din..(o + 1) * din];
                let mut acc = bv.as_ref().map_or(T::zero(), |b| b.data()[o]);
                for (a, b) in xr.iter().zip(wr) {
                    acc += *a * *b;
                }
                *ov = acc;
            }
        }
        let out = Tensor::new(out_shape, out)?;
        let has_bias = bias.is_some();
        let mut parents = vec![self, weight];
        parents.extend(bias);
        Ok(self.push("linear", out, &parents, move |g, _| {
            let mut gx = Tensor::zeros(x.shape().to_vec());
            let mut gw = Tensor::zeros([dout, din]);
            let mut gb = Tensor::zeros([dout]);
            for r in 0..rows {
                let grow = &g.data()[r * dout..(r + 1) * dout];
                let xr = &x.data()[r * din..(r + 1) * din];
                for (o, &gv) in grow.iter().enumerate() {
                    if gv == T::zero() {
                        continue;
                    }
                    let wr = &w.data()[o * din..(o + 1) * din];
                    let gxr = &mut gx.data_mut()[r * din..(r + 1) * din];
                    for (d, &wv) in gxr.iter_mut().zip(wr) {
                        *d += gv * wv;
                    }
                    let gwr = &mut gw.data_mut()[o * din..(o + 1) * din];
                    for (d, &xv) in gwr.iter_mut().zip(xr) {
                        *d += gv * xv;
                    }
                    gb.data_mut()[o] += gv;
                }
            }
            let mut grads = vec![Some(gx), Some(gw)];
            if has_bias {
                grads.push(Some(gb));
            }
            grads
        }))
    }

    /// Nearest-neighbour 2× upsampling of `[N, C, H, W]`.
    pub fn upsample_nearest2x(self) -> Result<Var<'g, T>> {
        let x = self.value();
        let [n, c, h, w] = x.dims4()?;
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        for p in 0..n * c {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    dst[i * ow + j] = src[(i / 2) * w + j / 2];
                }
            }
        }
        Ok(self.push("upsample_nearest2x", out, &[self], move |g, _| {
            let mut gx = Tensor::zeros([n, c, h, w]);
            for p in 0..n * c {
                let src = &g.data()[p * oh * ow..(p + 1) * oh * ow];
                let dst = &mut gx.data_mut()[p * h * w..(p + 1) * h * w];
                for i in 0..oh {
                    for j in 0..ow {
                        dst[(i / 2) * w + j / 2] += src[i * ow + j];
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}

fn check_axis_vector<T: Scalar>(op: &'static str, x: &Tensor<T>, v: &Tensor<T>, axis: usize) -> Result<()> {
    if axis >= x.rank() || v.shape() != [x.shape()[axis]] {
        return Err(Error::shape(
            op,
            format!("vector {:?} does not match axis {axis} of {:?}", v.shape(), x.shape()),
        ));
    }
    Ok(())
}
