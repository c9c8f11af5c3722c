use super::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stride, zero padding and grouping of a 2D convolution. Padding is given
/// as `(before, after)` per spatial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub pad_h: (usize, usize),
    pub pad_w: (usize, usize),
    pub groups: usize,
}

impl Conv2dSpec {
    pub fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Self { stride, pad_h: (padding, padding), pad_w: (padding, padding), groups }
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    cin_g: usize,
    cout_g: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    ph: usize,
    pw: usize,
}

impl Geometry {
    fn new<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>, spec: Conv2dSpec) -> Result<Self> {
        let [n, cin, h, w] = input.dims4()?;
        let [cout, cin_g, kh, kw] = weight
            .dims4()
            .map_err(|_| Error::shape("conv2d", format!("weight must be rank 4, got {:?}", weight.shape())))?;
        let Conv2dSpec { stride, pad_h, pad_w, groups } = spec;
        if stride == 0 || groups == 0 {
            return Err(Error::Invalid("conv2d stride and groups must be positive".into()));
        }
        if cin % groups != 0 || cout % groups != 0 {
            return Err(Error::shape(
                "conv2d",
                format!("channels in={cin} out={cout} not divisible by groups={groups}"),
            ));
        }
        if cin_g != cin / groups {
            return Err(Error::shape(
                "conv2d",
                format!("weight {:?} expects {cin_g} input channels per group, input has {cin} over {groups} groups", weight.shape()),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(Error::shape("conv2d", format!("bias {:?} for {cout} output channels", b.shape())));
            }
        }
        let span_h = h + pad_h.0 + pad_h.1;
        let span_w = w + pad_w.0 + pad_w.1;
        if span_h < kh || span_w < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {span_h}x{span_w}"),
            ));
        }
        if (span_h - kh) % stride != 0 || (span_w - kw) % stride != 0 {
            return Err(Error::shape(
                "conv2d",
                format!("padded input {span_h}x{span_w} with kernel {kh}x{kw} and stride {stride} gives a fractional output extent"),
            ));
        }
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            cin_g,
            cout_g: cout / groups,
            kh,
            kw,
            oh: (span_h - kh) / stride + 1,
            ow: (span_w - kw) / stride + 1,
            stride,
            ph: pad_h.0,
            pw: pad_w.0,
        })
    }

    /// Output indices `o` in `[lo, hi)` whose tap `o*stride + k - pad` lands inside `[0, len)`.
    fn valid(&self, k: usize, pad: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k >= pad { 0 } else { (pad - k).div_ceil(s) };
        let hi = if len + pad < k + 1 { 0 } else { ((len - 1 + pad - k) / s + 1).min(out_len) };
        (lo, hi.max(lo))
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.ph == 0 && self.pw == 0 && self.oh == self.h && self.ow == self.w
    }

    fn w_index(&self, oc: usize, icg: usize, ki: usize, kj: usize) -> usize {
        ((oc * self.cin_g + icg) * self.kh + ki) * self.kw + kj
    }

    /// Visit every (output row, input row, weight index) triple. `f` receives
    /// the output-plane and input-plane offsets of the two rows and the
    /// column range of valid outputs for that tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let g = self;
        for b in 0..g.n {
            for oc in 0..g.cout {
                let grp = oc / g.cout_g;
                let out_plane = (b * g.cout + oc) * g.oh * g.ow;
                for icg in 0..g.cin_g {
                    let ic = grp * g.cin_g + icg;
                    let in_plane = (b * g.cin + ic) * g.h * g.w;
                    for ki in 0..g.kh {
                        let (oh_lo, oh_hi) = g.valid(ki, g.ph, g.h, g.oh);
                        for kj in 0..g.kw {
                            let (ow_lo, ow_hi) = g.valid(kj, g.pw, g.w, g.ow);
                            if ow_lo >= ow_hi {
                                continue;
                            }
                            let wi = g.w_index(oc, icg, ki, kj);
                            for o_h in oh_lo..oh_hi {
                                let ih = o_h * g.stride + ki - g.ph;
                                // first input column, as iw(ow_lo)
                                let iw0 = ow_lo * g.stride + kj - g.pw;
                                f(wi, out_plane + o_h * g.ow, in_plane + ih * g.w, ow_lo, ow_hi, iw0);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation with zero padding, as used by every convolution layer.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: Conv2dSpec,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input, weight, bias, spec)?;
    Ok(forward_kernel(&g, input, weight, bias))
}

fn forward_kernel<T: Scalar>(g: &Geometry, input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Tensor<T> {
    let plane = g.oh * g.ow;
    let mut out = vec![T::zero(); g.n * g.cout * plane];
    if let Some(b) = bias {
        for (i, chunk) in out.chunks_mut(plane).enumerate() {
            chunk.fill(b.data()[i % g.cout]);
        }
    }
    let x = input.data();
    let wt = weight.data();
    if g.is_pointwise() {
        for b in 0..g.n {
            for oc in 0..g.cout {
                let grp = oc / g.cout_g;
                let o = &mut out[(b * g.cout + oc) * plane..][..plane];
                for icg in 0..g.cin_g {
                    let ic = grp * g.cin_g + icg;
                    let wv = wt[oc * g.cin_g + icg];
                    let i = &x[(b * g.cin + ic) * plane..][..plane];
                    for (ov, &iv) in o.iter_mut().zip(i) {
                        *ov += wv * iv;
                    }
                }
            }
        }
    } else {
        let s = g.stride;
        g.for_each_tap(|wi, orow, irow, lo, hi, iw0| {
            let wv = wt[wi];
            let o = &mut out[orow + lo..orow + hi];
            if s == 1 {
                let i = &x[irow + iw0..irow + iw0 + (hi - lo)];
                for (ov, &iv) in o.iter_mut().zip(i) {
                    *ov += wv * iv;
                }
            } else {
                for (k, ov) in o.iter_mut().enumerate() {
                    *ov += wv * x[irow + iw0 + k * s];
                }
            }
        });
    }
    Tensor::new([g.n, g.cout, g.oh, g.ow], out).expect("conv output shape")
}

fn backward_kernel<T: Scalar>(
    g: &Geometry,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let x = input.data();
    let wt = weight.data();
    let go = grad_out.data();
    let plane_o = g.oh * g.ow;
    let mut gx = vec![T::zero(); if need_input { x.len() } else { 0 }];
    let mut gw = vec![T::zero(); wt.len()];
    let mut gb = vec![T::zero(); g.cout];
    for b in 0..g.n {
        for oc in 0..g.cout {
            gb[oc] += go[(b * g.cout + oc) * plane_o..][..plane_o].iter().copied().sum::<T>();
        }
    }
    if g.is_pointwise() {
        for b in 0..g.n {
            for oc in 0..g.cout {
                let grp = oc / g.cout_g;
                let o = &go[(b * g.cout + oc) * plane_o..][..plane_o];
                for icg in 0..g.cin_g {
                    let ic = grp * g.cin_g + icg;
                    let wi = oc * g.cin_g + icg;
                    let off = (b * g.cin + ic) * plane_o;
                    let i = &x[off..off + plane_o];
                    let mut acc = T::zero();
                    for (&ov, &iv) in o.iter().zip(i) {
                        acc += ov * iv;
                    }
                    gw[wi] += acc;
                    if need_input {
                        let wv = wt[wi];
                        for (gv, &ov) in gx[off..off + plane_o].iter_mut().zip(o) {
                            *gv += wv * ov;
                        }
                    }
                }
            }
        }
    } else {
        let s = g.stride;
        g.for_each_tap(|wi, orow, irow, lo, hi, iw0| {
            let o = &go[orow + lo..orow + hi];
            let wv = wt[wi];
            let mut acc = T::zero();
            if s == 1 {
                let i = &x[irow + iw0..irow + iw0 + (hi - lo)];
                for (&ov, &iv) in o.iter().zip(i) {
                    acc += ov * iv;
                }
                if need_input {
                    for (gv, &ov) in gx[irow + iw0..irow + iw0 + (hi - lo)].iter_mut().zip(o) {
                        *gv += wv * ov;
                    }
                }
            } else {
                for (k, &ov) in o.iter().enumerate() {
                    let idx = irow + iw0 + k * s;
                    acc += ov * x[idx];
                    if need_input {
                        gx[idx] += wv * ov;
                    }
                }
            }
            gw[wi] += acc;
        });
    }
    let gx = need_input.then(|| Tensor::new(input.shape().to_vec(), gx).expect("input shape"));
    (
        gx,
        Tensor::new(weight.shape().to_vec(), gw).expect("weight shape"),
        Tensor::new([g.cout], gb).expect("bias shape"),
    )
}

impl<'g, T: Scalar> Var<'g, T> {
    /// 2D convolution of `[N, Cin, H, W]` with `[Cout, Cin/groups, kh, kw]`.
    pub fn conv2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var<'g, T>> {
        self.conv2d_with(weight, bias, Conv2dSpec::new(stride, padding, groups))
    }

    pub fn conv2d_with(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>, spec: Conv2dSpec) -> Result<Var<'g, T>> {
        let x = self.value();
        let w = weight.value();
        let bv = bias.map(|b| b.value());
        let geom = Geometry::new(&x, &w, bv.as_deref(), spec)?;
        let out = forward_kernel(&geom, &x, &w, bv.as_deref());
        let need_input = self.requires_grad();
        let has_bias = bias.is_some();
        let mut parents = vec![self, weight];
        parents.extend(bias);
        Ok(self.push("conv2d", out, &parents, move |g, _| {
            let (gx, gw, gb) = backward_kernel(&geom, &x, &w, g, need_input);
            let mut grads = vec![gx, Some(gw)];
            if has_bias {
                grads.push(Some(gb));
            }
            grads
        }))
    }
}
