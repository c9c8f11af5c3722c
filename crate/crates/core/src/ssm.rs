//! Selective state-space scan with zero-order-hold discretization.
//!
//! Per channel `e` and state `s` the continuous system `h' = A h + B x`,
//! `y = C h + D x` is discretized with a per-position step `Δ`:
//!
//! ```text
//! a_bar = exp(Δ·A)      b_bar = Δ·B
//! h_t   = a_bar·h_{t-1} + b_bar·x_t
//! y_t   = Σ_s C_t·h_t + D·x_t
//! ```
//!
//! `A` is diagonal and strictly negative (`A = -exp(a_log)`), so every
//! `a_bar` lies in `(0, 1)` for `Δ > 0`.

use rand::Rng;

use crate::autograd::{Conv2dSpec, Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{fan_in_uniform, join, Conv2d, Linear, Module, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Scan direction over the flattened spatial sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    /// Forward and backward outputs summed.
    Bidirectional,
}

/// Zero-order-hold step for one diagonal entry: `(exp(Δ·a), Δ·b)`.
pub fn discretize_zoh<T: Scalar>(a: T, b: T, delta: T) -> (T, T) {
    ((delta * a).exp(), delta * b)
}

/// Per-position inputs of a selective scan.
///
/// Shapes: `u`, `delta`: `[N, L, E]`; `a`: `[E, S]`; `b`, `c`: `[N, L, S]`; `d`: `[E]`.
#[derive(Clone, Debug)]
pub struct ScanInputs<T> {
    pub u: Tensor<T>,
    pub delta: Tensor<T>,
    pub a: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
    pub d: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
struct ScanDims {
    n: usize,
    l: usize,
    e: usize,
    s: usize,
}

fn scan_dims<T: Scalar>(u: &Tensor<T>, delta: &Tensor<T>, a: &Tensor<T>, b: &Tensor<T>, c: &Tensor<T>, d: &Tensor<T>) -> Result<ScanDims> {
    let (n, l, e) = match u.shape() {
        &[l, e] => (1, l, e),
        &[n, l, e] => (n, l, e),
        s => return Err(Error::shape("selective_scan", format!("u must be [L, E] or [N, L, E], got {s:?}"))),
    };
    let s = match a.shape() {
        &[ae, s] if ae == e => s,
        sh => return Err(Error::shape("selective_scan", format!("A must be [{e}, S], got {sh:?}"))),
    };
    if delta.shape() != u.shape() {
        return Err(Error::shape("selective_scan", format!("delta {:?} vs u {:?}", delta.shape(), u.shape())));
    }
    for (name, t) in [("B", b), ("C", c)] {
        if t.numel() != n * l * s || t.shape().last() != Some(&s) {
            return Err(Error::shape("selective_scan", format!("{name} must be [N, L, {s}], got {:?}", t.shape())));
        }
    }
    if d.shape() != [e] {
        return Err(Error::shape("selective_scan", format!("D must be [{e}], got {:?}", d.shape())));
    }
    if let Some(bad) = delta.data().iter().find(|&&v| !(v > T::zero())) {
        return Err(Error::Invalid(format!("selective_scan needs Δ > 0, found {bad}")));
    }
    Ok(ScanDims { n, l, e, s })
}

/// One directional scan. When `states` is given, the post-update state of
/// every position is written to it (`[N, L, E, S]`).
fn scan_kernel<T: Scalar>(
    dims: ScanDims,
    u: &[T],
    delta: &[T],
    a: &[T],
    b: &[T],
    c: &[T],
    d: &[T],
    reverse: bool,
    mut states: Option<&mut [T]>,
) -> Vec<T> {
    let ScanDims { n, l, e, s } = dims;
    let mut y = vec![T::zero(); n * l * e];
    let mut h = vec![T::zero(); e * s];
    for bi in 0..n {
        h.fill(T::zero());
        for step in 0..l {
            let t = if reverse { l - 1 - step } else { step };
            let row = (bi * l + t) * e;
            let bc = (bi * l + t) * s;
            let (bt, ct) = (&b[bc..bc + s], &c[bc..bc + s]);
            for ch in 0..e {
                let dt = delta[row + ch];
                let x = u[row + ch];
                let hs = &mut h[ch * s..(ch + 1) * s];
                let ar = &a[ch * s..(ch + 1) * s];
                let mut acc = T::zero();
                for k in 0..s {
                    let (a_bar, b_bar) = discretize_zoh(ar[k], bt[k], dt);
                    hs[k] = a_bar * hs[k] + b_bar * x;
                    acc += ct[k] * hs[k];
                }
                y[row + ch] = acc + d[ch] * x;
            }
            if let Some(st) = states.as_deref_mut() {
                let off = (bi * l + t) * e * s;
                st[off..off + e * s].copy_from_slice(&h);
            }
        }
    }
    y
}

struct ScanGrads<T> {
    u: Vec<T>,
    delta: Vec<T>,
    a: Vec<T>,
    b: Vec<T>,
    c: Vec<T>,
    d: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
fn scan_backward<T: Scalar>(
    dims: ScanDims,
    u: &[T],
    delta: &[T],
    a: &[T],
    b: &[T],
    c: &[T],
    d: &[T],
    states: &[T],
    dy: &[T],
    reverse: bool,
) -> ScanGrads<T> {
    let ScanDims { n, l, e, s } = dims;
    let mut g = ScanGrads {
        u: vec![T::zero(); u.len()],
        delta: vec![T::zero(); delta.len()],
        a: vec![T::zero(); a.len()],
        b: vec![T::zero(); b.len()],
        c: vec![T::zero(); c.len()],
        d: vec![T::zero(); d.len()],
    };
    let order = |step: usize| if reverse { l - 1 - step } else { step };
    let mut dh = vec![T::zero(); e * s];
    for bi in 0..n {
        dh.fill(T::zero());
        for step in (0..l).rev() {
            let t = order(step);
            let prev = (step > 0).then(|| order(step - 1));
            let row = (bi * l + t) * e;
            let bc = (bi * l + t) * s;
            let h_now = &states[(bi * l + t) * e * s..][..e * s];
            let h_prev = prev.map(|p| &states[(bi * l + p) * e * s..][..e * s]);
            for ch in 0..e {
                let dt = delta[row + ch];
                let x = u[row + ch];
                let dyv = dy[row + ch];
                let mut du = dyv * d[ch];
                g.d[ch] += dyv * x;
                let mut ddt = T::zero();
                for k in 0..s {
                    let ai = ch * s + k;
                    let av = a[ai];
                    let a_bar = (dt * av).exp();
                    let hp = h_prev.map_or(T::zero(), |hp| hp[ai]);
                    let gh = dh[ai] + dyv * c[bc + k];
                    g.c[bc + k] += dyv * h_now[ai];
                    let da_bar = gh * hp;
                    ddt += da_bar * a_bar * av + gh * b[bc + k] * x;
                    g.a[ai] += da_bar * a_bar * dt;
                    g.b[bc + k] += gh * dt * x;
                    du += gh * dt * b[bc + k];
                    dh[ai] = gh * a_bar;
                }
                g.delta[row + ch] = ddt;
                g.u[row + ch] = du;
            }
        }
    }
    g
}

/// Run a selective scan on plain tensors.
pub fn selective_scan<T: Scalar>(inputs: &ScanInputs<T>, direction: Direction) -> Result<Tensor<T>> {
    let ScanInputs { u, delta, a, b, c, d } = inputs;
    let dims = scan_dims(u, delta, a, b, c, d)?;
    let run = |reverse| scan_kernel(dims, u.data(), delta.data(), a.data(), b.data(), c.data(), d.data(), reverse, None);
    let y = match direction {
        Direction::Forward => run(false),
        Direction::Backward => run(true),
        Direction::Bidirectional => {
            let mut f = run(false);
            for (v, w) in f.iter_mut().zip(run(true)) {
                *v += w;
            }
            f
        }
    };
    Tensor::new(u.shape().to_vec(), y)
}

/// Differentiable single-direction selective scan.
pub fn selective_scan_var<'g, T: Scalar>(
    u: Var<'g, T>,
    delta: Var<'g, T>,
    a: Var<'g, T>,
    b: Var<'g, T>,
    c: Var<'g, T>,
    d: Var<'g, T>,
    reverse: bool,
) -> Result<Var<'g, T>> {
    let (uv, dv, av, bv, cv, ddv) = (u.value(), delta.value(), a.value(), b.value(), c.value(), d.value());
    let dims = scan_dims(&uv, &dv, &av, &bv, &cv, &ddv)?;
    let recording = u.graph().is_recording();
    let mut states = if recording { vec![T::zero(); dims.n * dims.l * dims.e * dims.s] } else { Vec::new() };
    let y = scan_kernel(
        dims,
        uv.data(),
        dv.data(),
        av.data(),
        bv.data(),
        cv.data(),
        ddv.data(),
        reverse,
        recording.then_some(states.as_mut_slice()),
    );
    let out = Tensor::new(uv.shape().to_vec(), y)?;
    Ok(u.push("selective_scan", out, &[u, delta, a, b, c, d], move |g, _| {
        let gr = scan_backward(dims, uv.data(), dv.data(), av.data(), bv.data(), cv.data(), ddv.data(), &states, g.data(), reverse);
        let t = |data, like: &Tensor<T>| Some(Tensor::new(like.shape().to_vec(), data).expect("grad shape"));
        vec![t(gr.u, &uv), t(gr.delta, &dv), t(gr.a, &av), t(gr.b, &bv), t(gr.c, &cv), t(gr.d, &ddv)]
    }))
}

/// The learned selective parameterization: projections producing `Δ`, `B`,
/// `C` from the sequence, plus the diagonal `A` (as `a_log`) and skip `D`.
#[derive(Clone, Debug)]
pub struct SsmParams<T> {
    pub x_proj: Linear<T>,
    pub dt_proj: Linear<T>,
    pub a_log: Parameter<T>,
    pub d_skip: Parameter<T>,
    pub n_state: usize,
    pub dt_rank: usize,
}

impl<T: Scalar> SsmParams<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, channels: usize, n_state: usize, rng: &mut R) -> Self {
        let dt_rank = channels.div_ceil(16).max(1);
        let x_proj = Linear::new(&join(prefix, "x_proj"), channels, dt_rank + 2 * n_state, false, rng);
        let mut dt_proj = Linear::new(&join(prefix, "dt_proj"), dt_rank, channels, true, rng);
        // softplus(bias) log-uniform in [1e-3, 1e-1]
        let (lo, hi) = (1e-3f64.ln(), 1e-1f64.ln());
        let bias = Tensor::from_fn([channels], |_| {
            let dt: f64 = (lo + rng.random::<f64>() * (hi - lo)).exp();
            T::lit(dt + (-(-dt).exp_m1()).ln())
        });
        dt_proj.bias.as_mut().expect("dt_proj has a bias").set(bias);
        let a_log = Tensor::from_fn([channels, n_state], |i| T::lit(((i % n_state) as f64 + 1.0).ln()));
        Self {
            x_proj,
            dt_proj,
            a_log: Parameter::new(join(prefix, "a_log"), a_log),
            d_skip: Parameter::new(join(prefix, "d"), Tensor::ones([channels])),
            n_state,
            dt_rank,
        }
    }

    /// Produce `Δ, B, C` from `u: [N, L, E]` and scan it in one direction.
    pub fn scan<'g>(&self, g: &'g Graph<T>, u: Var<'g, T>, reverse: bool) -> Result<Var<'g, T>> {
        let proj = self.x_proj.forward(g, u)?;
        let parts = proj.split(&[self.dt_rank, self.n_state, self.n_state], 2)?;
        let delta = self.dt_proj.forward(g, parts[0])?.softplus();
        let a = self.a_log.bind(g).exp().neg();
        selective_scan_var(u, delta, a, parts[1], parts[2], self.d_skip.bind(g), reverse)
    }
}

impl<T: Scalar> Module<T> for SsmParams<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.x_proj.visit_params(f);
        self.dt_proj.visit_params(f);
        f(&self.a_log);
        f(&self.d_skip);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.x_proj.visit_params_mut(f);
        self.dt_proj.visit_params_mut(f);
        f(&mut self.a_log);
        f(&mut self.d_skip);
    }
}

pub const CONV1D_KERNEL: usize = 4;

/// Bidirectional Mamba-style block over a `[N, D, H, W]` map flattened
/// row-major into a length `H·W` sequence.
///
/// in-projection to `(x, z)`, then per direction: causal depthwise 1D conv,
/// SiLU, selective scan. The two directions share weights and are summed,
/// gated by `SiLU(z)` and projected back to `D` channels.
#[derive(Clone, Debug)]
pub struct SsmBlock<T> {
    pub in_proj: Linear<T>,
    pub conv1d: Conv2d<T>,
    pub ssm: SsmParams<T>,
    pub out_proj: Linear<T>,
    pub channels: usize,
}

impl<T: Scalar> SsmBlock<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, channels: usize, n_state: usize, rng: &mut R) -> Self {
        let e = channels;
        let conv_prefix = join(prefix, "conv1d");
        let conv1d = Conv2d {
            weight: Parameter::new(join(&conv_prefix, "weight"), fan_in_uniform(&[e, 1, 1, CONV1D_KERNEL], CONV1D_KERNEL, rng)),
            bias: Some(Parameter::new(join(&conv_prefix, "bias"), fan_in_uniform(&[e], CONV1D_KERNEL, rng))),
            spec: Conv2dSpec { stride: 1, pad_h: (0, 0), pad_w: (CONV1D_KERNEL - 1, 0), groups: e },
        };
        Self {
            in_proj: Linear::new(&join(prefix, "in_proj"), channels, 2 * e, false, rng),
            conv1d,
            ssm: SsmParams::new(&join(prefix, "ssm"), e, n_state, rng),
            out_proj: Linear::new(&join(prefix, "out_proj"), e, channels, true, rng),
            channels,
        }
    }

    fn branch<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>, reverse: bool) -> Result<Var<'g, T>> {
        let shape = x.shape();
        let (n, l, e) = (shape[0], shape[1], shape[2]);
        let seq = if reverse { x.flip(1)? } else { x };
        let conv = self
            .conv1d
            .forward(g, seq.permute(&[0, 2, 1])?.reshape([n, e, 1, l])?)?
            .reshape([n, e, l])?
            .permute(&[0, 2, 1])?
            .silu();
        let y = self.ssm.scan(g, conv, false)?;
        if reverse {
            y.flip(1)
        } else {
            Ok(y)
        }
    }

    /// `[N, D, H, W] -> [N, D, H, W]`.
    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = x.shape();
        let [n, d, h, w] = match shape[..] {
            [n, d, h, w] => [n, d, h, w],
            _ => return Err(Error::shape("ssm_block", format!("expected [N, D, H, W], got {shape:?}"))),
        };
        if d != self.channels {
            return Err(Error::shape("ssm_block", format!("block has {} channels, input {d}", self.channels)));
        }
        let l = h * w;
        let seq = x.reshape([n, d, l])?.permute(&[0, 2, 1])?;
        let xz = self.in_proj.forward(g, seq)?.split(&[d, d], 2)?;
        let y = self.branch(g, xz[0], false)?.add(self.branch(g, xz[0], true)?)?;
        let gated = y.mul(xz[1].silu())?;
        self.out_proj
            .forward(g, gated)?
            .permute(&[0, 2, 1])?
            .reshape([n, d, h, w])
    }

    /// Jointly process the three detail bands: concatenated to `3C` channels.
    pub fn forward_bands<'g>(&self, g: &'g Graph<T>, bands: [Var<'g, T>; 3]) -> Result<Var<'g, T>> {
        let shape = bands[0].shape();
        if bands.iter().any(|b| b.shape() != shape) {
            return Err(Error::shape(
                "ssm_block",
                format!("band shapes differ: {:?} {:?} {:?}", bands[0].shape(), bands[1].shape(), bands[2].shape()),
            ));
        }
        self.forward(g, Var::concat(&bands, 1)?)
    }
}

impl<T: Scalar> Module<T> for SsmBlock<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.in_proj.visit_params(f);
        self.conv1d.visit_params(f);
        self.ssm.visit_params(f);
        self.out_proj.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.in_proj.visit_params_mut(f);
        self.conv1d.visit_params_mut(f);
        self.ssm.visit_params_mut(f);
        self.out_proj.visit_params_mut(f);
    }
}
