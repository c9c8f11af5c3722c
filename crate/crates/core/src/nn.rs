//! Named parameters and the basic layers the network is assembled from.

use rand::Rng;

use crate::autograd::{Conv2dSpec, Graph, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A trainable tensor identified by a dotted path such as `stage1.vi.0.gam.pw.weight`.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    name: String,
    value: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self { name: name.into(), value }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        &mut self.value
    }

    pub fn set(&mut self, value: Tensor<T>) {
        debug_assert_eq!(value.shape(), self.value.shape());
        self.value = value;
    }

    pub fn fill(&mut self, v: T) {
        self.value.data_mut().fill(v);
    }

    pub fn bind<'g>(&self, g: &'g Graph<T>) -> Var<'g, T> {
        g.param(self)
    }
}

/// Anything that owns parameters.
pub trait Module<T: Scalar> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>));

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>));

    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push(p));
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value().numel());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform in `±1/sqrt(fan_in)`.
pub(crate) fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::rand_uniform(shape.to_vec(), -bound, bound, rng)
}

#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Parameter<T>,
    pub bias: Option<Parameter<T>>,
    pub spec: Conv2dSpec,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin / groups * kernel * kernel;
        let shape = [cout, cin / groups, kernel, kernel];
        Self {
            weight: Parameter::new(join(prefix, "weight"), fan_in_uniform(&shape, fan_in, rng)),
            bias: bias.then(|| Parameter::new(join(prefix, "bias"), fan_in_uniform(&[cout], fan_in, rng))),
            spec: Conv2dSpec::new(stride, padding, groups),
        }
    }

    /// 3×3, stride 1, zero padding 1.
    pub fn same3<R: Rng + ?Sized>(prefix: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        Self::new(prefix, cin, cout, 3, 1, 1, 1, true, rng)
    }

    pub fn pointwise<R: Rng + ?Sized>(prefix: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        Self::new(prefix, cin, cout, 1, 1, 0, 1, true, rng)
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.conv2d_with(self.weight.bind(g), self.bias.as_ref().map(|b| b.bind(g)), self.spec)
    }

    /// Zero weight and bias so the layer outputs exact zeros.
    pub fn zero(&mut self) {
        self.weight.fill(T::zero());
        if let Some(b) = &mut self.bias {
            b.fill(T::zero());
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value().shape()[0]
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Parameter<T>,
    pub bias: Option<Parameter<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(prefix: &str, din: usize, dout: usize, bias: bool, rng: &mut R) -> Self {
        Self {
            weight: Parameter::new(join(prefix, "weight"), fan_in_uniform(&[dout, din], din, rng)),
            bias: bias.then(|| Parameter::new(join(prefix, "bias"), fan_in_uniform(&[dout], din, rng))),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.linear(self.weight.bind(g), self.bias.as_ref().map(|b| b.bind(g)))
    }

    pub fn zero(&mut self) {
        self.weight.fill(T::zero());
        if let Some(b) = &mut self.bias {
            b.fill(T::zero());
        }
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Channel-axis layer normalization with learnable scale and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub eps: T,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(prefix: &str, channels: usize) -> Self {
        Self {
            gamma: Parameter::new(join(prefix, "gamma"), Tensor::ones([channels])),
            beta: Parameter::new(join(prefix, "beta"), Tensor::zeros([channels])),
            eps: T::lit(1e-5),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.layer_norm(self.gamma.bind(g), self.beta.bind(g), self.eps)
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}
