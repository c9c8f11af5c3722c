use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::autograd::ParamGrads;
use crate::error::{Error, Result};
use crate::io::OptimizerInfo;
use crate::nn::Module;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2.5e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam with per-parameter moments keyed by name.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        let c = config;
        if !(c.lr > 0.0 && (0.0..1.0).contains(&c.beta1) && (0.0..1.0).contains(&c.beta2) && c.eps > 0.0) {
            return Err(Error::Invalid(format!("invalid Adam settings {c:?}")));
        }
        Ok(Self { config, step: 0, moments: HashMap::new() })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn info(&self) -> OptimizerInfo {
        let c = self.config;
        OptimizerInfo { name: "adam".into(), lr: c.lr, beta1: c.beta1, beta2: c.beta2, eps: c.eps, step: self.step }
    }

    /// One update of every parameter of `model`. Fails without touching any
    /// parameter if one of them has no gradient.
    pub fn step<M: Module<T>>(&mut self, model: &mut M, grads: &ParamGrads<T>) -> Result<()> {
        if let Some(p) = model.parameters().into_iter().find(|p| grads.get(p.name()).is_none()) {
            return Err(Error::MissingGrad(p.name().to_string()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let moments = &mut self.moments;
        model.visit_params_mut(&mut |p| {
            let g = grads.get(p.name()).expect("checked above");
            let (m, v) = moments
                .entry(p.name().to_string())
                .or_insert_with(|| (Tensor::zeros(g.shape().to_vec()), Tensor::zeros(g.shape().to_vec())));
            let it = p.value_mut().data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data());
            for (((w, m), v), &g) in it {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;
    use crate::nn::Parameter;

    struct One(Parameter<f64>);

    impl Module<f64> for One {
        fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<f64>)) {
            f(&self.0);
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<f64>)) {
            f(&mut self.0);
        }
    }

    fn grads_of(m: &One, loss: impl for<'g> Fn(crate::Var<'g, f64>) -> crate::Var<'g, f64>) -> ParamGrads<f64> {
        let g = Graph::new();
        g.backward(loss(m.0.bind(&g))).unwrap();
        g.param_grads()
    }

    #[test]
    fn first_step_closed_form() {
        let mut m = One(Parameter::new("w", Tensor::scalar(0.3)));
        let grads = grads_of(&m, |w| w.sum());
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        adam.step(&mut m, &grads).unwrap();
        let expect = 0.3 - 2.5e-5 / (1.0 + 1e-8);
        assert!((m.0.value().item() - expect).abs() < 1e-15);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut m = One(Parameter::new("w", Tensor::new([3], vec![1.0, -2.0, 0.5]).unwrap()));
        let before = m.0.value().clone();
        let grads = grads_of(&m, |w| w.scale(0.0).sum());
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        for _ in 0..3 {
            adam.step(&mut m, &grads).unwrap();
        }
        assert_eq!(*m.0.value(), before);
    }

    #[test]
    fn missing_gradient_is_named() {
        let mut m = One(Parameter::new("lonely", Tensor::scalar(1.0)));
        let g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(2.0));
        g.backward(x.sum()).unwrap();
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        assert!(matches!(adam.step(&mut m, &g.param_grads()), Err(Error::MissingGrad(n)) if n == "lonely"));
        assert!(Adam::<f64>::new(AdamConfig { lr: 0.0, ..AdamConfig::default() }).is_err());
    }
}
