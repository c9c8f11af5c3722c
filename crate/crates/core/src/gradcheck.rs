//! Central finite-difference verification of analytic gradients.
//!
//! Each check compares the analytic directional derivative `<∇f, v>` with
//! `(f(x + εv) − f(x − εv)) / 2ε` for a few random sign directions `v`, plus
//! a handful of single-coordinate probes.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::Tensor;

const DIRECTIONS: usize = 3;
const COORDINATES: usize = 4;
/// Gradients below this magnitude are compared in absolute terms.
const ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probes: usize,
    pub worst: String,
}

impl GradCheckReport {
    fn record(&mut self, analytic: f64, numeric: f64, label: impl FnOnce() -> String) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
        self.probes += 1;
        if err > self.max_rel_err || !err.is_finite() {
            self.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
            self.worst = format!("{} (analytic {analytic:.6e}, numeric {numeric:.6e})", label());
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn eval_scalar(v: Var<'_, f64>) -> Result<f64> {
    let t = v.value();
    if t.numel() != 1 {
        return Err(Error::NonScalarLoss(t.shape().to_vec()));
    }
    Ok(t.item())
}

fn probes(rng: &mut ChaCha8Rng, numel: usize) -> Vec<Vec<(usize, f64)>> {
    let mut out: Vec<Vec<(usize, f64)>> = (0..DIRECTIONS)
        .map(|_| (0..numel).map(|i| (i, if rng.random::<bool>() { 1.0 } else { -1.0 })).collect())
        .collect();
    let idx: Vec<usize> = (0..numel).collect();
    for &i in idx.choose_multiple(rng, COORDINATES.min(numel)) {
        out.push(vec![(i, 1.0)]);
    }
    out
}

fn perturbed(t: &Tensor<f64>, dir: &[(usize, f64)], step: f64) -> Tensor<f64> {
    let mut p = t.clone();
    for &(i, s) in dir {
        p.data_mut()[i] += step * s;
    }
    p
}

/// Check the gradient of a scalar function of several tensor inputs.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = f(&g, &vars)?;
    g.backward(loss)?;
    let grads: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();

    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::inference();
        let vars: Vec<_> = xs.iter().map(|t| g.constant(t.clone())).collect();
        eval_scalar(f(&g, &vars)?)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut report = GradCheckReport::default();
    for (k, x) in inputs.iter().enumerate() {
        for dir in probes(&mut rng, x.numel()) {
            let analytic: f64 = dir.iter().map(|&(i, s)| grads[k].data()[i] * s).sum();
            let mut xs = inputs.to_vec();
            xs[k] = perturbed(x, &dir, eps);
            let plus = eval(&xs)?;
            xs[k] = perturbed(x, &dir, -eps);
            let minus = eval(&xs)?;
            let numeric = (plus - minus) / (2.0 * eps);
            report.record(analytic, numeric, || format!("input {k}, probe of {} entries", dir.len()));
        }
    }
    Ok(report)
}

/// Check the gradient of a scalar function with respect to every parameter
/// of `module`.
pub fn finite_diff_check_params<M, F>(module: &mut M, f: F, eps: f64) -> Result<GradCheckReport>
where
    M: Module<f64>,
    F: for<'g> Fn(&'g Graph<f64>, &M) -> Result<Var<'g, f64>>,
{
    let grads = {
        let g = Graph::new();
        let loss = f(&g, module)?;
        g.backward(loss)?;
        g.param_grads()
    };
    let params: Vec<(String, Tensor<f64>)> = module
        .parameters()
        .into_iter()
        .map(|p| (p.name().to_string(), p.value().clone()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut report = GradCheckReport::default();
    for (name, value) in &params {
        let grad = grads.get(name).cloned().unwrap_or_else(|| Tensor::zeros(value.shape().to_vec()));
        for dir in probes(&mut rng, value.numel()) {
            let analytic: f64 = dir.iter().map(|&(i, s)| grad.data()[i] * s).sum();
            let mut eval_at = |step: f64| -> Result<f64> {
                let p = perturbed(value, &dir, step);
                set_param(module, name, p);
                let g = Graph::inference();
                eval_scalar(f(&g, module)?)
            };
            let plus = eval_at(eps)?;
            let minus = eval_at(-eps)?;
            set_param(module, name, value.clone());
            let numeric = (plus - minus) / (2.0 * eps);
            report.record(analytic, numeric, || format!("parameter `{name}`, probe of {} entries", dir.len()));
        }
    }
    Ok(report)
}

fn set_param<M: Module<f64>>(module: &mut M, name: &str, value: Tensor<f64>) {
    let mut value = Some(value);
    module.visit_params_mut(&mut |p| {
        if p.name() == name {
            if let Some(v) = value.take() {
                p.set(v);
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn detects_correct_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::rand_uniform([3, 4], -2.0, 2.0, &mut rng);
        let report = finite_diff_check(|_, v| Ok(v[0].mul(v[0])?.silu().sum()), &[x], 1e-4).unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn detects_wrong_gradient() {
        // A deliberately broken op: value of x^2, gradient of x.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::rand_uniform([5], 0.5, 2.0, &mut rng);
        let report = finite_diff_check(
            |_, v| {
                let sq = v[0].value().map(|a| a * a);
                Ok(v[0].push("broken", sq, &[v[0]], |g, _| vec![Some(g.clone())]).sum())
            },
            &[x],
            1e-4,
        )
        .unwrap();
        assert!(!report.passes(1e-3));
    }
}
