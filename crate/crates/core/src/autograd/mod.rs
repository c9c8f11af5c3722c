//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to [`Var`] handles in
//! execution order. Each recorded node keeps the closure that maps the
//! gradient of its output to gradients of its inputs; [`Graph::backward`]
//! replays those closures from the loss back to the leaves.

mod conv;
mod norm;
mod ops;

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use conv::{conv2d_forward, Conv2dSpec};

type BackwardFn<T> = Box<dyn FnOnce(&Tensor<T>, &Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    op: &'static str,
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn<T>>,
}

/// Operation recorder. Nodes are appended in execution order, so the node
/// list is always topologically sorted.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    grads: RefCell<Vec<Option<Tensor<T>>>>,
    params: RefCell<Vec<(String, usize)>>,
    param_index: RefCell<HashMap<String, (usize, usize)>>,
    recording: bool,
    consumed: Cell<bool>,
}

/// Handle to a value recorded in a [`Graph`].
pub struct Var<'g, T: Scalar> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T: Scalar> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Scalar> Copy for Var<'_, T> {}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.graph.nodes.borrow();
        let node = &nodes[self.id];
        write!(f, "Var#{}({} {:?})", self.id, node.op, node.value.shape())
    }
}

/// Gradients of every parameter bound to a graph, in binding order.
/// `None` marks a parameter the loss does not depend on.
#[derive(Debug, Clone)]
pub struct ParamGrads<T> {
    entries: Vec<(String, Option<Tensor<T>>)>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).and_then(|(_, g)| g.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Option<&Tensor<T>>)> {
        self.entries.iter().map(|(n, g)| (n.as_str(), g.as_ref()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, Option<&mut Tensor<T>>)> {
        self.entries.iter_mut().map(|(n, g)| (n.as_str(), g.as_mut()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Euclidean norm over all present gradients.
    pub fn global_norm(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|(_, g)| g.as_ref())
            .map(|g| g.sum_sq().to_f64_lossy())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            let s = T::lit(max_norm / norm);
            for (_, g) in self.entries.iter_mut() {
                if let Some(g) = g {
                    g.data_mut().iter_mut().for_each(|x| *x *= s);
                }
            }
        }
        norm
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// A graph that records adjoints for a later [`Graph::backward`].
    pub fn new() -> Self {
        Self::with_recording(true)
    }

    /// A graph that only evaluates; no adjoint closures are kept.
    pub fn inference() -> Self {
        Self::with_recording(false)
    }

    fn with_recording(recording: bool) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
            params: RefCell::new(Vec::new()),
            param_index: RefCell::new(HashMap::new()),
            recording,
            consumed: Cell::new(false),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: "leaf",
            value: Rc::new(value),
            parents: Vec::new(),
            requires_grad: requires_grad && self.recording,
            backward: None,
        });
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// A leaf that receives a gradient.
    pub fn input(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    /// Bind a named parameter. Binding the same parameter twice returns the
    /// same variable so gradients accumulate in one place.
    ///
    /// # Panics
    /// If a different parameter with the same name was already bound, or the
    /// parameter changed value since it was bound.
    pub fn param(&self, p: &Parameter<T>) -> Var<'_, T> {
        let addr = p as *const Parameter<T> as usize;
        if let Some(&(id, bound)) = self.param_index.borrow().get(p.name()) {
            assert_eq!(bound, addr, "two distinct parameters named `{}` bound to one graph", p.name());
            debug_assert!(*self.nodes.borrow()[id].value == *p.value(), "parameter `{}` changed after binding", p.name());
            return Var { graph: self, id };
        }
        let v = self.leaf(p.value().clone(), true);
        self.param_index.borrow_mut().insert(p.name().to_string(), (v.id, addr));
        self.params.borrow_mut().push((p.name().to_string(), v.id));
        v
    }

    pub fn value(&self, v: Var<'_, T>) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[v.id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Record a derived value. `backward` receives the output gradient and the
    /// output value and returns one optional gradient per parent.
    pub(crate) fn push<F>(&self, op: &'static str, value: Tensor<T>, parents: &[Var<'_, T>], backward: F) -> Var<'_, T>
    where
        F: FnOnce(&Tensor<T>, &Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    {
        let requires_grad = self.recording && parents.iter().any(|p| self.requires_grad(p.id));
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value: Rc::new(value),
            parents: if requires_grad { parents.iter().map(|p| p.id).collect() } else { Vec::new() },
            requires_grad,
            backward: if requires_grad { Some(Box::new(backward)) } else { None },
        });
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// Propagate adjoints from a scalar `loss` to every leaf that requires a
    /// gradient. A graph can be differentiated once.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        if self.consumed.get() {
            return Err(Error::GraphConsumed);
        }
        let loss_shape = self.nodes.borrow()[loss.id].value.shape().to_vec();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        if !self.recording {
            return Err(Error::Invalid("backward() on an inference graph".into()));
        }
        self.consumed.set(true);

        let n = self.nodes.borrow().len();
        let mut grads = self.grads.borrow_mut();
        grads.clear();
        grads.resize_with(n, || None);
        grads[loss.id] = Some(Tensor::full(loss_shape, T::one()));

        for id in (0..=loss.id).rev() {
            let (backward, value, parents, is_leaf) = {
                let mut nodes = self.nodes.borrow_mut();
                let node = &mut nodes[id];
                if !node.requires_grad {
                    continue;
                }
                (node.backward.take(), Rc::clone(&node.value), node.parents.clone(), node.parents.is_empty())
            };
            if is_leaf {
                continue;
            }
            let Some(grad_out) = grads[id].take() else { continue };
            let Some(backward) = backward else { continue };
            let parent_grads = backward(&grad_out, &value);
            debug_assert_eq!(parent_grads.len(), parents.len());
            for (&p, g) in parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !self.requires_grad(p) {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads.borrow().get(v.id).cloned().flatten()
    }

    pub fn param_grads(&self) -> ParamGrads<T> {
        let grads = self.grads.borrow();
        ParamGrads {
            entries: self
                .params
                .borrow()
                .iter()
                .map(|(name, id)| (name.clone(), grads.get(*id).cloned().flatten()))
                .collect(),
        }
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad(self.id)
    }

    pub(crate) fn push(
        &self,
        op: &'static str,
        value: Tensor<T>,
        parents: &[Var<'g, T>],
        backward: impl FnOnce(&Tensor<T>, &Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<'g, T> {
        self.graph.push(op, value, parents, backward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_of_sum_is_ones() {
        let g = Graph::<f64>::new();
        let x = g.input(Tensor::from_fn([2, 3], |i| i as f64));
        let loss = x.sum();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), Tensor::ones([2, 3]));
    }

    #[test]
    fn grad_of_sum_of_squares_is_twice_x() {
        let g = Graph::<f64>::new();
        let t = Tensor::from_fn([4], |i| i as f64 - 1.5);
        let x = g.input(t.clone());
        let loss = x.mul(x).unwrap().sum();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), t.map(|v| 2.0 * v));
    }

    #[test]
    fn non_scalar_loss_errors() {
        let g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros([2]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn second_backward_errors() {
        let g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros([2]));
        let loss = x.sum();
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(Error::GraphConsumed)));
    }

    #[test]
    fn constants_get_no_grad() {
        let g = Graph::<f64>::new();
        let x = g.input(Tensor::ones([3]));
        let c = g.constant(Tensor::full([3], 2.0));
        let loss = x.mul(c).unwrap().sum();
        g.backward(loss).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap(), Tensor::full([3], 2.0));
    }

    #[test]
    fn shared_use_accumulates() {
        let g = Graph::<f64>::new();
        let x = g.input(Tensor::ones([2]));
        let y = x.add(x).unwrap().add(x).unwrap();
        g.backward(y.sum()).unwrap();
        assert_eq!(g.grad(x).unwrap(), Tensor::full([2], 3.0));
    }

    #[test]
    fn inference_graph_records_nothing() {
        let g = Graph::<f32>::inference();
        let x = g.input(Tensor::ones([2]));
        let y = x.silu();
        assert!(!y.requires_grad());
        assert!(g.backward(y.sum()).is_err());
    }
}
