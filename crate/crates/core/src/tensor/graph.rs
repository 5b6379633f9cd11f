//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Graph`]; nodes are therefore
//! already in topological order and [`Graph::backward`] walks them in
//! reverse. Operations outside this module (the segmentation losses) plug in
//! through the public [`Op`] trait and [`Graph::record`].

use crate::scalar::Scalar;

use super::error::TensorError;
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Backward rule of a recorded operation.
pub trait Op<T: Scalar>: Send {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input. Entries for inputs whose `needs` flag
    /// is false may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_output: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError>;
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    op: Option<Box<dyn Op<T>>>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// A recorded forward computation.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    /// Adds a leaf; it receives a gradient iff `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let requires_grad = tensor.requires_grad;
        self.push(Node { value: tensor, inputs: Vec::new(), op: None, requires_grad, param: None })
    }

    /// Adds a leaf holding the current value of a parameter. Gradients
    /// reaching it are accumulated into the store by [`Graph::backward`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let value = store.get(id).tensor.clone();
        self.push(Node { value, inputs: Vec::new(), op: None, requires_grad: true, param: Some(id) })
    }

    /// Records an operation whose forward value has already been computed.
    pub fn record(&mut self, op: Box<dyn Op<T>>, inputs: &[Var], output: Tensor<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Node {
            value: output,
            inputs: inputs.to_vec(),
            op: if requires_grad { Some(op) } else { None },
            requires_grad,
            param: None,
        })
    }

    fn push(&mut self, node: Node<T>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`, if any
    /// gradient reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Back-propagates from a scalar `loss` and adds the resulting parameter
    /// gradients to `params`. Gradients accumulate across calls until the
    /// caller zeroes them (see [`ParamStore::zero_grad`]).
    pub fn backward(&mut self, loss: Var, params: &mut ParamStore<T>) -> Result<(), TensorError> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(grad_out) = self.grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(op) = &node.op {
                let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                let needs: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
                let in_grads = op.backward(&inputs, &node.value, &grad_out, &needs)?;
                for ((var, g), need) in node.inputs.clone().into_iter().zip(in_grads).zip(needs) {
                    let (Some(g), true) = (g, need) else { continue };
                    match &mut self.grads[var.0] {
                        Some(acc) => acc.add_assign(&g),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            self.grads[idx] = Some(grad_out);
        }

        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            if let (Some(id), Some(g)) = (node.param, grad) {
                params.get_mut(id).grad.add_assign(g);
            }
        }
        Ok(())
    }
}
