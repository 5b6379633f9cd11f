use crate::scalar::Scalar;

use super::error::TensorError;
use super::tensor::Tensor;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A learnable tensor with its gradient and momentum buffer.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub grad: Tensor<T>,
    pub momentum_buffer: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, tensor: Tensor<T>) -> Self {
        let grad = Tensor::zeros(tensor.shape());
        let momentum_buffer = Tensor::zeros(tensor.shape());
        Self { name: name.into(), tensor, grad, momentum_buffer }
    }
}

/// Ordered collection of parameters. Insertion order is the serialization
/// order of checkpoints.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.params.push(Parameter::new(name, tensor));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Multiplies every gradient by `factor`.
    pub fn scale_grads(&mut self, factor: T) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }
}

/// Momentum SGD: `v <- momentum * v + grad; theta <- theta - lr * v`, then
/// gradients are zeroed.
///
/// A non-finite gradient aborts the whole step before any parameter moves.
pub fn sgd_step<T: Scalar>(params: &mut ParamStore<T>, lr: T, momentum: T) -> Result<(), TensorError> {
    if let Some((i, p)) = params.iter().enumerate().find(|(_, p)| !p.grad.all_finite()) {
        return Err(TensorError::NonFiniteGradient { param: i, name: p.name.clone() });
    }
    for p in params.iter_mut() {
        let Parameter { tensor, grad, momentum_buffer, .. } = p;
        for ((theta, g), v) in tensor
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut().iter_mut())
            .zip(momentum_buffer.data_mut().iter_mut())
        {
            *v = momentum * *v + *g;
            *theta -= lr * *v;
            *g = T::zero();
        }
    }
    Ok(())
}
