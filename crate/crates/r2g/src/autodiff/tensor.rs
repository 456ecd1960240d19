use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::AutodiffError;

/// Position of a tensor on a recording tape: (tape id, node index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NodeRef {
    pub tape: u64,
    pub index: usize,
}

struct TensorInner {
    shape: Vec<usize>,
    values: Vec<f64>,
    /// Lazily allocated; `None` means all-zero.
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    node: Option<NodeRef>,
}

/// Dense n-dimensional f64 array participating in a differentiable
/// computation. Cloning a `Tensor` clones the *handle*: both handles see the
/// same values and the same accumulated gradient, which is what lets networks
/// keep long-lived parameters while tapes come and go.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TensorInner>>,
}

impl Tensor {
    fn make(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Result<Self, AutodiffError> {
        let numel: usize = shape.iter().product();
        if numel != values.len() || shape.is_empty() {
            return Err(AutodiffError::ValueLength { len: values.len(), shape });
        }
        Ok(Tensor {
            inner: Rc::new(RefCell::new(TensorInner {
                shape,
                values,
                grad: None,
                requires_grad,
                node: None,
            })),
        })
    }

    /// Constant (non-differentiable) tensor.
    pub fn from_vec(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AutodiffError> {
        Self::make(shape, values, false)
    }

    /// Learnable tensor: gradients accumulate into it during backward passes.
    pub fn param(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AutodiffError> {
        Self::make(shape, values, true)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self::make(shape, vec![0.0; numel], false).expect("consistent by construction")
    }

    pub fn scalar(value: f64) -> Self {
        Self::make(vec![1], vec![value], false).expect("consistent by construction")
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Snapshot of the current values.
    pub fn values(&self) -> Vec<f64> {
        self.inner.borrow().values.clone()
    }

    pub fn value_at(&self, index: usize) -> f64 {
        self.inner.borrow().values[index]
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self) -> f64 {
        let inner = self.inner.borrow();
        debug_assert_eq!(inner.values.len(), 1, "scalar_value on non-scalar tensor");
        inner.values[0]
    }

    /// Snapshot of the accumulated gradient (all-zero if never touched).
    pub fn grad(&self) -> Vec<f64> {
        let inner = self.inner.borrow();
        match &inner.grad {
            Some(g) => g.clone(),
            None => vec![0.0; inner.values.len()],
        }
    }

    /// Reset the accumulated gradient to zero.
    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Constant copy of the current values, cut off from any tape.
    pub fn detach(&self) -> Tensor {
        let inner = self.inner.borrow();
        Self::make(inner.shape.clone(), inner.values.clone(), false)
            .expect("consistent by construction")
    }

    /// Two handles to the same underlying storage?
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn with_values<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.inner.borrow().values)
    }

    pub(crate) fn set_values(&self, values: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(inner.values.len(), values.len());
        inner.values.copy_from_slice(values);
    }

    pub(crate) fn nudge_value(&self, index: usize, delta: f64) {
        self.inner.borrow_mut().values[index] += delta;
    }

    pub(crate) fn grad_add(&self, delta: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(inner.values.len(), delta.len());
        match &mut inner.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => inner.grad = Some(delta.to_vec()),
        }
    }

    pub(crate) fn apply_update(&self, f: impl FnMut(usize, f64, f64) -> f64) {
        let mut inner = self.inner.borrow_mut();
        let mut f = f;
        // Split borrow: read grad lazily as zeros without allocating.
        let grad = inner.grad.take();
        for (i, v) in inner.values.iter_mut().enumerate() {
            let g = grad.as_ref().map_or(0.0, |g| g[i]);
            *v = f(i, *v, g);
        }
        inner.grad = grad;
    }

    pub(crate) fn node(&self) -> Option<NodeRef> {
        self.inner.borrow().node
    }

    pub(crate) fn set_node(&self, node: NodeRef) {
        self.inner.borrow_mut().node = Some(node);
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .field("values", &inner.values)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_is_zero_after_creation_and_after_reset() {
        let t = Tensor::param(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.grad(), vec![0.0; 4]);
        t.grad_add(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(t.grad(), vec![1.0; 4]);
        t.zero_grad();
        assert_eq!(t.grad(), vec![0.0; 4]);
    }

    #[test]
    fn values_and_grad_share_shape() {
        let t = Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.values().len(), t.grad().len());
    }

    #[test]
    fn mismatched_value_length_is_rejected() {
        assert!(Tensor::from_vec(vec![2, 2], vec![1.0]).is_err());
    }

    #[test]
    fn detach_copies_values_and_drops_grad_tracking() {
        let t = Tensor::param(vec![2], vec![5.0, 6.0]).unwrap();
        let d = t.detach();
        assert_eq!(d.values(), vec![5.0, 6.0]);
        assert!(!d.requires_grad());
        assert!(!d.same_storage(&t));
    }
}
