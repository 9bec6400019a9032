//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! The computation graph is built eagerly: every op returns a new `Tensor`
//! holding its parents and a vector-Jacobian closure. `backward` on a scalar
//! walks the graph in reverse topological order and accumulates gradients
//! into every `requires_grad` leaf. Everything is single-threaded and
//! bitwise deterministic for a fixed seed.

mod io;
mod ops;

pub use io::{load_ten, save_ten};

use crate::error::{Error, Result};
use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

thread_local! {
    static NEXT_ID: Cell<usize> = const { Cell::new(0) };
}

fn fresh_id() -> usize {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Vector-Jacobian product: maps the gradient at this node to one gradient
/// buffer per parent.
type Vjp = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

pub(crate) struct Inner {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: Option<Vec<f64>>,
    parents: Vec<Tensor>,
    vjp: Option<Vjp>,
    /// True when a `requires_grad` leaf is reachable from this node.
    tracked: bool,
    id: usize,
}

/// Handle to a node of the computation graph. Cloning is cheap and shares
/// the underlying storage.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn from_inner(inner: Inner) -> Self {
        Tensor {
            inner: Rc::new(RefCell::new(inner)),
        }
    }

    fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Self {
        Tensor::from_inner(Inner {
            shape,
            data,
            requires_grad,
            grad: None,
            parents: Vec::new(),
            vjp: None,
            tracked: requires_grad,
            id: fresh_id(),
        })
    }

    pub(crate) fn node(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        vjp: Vjp,
    ) -> Self {
        let tracked = parents.iter().any(|p| p.inner.borrow().tracked);
        Tensor::from_inner(Inner {
            shape,
            data,
            requires_grad: false,
            grad: None,
            parents: if tracked { parents } else { Vec::new() },
            vjp: if tracked { Some(vjp) } else { None },
            tracked,
            id: fresh_id(),
        })
    }

    /// Constant tensor (no gradient).
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.contains(&0) || data.len() != expect {
            return Err(Error::InvalidShape {
                op: "from_vec",
                shape,
                reason: format!("data length {} does not match", data.len()),
            });
        }
        Ok(Tensor::leaf(shape, data, false))
    }

    /// Trainable leaf tensor.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = Tensor::from_vec(shape, data)?;
        t.inner.borrow_mut().requires_grad = true;
        t.inner.borrow_mut().tracked = true;
        Ok(t)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::leaf(vec![1], vec![value], false)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::leaf(shape, vec![0.0; n], false)
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::leaf(shape, vec![value; n], false)
    }

    /// Constant tensor with i.i.d. Gaussian entries (Box-Muller).
    pub fn randn(shape: Vec<usize>, std: f64, rng: &mut impl rand::Rng) -> Self {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        Tensor::leaf(shape, data, false)
    }

    /// Trainable leaf with Gaussian init.
    pub fn param_randn(shape: Vec<usize>, std: f64, rng: &mut impl rand::Rng) -> Self {
        let t = Tensor::randn(shape, std, rng);
        t.inner.borrow_mut().requires_grad = true;
        t.inner.borrow_mut().tracked = true;
        t
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn data(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        debug_assert_eq!(inner.data.len(), 1);
        inner.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Overwrite the stored values in place (optimizer steps, finite
    /// differences). The graph built from previous values is stale after
    /// this call.
    pub fn set_data(&self, data: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), data.len());
        inner.data.copy_from_slice(data);
    }

    /// Cut the tape: a constant with the same values.
    pub fn detach(&self) -> Tensor {
        let inner = self.inner.borrow();
        Tensor::leaf(inner.shape.clone(), inner.data.clone(), false)
    }

    /// Rows/cols view: rank-1 tensors count as a single row.
    pub(crate) fn rows_cols(&self, op: &'static str) -> Result<(usize, usize)> {
        let shape = self.shape();
        match shape.len() {
            1 => Ok((1, shape[0])),
            2 => Ok((shape[0], shape[1])),
            _ => Err(Error::InvalidShape {
                op,
                shape,
                reason: "expected rank 1 or 2".into(),
            }),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate
    /// additively into every `requires_grad` ancestor; call `zero_grad`
    /// between steps.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss { shape: self.shape() });
        }

        // Post-order DFS; reversed it yields a valid reverse-topological order.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashMap<usize, ()> = HashMap::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        while let Some((node, child_idx)) = stack.pop() {
            let id = node.inner.borrow().id;
            if child_idx == 0 {
                if visited.contains_key(&id) {
                    continue;
                }
                visited.insert(id, ());
            }
            let parent = {
                let inner = node.inner.borrow();
                inner.parents.get(child_idx).cloned()
            };
            match parent {
                Some(p) => {
                    stack.push((node, child_idx + 1));
                    let pid = p.inner.borrow().id;
                    if !visited.contains_key(&pid) {
                        stack.push((p, 0));
                    }
                }
                None => order.push(node),
            }
        }

        let mut grads: HashMap<usize, Vec<f64>> = HashMap::new();
        grads.insert(self.inner.borrow().id, vec![1.0]);

        for node in order.iter().rev() {
            let id = node.inner.borrow().id;
            let Some(g) = grads.get(&id).cloned() else {
                continue;
            };
            {
                let mut inner = node.inner.borrow_mut();
                if inner.requires_grad {
                    match &mut inner.grad {
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(&g) {
                                *a += b;
                            }
                        }
                        None => inner.grad = Some(g.clone()),
                    }
                }
            }
            let inner = node.inner.borrow();
            if let Some(vjp) = &inner.vjp {
                let parent_grads = vjp(&g);
                debug_assert_eq!(parent_grads.len(), inner.parents.len());
                for (p, pg) in inner.parents.iter().zip(parent_grads) {
                    if !p.inner.borrow().tracked {
                        continue;
                    }
                    let pid = p.inner.borrow().id;
                    match grads.get_mut(&pid) {
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(&pg) {
                                *a += b;
                            }
                        }
                        None => {
                            grads.insert(pid, pg);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Compare the analytic gradient of `f` at `x` against central differences.
///
/// Returns the max over coordinates of
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    assert!(eps > 0.0 && eps <= 1e-3, "eps must be in (0, 1e-3]");
    x.zero_grad();
    let was_param = x.requires_grad();
    if !was_param {
        x.inner.borrow_mut().requires_grad = true;
        x.inner.borrow_mut().tracked = true;
    }
    let loss = f(x)?;
    loss.backward()?;
    let analytic = x
        .grad()
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let base = x.data();
    let mut max_err = 0.0f64;
    for i in 0..base.len() {
        let mut probe = base.clone();
        probe[i] = base[i] + eps;
        x.set_data(&probe);
        let plus = f(x)?.item();
        probe[i] = base[i] - eps;
        x.set_data(&probe);
        let minus = f(x)?.item();
        x.set_data(&base);
        let numeric = (plus - minus) / (2.0 * eps);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-12);
        max_err = max_err.max(err);
    }
    x.zero_grad();
    if !was_param {
        x.inner.borrow_mut().requires_grad = false;
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests;
