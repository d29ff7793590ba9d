use std::cell::RefCell;
use std::rc::Rc;

use super::Tensor;
use crate::error::{Error, Result};

/// Vector-Jacobian product of one recorded operation.
///
/// Receives the gradient flowing into the op's output plus a flag per parent
/// telling whether that parent needs a gradient at all, and returns one entry
/// per parent (`None` where not needed).
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    op: &'static str,
    value: Rc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Ordered record of executed differentiable operations.
///
/// Node ids are assigned in execution order, so every parent has a smaller id
/// than its children and walking the record backwards is a valid reverse
/// topological order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(Rc::new(value), true)
    }

    /// Registers an input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(Rc::new(value), false)
    }

    pub(crate) fn leaf_shared(&self, value: Rc<Tensor>, requires_grad: bool) -> Var<'_> {
        self.push_leaf(value, requires_grad)
    }

    fn push_leaf(&self, value: Rc<Tensor>, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op: "leaf", value, parents: Vec::new(), backward: None, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Records the result of an op. The backward closure is only kept when
    /// some parent requires a gradient.
    pub(crate) fn record<'t>(
        &'t self,
        op: &'static str,
        value: Tensor,
        parents: &[Var<'t>],
        backward: impl Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    ) -> Result<Var<'t>> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op));
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|p| nodes[p.id].requires_grad);
        nodes.push(Node {
            op,
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: if requires_grad { Some(Box::new(backward)) } else { None },
            requires_grad,
        });
        Ok(Var { tape: self, id: nodes.len() - 1 })
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Gradients of shared inputs accumulate additively. Only leaf gradients
    /// are retained in the result; intermediate buffers are released as soon
    /// as they have been propagated.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got dims {:?}", root.value.dims())));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.id + 1, || None);
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::ones(root.value.dims()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = backward(&g, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "op {}", node.op);
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.dims(), nodes[p].value.dims(), "gradient shape from op {}", node.op);
                match &mut grads[p] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(pg.data()) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.value().dims().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    /// Scalar value of a one-element variable.
    pub fn item(&self) -> f64 {
        self.value().item()
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.value().dims()))
    }
}
