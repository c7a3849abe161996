use crate::error::{Error, Result};
use crate::parallel::Exec;
use crate::tensor::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reverse rule: given the recorded nodes and the gradient of this node's
/// output, accumulate into the gradients of its inputs.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[Node<T>], &[T], &mut Gradients<T>) -> Result<()>>;

pub(crate) struct Node<T: Real> {
    pub(crate) value: Tensor<T>,
    pub(crate) requires_grad: bool,
    pub(crate) backward: Option<BackwardFn<T>>,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a topological order because
/// an operation can only consume vars that already exist.
pub struct Tape<T: Real> {
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) exec: Exec,
    branches: u64,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self::with_exec(Exec::default())
    }

    pub fn with_exec(exec: Exec) -> Self {
        Self {
            nodes: Vec::new(),
            exec,
            branches: 0,
        }
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; its gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that no gradient flows into.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            backward: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Hash of every branch taken by a non-smooth op so far (ReLU signs,
    /// max-pool winners, loss clamps). Two forward passes with equal
    /// signatures ran through the same smooth piece of the graph.
    pub fn branch_signature(&self) -> u64 {
        self.branches
    }

    pub(crate) fn record_branches(&mut self, words: impl IntoIterator<Item = u64>) {
        for w in words {
            self.branches = crate::seed::counter(self.branches ^ w, 1);
        }
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Record an operation. The backward rule is kept only when some input
    /// requires a gradient.
    pub(crate) fn push_op(&mut self, value: Tensor<T>, inputs: &[Var], backward: BackwardFn<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            backward: requires_grad.then_some(backward),
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse-mode sweep from a scalar loss. Only leaf gradients survive.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads = Gradients {
            slots: (0..self.nodes.len()).map(|_| None).collect(),
            mask: self.nodes.iter().map(|n| n.requires_grad).collect(),
        };
        if !self.nodes[loss.0].requires_grad {
            return Ok(grads);
        }
        grads.slots[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(rule) = self.nodes[i].backward.as_ref() else {
                continue;
            };
            let Some(g) = grads.slots[i].take() else {
                continue;
            };
            // intermediate gradients are released once propagated
            rule(&self.nodes, &g, &mut grads)?;
        }
        Ok(grads)
    }
}

/// Gradient buffers produced by [`Tape::backward`], one per recorded var.
pub struct Gradients<T> {
    slots: Vec<Option<Vec<T>>>,
    mask: Vec<bool>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to a leaf `var`, or `None` when the
    /// loss does not depend on it. Intermediate gradients are not retained.
    pub fn get(&self, var: Var) -> Option<&[T]> {
        self.slots.get(var.0).and_then(|s| s.as_deref())
    }

    /// Gradient reshaped like the recorded value; zeros when unreachable.
    pub fn tensor(&self, tape: &Tape<T>, var: Var) -> Tensor<T> {
        let shape = tape.value(var).shape();
        match self.get(var) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient matches value"),
            None => Tensor::zeros(shape),
        }
    }

    pub(crate) fn wants(&self, var: Var) -> bool {
        self.mask[var.0]
    }

    /// Add into `var`'s gradient through `f`, allocating a zero buffer of
    /// `len` on first use. No-op for vars that do not require a gradient.
    pub(crate) fn accumulate_with(&mut self, var: Var, len: usize, f: impl FnOnce(&mut [T])) {
        if !self.mask[var.0] {
            return;
        }
        let slot = self.slots[var.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }

    pub(crate) fn accumulate(&mut self, var: Var, contribution: &[T]) {
        self.accumulate_with(var, contribution.len(), |g| {
            for (a, &b) in g.iter_mut().zip(contribution) {
                *a += b;
            }
        });
    }
}
