use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;

use super::ops::Op;
use super::{Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
}

/// Single-threaded computation record. Nodes are appended in evaluation order,
/// so every node's inputs precede it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    tags: RefCell<BTreeMap<usize, Var>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Records an input or constant.
    pub fn leaf(&self, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(nodes.len() - 1)
    }

    /// Records a leaf at most once per tag; later calls return the same node.
    /// Parameter stores use their parameter index as the tag.
    pub fn tagged_leaf(&self, tag: usize, make: impl FnOnce() -> Tensor) -> Var {
        if let Some(&v) = self.tags.borrow().get(&tag) {
            return v;
        }
        let v = self.leaf(make());
        self.tags.borrow_mut().insert(tag, v);
        v
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn value_ref(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// First element of the node's value; intended for scalars.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.data()[0]
    }

    pub(crate) fn nodes(&self) -> Ref<'_, Vec<Node>> {
        self.nodes.borrow()
    }

    pub(crate) fn push(&self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Ok(Var(nodes.len() - 1))
    }

    /// Reverse-mode sweep from a scalar loss. Every node reachable from the loss
    /// receives a gradient with the same shape as its value.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if loss.0 >= nodes.len() {
            return Err(TensorError::Contract(format!("unknown node {}", loss.0)));
        }
        if nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            super::ops::backprop(&nodes, i, g, lower);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|data| Tensor {
                    shape: nodes[i].value.shape().to_vec(),
                    data,
                })
            })
            .collect();
        Ok(Gradients {
            grads,
            tags: self.tags.borrow().clone(),
        })
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    tags: BTreeMap<usize, Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of the leaf recorded under `tag`, if it was reached.
    pub fn tagged(&self, tag: usize) -> Option<&Tensor> {
        self.tags.get(&tag).and_then(|&v| self.get(v))
    }

    pub fn tags(&self) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.tags.iter().map(|(&t, &v)| (t, v))
    }
}
