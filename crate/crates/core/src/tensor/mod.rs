//! Dense f64 tensors with tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns every tensor created through it. Operations append nodes
//! in execution order, which is by construction a topological order: a node's
//! parents always carry smaller indices. [`Tape::backward`] replays the tape
//! once in reverse, accumulating cotangents into `grad` buffers.
//!
//! Values are immutable once created; only `grad` buffers mutate. Repeated
//! `backward` calls without [`Tape::zero_grads`] accumulate gradients. A tape
//! is confined to a single thread of execution; raw buffers obtained via
//! [`Tape::data`] are plain `Vec<f64>` clones and may cross threads freely.
//!
//! Broadcasting in the generic binary operations is restricted to
//! scalar-with-tensor. Row-structured broadcasts have dedicated operations
//! ([`Tape::add_bias`], [`Tape::mul_mask_rows`]) with explicit gradient
//! rules.

mod ops;

pub mod linalg;

use crate::error::{CoreError, Result};

/// Handle to a tensor on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Elementwise binary operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// Elementwise unary operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Square,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: usize,
        b: usize,
    },
    Unary {
        kind: UnaryKind,
        x: usize,
    },
    Clamp {
        x: usize,
        lo: f64,
        hi: f64,
    },
    Matmul {
        a: usize,
        b: usize,
    },
    Sum {
        x: usize,
        axis: Option<usize>,
    },
    Mean {
        x: usize,
        axis: Option<usize>,
    },
    /// Per-row softmax cross-entropy against integer class targets.
    SoftmaxCeRows {
        logits: usize,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Slice {
        x: usize,
        axis: usize,
        start: usize,
        len: usize,
    },
    /// `[n, m] + [m]`, the bias term of a linear layer.
    AddBias {
        x: usize,
        bias: usize,
    },
    /// Row lookup into a `[vocab, dim]` table; gradients scatter back to the
    /// looked-up rows only.
    GatherRows {
        table: usize,
        indices: Vec<usize>,
    },
    /// Scale row `i` of `x` by the constant `mask[i]`.
    MulMaskRows {
        x: usize,
        mask: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Recorded computation: values, gradients, and the operation list.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop all recorded nodes. This is the only way the tape is cleared.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    fn check_shape(shape: &[usize], data_len: usize) -> Result<()> {
        if shape.iter().any(|&e| e == 0) {
            return Err(CoreError::Domain(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        if shape.len() > 2 {
            return Err(CoreError::Domain(format!(
                "rank > 2 is not supported, got {shape:?}"
            )));
        }
        if numel(shape) != data_len {
            return Err(CoreError::Domain(format!(
                "shape {shape:?} does not match buffer length {data_len}"
            )));
        }
        Ok(())
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            shape,
            data,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// New leaf tensor.
    pub fn leaf(&mut self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        Self::check_shape(shape, data.len())?;
        Ok(self.push(shape.to_vec(), data, requires_grad, Op::Leaf))
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        self.leaf(shape, data, false)
    }

    /// Rank-0 constant.
    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(vec![], vec![value], false, Op::Leaf)
    }

    /// Value-equal leaf that blocks gradient flow to its ancestors.
    pub fn detach(&mut self, x: Var) -> Var {
        let node = &self.nodes[x.0];
        let (shape, data) = (node.shape.clone(), node.data.clone());
        self.push(shape, data, false, Op::Leaf)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient buffer, if `backward` has reached this tensor.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Scalar value of a single-element tensor.
    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0]
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub(crate) fn parent_requires(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Reverse pass from a scalar loss. Each call propagates a fresh unit
    /// cotangent and adds the result into `grad`, so repeated calls without
    /// [`Tape::zero_grads`] accumulate. Tensors the loss never reaches get a
    /// zero gradient, so a gradient is always defined after this call.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(CoreError::Usage("backward on an empty tape".into()));
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.data.len() != 1 {
            return Err(CoreError::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_node.shape
            )));
        }

        let mut cots: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        cots[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(out_grad) = cots[i].take() else {
                continue;
            };
            ops::apply_backward(&self.nodes, i, &out_grad, &mut cots);
            cots[i] = Some(out_grad);
        }

        for (node, cot) in self.nodes.iter_mut().zip(cots.into_iter()) {
            if !node.requires_grad {
                continue;
            }
            let grad = ensure_grad(node);
            if let Some(c) = cot {
                for (g, d) in grad.iter_mut().zip(c) {
                    *g += d;
                }
            }
        }
        // Nodes past the loss index also need defined gradients.
        for node in &mut self.nodes {
            if node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![0.0; node.data.len()]);
            }
        }
        Ok(())
    }
}

pub(crate) fn ensure_grad(node: &mut Node) -> &mut [f64] {
    let len = node.data.len();
    node.grad.get_or_insert_with(|| vec![0.0; len])
}

#[cfg(test)]
mod tests;
